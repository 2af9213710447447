"""Central finite-difference gradient checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    errors: dict[str, float] = field(default_factory=dict)
    kinks: dict[str, int] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)


def grad_check(closure, params, step: float = 1e-5, kink_tol: float = 1e-4,
               max_entries: int | None = None, seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients of ``closure()`` (a scalar Tensor) against
    central differences for every entry of every parameter.

    Relative error is per parameter: ||analytic - numeric|| / max(||analytic||,
    ||numeric||, 1e-12). An entry where the forward and backward one-sided
    slopes disagree by more than ``kink_tol`` (relative) sits on a kink of a
    piecewise-linear op; it is counted in ``kinks`` and left out of the error.
    ``max_entries`` subsamples large parameters.
    """
    params = list(params)
    for p in params:
        p.grad = None
    closure().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    rng = np.random.default_rng(seed)
    report = GradCheckReport()
    for k, (p, ga) in enumerate(zip(params, analytic)):
        name = getattr(p, "name", "") or f"param{k}"
        flat = p.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, max_entries, replace=False))
        f0 = closure().item()
        num, ana = [], []
        n_kinks = 0
        for e in entries:
            orig = flat[e]
            flat[e] = orig + step
            fp = closure().item()
            flat[e] = orig - step
            fm = closure().item()
            flat[e] = orig
            fwd, bwd = (fp - f0) / step, (f0 - fm) / step
            central = (fp - fm) / (2 * step)
            if abs(fwd - bwd) > kink_tol * max(1.0, abs(central)):
                n_kinks += 1
                continue
            num.append(central)
            ana.append(ga.reshape(-1)[e])
        num, ana = np.asarray(num), np.asarray(ana)
        denom = max(np.linalg.norm(num), np.linalg.norm(ana), 1e-12)
        report.errors[name] = float(np.linalg.norm(num - ana) / denom) if len(num) else 0.0
        report.kinks[name] = n_kinks
    for p in params:
        p.grad = None
    return report
