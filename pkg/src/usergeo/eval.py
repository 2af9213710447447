"""Distance-based metrics and the stratified cross-validation harness."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from sklearn.model_selection import StratifiedKFold

from .geo import haversine, haversine_array
from .ingest import GroundTruth
from .labels import LabelSpace

logger = logging.getLogger(__name__)

ACC_THRESHOLD_KM = 160.9344  # 100 miles

__all__ = ["ACC_THRESHOLD_KM", "EvalReport", "cross_validate", "evaluate", "format_table",
           "haversine", "report_from_errors", "stratified_folds"]


@dataclass
class EvalReport:
    acc_at_100: float
    mean_km: float
    median_km: float
    n: int
    n_excluded: int = 0
    errors_km: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    folds: list["EvalReport"] = field(default_factory=list, repr=False)

    def acc_at(self, km: float) -> float:
        return float(np.mean(self.errors_km <= km)) if len(self.errors_km) else float("nan")

    def fold_stats(self) -> dict:
        if not self.folds:
            return {}
        out = {}
        for key in ("acc_at_100", "mean_km", "median_km"):
            vals = np.array([getattr(f, key) for f in self.folds])
            out[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
        return out

    def to_dict(self) -> dict:
        d = {"acc_at_100": self.acc_at_100, "mean_km": self.mean_km,
             "median_km": self.median_km, "n": self.n, "n_excluded": self.n_excluded}
        if self.folds:
            d["folds"] = [f.to_dict() for f in self.folds]
            d["fold_mean_std"] = self.fold_stats()
        return d

    def error_cdf_csv(self, path) -> None:
        errs = np.sort(self.errors_km)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["distance_km", "cum_fraction"])
            for i, e in enumerate(errs):
                w.writerow([repr(float(e)), repr((i + 1) / len(errs))])


def report_from_errors(errors_km, n_excluded: int = 0,
                       threshold_km: float = ACC_THRESHOLD_KM) -> EvalReport:
    errs = np.asarray(errors_km, dtype=float)
    if len(errs) == 0:
        return EvalReport(float("nan"), float("nan"), float("nan"), 0, n_excluded, errs)
    if np.any(errs < 0):
        raise ValueError("negative distance")
    return EvalReport(float(np.mean(errs <= threshold_km)), float(errs.mean()),
                      float(np.median(errs)), len(errs), n_excluded, errs)


def evaluate(predicted: Mapping[str, int], label_space: LabelSpace,
             truths: Mapping[str, GroundTruth], threshold_km: float = ACC_THRESHOLD_KM
             ) -> EvalReport:
    """Distance from each predicted label's representative point to the user's
    ground-truth city point. Users without ground truth are excluded."""
    uids = sorted(u for u in predicted if u in truths)
    n_excluded = len(predicted) - len(uids)
    if n_excluded:
        logger.info("evaluate: %d predictions without ground truth excluded", n_excluded)
    reps = label_space.rep_points()
    if not uids:
        return report_from_errors([], n_excluded, threshold_km)
    lab = np.array([predicted[u] for u in uids], dtype=np.int64)
    tp = np.array([(truths[u].point.lat, truths[u].point.lon) for u in uids])
    errs = haversine_array(reps[lab, 0], reps[lab, 1], tp[:, 0], tp[:, 1])
    return report_from_errors(errs, n_excluded, threshold_km)


def stratified_folds(y, k: int = 5, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold over positions of ``y``; classes with fewer than ``k``
    members are dropped (with a warning) and never appear in any fold."""
    if k < 2:
        raise ValueError("need k >= 2 folds")
    y = np.asarray(y)
    counts = {c: int((y == c).sum()) for c in np.unique(y)}
    small = sorted(c for c, n in counts.items() if n < k)
    if small:
        warnings.warn(f"classes with fewer than {k} users dropped from cross-validation: {small}",
                      stacklevel=2)
    keep = np.flatnonzero(~np.isin(y, small))
    if len(keep) < k:
        raise ValueError("not enough labelled users for cross-validation")
    skf = StratifiedKFold(k, shuffle=True, random_state=seed)
    folds = []
    for tr, te in skf.split(np.zeros(len(keep)), y[keep]):
        if len(te) == 0 or len(tr) == 0:
            raise ValueError("empty fold")
        folds.append((keep[tr], keep[te]))
    return folds


FoldFn = Callable[[int, np.ndarray, np.ndarray], Mapping[str, Mapping[str, int]]]


def cross_validate(user_ids: Sequence[str], y, fold_fn: FoldFn, label_space_fn,
                   truths: Mapping[str, GroundTruth], k: int = 5, seed: int = 0
                   ) -> dict[str, EvalReport]:
    """Run ``fold_fn(fold, train_pos, test_pos)`` on each stratified fold.

    ``fold_fn`` returns ``{model: {user_id: predicted_label}}`` for the test
    users; ``label_space_fn(fold)`` gives the label space those labels refer
    to. Returns one pooled report per model with per-fold breakdowns.
    """
    user_ids = list(user_ids)
    per_model_errors: dict[str, list[np.ndarray]] = {}
    per_model_folds: dict[str, list[EvalReport]] = {}
    excluded: dict[str, int] = {}
    for fold, (train, test) in enumerate(stratified_folds(y, k, seed)):
        preds = fold_fn(fold, train, test)
        space = label_space_fn(fold)
        for model, p in preds.items():
            r = evaluate(p, space, truths)
            per_model_folds.setdefault(model, []).append(r)
            per_model_errors.setdefault(model, []).append(r.errors_km)
            excluded[model] = excluded.get(model, 0) + r.n_excluded
    reports = {}
    for model, errs in per_model_errors.items():
        rep = report_from_errors(np.concatenate(errs), excluded[model])
        rep.folds = per_model_folds[model]
        reports[model] = rep
    return reports


def format_table(reports: Mapping[str, EvalReport], title: str = "") -> str:
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'Method':<16}{'Acc@100':>10}{'Mean':>10}{'Median':>10}"
                 f"{'Acc@100 folds (mean±std)':>28}")
    for name, r in reports.items():
        fs = r.fold_stats().get("acc_at_100")
        folds = f"{fs['mean']:.3f}±{fs['std']:.3f}" if fs else "-"
        lines.append(f"{name:<16}{r.acc_at_100:>10.3f}{r.mean_km:>10.1f}{r.median_km:>10.1f}"
                     f"{folds:>28}")
    return "\n".join(lines) + "\n"


def reports_to_json(reports: Mapping[str, EvalReport], meta: dict | None = None) -> str:
    doc = {"models": {k: v.to_dict() for k, v in reports.items()}}
    if meta:
        doc.update(meta)
    return json.dumps(doc, indent=2, sort_keys=True)
