"""Parameter dumps: bit-exact binary (.npz) and a readable CSV."""

from __future__ import annotations

import csv
import zipfile
from typing import Mapping

import numpy as np

_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_parameters(params: Mapping[str, np.ndarray], path) -> None:
    """``.npz`` readable by ``np.load``; entries carry a fixed timestamp so
    identical parameters give identical bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, v in params.items():
            arr = np.asarray(getattr(v, "data", v), dtype=np.float64)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_EPOCH)
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, arr, allow_pickle=False)


def load_parameters(path) -> dict[str, np.ndarray]:
    with np.load(path, allow_pickle=False) as z:
        return {k: z[k].copy() for k in z.files}


def save_parameters_csv(params: Mapping[str, np.ndarray], path) -> None:
    """Rows of ``name,shape,values...`` with shape as ``d1xd2``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for name, v in params.items():
            arr = np.asarray(getattr(v, "data", v), dtype=np.float64)
            shape = "x".join(str(s) for s in arr.shape)
            w.writerow([name, shape] + [repr(float(x)) for x in arr.ravel()])


def load_parameters_csv(path) -> dict[str, np.ndarray]:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            name, shape = row[0], tuple(int(s) for s in row[1].split("x") if s)
            out[name] = np.asarray([float(x) for x in row[2:]], dtype=np.float64).reshape(shape)
    return out
