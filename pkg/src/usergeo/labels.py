"""Discrete location label spaces: GeoNames cities or k-d tree leaves."""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .geo import GeoPoint
from .ingest import GroundTruth

logger = logging.getLogger(__name__)

LAT, LON = 0, 1


@dataclass
class KdLeaf:
    leaf_id: int
    lo: np.ndarray          # (lat, lon) lower bounds
    hi: np.ndarray          # (lat, lon) upper bounds, inclusive
    lo_open: np.ndarray     # per-dimension: lower bound exclusive
    members: np.ndarray     # indices into the build points

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        above = np.where(self.lo_open, p > self.lo, p >= self.lo)
        return bool(np.all(above) and np.all(p <= self.hi))

    @property
    def area(self) -> float:
        return float(np.prod(self.hi - self.lo))


@dataclass
class KdNode:
    dim: int
    value: float
    left: "KdNode | KdLeaf"
    right: "KdNode | KdLeaf"


@dataclass
class KdTree:
    root: KdNode | KdLeaf
    leaves: list[KdLeaf]
    points: np.ndarray
    min_bucket: int

    def leaf_for(self, point) -> KdLeaf:
        p = np.asarray(point, dtype=float)
        node = self.root
        while isinstance(node, KdNode):
            node = node.left if p[node.dim] <= node.value else node.right
        return node


def build_kdtree(points, min_bucket: int) -> KdTree:
    """Recursive lower-median split on the wider coordinate extent.

    ``points`` is an ``(n, 2)`` array of ``(lat, lon)``. A node is split only if
    both children keep at least ``min_bucket`` points; points equal to the
    split value go left. If the wider dimension cannot be split (duplicates)
    the other one is tried.
    """
    pts = np.asarray([(p.lat, p.lon) if isinstance(p, GeoPoint) else p for p in points],
                     dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("k-d tree needs at least one point")
    if min_bucket < 1:
        raise ValueError("min_bucket must be >= 1")
    leaves: list[KdLeaf] = []
    lo, hi = pts.min(axis=0), pts.max(axis=0)

    def split(idx, lo, hi, lo_open):
        sub = pts[idx]
        if len(idx) >= 2 * min_bucket:
            extent = sub.max(axis=0) - sub.min(axis=0)
            dims = [LON, LAT] if extent[LON] > extent[LAT] else [LAT, LON]
            for dim in dims:
                vals = np.sort(sub[:, dim])
                value = vals[(len(vals) - 1) // 2]
                go_left = sub[:, dim] <= value
                n_left = int(go_left.sum())
                if n_left >= min_bucket and len(idx) - n_left >= min_bucket:
                    l_hi, r_lo = hi.copy(), lo.copy()
                    l_hi[dim] = value
                    r_lo[dim] = value
                    r_open = lo_open.copy()
                    r_open[dim] = True
                    return KdNode(dim, float(value),
                                  split(idx[go_left], lo, l_hi, lo_open),
                                  split(idx[~go_left], r_lo, hi, r_open))
        leaf = KdLeaf(len(leaves), lo.copy(), hi.copy(), lo_open.copy(), np.sort(idx))
        leaves.append(leaf)
        return leaf

    root = split(np.arange(len(pts)), lo, hi, np.zeros(2, dtype=bool))
    return KdTree(root, leaves, pts, min_bucket)


def representative_point(member_points) -> GeoPoint:
    """Componentwise median of member coordinates."""
    pts = np.asarray([(p.lat, p.lon) if isinstance(p, GeoPoint) else p for p in member_points],
                     dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("representative point of an empty class")
    lat, lon = np.median(pts, axis=0)
    return GeoPoint(float(lat), float(lon))


@dataclass(frozen=True)
class LabelClass:
    label_id: int
    point: GeoPoint
    count: int
    key: int | None = None   # geoname id in city mode


@dataclass
class LabelSpace:
    mode: str
    classes: list[LabelClass]
    assignment: dict[str, int] = field(default_factory=dict)
    n_excluded: int = 0
    tree: KdTree | None = None
    city_to_label: dict[int, int] = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def rep_points(self) -> np.ndarray:
        return np.array([(c.point.lat, c.point.lon) for c in self.classes], dtype=float)

    def label_for(self, truth: GroundTruth) -> int | None:
        """Label of a user's ground truth, whether or not it was used to build the space."""
        if self.mode == "city":
            return self.city_to_label.get(truth.city)
        return self.tree.leaf_for((truth.home.lat, truth.home.lon)).leaf_id

    def to_csv(self, path, header: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header:
                fh.write(f"# {header}\n")
            w = csv.writer(fh)
            w.writerow(["label_id", "mode", "rep_lat", "rep_lon", "count"])
            for c in self.classes:
                w.writerow([c.label_id, self.mode, repr(c.point.lat), repr(c.point.lon), c.count])

    def assignment_to_csv(self, path, header: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header:
                fh.write(f"# {header}\n")
            w = csv.writer(fh)
            w.writerow(["user_id", "label_id"])
            for uid in sorted(self.assignment):
                w.writerow([uid, self.assignment[uid]])

    @classmethod
    def from_csv(cls, path, assignment_path=None) -> "LabelSpace":
        """Load a label space (representatives and assignment only; no tree)."""
        classes, mode = [], None
        with open(path, encoding="utf-8") as fh:
            for row in csv.DictReader(line for line in fh if not line.startswith("#")):
                mode = row["mode"]
                classes.append(LabelClass(int(row["label_id"]),
                                          GeoPoint(float(row["rep_lat"]), float(row["rep_lon"])),
                                          int(row["count"])))
        assignment = {}
        if assignment_path is not None:
            with open(assignment_path, encoding="utf-8") as fh:
                for row in csv.DictReader(line for line in fh if not line.startswith("#")):
                    assignment[row["user_id"]] = int(row["label_id"])
        return cls(mode or "city", classes, assignment)


def build_city_labels(truths: Mapping[str, GroundTruth], min_users: int) -> LabelSpace:
    """One class per city holding at least ``min_users`` users."""
    counts = Counter(gt.city for gt in truths.values())
    kept = sorted(c for c, k in counts.items() if k >= min_users)
    if not kept:
        top = counts.most_common(3)
        raise ValueError(f"no city has >= {min_users} users (largest: {top})")
    city_to_label = {c: i for i, c in enumerate(kept)}
    points = {gt.city: gt.point for gt in truths.values()}
    classes = [LabelClass(i, points[c], counts[c], c) for c, i in city_to_label.items()]
    assignment = {uid: city_to_label[gt.city] for uid, gt in truths.items() if gt.city in city_to_label}
    n_excluded = len(truths) - len(assignment)
    if n_excluded:
        logger.info("city labels: %d users in cities below %d users excluded", n_excluded, min_users)
    return LabelSpace("city", classes, assignment, n_excluded, city_to_label=city_to_label)


def build_kdtree_labels(truths: Mapping[str, GroundTruth], min_bucket: int) -> LabelSpace:
    """k-d tree leaves over users' home coordinates; leaf medians as representatives."""
    uids = sorted(truths)
    if not uids:
        raise ValueError("no ground truths to partition")
    pts = np.array([(truths[u].home.lat, truths[u].home.lon) for u in uids], dtype=float)
    tree = build_kdtree(pts, min_bucket)
    classes, assignment = [], {}
    for leaf in tree.leaves:
        classes.append(LabelClass(leaf.leaf_id, representative_point(pts[leaf.members]),
                                  len(leaf.members)))
        for k in leaf.members:
            assignment[uids[k]] = leaf.leaf_id
    return LabelSpace("kdtree", classes, assignment, 0, tree=tree)


def build_label_space(truths: Mapping[str, GroundTruth], mode: str = "city",
                      min_users: int = 100, min_bucket: int = 255) -> LabelSpace:
    if mode == "city":
        return build_city_labels(truths, min_users)
    if mode == "kdtree":
        return build_kdtree_labels(truths, min_bucket)
    raise ValueError(f"unknown label mode {mode!r}")
