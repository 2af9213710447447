import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import chord_distance_km
from usergeo.eval import (ACC_THRESHOLD_KM, cross_validate, evaluate, format_table,
                          report_from_errors, reports_to_json, stratified_folds)
from usergeo.geo import EARTH_RADIUS_KM, GeoPoint, haversine, haversine_array
from usergeo.ingest import GroundTruth
from usergeo.labels import LabelClass, LabelSpace

BA = GeoPoint(-34.6037, -58.3816)
CBA = GeoPoint(-31.4201, -64.1888)

coords = st.tuples(st.floats(-90, 90), st.floats(-180, 180)).map(lambda t: GeoPoint(*t))


def test_haversine_trivial():
    assert haversine(BA, BA) == 0.0
    anti = haversine(GeoPoint(0, 0), GeoPoint(0, 180))
    assert anti == pytest.approx(math.pi * EARTH_RADIUS_KM, rel=1e-12)
    assert anti == pytest.approx(20015.1, abs=0.1)


def test_haversine_buenos_aires_cordoba_vs_chord_oracle():
    ref = chord_distance_km(BA.lat, BA.lon, CBA.lat, CBA.lon)
    assert haversine(BA, CBA) == pytest.approx(ref, rel=1e-3)
    assert 640 < ref < 660


@given(coords, coords)
def test_haversine_symmetric_nonnegative_matches_oracle(a, b):
    d = haversine(a, b)
    assert d >= 0
    assert d == pytest.approx(haversine(b, a), abs=1e-9)
    assert d == pytest.approx(chord_distance_km(a.lat, a.lon, b.lat, b.lon), rel=1e-6, abs=1e-6)


def test_haversine_array_matches_scalar():
    rng = np.random.default_rng(0)
    lat1, lat2 = rng.uniform(-90, 90, (2, 50))
    lon1, lon2 = rng.uniform(-180, 180, (2, 50))
    arr = haversine_array(lat1, lon1, lat2, lon2)
    for k in range(50):
        assert arr[k] == pytest.approx(haversine(GeoPoint(lat1[k], lon1[k]), GeoPoint(lat2[k], lon2[k])),
                                       rel=1e-12, abs=1e-9)


@pytest.mark.parametrize("lat,lon", [(91, 0), (0, 181), (float("nan"), 0), (0, float("inf"))])
def test_geopoint_rejects_invalid(lat, lon):
    with pytest.raises(ValueError):
        GeoPoint(lat, lon)


def test_report_hand_computation():
    r = report_from_errors([0, 100, 200, 1000])
    assert r.acc_at_100 == 0.5
    assert r.mean_km == 325
    assert r.median_km == 150
    assert r.n == 4


def test_boundary_inclusive():
    assert report_from_errors([ACC_THRESHOLD_KM]).acc_at_100 == 1.0
    assert report_from_errors([np.nextafter(ACC_THRESHOLD_KM, np.inf)]).acc_at_100 == 0.0


def test_negative_distance_rejected():
    with pytest.raises(ValueError):
        report_from_errors([-1.0])


def _space(points):
    return LabelSpace("city", [LabelClass(i, p, 1, i) for i, p in enumerate(points)])


def test_evaluate_perfect_and_excluded():
    space = _space([BA, CBA])
    truths = {"a": GroundTruth("a", 0, BA, BA), "b": GroundTruth("b", 1, CBA, CBA)}
    rep = evaluate({"a": 0, "b": 1, "ghost": 0}, space, truths)
    assert rep.acc_at_100 == 1.0 and rep.mean_km == 0.0
    assert rep.n == 2 and rep.n_excluded == 1
    wrong = evaluate({"a": 1, "b": 1}, space, truths)
    assert wrong.acc_at_100 == 0.5
    assert wrong.mean_km == pytest.approx(haversine(BA, CBA) / 2)


@given(st.lists(st.floats(0, 5000), min_size=1, max_size=30), st.floats(0, 5000), st.floats(0, 5000))
def test_acc_monotone_in_threshold(errs, t1, t2):
    r = report_from_errors(errs)
    lo, hi = sorted((t1, t2))
    assert r.acc_at(lo) <= r.acc_at(hi)
    assert 0 <= r.acc_at_100 <= 1


@given(st.permutations(list(range(8))))
def test_evaluate_permutation_invariant(perm):
    pts = [GeoPoint(-30 - k, -60 + k) for k in range(4)]
    space = _space(pts)
    truths = {f"u{k}": GroundTruth(f"u{k}", k % 4, pts[k % 4], pts[k % 4]) for k in range(8)}
    preds = {f"u{k}": (k * 3) % 4 for k in range(8)}
    base = evaluate(preds, space, truths)
    shuffled = {f"u{k}": preds[f"u{k}"] for k in perm}
    r = evaluate(shuffled, space, truths)
    assert (r.acc_at_100, r.mean_km, r.median_km) == (base.acc_at_100, base.mean_km, base.median_km)


@given(st.lists(st.integers(0, 3), min_size=20, max_size=80), st.integers(2, 5), st.integers(0, 50))
def test_stratified_folds_preserve_proportions(y, k, seed):
    y = np.array(y)
    counts = {c: int((y == c).sum()) for c in np.unique(y)}
    if all(n < k for n in counts.values()) or sum(n for n in counts.values() if n >= k) < k:
        return
    with pytest.warns(UserWarning) if any(n < k for n in counts.values()) else _nullcontext():
        folds = stratified_folds(y, k, seed)
    kept = [c for c, n in counts.items() if n >= k]
    all_test = np.concatenate([te for _, te in folds])
    assert sorted(all_test.tolist()) == sorted(np.flatnonzero(np.isin(y, kept)).tolist())
    for tr, te in folds:
        assert not set(tr) & set(te)
        for c in kept:
            expected = counts[c] / k
            assert abs((y[te] == c).sum() - expected) <= 1


class _nullcontext:
    def __enter__(self):
        return self

    def __exit__(self, *a):
        return False


def test_stratified_folds_errors():
    with pytest.raises(ValueError):
        stratified_folds([0, 1, 0, 1], k=1)
    with pytest.warns(UserWarning), pytest.raises(ValueError):
        stratified_folds([0, 1, 2], k=2)


def _cv_fixture():
    pts = [GeoPoint(-30, -60), GeoPoint(-40, -65)]
    space = _space(pts)
    uids = [f"u{k}" for k in range(8)]
    y = np.array([k % 2 for k in range(8)])
    truths = {u: GroundTruth(u, int(c), pts[c], pts[c]) for u, c in zip(uids, y)}

    def fold_fn(fold, train, test):
        # majority of training labels, which is symmetric here
        return {"oracle": {uids[i]: int(y[i]) for i in test},
                "constant": {uids[i]: 0 for i in test}}
    return uids, y, truths, space, fold_fn


def test_cross_validate_symmetric_folds_identical():
    uids, y, truths, space, fold_fn = _cv_fixture()
    reps = cross_validate(uids, y, fold_fn, lambda f: space, truths, k=2, seed=0)
    folds = reps["oracle"].folds
    assert len(folds) == 2
    assert [f.acc_at_100 for f in folds] == [1.0, 1.0]
    cf = reps["constant"].folds
    assert cf[0].acc_at_100 == cf[1].acc_at_100 == 0.5
    assert reps["constant"].n == 8


def test_cross_validate_deterministic_and_serialisable(tmp_path):
    uids, y, truths, space, fold_fn = _cv_fixture()
    a = reports_to_json(cross_validate(uids, y, fold_fn, lambda f: space, truths, k=4, seed=3))
    b = reports_to_json(cross_validate(uids, y, fold_fn, lambda f: space, truths, k=4, seed=3))
    assert a == b
    doc = json.loads(a)
    assert doc["models"]["oracle"]["fold_mean_std"]["acc_at_100"]["mean"] == 1.0
    reps = cross_validate(uids, y, fold_fn, lambda f: space, truths, k=4, seed=3)
    table = format_table(reps, "title")
    assert "Acc@100" in table and "oracle" in table
    path = tmp_path / "cdf.csv"
    reps["constant"].error_cdf_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "distance_km,cum_fraction"
    assert float(lines[-1].split(",")[1]) == 1.0
