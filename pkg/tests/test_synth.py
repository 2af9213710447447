import re

import numpy as np
import pytest

from usergeo.eval import stratified_folds
from usergeo.geo import haversine
from usergeo.graph import build_mention_matrices, build_multiplex, filter_popular
from usergeo.ingest import attach_profiles, ground_truths, load_gazetteer, parse_profiles, parse_records
from usergeo.synth import SynthConfig, generate, generate_dataset
from usergeo.textfeat import LIWClassifier, user_tokens


def small(**kw):
    base = dict(n_users=200, n_cities=4, seed=3)
    base.update(kw)
    return SynthConfig(**base)


def test_byte_identical_output(tmp_path):
    _, a = generate(small(), tmp_path / "a")
    _, b = generate(small(), tmp_path / "b")
    for name in a:
        assert a[name].read_bytes() == b[name].read_bytes(), name
    _, c = generate(small(seed=4), tmp_path / "c")
    assert a["records"].read_bytes() != c["records"].read_bytes()


def test_ingest_round_trip(tmp_path):
    ds, paths = generate(small(), tmp_path)
    users, bad = parse_records(paths["records"])
    profiles, bad2 = parse_profiles(paths["profiles"])
    assert bad == bad2 == 0
    assert attach_profiles(users, profiles) == sorted(ds.users, key=lambda u: u.user_id)
    gaz = load_gazetteer(paths["gazetteer"])
    truths = ground_truths(users, gaz)
    assert len(truths) == len(users)
    for uid, gt in truths.items():
        assert gt.city == ds.city_entries[ds.city_of[uid]].geoname_id


def test_centers_separated_and_validation():
    ds = generate_dataset(small())
    pts = [e.point for e in ds.city_entries]
    assert min(haversine(a, b) for i, a in enumerate(pts) for b in pts[i + 1:]) >= 500
    with pytest.raises(ValueError):
        SynthConfig(p_in=1.5)
    with pytest.raises(ValueError):
        SynthConfig(n_cities=2, centers=[[0, 0], [0, 1]])


def test_graphs_symmetric_and_hubs_co_mentioned():
    ds = generate_dataset(small(celebrity_prob=0.0))
    idx, g = build_multiplex(ds.users, celebrity_threshold=5)
    for layer in g.layers.values():
        d = layer.to_dense()
        assert np.array_equal(d, d.T) and np.all(np.diag(d) == 0) and np.all(d >= 0)
    assert set(ds.hubs) <= set(idx.external_ids)
    # co-mention contribution: Y minus the direct-mention part is nonzero
    M, X = build_mention_matrices(ds.users, idx)
    M, X = filter_popular(M, X, 5)
    direct = M.to_dense() + M.to_dense().T
    assert np.any(g["mention"].to_dense() - direct > 0)


def test_separable_regime():
    ds = generate_dataset(small(liw_strength=1.0, p_out=0.0))
    city = np.array([ds.city_of[u.user_id] for u in ds.users])
    vocab = [set() for _ in range(4)]
    for u, c in zip(ds.users, city):
        # shared filler words ("w17") carry no location; every other word does
        vocab[c] |= {t for t in user_tokens(u) if t != "<mention>" and not re.fullmatch(r"w\d+", t)}
    for a in range(4):
        for b in range(a + 1, 4):
            assert not vocab[a] & vocab[b]
    idx, g = build_multiplex(ds.users, celebrity_threshold=5)
    order = np.array([ds.city_of[u] for u in idx.internal_ids])
    for layer in g.layers.values():
        r, c = layer.matrix.nonzero()
        assert np.all(order[r] == order[c])


def test_null_regime_is_near_majority():
    cfg = small(n_users=400, n_cities=4, p_in=0.02, p_out=0.02, liw_strength=0.25,
                hubs_per_city=0, n_celebrities=0, seed=11)
    ds = generate_dataset(cfg)
    idx, g = build_multiplex(ds.users, celebrity_threshold=None)
    users = {u.user_id: u for u in ds.users}
    y = np.array([ds.city_of[u] for u in idx.internal_ids])
    docs = [user_tokens(users[u]) for u in idx.internal_ids]
    majority = np.bincount(y).max() / len(y)
    A = g.flatten().matrix
    text_acc, graph_acc = [], []
    for train, test in stratified_folds(y, 5, seed=0):
        clf = LIWClassifier(top_k=200, min_freq=2).fit([docs[i] for i in train], y[train])
        text_acc.append((clf.predict([docs[i] for i in test]) == y[test]).mean())
        # weighted vote of labelled neighbours
        known = np.zeros((len(y), 4))
        known[train, y[train]] = 1
        votes = A[test] @ known
        pred = np.where(votes.sum(axis=1) > 0, votes.argmax(axis=1), np.bincount(y[train]).argmax())
        graph_acc.append((pred == y[test]).mean())
    assert abs(np.mean(text_acc) - majority) < 0.1
    assert abs(np.mean(graph_acc) - majority) < 0.1
