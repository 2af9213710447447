import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import chi2_fraction
from usergeo.textfeat import (PAD, UNK, LIWClassifier, Vocabulary, chi2_liw, chi2_statistics,
                              liw_predict, load_embeddings, tokenize)


@pytest.mark.parametrize("text,expected", [
    ("", []),
    ("Hola @juan http://x.co", ["hola", "<mention>", "<url>"]),
    ("Viva #BuenosAires!", ["viva", "buenosaires"]),
    ("Son las 10.30, ¿vamos?", ["son", "las", "<num>", "vamos"]),
    ("don't STOP", ["don't", "stop"]),
])
def test_tokenize_examples(text, expected):
    assert tokenize(text) == expected


def test_vocabulary_reserved_ids_and_min_freq():
    v = Vocabulary.build([["a", "b"], ["a"], ["a", "c", "c"]], min_freq=2)
    assert v.tokens[:2] == [PAD, UNK] and v.tokens[2:] == ["a"]
    assert v.encode(["a", "zzz"]).tolist() == [2, 1]
    assert v.encode(["a"] * 5, max_len=3).tolist() == [2, 2, 2]
    assert v.doc_freq["a"] == 3


def test_chi2_equal_fractions_zero():
    labels = np.array([0, 0, 1, 1])
    present = np.array([[1], [0], [1], [0]])
    assert chi2_statistics(present, labels, 2)[0] == 0.0


def test_chi2_perfect_separation_is_n():
    labels = np.array([0] * 10 + [1] * 10)
    present = (labels == 0).astype(float)[:, None]
    assert chi2_statistics(present, labels, 2)[0] == pytest.approx(20.0, abs=1e-12)
    assert float(chi2_fraction(present[:, 0], labels, 2)) == 20.0


def test_chi2_degenerate_columns():
    labels = np.array([0, 1, 1])
    present = np.array([[1, 0], [1, 0], [1, 0]])
    assert chi2_statistics(present, labels, 2).tolist() == [0.0, 0.0]


def test_top1_selects_separating_word():
    docs = [["the", "beach"]] * 5 + [["the", "mountain"], ["the"]] * 3 + [["the"]]
    labels = [0] * 5 + [1] * 7
    table = chi2_liw(docs, labels, top_k=1)
    assert table.tokens == ["beach"]


def chi2_fixture(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 21))
    L = int(rng.integers(2, 5))
    V = int(rng.integers(1, 31))
    labels = rng.integers(0, L, n)
    present = (rng.random((n, V)) < rng.uniform(0.1, 0.9)).astype(int)
    return present, labels, L


@given(st.integers(0, 2**32 - 1))
def test_chi2_matches_fraction_oracle(seed):
    present, labels, L = chi2_fixture(seed)
    stat = chi2_statistics(present, labels, L)
    for j in range(present.shape[1]):
        assert abs(stat[j] - float(chi2_fraction(present[:, j], labels, L))) <= 1e-12 * max(1, stat[j])


@given(st.integers(0, 2**32 - 1), st.data())
def test_chi2_label_permutation_invariant(seed, data):
    present, labels, L = chi2_fixture(seed)
    perm = np.array(data.draw(st.permutations(list(range(L)))))
    a = chi2_statistics(present, labels, L)
    b = chi2_statistics(present, perm[labels], L)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
    assert np.all(a >= 0)


def test_chi2_liw_uses_binary_presence():
    docs_once = [["x"], ["x"], ["y"], ["y"]]
    docs_many = [["x"] * 7, ["x"], ["y"] * 3, ["y"]]
    a = chi2_liw(docs_once, [0, 0, 1, 1])
    b = chi2_liw(docs_many, [0, 0, 1, 1])
    assert a.tokens == b.tokens and np.array_equal(a.chi2, b.chi2)


def test_liw_excludes_placeholders():
    docs = [["<mention>", "<url>", "a"], ["b"]]
    assert set(chi2_liw(docs, [0, 1]).tokens) == {"a", "b"}


def test_liw_predict_fallback_and_exclusive_token():
    table = chi2_liw([["a"], ["a"], ["b"]], [0, 0, 1])
    assert liw_predict(["nothing"], table).tolist() == pytest.approx([2 / 3, 1 / 3])
    assert np.argmax(liw_predict(["a"], table)) == 0
    assert np.argmax(liw_predict(["b"], table)) == 1


def test_liw_predict_hand_run():
    # three users: two in label 0 with "sol", one in label 1 with "sol" and "mar"
    docs = [["sol"], ["sol"], ["sol", "mar"]]
    table = chi2_liw(docs, [0, 0, 1])
    # add-one smoothed P(label | token present)
    p_sol = [(2 + 1) / (3 + 2), (1 + 1) / (3 + 2)]
    p_mar = [(0 + 1) / (1 + 2), (1 + 1) / (1 + 2)]
    z = [math.log(p_sol[k]) + math.log(p_mar[k]) for k in range(2)]
    expected = np.exp(z) / np.exp(z).sum()
    assert liw_predict(["mar", "sol", "sol"], table) == pytest.approx(expected, abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.lists(st.integers(0, 40), max_size=10))
def test_liw_predict_is_distribution(seed, probe):
    present, labels, L = chi2_fixture(seed)
    docs = [[f"t{j}" for j in np.flatnonzero(row)] for row in present]
    table = chi2_liw(docs, labels, top_k=10, n_labels=L)
    p = liw_predict([f"t{j}" for j in probe], table)
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-9
    assert np.all(np.isfinite(table.scores))
    assert len(table.tokens) == min(10, len({t for d in docs for t in d}))


def test_liw_requires_two_labels():
    with pytest.raises(ValueError):
        chi2_liw([["a"]], [0])


def test_liw_classifier_estimator_api():
    X = [["sol", "playa"]] * 6 + [["nieve"]] * 6
    y = [3] * 6 + [8] * 6
    clf = LIWClassifier(top_k=5, min_freq=1).fit(X, y)
    assert clf.predict([["playa"], ["nieve"]]).tolist() == [3, 8]
    assert clf.get_params()["top_k"] == 5
    fixed = LIWClassifier(min_freq=1, n_classes=10).fit(X, y)
    assert fixed.predict_proba([["sol"]]).shape == (1, 10)


def test_load_embeddings(tmp_path):
    v = Vocabulary.build([["hola", "chau"]], min_freq=1)
    p = tmp_path / "e.txt"
    p.write_text("hola 1.0 2.0 3.0\notra 0 0 0\n")
    t = load_embeddings(p, v)
    assert t.dim == 3
    assert t.matrix[v.index["hola"]].tolist() == [1.0, 2.0, 3.0]
    assert np.all(t.matrix[0] == 0)
    assert np.all(np.abs(t.matrix[v.index["chau"]]) <= 0.5 / 3)
    bad = tmp_path / "bad.txt"
    bad.write_text("a " + " ".join(["0"] * 50) + "\nb " + " ".join(["0"] * 300) + "\n")
    with pytest.raises(ValueError, match="dimension"):
        load_embeddings(bad, v)
