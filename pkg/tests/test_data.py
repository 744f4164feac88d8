import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.linear_model import LogisticRegression

from sftl.data import DatasetSpec, load_and_split, read_csv, remap_labels, split, synthetic


@pytest.fixture
def credit_csv(tmp_path):
    rng = np.random.default_rng(0)
    n = 60
    df = pd.DataFrame({
        "limit_bal": rng.uniform(1e4, 5e5, n),
        "pay_0": rng.integers(-2, 8, n),
        "bill_amt1": rng.normal(5e4, 1e4, n),
        "age": rng.integers(21, 70, n),
        "sex": rng.choice(["m", "f"], n),
        "education": rng.choice(["grad", "uni", "hs"], n),
        "default": rng.integers(0, 2, n),
    })
    path = tmp_path / "credit.csv"
    df.to_csv(path, index=False)
    return path


def test_overlap_extremes():
    zero = load_and_split(DatasetSpec(n_samples=40, overlap=0.0, seed=1))
    assert len(zero.overlap_ids) == 0 and len(zero.source.overlap) == 0
    full = load_and_split(DatasetSpec(n_samples=40, overlap=1.0, seed=1))
    assert len(full.overlap_ids) == len(full.s_ids) == 40
    assert np.array_equal(np.sort(full.label_ids), np.sort(full.s_ids))


def test_digests_are_deterministic():
    a = load_and_split(DatasetSpec(n_samples=50, seed=3))
    b = load_and_split(DatasetSpec(n_samples=50, seed=3))
    c = load_and_split(DatasetSpec(n_samples=50, seed=4))
    assert a.digests == b.digests and a.digests != c.digests


def test_views_are_consistent():
    sp = load_and_split(DatasetSpec(n_samples=80, overlap=0.5, n_lab=10, seed=2))
    X_s, X_t, y, _ = synthetic(80, 6, 4, 0.0, 2)
    assert np.array_equal(sp.source.X[sp.source.overlap], X_s[sp.overlap_ids])
    assert np.array_equal(sp.target.X[sp.target.overlap], X_t[sp.overlap_ids])
    assert np.array_equal(sp.target.X[sp.target.labeled], X_t[sp.label_ids])
    assert np.array_equal(sp.source.y_lab, y[sp.label_ids])
    assert len(sp.source.y_lab) == 10


def test_n_lab_bound():
    with pytest.raises(ValueError):
        load_and_split(DatasetSpec(n_samples=20, overlap=0.5, n_lab=50))


def test_synthetic_is_separable_with_known_labels():
    X_s, X_t, y, bayes = synthetic(300, 6, 4, 0.0, 0)
    assert np.array_equal(y, bayes)
    assert set(np.unique(y)) == {-1.0, 1.0}
    # either feature block determines the latent factors, hence the label
    for X in (X_s, X_t):
        clf = LogisticRegression(C=1e6, max_iter=5000).fit(X, y)
        assert clf.score(X, y) == 1.0


def test_remap_labels():
    assert remap_labels(np.array([0, 1, 1])).tolist() == [-1, 1, 1]
    assert remap_labels(np.array(["no", "yes"])).tolist() == [-1, 1]
    assert remap_labels(np.array([-1, 1])).tolist() == [-1, 1]
    with pytest.raises(ValueError):
        remap_labels(np.array([0, 1, 2]))


def test_csv_ingestion(credit_csv):
    X_s, X_t, y, s_cols, t_cols = read_csv(credit_csv, "default", ["limit_bal", "pay_0", "bill_amt1"],
                                           ["age", "sex", "education"])
    assert X_s.shape == (60, 3)
    assert t_cols == ["age", "sex_f", "sex_m", "education_grad", "education_hs", "education_uni"]
    assert np.allclose(X_t.mean(axis=0), 0) and set(y) == {-1.0, 1.0}
    sp = load_and_split(DatasetSpec(str(credit_csv), "default", t_features=["age", "sex", "education"],
                                    overlap=0.6, seed=1))
    assert sp.meta["t_columns"][0] == "age" and sp.source.X.shape[1] == 3


def test_csv_errors(credit_csv, tmp_path):
    with pytest.raises(ValueError, match="label"):
        read_csv(credit_csv, "nope")
    with pytest.raises(ValueError, match="disjoint"):
        read_csv(credit_csv, "default", ["age"], ["age", "sex"])
    with pytest.raises(ValueError, match="not found"):
        read_csv(credit_csv, "default", ["ghost"])
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,label\n1,2,0\n3,,1\n")
    with pytest.raises(ValueError, match="missing"):
        read_csv(bad, "label")


def test_test_split_holds_out_rows():
    sp = load_and_split(DatasetSpec(n_samples=100, test_fraction=0.2, seed=0))
    assert sp.test_X_T.shape == (20, 4) and sp.bayes_labels.shape == (20,)
    assert len(sp.s_ids) == 40 and len(set(sp.s_ids) | set(sp.t_ids)) == 80


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 120), st.floats(0, 1), st.integers(0, 1000))
def test_split_invariants(n, overlap, seed):
    X_s, X_t, y, _ = synthetic(n, 3, 2, 0.1, seed)
    sp = split(X_s, X_t, y, overlap, None, seed)
    assert len(sp.source.overlap) == len(sp.target.overlap) == len(sp.overlap_ids)
    assert np.array_equal(sp.s_ids[sp.source.overlap], sp.overlap_ids)
    assert np.array_equal(sp.t_ids[sp.target.overlap], sp.overlap_ids)
    assert len(set(sp.s_ids)) == len(sp.s_ids) and len(set(sp.t_ids)) == len(sp.t_ids)
    assert len(sp.label_ids) <= len(sp.s_ids)
