"""Dataset generation, CSV ingestion and the two-party split.

Samples live in a common entity space. S holds rows ``[0, N_S)`` with the
S feature columns and every label; T holds ``N_T`` rows with the T feature
columns. The last ``N_ST`` S-entities are also T's first rows (the overlap)
and the first ``N_L`` of those form the labelled set D_L.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .model import SourceData, TargetData


@dataclass
class DatasetSpec:
    path: str = None           # CSV; None selects the synthetic generator
    label: str = "label"
    s_features: list = None    # CSV columns given to S (default: first half)
    t_features: list = None    # CSV columns given to T (default: the rest)
    overlap: float = 0.5       # fraction of S samples also held by T
    n_lab: int = None          # labelled set size (default: whole overlap)
    seed: int = 0
    # synthetic generator only
    n_samples: int = 200
    p_s: int = 6
    p_t: int = 4
    noise: float = 0.0
    test_fraction: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.overlap <= 1.0:
            raise ValueError("overlap fraction must be in [0, 1]")


@dataclass
class PartySplit:
    source: SourceData
    target: TargetData
    s_ids: np.ndarray
    t_ids: np.ndarray
    overlap_ids: np.ndarray
    label_ids: np.ndarray
    test_X_T: np.ndarray = None
    test_y: np.ndarray = None
    bayes_labels: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def digests(self):
        return {"overlap": _digest(self.overlap_ids), "labels": _digest(self.label_ids)}


def _digest(ids):
    return hashlib.sha256(np.asarray(ids, dtype=np.int64).tobytes()).hexdigest()


def synthetic(n, p_s, p_t, noise=0.0, seed=0):
    """Linearly separable task: a latent z drives both feature blocks and
    the label y = sign(z . w). With ``noise = 0`` either feature block
    determines z exactly, so the Bayes-optimal labels equal y.

    Returns ``(X_s, X_t, y, bayes)``.
    """
    rng = np.random.default_rng(seed)
    k = max(1, min(p_s, p_t))
    z = rng.normal(size=(n, k))
    w = rng.normal(size=k)
    M_s = rng.normal(size=(k, p_s)) / np.sqrt(k)
    M_t = rng.normal(size=(k, p_t)) / np.sqrt(k)
    X_s = z @ M_s + noise * rng.normal(size=(n, p_s))
    X_t = z @ M_t + noise * rng.normal(size=(n, p_t))
    score = z @ w
    y = np.where(score >= 0, 1.0, -1.0)
    return X_s, X_t, y, y.copy()


def remap_labels(y):
    """Map a two-valued label column to -1/+1 (the larger value -> +1)."""
    vals = np.unique(y)
    if vals.size > 2:
        raise ValueError(f"expected a binary label, found {vals.size} classes")
    if set(vals.tolist()) <= {-1, 1}:
        return np.asarray(y, dtype=np.float64)
    hi = vals[-1]
    return np.where(np.asarray(y) == hi, 1.0, -1.0)


def read_csv(path, label, s_features=None, t_features=None):
    """Read a CSV, one-hot encode categorical columns and return
    ``(X_s, X_t, y, s_columns, t_columns)``."""
    try:
        df = pd.read_csv(path)
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ValueError(f"malformed CSV {path}: {exc}") from exc
    if label not in df.columns:
        raise ValueError(f"label column {label!r} not in {path}")
    features = [c for c in df.columns if c != label]
    if s_features is None and t_features is None:
        half = (len(features) + 1) // 2
        s_features, t_features = features[:half], features[half:]
    elif s_features is None:
        s_features = [c for c in features if c not in t_features]
    elif t_features is None:
        t_features = [c for c in features if c not in s_features]
    missing = [c for c in list(s_features) + list(t_features) if c not in df.columns]
    if missing:
        raise ValueError(f"columns not found: {missing}")
    if set(s_features) & set(t_features):
        raise ValueError("S and T feature sets must be disjoint")
    if df[[label] + list(s_features) + list(t_features)].isnull().values.any():
        raise ValueError("missing values are not supported")

    def block(cols):
        part = pd.get_dummies(df[list(cols)], dtype=np.float64)
        X = part.to_numpy(dtype=np.float64)
        sd = X.std(axis=0)
        return (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0), list(part.columns)

    X_s, s_cols = block(s_features)
    X_t, t_cols = block(t_features)
    return X_s, X_t, remap_labels(df[label].to_numpy()), s_cols, t_cols


def split(X_s, X_t, y, overlap, n_lab=None, seed=0, test_fraction=0.0, bayes=None):
    """Shuffle the entities under ``seed`` and build both parties' views."""
    n = len(y)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = int(round(test_fraction * n))
    test, train = perm[:n_test], perm[n_test:]
    m = len(train)
    # m entities: S gets n_s of them, T the overlap plus the remainder
    n_s = max(1, (m + 1) // 2) if overlap < 1.0 else m
    n_st = int(round(overlap * n_s))
    s_ids = train[:n_s]
    t_ids = np.concatenate([s_ids[n_s - n_st:], train[n_s:]])
    if len(t_ids) == 0:
        t_ids = train[n_s - 1:n_s]  # T always holds at least one row
    overlap_ids = s_ids[n_s - n_st:]
    n_lab = n_st if n_lab is None else int(n_lab)
    if n_lab > n_st or n_lab > n_s or n_lab < 0:
        raise ValueError(f"N_L={n_lab} exceeds the overlap ({n_st})")
    label_ids = overlap_ids[:n_lab]
    src = SourceData(X_s[s_ids], y[s_ids], np.arange(n_s - n_st, n_s), y[label_ids])
    tgt = TargetData(X_t[t_ids], np.arange(n_st), np.arange(n_lab))
    return PartySplit(src, tgt, s_ids, t_ids, overlap_ids, label_ids,
                      X_t[test] if n_test else None, y[test] if n_test else None,
                      None if bayes is None else bayes[test] if n_test else None)


def load_and_split(spec):
    """Deterministic per-party datasets for ``spec`` (synthetic or CSV)."""
    if spec.path is None:
        X_s, X_t, y, bayes = synthetic(spec.n_samples, spec.p_s, spec.p_t, spec.noise, spec.seed)
        meta = {"source": "synthetic"}
    else:
        X_s, X_t, y, s_cols, t_cols = read_csv(spec.path, spec.label, spec.s_features, spec.t_features)
        bayes = None
        meta = {"source": spec.path, "s_columns": s_cols, "t_columns": t_cols}
    out = split(X_s, X_t, y, spec.overlap, spec.n_lab, spec.seed, spec.test_fraction, bayes)
    out.meta = meta
    return out
