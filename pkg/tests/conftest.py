import threading

import pytest

from sftl.arith import FixedCodec
from sftl.net import loopback_pair
from sftl.preprocessing import Dealer
from sftl.sharing import make_engine


def run_both(fn, kind="mal", seed=7, tampers=(None, None), transcripts=False, codec=None):
    """Run ``fn(engine)`` for both parties over loopback; return both results.

    Exceptions are returned in place of results.
    """
    chans = loopback_pair(transcripts=transcripts)
    codec = codec or FixedCodec()
    dealer = Dealer(kind, seed, codec.f)
    out = [None, None]

    def worker(p):
        eng = make_engine(kind, p, chans[p], dealer.stream(p), seed=seed + 100, tamper=tampers[p],
                          codec=codec)
        try:
            out[p] = fn(eng)
        except BaseException as exc:  # noqa: BLE001
            out[p] = exc
        finally:
            chans[p].close()

    threads = [threading.Thread(target=worker, args=(p,)) for p in (0, 1)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(60)
    run_both.channels = chans
    return out


@pytest.fixture
def both():
    return run_both


def random_instance(seed, n_s=None, n_t=None, n_st=None, n_lab=None, d=None, hidden=(), p_s=None,
                    p_t=None):
    """Small random two-party problem: (net_S, net_T, src, tgt)."""
    import numpy as np

    from sftl.model import LocalNet, SourceData, TargetData

    rng = np.random.default_rng(seed)
    n_s = n_s or int(rng.integers(4, 30))
    n_t = n_t or int(rng.integers(4, 30))
    n_st = int(rng.integers(0, min(n_s, n_t, 20) + 1)) if n_st is None else n_st
    n_lab = int(rng.integers(0, min(n_t, 20) + 1)) if n_lab is None else n_lab
    d = d or int(rng.integers(1, 9))
    p_s = p_s or int(rng.integers(1, 6))
    p_t = p_t or int(rng.integers(1, 6))
    X_s, X_t = rng.normal(size=(n_s, p_s)), rng.normal(size=(n_t, p_t))
    y = rng.choice([-1.0, 1.0], size=n_s)
    ov_s = np.sort(rng.choice(n_s, n_st, replace=False))
    ov_t = rng.choice(n_t, n_st, replace=False)
    lab = rng.choice(n_t, n_lab, replace=False)
    src = SourceData(X_s, y, ov_s, rng.choice([-1.0, 1.0], size=n_lab))
    tgt = TargetData(X_t, ov_t, lab)
    net_S = LocalNet.init([p_s, *hidden, d], rng)
    net_T = LocalNet.init([p_t, *hidden, d], rng)
    return net_S, net_T, src, tgt
