import hashlib
import struct

import numpy as np
import pytest

from sftl.arith import FIELD, RING, FixedCodec
from sftl.data import DatasetSpec, load_and_split
from sftl.model import Hyperparams, LocalNet
from sftl.preprocessing import (MAGIC, Dealer, DealerConfig, FileStore, OfflineCostModel,
                                PreprocessingExhausted, PreprocFile, audit_pair,
                                count_required_material, deal, estimate_offline_cost,
                                iteration_cost)
from sftl.protocol import PartyInput, train_pair

COUNTS = {"triple": 100, "mask0": 20, "mask1": 30, "trunc": 40, "ltz": 3}


@pytest.mark.parametrize("engine", ["sh", "mal"])
def test_deal_audit_and_determinism(tmp_path, engine):
    paths = [tmp_path / "a.S", tmp_path / "a.T"]
    again = [tmp_path / "b.S", tmp_path / "b.T"]
    cfg = DealerConfig(engine, COUNTS, b"\x01" * 32)
    deal(cfg, paths)
    deal(cfg, again)
    for p, q in zip(paths, again):
        assert p.read_bytes() == q.read_bytes()
    checked = audit_pair(*paths)
    assert checked["triple"] == 100 and checked["ltz"] == 3 * 64
    other = [tmp_path / "c.S", tmp_path / "c.T"]
    deal(DealerConfig(engine, COUNTS, b"\x02" * 32), other)
    assert other[0].read_bytes() != paths[0].read_bytes()


def test_audit_detects_corruption(tmp_path):
    paths = [tmp_path / "x.S", tmp_path / "x.T"]
    deal(DealerConfig("mal", COUNTS, b"\x03" * 32), paths)
    f0, f1 = PreprocFile.read(paths[0]), PreprocFile.read(paths[1])
    f0.material["triple"]["c"] = f0.material["triple"]["c"].copy()
    f0.material["triple"]["c"][5] ^= 1
    with pytest.raises(AssertionError):
        audit_pair(f0, f1)
    f0 = PreprocFile.read(paths[0])
    f0.alpha_i = FIELD.add(f0.alpha_i, FIELD.element(1))
    with pytest.raises(AssertionError, match="MAC"):
        audit_pair(f0, f1)


def test_file_header_layout(tmp_path):
    paths = [tmp_path / "h.S", tmp_path / "h.T"]
    dealer = deal(DealerConfig("mal", {"triple": 1}, b"\x04" * 32), paths)
    raw = paths[1].read_bytes()
    assert raw[:12] == MAGIC and struct.unpack_from("<I", raw, 12)[0] == 1
    code, modulus, party = struct.unpack_from("<BQH", raw, 16)
    assert (code, modulus, party) == (FIELD.code, FIELD.modulus, 1)
    assert struct.unpack_from("<Q", raw, 27)[0] == int(dealer.alpha_shares[1])
    sh = [tmp_path / "s.S", tmp_path / "s.T"]
    deal(DealerConfig("sh", {"triple": 1}, b"\x04" * 32), sh)
    code, modulus, _ = struct.unpack_from("<BQH", sh[0].read_bytes(), 16)
    assert (code, modulus) == (RING.code, 0)


def test_zero_counts_give_near_empty_files(tmp_path):
    paths = [tmp_path / "z.S", tmp_path / "z.T"]
    deal(DealerConfig("sh", {}, b"\x00" * 32), paths)
    assert len(paths[0].read_bytes()) == 16 + 11 + 1


def test_file_store_exhaustion():
    s0, _ = Dealer("mal", 5).stores({"triple": 10})
    s0.take("triple", 7)
    assert s0.consumed["triple"] == 7
    with pytest.raises(PreprocessingExhausted):
        s0.take("triple", 4)
    with pytest.raises(PreprocessingExhausted):
        s0.take("trunc", 1)


def test_stream_matches_regeneration():
    dealer = Dealer("mal", 9)
    s = dealer.stream(1)
    first = s.take("triple", 5)
    again = dealer.generate("triple", 0, 5)[1]
    assert all(np.array_equal(first[k], again[k]) for k in first)


def test_offline_cost_model():
    bits, secs = estimate_offline_cost(1, "mal")
    assert bits == 13.71e3
    assert estimate_offline_cost(8856, "mal")[1] == 1.0
    assert estimate_offline_cost(1, "sh") == (6240.0, None)
    assert OfflineCostModel().sh_bits_per_triple == 65 * 192 / 2


def test_label_term_counts_are_affine_in_n_lab():
    t = [iteration_cost(n, 4, [5, 3], [4, 3], "mal").counts["triple"] for n in (2, 4, 6, 8)]
    steps = np.diff(t)
    assert np.all(steps == steps[0]) and steps[0] > 0


def test_degenerate_shape_needs_only_check_material():
    for engine in ("sh", "mal"):
        c = iteration_cost(0, 0, [5, 3], [4, 3], engine).counts
        assert c["ltz"] == 1 and c["trunc"] == 0
        assert c["triple"] == (64 if engine == "mal" else 63)


def _tiny(n_lab=3, overlap=0.6, sizes=(3,), seed=0):
    sp = load_and_split(DatasetSpec(n_samples=24, p_s=4, p_t=3, overlap=overlap, n_lab=n_lab, seed=seed))
    net_S = LocalNet.init([4, *sizes], seed + 1)
    net_T = LocalNet.init([3, *sizes], seed + 2)
    return (PartyInput("S", net_S, sp.source, sp.overlap_ids, sp.label_ids),
            PartyInput("T", net_T, sp.target, sp.overlap_ids, sp.label_ids))


@pytest.mark.parametrize("engine", ["sh", "mal"])
@pytest.mark.parametrize("n_lab,overlap,sizes", [(3, 0.6, (3,)), (2, 0.5, (4, 3)), (0, 0.0, (3,))])
def test_counts_match_consumption(engine, n_lab, overlap, sizes):
    inp_S, inp_T = _tiny(n_lab, overlap, sizes)
    iters = 3
    hp = Hyperparams(max_iter=iters - 1, eps=1e-12)
    plan = count_required_material(len(inp_S.data.y_lab), len(inp_S.data.overlap),
                                   inp_S.net.sizes, inp_T.net.sizes, engine, iters)
    stores = Dealer(engine, 1).stores(plan.counts)
    rS, rT, chans = train_pair(inp_S, inp_T, engine, hp, seed=3, stores=stores)
    assert not isinstance(rS, BaseException), rS
    assert rS.iterations == iters
    for s in stores:
        assert s.consumed == {k: plan.counts.get(k, 0) for k in s.consumed}
    per = plan.per_iteration
    m = rS.metrics[-1]
    assert (m.bytes_sent, m.bytes_received, m.rounds) == (per.bytes_sent(0), per.bytes_received(0),
                                                        per.rounds())
    first = rT.metrics[0]
    assert (first.bytes_sent, first.rounds) == (plan.first.bytes_sent(1), plan.first.rounds())


def test_dealer_seed_forms():
    a = Dealer("sh", 7).generate("triple", 0, 3)
    b = Dealer("sh", b"\x07" + b"\x00" * 31).generate("triple", 0, 3)
    assert np.array_equal(a[0]["a"], b[0]["a"])
    c = Dealer("sh", "seed").generate("triple", 0, 3)
    d = Dealer("sh", hashlib.sha256(b"seed").digest()).generate("triple", 0, 3)
    assert np.array_equal(c[1]["c"], d[1]["c"])


def test_codec_frac_bits_drive_trunc_pairs():
    f = FixedCodec(f=12).f
    mats = Dealer("mal", 1, frac_bits=f).generate("trunc", 0, 50)
    r = FIELD.add(mats[0]["r"], mats[1]["r"])
    hi = FIELD.add(mats[0]["r_hi"], mats[1]["r_hi"])
    assert np.array_equal(r >> np.uint64(f), hi)
    assert isinstance(FileStore(Dealer("mal", 1).material({"ltz": 2})[0]).take("ltz", 2)["bits"],
                      np.ndarray)
