"""Two-party training and prediction sessions.

Party 0 is the source S (holds labels), party 1 the target T. Each
iteration recomputes local representations, input-shares the operands of
the joint terms, evaluates them under the chosen engine, sends every
gradient only to its owner and reveals a single bit telling both parties
whether the loss still improves by at least ``eps``.
"""

import hashlib
import json
import threading
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .arith import FIELD, RING, U64, FixedCodec, decode, encode
from .model import (BOOST_BITS, CircuitShape, Hyperparams, decode_output, operand_shapes,
                    secure_joint, share_operands, source_lambda, source_operands,
                    target_operands)
from .net import MsgType, loopback_pair
from .preprocessing import LTZ_BITS, Dealer
from .sharing import ProtocolAbort, SharedArray, Tamper, make_engine

ROLES = {"S": 0, "T": 1}


class ParameterMismatch(ProtocolAbort):
    """Handshake found differing session parameters."""


@dataclass
class SessionConfig:
    role: str
    engine: str = "mal"
    hyper: Hyperparams = field(default_factory=Hyperparams)
    codec: FixedCodec = field(default_factory=FixedCodec)
    preproc: object = None   # path, FileStore or DealerStream
    peer: str = None         # host:port to connect to
    listen: int = None       # port to accept on
    seed: int = None
    metrics_out: str = None
    cheat: str = "none"
    cheat_at: int = 0

    @property
    def party(self):
        return ROLES[self.role]


@dataclass
class IterationMetrics:
    iter: int
    init_ms: float
    compute_ms: float
    reveal_ms: float
    bytes_sent: int
    bytes_received: int
    rounds: int
    triples: int
    converged: int = 0

    DETERMINISTIC = ("iter", "bytes_sent", "bytes_received", "rounds", "triples", "converged")

    def deterministic(self):
        return tuple(getattr(self, k) for k in self.DETERMINISTIC)

    def as_record(self):
        return (f"iter={self.iter} init_ms={self.init_ms:.3f} compute_ms={self.compute_ms:.3f} "
                f"reveal_ms={self.reveal_ms:.3f} bytes={self.bytes_sent} rounds={self.rounds} "
                f"triples={self.triples} converged={self.converged}")


@dataclass
class TrainResult:
    net: object
    metrics: list
    iterations: int
    converged: bool
    losses: list = field(default_factory=list)  # only filled with reveal_loss=True


# ---------------------------------------------------------------- handshake


def index_digest(ids):
    ids = np.asarray([] if ids is None else ids, dtype=np.int64)
    return hashlib.sha256(b"ids" + ids.tobytes()).hexdigest()[:32]


def session_params(engine_kind, codec, hyper, n_lab, n_overlap, overlap_ids=None, label_ids=None):
    """The values both parties must agree on."""
    dom = FIELD if engine_kind == "mal" else RING
    return {
        "engine": engine_kind, "modulus": str(dom.modulus),
        "codec": [codec.f, codec.k, codec.sigma], "boost": BOOST_BITS,
        "hyper": asdict(hyper), "n_lab": int(n_lab), "n_overlap": int(n_overlap),
        "overlap_digest": index_digest(overlap_ids), "label_digest": index_digest(label_ids),
    }


def handshake(channel, params, sizes):
    """Exchange parameters (plus this party's layer sizes) and verify.

    Returns the peer's layer sizes. Raises :class:`ParameterMismatch`
    before any share is sent if anything differs.
    """
    mine = dict(params, sizes=list(map(int, sizes)))
    peer = json.loads(channel.exchange(MsgType.HANDSHAKE, json.dumps(mine, sort_keys=True).encode(),
                                       "handshake"))
    diff = sorted(k for k in params if peer.get(k) != params[k])
    if diff:
        channel.send_abort("parameter mismatch")
        raise ParameterMismatch("parameter mismatch: " + ", ".join(diff))
    return tuple(peer["sizes"])


# ---------------------------------------------------------------- comparison


def _xor_public(engine, bit, c):
    """bit XOR c for a public 0/1 array c (linear)."""
    flip = engine.add_public(engine.neg(bit), np.ones(bit.shape, dtype=U64))
    c = c.astype(bool)
    value = np.where(c, flip.value, bit.value)
    mac = None if bit.mac is None else np.where(c, flip.mac, bit.mac)
    return SharedArray(value, mac)


def secure_ltz(engine, z, label="ltz"):
    """Shared bit [z < 0] for a shared signed array ``z``.

    A dealer value r with shared bits masks z perfectly (uniform mask over
    the whole ring/field). From the public c = z + r the sign follows from a
    ripple comparison of c against r's shared bits, one multiplication per
    bit position.
    """
    dom = engine.domain
    n = z.size
    z = z.ravel()
    mat = engine._take("ltz", n)
    bits = SharedArray(mat["bits"], mat.get("bits_mac"))  # n x 64
    powers = np.array([1 << i for i in range(LTZ_BITS)], dtype=object)
    pw = dom.element(powers % dom.modulus)
    r = engine.sum(engine.mul_public(bits, pw[None, :]), axis=1)
    if dom is FIELD:
        x = engine.scale_int(z, 2)  # LSB of 2z mod p is the sign of z
        width = LTZ_BITS
    else:
        x = z
        width = LTZ_BITS - 1        # compare the low 63 bits; bit 63 enters by XOR
    c = engine.open(engine.add(x, r), label)
    cb = ((c[:, None] >> np.arange(LTZ_BITS, dtype=U64)) & U64(1)).astype(U64)
    one = np.ones(n, dtype=U64)

    def lt_bit(i):  # [c_i < r_i] = (1 - c_i) r_i
        return engine.mul_public(bits[:, i], one - cb[:, i])

    lt = lt_bit(0)
    for i in range(1, width):
        eq = _xor_public(engine, bits[:, i], one - cb[:, i])  # [c_i == r_i]
        lt = engine.add(lt_bit(i), engine.mul(eq, lt))
    top = LTZ_BITS - 1 if dom is RING else 0
    t = _xor_public(engine, bits[:, top], cb[:, top])
    prod = engine.mul(t, lt)
    out = engine.sub(engine.add(t, lt), engine.scale_int(prod, 2))
    return out


def convergence_check(engine, L, L_prev, eps, codec, boost=BOOST_BITS):
    """Shared bit of [L_prev - L < eps]; both losses carry f + boost bits."""
    eps_enc = encode(eps * 2.0**boost, codec, engine.domain)
    z = engine.add_public(engine.sub(L_prev, L), engine.domain.neg(eps_enc))
    return secure_ltz(engine, z, "ltz-conv")


# ---------------------------------------------------------------- training


def _triples_used(engine):
    return engine.store.consumed["triple"] if engine.store is not None else 0


def train_party(engine, role, net, data, hyper, shape, codec=FixedCodec(), metrics_cb=None,
                reveal_loss=False):
    """Run Algorithm-1 style training for one party over an open engine.

    ``data`` is SourceData for S and TargetData for T. With
    ``reveal_loss`` the loss is additionally opened every iteration (debug
    and oracle comparison only; it leaks L).
    """
    hp = hyper
    ch = engine.channel
    metrics, losses = [], []
    L_prev = None
    it, converged = 0, False
    while it <= hp.max_iter:
        t0 = time.perf_counter()
        stats0, trip0 = ch.stats.snapshot(), _triples_used(engine)
        if role == "S":
            ops, g_local, _ = source_operands(net, data, hp)
        else:
            ops, g_local = target_operands(net, data, hp)
        S, T = share_operands(engine, role, ops, shape, codec)
        t1 = time.perf_counter()
        l_st, g_S, g_T = secure_joint(engine, S, T, shape)
        L = engine.add(engine.add(l_st, S["L1"]), T["L1"])
        bit = convergence_check(engine, L, L_prev, hp.eps, codec) if L_prev is not None else None
        t2 = time.perf_counter()
        outputs = [(g, owner) for g, owner in ((g_S, 0), (g_T, 1)) if g is not None]
        reveals = ([bit] if bit is not None else []) + ([L] if reveal_loss else [])
        results, opened = engine.deliver(outputs, reveals, "grad")
        mine = [r for r in results if r is not None]
        grad = g_local + (decode_output(mine[0], codec, engine.domain) if mine else 0.0)
        net.apply_update(grad, hp.eta)
        done = bool(int(opened[0][0])) if bit is not None else False
        if reveal_loss:
            losses.append(float(decode_output(opened[-1], codec, engine.domain)[0]))
        t3 = time.perf_counter()
        d = ch.stats - stats0
        m = IterationMetrics(it, 1e3 * (t1 - t0), 1e3 * (t2 - t1), 1e3 * (t3 - t2),
                             d.bytes_sent, d.bytes_received, d.rounds,
                             _triples_used(engine) - trip0, int(done))
        metrics.append(m)
        if metrics_cb is not None:
            metrics_cb(m)
        if done:
            converged = True
            break
        L_prev = L
        it += 1
    return TrainResult(net, metrics, len(metrics), converged, losses)


def predict_party(engine, role, net, X=None, src=None, codec=FixedCodec(), n=None):
    """Federated inference: T holds query rows X, S holds its trained net
    and data. The sign bit goes to S, who sends the labels to T.

    Returns the +-1 labels at both parties.
    """
    dom = engine.domain
    if role == "S":
        lam = source_lambda(net.forward(src.X), src.y)
        d = lam.size
        own, peer = engine.input_many([encode(lam, codec, dom)], [(n, d)], "predict-input")
        lam_s, U = own[0], peer[0]
    else:
        U_T = net.forward(X)
        n, d = U_T.shape
        own, peer = engine.input_many([encode(U_T, codec, dom)], [(d,)], "predict-input")
        U, lam_s = own[0], peer[0]
    psi_raw = engine.sum(engine.mul(lam_s[None, :], U), axis=1)  # 2f bits, exact sign
    bit = secure_ltz(engine, psi_raw, "ltz-pred")
    res = engine.output_to(bit, 0, "pred-bit")
    if role == "S":
        labels = np.where(res.astype(np.int64) == 1, -1, 1).astype(np.int8)
        engine.channel.send(MsgType.OUTPUT, labels.tobytes(), "labels->T")
        return labels
    return np.frombuffer(engine.channel.recv(MsgType.OUTPUT, "labels->T"), dtype=np.int8).copy()


# ---------------------------------------------------------------- in-process pairs


@dataclass
class PartyInput:
    role: str
    net: object
    data: object
    overlap_ids: object = None
    label_ids: object = None


def _shape_from(role, net, data, peer_sizes):
    if role == "S":
        return CircuitShape(len(data.y_lab), len(data.overlap), tuple(net.sizes), tuple(peer_sizes))
    return CircuitShape(len(data.labeled), len(data.overlap), tuple(peer_sizes), tuple(net.sizes))


def open_session(channel, cfg, party_input, store=None):
    """Handshake and engine construction for one party."""
    role, net, data = party_input.role, party_input.net, party_input.data
    n_lab = len(data.y_lab) if role == "S" else len(data.labeled)
    params = session_params(cfg.engine, cfg.codec, cfg.hyper, n_lab, len(data.overlap),
                            party_input.overlap_ids, party_input.label_ids)
    peer_sizes = handshake(channel, params, net.sizes)
    shape = _shape_from(role, net, data, peer_sizes)
    tamper = Tamper(cfg.cheat, cfg.cheat_at) if cfg.cheat and cfg.cheat != "none" else None
    engine = make_engine(cfg.engine, ROLES[role], channel, store, codec=cfg.codec,
                         seed=cfg.seed, tamper=tamper)
    return engine, shape


def run_pair(fn_S, fn_T, engine="mal", seed=0, codec=FixedCodec(), transcripts=False,
             stores=None, timeout=600):
    """Run ``fn_X(channel, store)`` for both parties on threads over loopback
    TCP with a shared dealer stream; returns ``(result_S, result_T, channels)``.
    Exceptions are returned in place of results."""
    chans = loopback_pair(transcripts=transcripts)
    if stores is None:
        dealer = Dealer(engine, seed, codec.f)
        stores = (dealer.stream(0), dealer.stream(1))
    out = [None, None]

    def worker(p, fn):
        try:
            out[p] = fn(chans[p], stores[p])
        except BaseException as exc:  # noqa: BLE001 - surfaced to caller
            out[p] = exc
        finally:
            chans[p].close()

    threads = [threading.Thread(target=worker, args=(0, fn_S), daemon=True),
               threading.Thread(target=worker, args=(1, fn_T), daemon=True)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout)
    return out[0], out[1], chans


def train_pair(inp_S, inp_T, engine="mal", hyper=Hyperparams(), codec=FixedCodec(), seed=0,
               reveal_loss=False, cheat=(None, None), transcripts=False, stores=None):
    """Convenience: full two-party training in one process."""
    def party(inp, p):
        def fn(channel, store):
            cfg = SessionConfig(inp.role, engine, hyper, codec, seed=None if seed is None else seed + p,
                                cheat=(cheat[p] or ("none", 0))[0], cheat_at=(cheat[p] or ("none", 0))[1])
            eng, shape = open_session(channel, cfg, inp, store)
            return train_party(eng, inp.role, inp.net, inp.data, hyper, shape, codec,
                               reveal_loss=reveal_loss)
        return fn
    return run_pair(party(inp_S, 0), party(inp_T, 1), engine, seed, codec, transcripts, stores)


def predict_pair(net_S, src, net_T, X, engine="mal", codec=FixedCodec(), seed=0):
    def fn_S(channel, store):
        eng = make_engine(engine, 0, channel, store, codec=codec, seed=seed)
        return predict_party(eng, "S", net_S, src=src, codec=codec, n=len(X))

    def fn_T(channel, store):
        eng = make_engine(engine, 1, channel, store, codec=codec, seed=seed + 1)
        return predict_party(eng, "T", net_T, X=X, codec=codec)
    return run_pair(fn_S, fn_T, engine, seed, codec)


def oracle_psi(net_S, src, net_T, X):
    return net_T.forward(X) @ source_lambda(net_S.forward(src.X), src.y)


def decode_signed(values, codec, domain):
    return decode(values, codec, domain)


__all__ = [
    "ParameterMismatch", "SessionConfig", "IterationMetrics", "TrainResult", "PartyInput",
    "handshake", "session_params", "secure_ltz", "convergence_check", "train_party",
    "predict_party", "open_session", "run_pair", "train_pair", "predict_pair", "oracle_psi",
    "operand_shapes",
]
