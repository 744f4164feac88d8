"""Online secret-sharing engines for two parties.

:class:`SemiHonestEngine` shares values additively in Z_{2^64};
:class:`MaliciousEngine` shares them in F_p together with additive MAC
shares under a global key alpha, and verifies every partial opening with a
batched MAC check before anything is output.

Both engines work on :class:`SharedArray` operands of arbitrary shape and
batch all openings of one logical step into a single frame.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .arith import FIELD, RING, U64, FixedCodec, from_wire, to_wire
from .net import MsgType
from .preprocessing import PreprocessingExhausted  # noqa: F401  (re-export)

DESIGNATED = 0  # party that absorbs public constants into its value share


class ProtocolAbort(RuntimeError):
    """The protocol detected cheating or an inconsistency and stopped."""


class MacCheckError(ProtocolAbort):
    pass


class CommitmentError(ProtocolAbort):
    pass


class EngineMismatch(TypeError):
    pass


class SharedArray:
    """One party's share of a secret array (value share and, for the
    malicious engine, the matching MAC share)."""

    __slots__ = ("value", "mac")

    def __init__(self, value, mac=None):
        self.value = np.asarray(value, dtype=U64)
        self.mac = None if mac is None else np.asarray(mac, dtype=U64)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def _map(self, fn):
        return SharedArray(fn(self.value), None if self.mac is None else fn(self.mac))

    def __getitem__(self, idx):
        return self._map(lambda a: a[idx])

    def reshape(self, *shape):
        return self._map(lambda a: a.reshape(*shape))

    def ravel(self):
        return self._map(np.ravel)

    @property
    def T(self):
        return self._map(lambda a: a.T)

    def broadcast_to(self, shape):
        return self._map(lambda a: np.broadcast_to(a, shape))

    @staticmethod
    def concat(items, axis=0):
        value = np.concatenate([s.value for s in items], axis=axis)
        if items[0].mac is None:
            return SharedArray(value)
        return SharedArray(value, np.concatenate([s.mac for s in items], axis=axis))

    def __repr__(self):
        return f"SharedArray(shape={self.shape}, authenticated={self.mac is not None})"


@dataclass
class Tamper:
    """Adversary injection: corrupt the ``at``-th event of ``kind``.

    kind is ``"share"`` (a wrong value share enters a multiplication),
    ``"open"`` (a shifted share is sent during a partial opening) or
    ``"output"`` (a shifted share is sent during an output).
    """

    kind: str
    at: int = 0
    delta: int = 1
    fired: bool = False
    _seen: dict = field(default_factory=dict)

    def tick(self, kind):
        if kind != self.kind or self.fired:
            return False
        n = self._seen.get(kind, 0)
        self._seen[kind] = n + 1
        if n == self.at:
            self.fired = True
            return True
        return False


class _Engine:
    domain = None
    kind = None

    def __init__(self, party, channel, store, codec=FixedCodec(), seed=None, tamper=None):
        if party not in (0, 1):
            raise ValueError("party must be 0 or 1")
        self.party = party
        self.peer = 1 - party
        self.channel = channel
        self.store = store
        self.codec = codec
        entropy = None if seed is None else [int(seed) & (2**63 - 1), party, 0x5f71]
        self.rng = np.random.default_rng(entropy)
        self.tamper = tamper
        self.aborted = False

    # -- helpers
    def _check(self, *xs):
        for x in xs:
            if not isinstance(x, SharedArray):
                raise EngineMismatch(f"expected SharedArray, got {type(x).__name__}")
            if (x.mac is None) != (self.domain is RING):
                raise EngineMismatch("operand belongs to the other engine kind")

    def _tick(self, kind):
        return self.tamper is not None and self.tamper.tick(kind)

    def _take(self, kind, n):
        if self.aborted:
            raise ProtocolAbort("engine was zeroized")
        return self.store.take(kind, n)

    def _exchange_open(self, values, label, msg_type=MsgType.OPEN):
        out = np.ascontiguousarray(values, dtype=U64).ravel().copy()
        if out.size and self._tick("open" if msg_type == MsgType.OPEN else "output"):
            out[0] = self.domain.add(out[0], self.domain.element(self.tamper.delta))
        peer = from_wire(self.channel.exchange(msg_type, to_wire(out), label))
        if peer.size != out.size:
            raise ProtocolAbort(f"{label}: peer opened {peer.size} elements, expected {out.size}")
        return self.domain.add(np.ravel(values), peer)

    # -- linear operations (no communication)
    def add(self, x, y):
        self._check(x, y)
        d = self.domain
        return SharedArray(d.add(x.value, y.value), None if x.mac is None else d.add(x.mac, y.mac))

    def sub(self, x, y):
        self._check(x, y)
        d = self.domain
        return SharedArray(d.sub(x.value, y.value), None if x.mac is None else d.sub(x.mac, y.mac))

    def neg(self, x):
        self._check(x)
        d = self.domain
        return SharedArray(d.neg(x.value), None if x.mac is None else d.neg(x.mac))

    def mul_public(self, x, c):
        """Multiply by public element(s) ``c`` (no rescaling)."""
        self._check(x)
        d = self.domain
        c = np.asarray(c, dtype=U64)
        return SharedArray(d.mul(x.value, c), None if x.mac is None else d.mul(x.mac, c))

    def scale_int(self, x, k):
        """Multiply by a public (possibly negative) integer."""
        return self.mul_public(x, self.domain.element(int(k)))

    def sum(self, x, axis=None):
        self._check(x)
        d = self.domain
        return SharedArray(d.sum(x.value, axis=axis),
                           None if x.mac is None else d.sum(x.mac, axis=axis))

    def add_public(self, x, c):
        self._check(x)
        d = self.domain
        c = np.broadcast_to(np.asarray(c, dtype=U64), x.shape)
        value = d.add(x.value, c) if self.party == DESIGNATED else np.array(x.value, copy=True)
        mac = None if x.mac is None else d.add(x.mac, d.mul(c, self.store.alpha_i))
        return SharedArray(value, mac)

    def constant(self, c, shape=()):
        zero = SharedArray(np.zeros(shape, dtype=U64),
                           None if self.domain is RING else np.zeros(shape, dtype=U64))
        return self.add_public(zero, c)

    def zeros(self, shape):
        return self.constant(np.zeros(shape, dtype=U64), shape)

    def mul(self, x, y):
        return self.mul_many([(x, y)])[0]

    def trunc(self, x, bits=None):
        return self.trunc_many([x], bits)[0]

    def open(self, x, label="open"):
        return self.open_many([x], label)[0]

    def reveal(self, x, label="reveal"):
        return self.reveal_many([x], label)[0]

    def output_to(self, x, recipient, label="output"):
        return self.output_many([(x, recipient)], label)[0]

    def input(self, value, owner, shape=None):
        if owner == self.party:
            return self.input_many([value], [])[0][0]
        return self.input_many([], [shape])[1][0]

    def mac_check(self):
        pass

    def zeroize(self):
        self.aborted = True
        self.store = None

    def _abort(self, exc):
        self.zeroize()
        self.channel.send_abort(str(exc))
        raise exc


class SemiHonestEngine(_Engine):
    """Additive sharing in Z_{2^64} against a passive adversary."""

    domain = RING
    kind = "sh"

    def input_many(self, own, peer_shapes, label="input"):
        own = [np.asarray(v, dtype=U64) for v in own]
        masks = [RING.random(self.rng, v.shape) for v in own]
        payload = np.concatenate([m.ravel() for m in masks]) if masks else np.zeros(0, U64)
        got = self.channel.exchange_elements(MsgType.MASK_DELTA, payload, label)
        mine = [SharedArray(RING.sub(v, m)) for v, m in zip(own, masks)]
        theirs, off = [], 0
        for shape in peer_shapes:
            n = int(np.prod(shape, dtype=np.int64))
            theirs.append(SharedArray(got[off:off + n].reshape(shape)))
            off += n
        if off != got.size:
            raise ProtocolAbort("input sizes disagree")
        return mine, theirs

    def mul_many(self, pairs, label="beaver"):
        if not pairs:
            return []
        xs, ys, shapes = [], [], []
        for x, y in pairs:
            self._check(x, y)
            shape = np.broadcast_shapes(x.shape, y.shape)
            shapes.append(shape)
            xs.append(np.broadcast_to(x.value, shape).ravel())
            ys.append(np.broadcast_to(y.value, shape).ravel())
        xv, yv = np.concatenate(xs), np.concatenate(ys)
        n = xv.size
        if self._tick("share"):
            xv = xv.copy()
            xv[0] = RING.add(xv[0], RING.element(self.tamper.delta))
        t = self._take("triple", n)
        opened = self._exchange_open(np.concatenate([RING.sub(xv, t["a"]), RING.sub(yv, t["b"])]), label)
        eps, rho = opened[:n], opened[n:]
        z = RING.add(RING.add(t["c"], RING.mul(eps, t["b"])), RING.mul(rho, t["a"]))
        if self.party == DESIGNATED:
            z = RING.add(z, RING.mul(eps, rho))
        return _split(z, shapes, None)

    def trunc_many(self, xs, bits=None):
        """Local probabilistic truncation of each party's share."""
        s = U64(self.codec.f if bits is None else bits)
        out = []
        for x in xs:
            self._check(x)
            if self.party == 0:
                out.append(SharedArray(x.value >> s))
            else:
                out.append(SharedArray(RING.neg(RING.neg(x.value) >> s)))
        return out

    def open_many(self, xs, label="open"):
        if not xs:
            return []
        for x in xs:
            self._check(x)
        flat = np.concatenate([x.value.ravel() for x in xs])
        opened = self._exchange_open(flat, label)
        return _split(opened, [x.shape for x in xs], None, plain=True)

    reveal_many = open_many

    def output_many(self, items, label="output"):
        return self.deliver(items, (), label)[0]

    def deliver(self, items, reveals=(), label="output"):
        """Private outputs ``(x, recipient)`` as directed frames to their
        owners, plus public ``reveals`` opened in one exchange."""
        opened = self.open_many(list(reveals), "reveal") if reveals else []
        results = [None] * len(items)
        for recipient in (0, 1):
            idx = [i for i, (_, r) in enumerate(items) if r == recipient]
            if not idx:
                continue
            if recipient == self.party:
                peer = self.channel.recv_elements(MsgType.OUTPUT, f"{label}->{recipient}")
                off = 0
                for i in idx:
                    x = items[i][0]
                    self._check(x)
                    v = RING.add(x.value.ravel(), peer[off:off + x.size])
                    results[i] = v.reshape(x.shape)
                    off += x.size
            else:
                flat = np.concatenate([items[i][0].value.ravel() for i in idx]).copy()
                if flat.size and self._tick("output"):
                    flat[0] = RING.add(flat[0], RING.element(self.tamper.delta))
                self.channel.send_elements(MsgType.OUTPUT, flat, f"{label}->{recipient}")
        return results, opened


class MaliciousEngine(_Engine):
    """MAC-authenticated additive sharing in F_p.

    Every partial opening is appended to an open log; :meth:`mac_check`
    verifies all of them at once with a random linear combination and
    commit-then-reveal of each party's check value.
    """

    domain = FIELD
    kind = "mal"

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.open_log = []  # list of (opened values, own MAC shares)
        self.checks_passed = 0

    @property
    def alpha_i(self):
        return self.store.alpha_i

    def _open_logged(self, values, macs, label, msg_type=MsgType.OPEN):
        opened = self._exchange_open(values, label, msg_type)
        self.open_log.append((opened, np.ravel(macs)))
        return opened

    def input_many(self, own, peer_shapes, label="input"):
        own = [np.asarray(v, dtype=U64) for v in own]
        n_own = sum(v.size for v in own)
        n_peer = sum(int(np.prod(s, dtype=np.int64)) for s in peer_shapes)
        counts = {self.party: n_own, self.peer: n_peer}
        masks = {p: self._take(f"mask{p}", counts[p]) for p in (0, 1)}
        mine_m, theirs_m = masks[self.party], masks[self.peer]
        deltas = (FIELD.sub(np.concatenate([v.ravel() for v in own]), mine_m["clear"])
                  if n_own else np.zeros(0, U64))
        got = self.channel.exchange_elements(MsgType.MASK_DELTA, deltas, label)
        if got.size != n_peer:
            raise ProtocolAbort("input sizes disagree")

        def build(mat, delta, shapes):
            out, off = [], 0
            for shape in shapes:
                n = int(np.prod(shape, dtype=np.int64))
                r = SharedArray(mat["share"][off:off + n], mat["share_mac"][off:off + n])
                out.append(self.add_public(r, delta[off:off + n]).reshape(shape))
                off += n
            return out

        return (build(mine_m, deltas, [v.shape for v in own]) if n_own else [],
                build(theirs_m, got, list(peer_shapes)) if n_peer else [])

    def mul_many(self, pairs, label="beaver"):
        if not pairs:
            return []
        xs, xm, ys, ym, shapes = [], [], [], [], []
        for x, y in pairs:
            self._check(x, y)
            shape = np.broadcast_shapes(x.shape, y.shape)
            shapes.append(shape)
            xs.append(np.broadcast_to(x.value, shape).ravel())
            xm.append(np.broadcast_to(x.mac, shape).ravel())
            ys.append(np.broadcast_to(y.value, shape).ravel())
            ym.append(np.broadcast_to(y.mac, shape).ravel())
        xv, yv = np.concatenate(xs), np.concatenate(ys)
        xmac, ymac = np.concatenate(xm), np.concatenate(ym)
        n = xv.size
        if self._tick("share"):
            xv = xv.copy()
            xv[0] = FIELD.add(xv[0], FIELD.element(self.tamper.delta))
        t = self._take("triple", n)
        eps_rho = np.concatenate([FIELD.sub(xv, t["a"]), FIELD.sub(yv, t["b"])])
        macs = np.concatenate([FIELD.sub(xmac, t["a_mac"]), FIELD.sub(ymac, t["b_mac"])])
        opened = self._open_logged(eps_rho, macs, label)
        eps, rho = opened[:n], opened[n:]
        er = FIELD.mul(eps, rho)
        z = FIELD.add(FIELD.add(t["c"], FIELD.mul(eps, t["b"])), FIELD.mul(rho, t["a"]))
        if self.party == DESIGNATED:
            z = FIELD.add(z, er)
        zm = FIELD.add(FIELD.add(t["c_mac"], FIELD.mul(eps, t["b_mac"])), FIELD.mul(rho, t["a_mac"]))
        zm = FIELD.add(zm, FIELD.mul(er, self.alpha_i))
        return _split(z, shapes, zm)

    def trunc_many(self, xs, bits=None):
        """Truncation with dealer pairs (r, r >> f): open x + r, shift the
        public value and subtract the shared high part of r."""
        if not xs:
            return []
        if bits is not None and bits != self.codec.f:
            raise ValueError("dealer truncation pairs are fixed to f bits")
        for x in xs:
            self._check(x)
        n = sum(x.size for x in xs)
        t = self._take("trunc", n)
        xv = np.concatenate([x.value.ravel() for x in xs])
        xm = np.concatenate([x.mac.ravel() for x in xs])
        masked = self._open_logged(FIELD.add(xv, t["r"]), FIELD.add(xm, t["r_mac"]), "trunc")
        hi = SharedArray(FIELD.neg(t["r_hi"]), FIELD.neg(t["r_hi_mac"]))
        res = self.add_public(hi, masked >> U64(self.codec.f))
        return _split(res.value, [x.shape for x in xs], res.mac)

    def open_many(self, xs, label="open"):
        if not xs:
            return []
        for x in xs:
            self._check(x)
        flat = np.concatenate([x.value.ravel() for x in xs])
        macs = np.concatenate([x.mac.ravel() for x in xs])
        opened = self._open_logged(flat, macs, label)
        return _split(opened, [x.shape for x in xs], None, plain=True)

    def reveal_many(self, xs, label="reveal"):
        self.mac_check()
        vals = self.open_many(xs, label)
        self.mac_check()
        return vals

    def output_many(self, items, label="output"):
        return self.deliver(items, (), label)[0]

    def deliver(self, items, reveals=(), label="output"):
        """Private outputs via the recipients' input masks plus public reveals.

        The log is MAC-checked first; then every masked output x - r and
        every reveal is opened in one frame and checked again; finally each
        owner removes its mask r. Nothing is usable before both checks pass.
        """
        self.mac_check()
        results = [None] * len(items)
        vals, macs, clears, shapes = [], [], [], []
        for recipient in (0, 1):
            idx = [i for i, (_, r) in enumerate(items) if r == recipient]
            n = sum(items[i][0].size for i in idx)
            if not n:
                continue
            m = self._take(f"mask{recipient}", n)
            off = 0
            for i in idx:
                x = items[i][0]
                self._check(x)
                sl = slice(off, off + x.size)
                vals.append(FIELD.sub(x.value.ravel(), m["share"][sl]))
                macs.append(FIELD.sub(x.mac.ravel(), m["share_mac"][sl]))
                clears.append((i, m["clear"][sl] if recipient == self.party else None))
                shapes.append(x.shape)
                off += x.size
        for x in reveals:
            self._check(x)
            vals.append(x.value.ravel())
            macs.append(x.mac.ravel())
            shapes.append(x.shape)
        if not vals:
            return results, []
        opened = self._open_logged(np.concatenate(vals), np.concatenate(macs), label, MsgType.OUTPUT)
        self.mac_check()
        parts = _split(opened, shapes, None, plain=True)
        for (i, clear), part in zip(clears, parts):
            if clear is not None:
                results[i] = FIELD.add(part.ravel(), clear).reshape(part.shape)
        return results, parts[len(clears):]

    # -- batched MAC check
    def _commit_reveal(self, payload, label):
        nonce = self.rng.bytes(16)
        digest = hashlib.sha256(nonce + payload).digest()
        peer_digest = self.channel.exchange(MsgType.COMMIT, digest, f"{label}-commit")
        opening = self.channel.exchange(MsgType.REVEAL, nonce + payload, f"{label}-reveal")
        if hashlib.sha256(opening).digest() != peer_digest or len(opening) != 16 + len(payload):
            self._abort(CommitmentError(f"{label}: commitment does not match opening"))
        return opening[16:]

    def mac_check(self):
        if self.aborted:
            raise ProtocolAbort("engine was zeroized")
        if not self.open_log:
            return
        values = np.concatenate([v for v, _ in self.open_log])
        macs = np.concatenate([m for _, m in self.open_log])
        seed_share = self.rng.bytes(16)
        peer_seed = self._commit_reveal(seed_share, "mac-coin")
        seed = bytes(a ^ b for a, b in zip(seed_share, peer_seed))
        coeffs = FIELD.random(np.random.default_rng(int.from_bytes(seed, "little")), values.size)
        c = FIELD.sum(FIELD.mul(coeffs, values))
        gamma = FIELD.sum(FIELD.mul(coeffs, macs))
        sigma = FIELD.sub(gamma, FIELD.mul(c, self.alpha_i))
        peer_sigma = self._commit_reveal(to_wire(np.atleast_1d(sigma)), "mac-sigma")
        total = FIELD.add(sigma, from_wire(peer_sigma)[0])
        if int(total) != 0:
            self._abort(MacCheckError(f"MAC check failed over {values.size} opened values"))
        self.open_log.clear()
        self.checks_passed += 1

    def zeroize(self):
        super().zeroize()
        self.open_log.clear()


def _split(flat, shapes, mac_flat, plain=False):
    out, off = [], 0
    for shape in shapes:
        n = int(np.prod(shape, dtype=np.int64))
        v = flat[off:off + n].reshape(shape)
        if plain:
            out.append(v)
        else:
            out.append(SharedArray(v, None if mac_flat is None else mac_flat[off:off + n].reshape(shape)))
        off += n
    return out


def make_engine(kind, party, channel, store, **kw):
    if kind == "sh":
        return SemiHonestEngine(party, channel, store, **kw)
    if kind == "mal":
        return MaliciousEngine(party, channel, store, **kw)
    raise ValueError(f"unknown engine {kind!r}")
