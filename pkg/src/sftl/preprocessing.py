"""Trusted-dealer emulator for the offline phase.

The dealer produces, for both parties at once, additive shares of

* multiplication triples (a, b, c = a*b),
* input masks r (the owner additionally receives r in the clear),
* truncation pairs (r, r >> f) for the malicious field engine,
* LTZ masks: a uniform r given as 64 shared bits (LSB first).

In the malicious engine every shared element carries an additive MAC share
under a dealt key alpha = alpha_0 + alpha_1.

Material is deterministic in the 32-byte seed. It can be written to one file
per party (:func:`deal`) or drawn lazily from a :class:`DealerStream`.
"""

import hashlib
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .arith import FIELD, RING, U64, domain_for

MAGIC = b"SFTLPREPROC\x00"
VERSION = 1
KINDS = ("triple", "mask0", "mask1", "trunc", "ltz")
_KIND_CODE = {k: i + 1 for i, k in enumerate(KINDS)}
LTZ_BITS = 64


class PreprocessingExhausted(RuntimeError):
    pass


def _seed_int(seed):
    if isinstance(seed, int):
        seed = seed.to_bytes(32, "little", signed=False) if seed >= 0 else str(seed).encode()
    if isinstance(seed, str):
        seed = seed.encode()
    if len(seed) != 32:
        seed = hashlib.sha256(seed).digest()
    return int.from_bytes(seed, "little")


def _rng(seed_int, *key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed_int, spawn_key=key)))


@dataclass
class DealerConfig:
    engine: str  # "sh" | "mal"
    counts: dict = field(default_factory=dict)
    seed: bytes = b"\x00" * 32
    frac_bits: int = 16

    @property
    def domain(self):
        return domain_for(self.engine)


class Dealer:
    """Stateless material generator: the same (kind, index, n) request
    always yields the same material for both parties."""

    def __init__(self, engine, seed=0, frac_bits=16):
        self.engine = engine
        self.domain = domain_for(engine)
        self.malicious = engine == "mal"
        self.seed = _seed_int(seed)
        self.frac_bits = frac_bits
        if self.malicious:
            a0, a1 = self.domain.random(_rng(self.seed, 0, 0), 2)
            self.alpha_shares = (U64(a0), U64(a1))
            self.alpha = self.domain.add(a0, a1)
        else:
            self.alpha_shares = (None, None)
            self.alpha = None

    def _share(self, rng, x):
        """Split x into two additive shares (plus MAC shares if malicious)."""
        dom = self.domain
        x0 = dom.random(rng, x.shape)
        x1 = dom.sub(x, x0)
        if not self.malicious:
            return (x0, None), (x1, None)
        m = dom.mul(x, self.alpha)
        m0 = dom.random(rng, x.shape)
        return (x0, m0), (x1, dom.sub(m, m0))

    def generate(self, kind, index, n):
        """Return ``(material_party0, material_party1)`` as dicts of arrays."""
        dom = self.domain
        rng = _rng(self.seed, _KIND_CODE[kind], index + 1)
        out = ({}, {})

        def put(name, x):
            for p, (v, m) in enumerate(self._share(rng, x)):
                out[p][name] = v
                if m is not None:
                    out[p][name + "_mac"] = m

        if kind == "triple":
            a, b = dom.random(rng, n), dom.random(rng, n)
            put("a", a)
            put("b", b)
            put("c", dom.mul(a, b))
        elif kind in ("mask0", "mask1"):
            r = dom.random(rng, n)
            put("share", r)
            out[int(kind[-1])]["clear"] = r
        elif kind == "trunc":
            r = dom.random(rng, n)
            put("r", r)
            put("r_hi", r >> U64(self.frac_bits))
        elif kind == "ltz":
            r = dom.random(rng, n)
            bits = ((r[:, None] >> np.arange(LTZ_BITS, dtype=U64)) & U64(1)).astype(U64)
            put("bits", bits.reshape(-1))
        else:
            raise ValueError(kind)
        return out

    def stream(self, party):
        return DealerStream(self, party)

    def material(self, counts):
        """All requested material at once, as two in-memory PreprocFiles."""
        per_party = ({}, {})
        for kind in KINDS:
            n = int(counts.get(kind, 0))
            if n <= 0:
                continue
            mats = self.generate(kind, 0, n)
            for p in (0, 1):
                per_party[p][kind] = mats[p]
        modulus = self.domain.modulus
        return tuple(PreprocFile(self.engine, modulus, p, self.alpha_shares[p], per_party[p])
                     for p in (0, 1))

    def stores(self, counts):
        return tuple(FileStore(f) for f in self.material(counts))


class _Store:
    """Common consumption accounting for party-side material stores."""

    party: int
    alpha_i = None

    def __init__(self):
        self.consumed = {k: 0 for k in KINDS}

    def _take(self, kind, n):  # pragma: no cover - interface
        raise NotImplementedError

    def take(self, kind, n):
        if n == 0:
            return None
        mat = self._take(kind, n)
        self.consumed[kind] += n
        return mat

    def take_mask(self, owner, n):
        return self.take(f"mask{owner}", n)


class DealerStream(_Store):
    """Online access to a :class:`Dealer`: the j-th request of a kind is
    answered with dealer batch j, so both parties stay aligned as long as
    they issue identical request sequences (which the protocol guarantees)."""

    def __init__(self, dealer, party):
        super().__init__()
        self.dealer = dealer
        self.party = party
        self.alpha_i = dealer.alpha_shares[party]
        self._requests = {k: 0 for k in KINDS}

    def _take(self, kind, n):
        j = self._requests[kind]
        self._requests[kind] += 1
        mat = self.dealer.generate(kind, j, n)[self.party]
        if kind == "ltz":
            mat = {k: v.reshape(n, LTZ_BITS) for k, v in mat.items()}
        return mat


# ---------------------------------------------------------------- files


def deal(config, paths):
    """Generate material for ``config.counts`` and write one file per party.

    Files are written to a temporary name and renamed into place.
    """
    dealer = Dealer(config.engine, config.seed, config.frac_bits)
    for p, pf in enumerate(dealer.material(config.counts)):
        write_preproc_file(paths[p], dealer, p, pf.material)
    return dealer


def _array_names(kind, malicious, owner_here):
    base = {"triple": ["a", "b", "c"], "trunc": ["r", "r_hi"], "ltz": ["bits"]}.get(kind, ["share"])
    names = []
    for b in base:
        names.append(b)
        if malicious:
            names.append(b + "_mac")
    if kind.startswith("mask") and owner_here:
        names.append("clear")
    return names


def write_preproc_file(path, dealer, party, material):
    """Layout: 16-byte magic+version, u8 engine, u64 modulus (0 = 2^64),
    u16 party, [u64 MAC key share], u8 section count, then per section
    u8 kind, u8 array count and u64-length-prefixed element arrays."""
    dom = dealer.domain
    modulus = 0 if dom is RING else dom.modulus
    buf = bytearray(MAGIC + struct.pack("<I", VERSION))
    buf += struct.pack("<BQH", dom.code, modulus, party)
    if dealer.malicious:
        buf += struct.pack("<Q", int(dealer.alpha_shares[party]))
    buf += struct.pack("<B", len(material))
    for kind, mat in material.items():
        names = _array_names(kind, dealer.malicious, kind == f"mask{party}")
        buf += struct.pack("<BB", _KIND_CODE[kind], len(names))
        for name in names:
            arr = np.ascontiguousarray(mat[name], dtype="<u8")
            buf += struct.pack("<Q", arr.size) + arr.tobytes()
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".preproc-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(buf)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class PreprocFile:
    engine: str
    modulus: int
    party: int
    alpha_i: object
    material: dict

    @classmethod
    def read(cls, path):
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:12] != MAGIC:
            raise ValueError(f"{path}: not a preprocessing file")
        (version,) = struct.unpack_from("<I", data, 12)
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        code, modulus, party = struct.unpack_from("<BQH", data, 16)
        off = 16 + 11
        engine = "mal" if code == FIELD.code else "sh"
        alpha_i = None
        if engine == "mal":
            (a,) = struct.unpack_from("<Q", data, off)
            alpha_i = U64(a)
            off += 8
        (n_sections,) = struct.unpack_from("<B", data, off)
        off += 1
        material = {}
        for _ in range(n_sections):
            kcode, n_arrays = struct.unpack_from("<BB", data, off)
            off += 2
            kind = KINDS[kcode - 1]
            names = _array_names(kind, engine == "mal", kind == f"mask{party}")
            if len(names) != n_arrays:
                raise ValueError(f"{path}: malformed section {kind}")
            arrays = {}
            for name in names:
                (length,) = struct.unpack_from("<Q", data, off)
                off += 8
                arrays[name] = np.frombuffer(data, dtype="<u8", count=length, offset=off).astype(U64)
                off += 8 * length
            material[kind] = arrays
        return cls(engine, modulus or 2**64, party, alpha_i, material)


class FileStore(_Store):
    """Sequential consumption of a party's :class:`PreprocFile`."""

    def __init__(self, preproc):
        super().__init__()
        if isinstance(preproc, (str, os.PathLike)):
            preproc = PreprocFile.read(preproc)
        self.file = preproc
        self.party = preproc.party
        self.alpha_i = preproc.alpha_i
        self._cursor = {k: 0 for k in KINDS}

    def available(self, kind):
        mat = self.file.material.get(kind)
        if not mat:
            return 0
        n = next(iter(mat.values())).size
        return n // LTZ_BITS if kind == "ltz" else n

    def _take(self, kind, n):
        start = self._cursor[kind]
        if start + n > self.available(kind):
            raise PreprocessingExhausted(f"{kind}: need {n}, {self.available(kind) - start} left")
        self._cursor[kind] = start + n
        mat = self.file.material[kind]
        if kind == "ltz":
            return {k: v[start * LTZ_BITS:(start + n) * LTZ_BITS].reshape(n, LTZ_BITS)
                    for k, v in mat.items()}
        return {k: v[start:start + n] for k, v in mat.items()}


def audit_pair(file0, file1):
    """Reconstruct both parties' files and check every relation.

    Returns a dict of per-kind checked counts; raises AssertionError on the
    first violation.
    """
    f0 = file0 if isinstance(file0, PreprocFile) else PreprocFile.read(file0)
    f1 = file1 if isinstance(file1, PreprocFile) else PreprocFile.read(file1)
    dom = domain_for(f0.engine)
    mal = f0.engine == "mal"
    alpha = dom.add(f0.alpha_i, f1.alpha_i) if mal else None
    checked = {}

    def rec(kind, name):
        return dom.add(f0.material[kind][name], f1.material[kind][name])

    def check_mac(kind, name):
        if mal:
            mac = rec(kind, name + "_mac")
            assert np.array_equal(mac, dom.mul(rec(kind, name), alpha)), f"{kind}.{name}: bad MAC"

    for kind in f0.material:
        names = [n for n in _array_names(kind, False, False)]
        for name in names:
            check_mac(kind, name)
        if kind == "triple":
            assert np.array_equal(dom.mul(rec(kind, "a"), rec(kind, "b")), rec(kind, "c")), "c != ab"
        elif kind.startswith("mask"):
            owner = f0 if kind == "mask0" else f1
            assert np.array_equal(rec(kind, "share"), owner.material[kind]["clear"]), "mask mismatch"
        elif kind == "trunc":
            shift = None
            r, hi = rec(kind, "r"), rec(kind, "r_hi")
            for s in range(1, 64):
                if np.array_equal(r >> U64(s), hi):
                    shift = s
                    break
            assert shift is not None, "trunc pair inconsistent"
        elif kind == "ltz":
            bits = rec(kind, "bits")
            assert np.all(bits <= 1), "non-binary bit"
        checked[kind] = next(iter(f0.material[kind].values())).size
    return checked


# ---------------------------------------------------------------- cost model


@dataclass(frozen=True)
class OfflineCostModel:
    """Per-triple offline costs reported for each engine.

    Malicious: 13.71 kbit sent per triple and 8856 triples/s on one thread.
    Semi-honest OT-based generation: (l + 1)(kappa + l)/2 bits per l-bit
    triple.
    """

    mal_bits_per_triple: float = 13.71e3
    mal_triples_per_second: float = 8856.0
    ring_bits: int = 64
    kappa: int = 128

    @property
    def sh_bits_per_triple(self):
        return (self.ring_bits + 1) * (self.kappa + self.ring_bits) / 2


def estimate_offline_cost(triples, engine, model=OfflineCostModel()):
    """Return ``(bits, seconds)``; seconds is None where no rate is known."""
    if engine == "mal":
        return triples * model.mal_bits_per_triple, triples / model.mal_triples_per_second
    return triples * model.sh_bits_per_triple, None


# ---------------------------------------------------------------- circuit cost


_MAC_CHECK_PAYLOADS = (32, 32, 32, 24)  # commit, reveal(nonce+seed), commit, reveal(nonce+sigma)


@dataclass
class IterationCost:
    """Exact material and traffic of one training iteration.

    ``frames`` lists every frame as ``(mode, bytes_from_S, bytes_from_T)``
    with mode ``"exchange"`` or ``"directed"`` (one side sends 0 bytes).
    """

    counts: dict
    frames: list
    truncations: int

    def rounds(self):
        return len(self.frames)

    def bytes_sent(self, party):
        return sum(f[1 + party] + 9 for f in self.frames if f[1 + party] is not None)

    def bytes_received(self, party):
        return self.bytes_sent(1 - party)


@dataclass
class MaterialPlan:
    per_iteration: IterationCost   # an iteration that runs the convergence check
    first: IterationCost           # iteration 0 (no check)
    iterations: int

    @property
    def counts(self):
        if self.iterations <= 0:
            return {k: 0 for k in KINDS}
        out = dict(self.first.counts)
        for k, v in self.per_iteration.counts.items():
            out[k] = out.get(k, 0) + v * max(0, self.iterations - 1)
        return out


def iteration_cost(n_lab, n_overlap, sizes_S, sizes_T, engine="mal", check=True):
    """Walk the secure iteration circuit and count everything it consumes."""
    from .model import CircuitShape, operand_shapes  # deferred: model imports sharing

    mal = engine == "mal"
    shape = CircuitShape(n_lab, n_overlap, tuple(sizes_S), tuple(sizes_T))
    nl, no, d, R = shape.n_lab, shape.n_overlap, shape.d, shape.rows_T
    p_s, p_t = CircuitShape.n_params(shape.sizes_S), CircuitShape.n_params(shape.sizes_T)
    counts = {k: 0 for k in KINDS}
    frames = []
    state = {"opened": False, "trunc": 0}

    def size(role):
        return sum(int(np.prod(s, dtype=np.int64)) for _, s in operand_shapes(role, shape))

    def exchange(n_elems):
        frames.append(("exchange", 8 * n_elems, 8 * n_elems))

    def mul(n):
        if n:
            counts["triple"] += n
            exchange(2 * n)
            state["opened"] = True

    def trunc(n):
        if n:
            state["trunc"] += n
            if mal:
                counts["trunc"] += n
                exchange(n)
                state["opened"] = True

    def mac_check():
        if mal and state["opened"]:
            for b in _MAC_CHECK_PAYLOADS:
                frames.append(("exchange", b, b))
            state["opened"] = False

    n_s_in, n_t_in = size("S"), size("T")
    frames.append(("exchange", 8 * n_s_in, 8 * n_t_in))
    if mal:
        counts["mask0"] += n_s_in
        counts["mask1"] += n_t_in

    mul(2 * nl * d + 3 * no * d)
    trunc(nl + nl * d + 2 * no * d)
    if nl:
        mul(nl)
        trunc(nl)
        mul(nl + 2 * nl * d)
        trunc(1 + nl * d + d)
    elif no:
        trunc(1)

    jobs = []
    if nl or no:
        jobs.append([R, list(shape.sizes_T), len(shape.sizes_T) - 1])
    if no:
        jobs.append([no, list(shape.sizes_S), len(shape.sizes_S) - 1])
    first = True
    while any(j[2] >= 1 for j in jobs) or first:
        n_mul = d * p_s if (first and nl) else 0
        n_tr = p_s if (first and nl) else 0
        first = False
        back_n = 0
        for rows, sizes, l in jobs:
            if l < 1:
                continue
            n_mul += rows * sizes[l - 1] * sizes[l]
            n_tr += sizes[l - 1] * sizes[l]
            if l > 1:
                n_mul += rows * sizes[l - 1] * sizes[l]
                n_tr += rows * sizes[l - 1]
                back_n += rows * sizes[l - 1]
        if not n_mul:
            break
        mul(n_mul)
        trunc(n_tr)
        if back_n:
            mul(back_n)
            trunc(back_n)
        for j in jobs:
            j[2] -= 1

    if check:
        counts["ltz"] += 1
        exchange(1)
        state["opened"] = True
        for _ in range(LTZ_BITS if mal else LTZ_BITS - 1):
            mul(1)

    out_S = p_s if (nl or no) else 0
    out_T = p_t if (nl or no) else 0
    if mal:
        mac_check()
        n_open = out_S + out_T + (1 if check else 0)
        counts["mask0"] += out_S
        counts["mask1"] += out_T
        if n_open:
            exchange(n_open)
            state["opened"] = True
        mac_check()
    else:
        if check:
            exchange(1)
        if out_S:
            frames.append(("directed", None, 8 * out_S))
        if out_T:
            frames.append(("directed", 8 * out_T, None))
    return IterationCost(counts, frames, state["trunc"])


def count_required_material(n_lab, n_overlap, sizes_S, sizes_T, engine="mal", iterations=1):
    """Material for ``iterations`` training iterations (the first one skips
    the convergence check)."""
    return MaterialPlan(iteration_cost(n_lab, n_overlap, sizes_S, sizes_T, engine, True),
                        iteration_cost(n_lab, n_overlap, sizes_S, sizes_T, engine, False),
                        iterations)


def prediction_cost(n, d, engine="mal"):
    """Material for one batched prediction of ``n`` target rows."""
    mal = engine == "mal"
    counts = {k: 0 for k in KINDS}
    counts["triple"] = n * d + n * (LTZ_BITS if mal else LTZ_BITS - 1)
    counts["ltz"] = n
    if mal:
        counts["mask0"] = d + n
        counts["mask1"] = n * d
    return counts
