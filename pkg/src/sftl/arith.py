"""
Modular arithmetic over Z_{2^64} and the prime field F_p (p = 2^64 - 59),
plus fixed-point encoding of reals.

Elements are stored as ``numpy.uint64`` arrays. Ring arithmetic uses native
wrap-around; field multiplication splits operands into 32-bit halves and
reduces with 2^64 = 59 (mod p).
"""

from dataclasses import dataclass

import numpy as np

U64 = np.uint64
MASK32 = np.uint64(0xFFFFFFFF)
PRIME = 2**64 - 59
_C = np.uint64(59)  # 2^64 mod p
_P = np.uint64(PRIME)


class FixedPointOverflow(ValueError):
    """A real value does not fit the fixed-point layout."""


def _as_u64(a):
    return np.asarray(a, dtype=U64)


class Ring64:
    """Z_{2^64}; every uint64 is a valid element."""

    kind = "ring"
    code = 0
    modulus = 2**64

    def element(self, value):
        """Map Python ints (any sign, any size) into the ring."""
        if isinstance(value, (int, np.integer)):
            return U64(int(value) % self.modulus)
        return np.array([int(v) % self.modulus for v in np.ravel(value)],
                        dtype=U64).reshape(np.shape(value))

    def add(self, a, b):
        with np.errstate(over="ignore"):
            return _as_u64(a) + _as_u64(b)

    def sub(self, a, b):
        with np.errstate(over="ignore"):
            return _as_u64(a) - _as_u64(b)

    def neg(self, a):
        with np.errstate(over="ignore"):
            return U64(0) - _as_u64(a)

    def mul(self, a, b):
        with np.errstate(over="ignore"):
            return _as_u64(a) * _as_u64(b)

    def sum(self, a, axis=None):
        with np.errstate(over="ignore"):
            return np.sum(_as_u64(a), axis=axis, dtype=U64)

    def random(self, rng, shape):
        n = int(np.prod(shape, dtype=np.int64))
        return rng.bit_generator.random_raw(n).astype(U64).reshape(shape)

    def from_signed(self, v):
        """int64 array (two's complement) -> ring elements."""
        return np.asarray(v, dtype=np.int64).view(U64) if np.ndim(v) else U64(np.int64(v).view(U64))

    def to_signed(self, a):
        a = _as_u64(a)
        return a.view(np.int64) if a.ndim else np.int64(a.view(np.int64))

    def __repr__(self):
        return "Ring64()"


class PrimeField:
    """F_p for the largest 64-bit prime p = 2^64 - 59."""

    kind = "field"
    code = 1
    modulus = PRIME

    def element(self, value):
        if isinstance(value, (int, np.integer)):
            return U64(int(value) % self.modulus)
        return np.array([int(v) % self.modulus for v in np.ravel(value)],
                        dtype=U64).reshape(np.shape(value))

    def add(self, a, b):
        a, b = _as_u64(a), _as_u64(b)
        with np.errstate(over="ignore"):
            s = a + b
            wrapped = s < a
            s = np.where(wrapped, s + _C, s)
            return np.where(~wrapped & (s >= _P), s - _P, s)

    def sub(self, a, b):
        a, b = _as_u64(a), _as_u64(b)
        with np.errstate(over="ignore"):
            d = a - b
            return np.where(a < b, d - _C, d)

    def neg(self, a):
        a = _as_u64(a)
        with np.errstate(over="ignore"):
            return np.where(a == 0, a, _P - a)

    def mul(self, a, b):
        a, b = np.broadcast_arrays(_as_u64(a), _as_u64(b))
        with np.errstate(over="ignore"):
            a0, a1 = a & MASK32, a >> U64(32)
            b0, b1 = b & MASK32, b >> U64(32)
            p00 = a0 * b0
            p01 = a0 * b1
            p10 = a1 * b0
            p11 = a1 * b1
            mid = p01 + p10
            carry_mid = (mid < p01).astype(U64)
            lo = p00 + (mid << U64(32))
            carry_lo = (lo < p00).astype(U64)
            hi = p11 + (mid >> U64(32)) + (carry_mid << U64(32)) + carry_lo
            return self._reduce128(hi, lo)

    @staticmethod
    def _reduce128(hi, lo):
        # hi*2^64 + lo  ==  hi*59 + lo  (mod p)
        with np.errstate(over="ignore"):
            h0, h1 = hi & MASK32, hi >> U64(32)
            t = h1 * _C  # < 2^38
            part = h0 * _C  # < 2^38
            low = ((t & MASK32) << U64(32)) + part
            c1 = (low < part).astype(U64)
            high = (t >> U64(32)) + c1
            s = lo + low
            c2 = (s < lo).astype(U64)
            high = high + c2  # < 2^7
            extra = high * _C
            s2 = s + extra
            c3 = s2 < s
            s2 = np.where(c3, s2 + _C, s2)
            return np.where(s2 >= _P, s2 - _P, s2)

    def sum(self, a, axis=None):
        a = _as_u64(a)
        with np.errstate(over="ignore"):
            lo = np.sum(a & MASK32, axis=axis, dtype=U64)
            hi = np.sum(a >> U64(32), axis=axis, dtype=U64)
            lo = np.where(lo >= _P, lo - _P, lo)
            hi = np.where(hi >= _P, hi - _P, hi)
        return self.add(lo, self.mul(hi, U64(1 << 32)))

    def random(self, rng, shape):
        return rng.integers(0, PRIME, size=shape, dtype=U64)

    def from_signed(self, v):
        v = np.asarray(v, dtype=np.int64)
        mag = np.abs(v).astype(U64)
        with np.errstate(over="ignore"):
            out = np.where(v < 0, _P - mag, mag)
        return out if out.ndim else U64(out)

    def to_signed(self, a):
        a = _as_u64(a)
        with np.errstate(over="ignore"):
            neg = a > _P // U64(2)
            out = np.where(neg, -((_P - a).astype(np.int64)), a.astype(np.int64))
        return out if out.ndim else np.int64(out)

    def __repr__(self):
        return "PrimeField(2**64 - 59)"


RING = Ring64()
FIELD = PrimeField()


def domain_for(kind):
    """Look up a domain by engine kind ('sh'/'ring' or 'mal'/'field')."""
    if kind in ("sh", "ring", 0):
        return RING
    if kind in ("mal", "field", 1):
        return FIELD
    raise ValueError(f"unknown domain {kind!r}")


@dataclass(frozen=True)
class FixedCodec:
    """Fixed-point layout: ``f`` fractional bits, values bounded by 2^k.

    ``sigma`` is the statistical security parameter agreed in the handshake.
    A product of two encodings carries 2f fractional bits before
    truncation, so k + 2f + 1 must fit the 64-bit word.
    """

    f: int = 16
    k: int = 27
    sigma: int = 40

    def __post_init__(self):
        if self.f < 1 or self.k < 1 or self.k + 2 * self.f + 1 > 64:
            raise ValueError(f"invalid fixed-point layout f={self.f} k={self.k}")

    @property
    def scale(self):
        return 1 << self.f

    @property
    def one(self):
        return 1 << self.f


def encode(x, codec=FixedCodec(), domain=RING):
    """round(x * 2^f) mapped into ``domain``; raises on |x| >= 2^k."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) >= 2.0**codec.k):
        raise FixedPointOverflow(f"value outside +-2^{codec.k}")
    return domain.from_signed(np.rint(x * codec.scale).astype(np.int64))


def decode(e, codec=FixedCodec(), domain=RING):
    signed = domain.to_signed(e)
    out = np.asarray(signed, dtype=np.float64) / codec.scale
    return out if out.ndim else float(out)


def mul_trunc(a, b, codec=FixedCodec(), domain=RING):
    """Cleartext fixed-point product with exact (flooring) shift by f bits."""
    sa = np.asarray(domain.to_signed(a)).astype(object)
    sb = np.asarray(domain.to_signed(b)).astype(object)
    prod = sa * sb
    shifted = np.vectorize(lambda v: v >> codec.f, otypes=[object])(prod)
    bound = 1 << (codec.k + codec.f)
    if np.any(np.abs(shifted) >= bound):
        raise FixedPointOverflow("product exceeds 2^k")
    out = domain.from_signed(np.asarray(shifted, dtype=np.int64))
    return out


def field_inverse(a):
    a = int(a) % PRIME
    if a == 0:
        raise ZeroDivisionError("zero has no inverse in F_p")
    return U64(pow(a, PRIME - 2, PRIME))


def to_wire(a):
    """8-byte little-endian encoding of each element."""
    return np.ascontiguousarray(a, dtype="<u8").tobytes()


def from_wire(buf, count=None):
    out = np.frombuffer(buf, dtype="<u8", count=-1 if count is None else count)
    return out.astype(U64)
