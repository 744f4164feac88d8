"""Local networks and the transfer-learning loss.

Everything here except :func:`secure_joint` is plain float64 numpy code
that one party can run on its own data. :func:`secure_joint` evaluates the
bilinear source x target terms on secret-shared operands with an engine
from :mod:`sftl.sharing`.

Conventions
-----------
* Labels are +-1. ``taylor_l1(y, psi) = log 2 - y*psi/2 + psi**2/8`` is the
  second-order expansion of ``log(1 + exp(-y*psi))``.
* The alignment penalty over overlapping rows is
  ``gamma * (||u_S||^2 + ||u_T||^2 + kappa * u_S . u_T)`` with kappa = -1.
* Weight matrices (not biases) carry the ``lambda/2 * ||W||^2`` regulariser.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .arith import FixedCodec, decode, encode
from .sharing import SharedArray

LOG2 = float(np.log(2.0))
BOOST_BITS = 4  # extra precision bits carried by the secure gradient/loss outputs


@dataclass(frozen=True)
class Hyperparams:
    gamma: float = 0.05
    lam: float = 0.005
    kappa: float = -1.0
    eta: float = 0.01
    max_iter: int = 50
    eps: float = 1e-3

    def __post_init__(self):
        if self.gamma <= 0 or self.lam <= 0 or self.eta < 0 or self.eps <= 0:
            raise ValueError("gamma, lambda, eps must be positive and eta non-negative")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")


# ---------------------------------------------------------------- networks


WEIGHTS_MAGIC = b"SFTLWTS\x00"


class LocalNet:
    """Fully connected tanh network ``sizes[0] -> ... -> sizes[-1]``."""

    def __init__(self, weights, biases):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias per weight matrix")
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError("inconsistent layer shapes")
        for w0, w1 in zip(self.weights, self.weights[1:]):
            if w0.shape[1] != w1.shape[0]:
                raise ValueError("inconsistent layer shapes")

    @classmethod
    def init(cls, sizes, rng):
        """Uniform(+-1/sqrt(fan_in)) weights and biases from ``rng``."""
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        ws, bs = [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            lim = 1.0 / np.sqrt(n_in)
            ws.append(rng.uniform(-lim, lim, size=(n_in, n_out)))
            bs.append(rng.uniform(-lim, lim, size=n_out))
        return cls(ws, bs)

    @classmethod
    def zeros(cls, sizes):
        return cls([np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(b) for b in sizes[1:]])

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self):
        return LocalNet(self.weights, self.biases)

    def to_bytes(self):
        """Magic, u32 layer count, then per weight and bias array a u8 rank,
        u64 dims and a u64-length-prefixed run of little-endian float64."""
        buf = bytearray(WEIGHTS_MAGIC + struct.pack("<I", self.n_layers))
        for arr in (a for pair in zip(self.weights, self.biases) for a in pair):
            buf += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
            buf += struct.pack("<Q", arr.size) + np.ascontiguousarray(arr, dtype="<f8").tobytes()
        return bytes(buf)

    @classmethod
    def from_bytes(cls, data):
        if data[:len(WEIGHTS_MAGIC)] != WEIGHTS_MAGIC:
            raise ValueError("not a weights file")
        off = len(WEIGHTS_MAGIC)
        (n_layers,) = struct.unpack_from("<I", data, off)
        off += 4
        arrays = []
        for _ in range(2 * n_layers):
            (ndim,) = struct.unpack_from("<B", data, off)
            shape = struct.unpack_from(f"<{ndim}Q", data, off + 1)
            off += 1 + 8 * ndim
            (length,) = struct.unpack_from("<Q", data, off)
            off += 8
            if length != int(np.prod(shape)) or off + 8 * length > len(data):
                raise ValueError("truncated or inconsistent weights file")
            arrays.append(np.frombuffer(data, dtype="<f8", count=length, offset=off).reshape(shape))
            off += 8 * length
        if off != len(data):
            raise ValueError("trailing bytes in weights file")
        return cls(arrays[0::2], arrays[1::2])

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def forward(self, X):
        return self.forward_cache(X)[0][-1]

    def forward_cache(self, X):
        """Return ``(hs, Ds)``: activations h_0 = X .. h_L and tanh
        derivatives D_l = 1 - h_l^2 for l = 1..L (Ds[0] is None)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.sizes[0]:
            raise ValueError(f"expected (n, {self.sizes[0]}) input, got {X.shape}")
        hs, Ds = [X], [None]
        for w, b in zip(self.weights, self.biases):
            h = np.tanh(hs[-1] @ w + b)
            hs.append(h)
            Ds.append(1.0 - h * h)
        return hs, Ds

    def vjp(self, cache, grad_out, rows=None):
        """Backpropagate ``grad_out`` (gradient w.r.t. the output rows) and
        return the flat parameter gradient."""
        hs, Ds = cache
        if rows is not None:
            hs = [h[rows] for h in hs]
            Ds = [None] + [D[rows] for D in Ds[1:]]
        delta = np.asarray(grad_out, dtype=np.float64) * Ds[-1]
        grads = [None] * self.n_layers
        for l in range(self.n_layers, 0, -1):
            grads[l - 1] = (hs[l - 1].T @ delta, delta.sum(axis=0))
            if l > 1:
                delta = (delta @ self.weights[l - 1].T) * Ds[l - 1]
        return self.flatten(grads)

    def flatten(self, grads=None):
        if grads is None:
            grads = list(zip(self.weights, self.biases))
        return np.concatenate([np.concatenate([np.ravel(w), np.ravel(b)]) for w, b in grads])

    def unflatten(self, flat):
        flat = np.asarray(flat)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        out, off = [], 0
        for w, b in zip(self.weights, self.biases):
            gw = flat[off:off + w.size].reshape(w.shape)
            off += w.size
            gb = flat[off:off + b.size]
            off += b.size
            out.append((gw, gb))
        return out

    def weight_mask(self):
        """1 for weight-matrix entries, 0 for biases, in flat order."""
        return self.flatten([(np.ones_like(w), np.zeros_like(b))
                             for w, b in zip(self.weights, self.biases)])

    def sq_weights(self):
        return float(sum(np.sum(w * w) for w in self.weights))

    def apply_update(self, grad, eta):
        """``omega <- omega - eta * grad`` for a flat gradient."""
        for (w, b), (gw, gb) in zip(zip(self.weights, self.biases), self.unflatten(grad)):
            w -= eta * gw
            b -= eta * gb

    def set_flat(self, flat):
        for (w, b), (fw, fb) in zip(zip(self.weights, self.biases), self.unflatten(flat)):
            w[...] = fw
            b[...] = fb


def forward(net, X):
    return net.forward(X)


def update_weights(net, grad, eta):
    net.apply_update(grad, eta)
    return net


# ---------------------------------------------------------------- data views


@dataclass
class SourceData:
    X: np.ndarray       # N_S x p_S
    y: np.ndarray       # N_S labels in {-1, +1}
    overlap: np.ndarray  # row indices of overlapping samples, aligned with TargetData.overlap
    y_lab: np.ndarray   # labels of the N_L labelled target samples


@dataclass
class TargetData:
    X: np.ndarray
    overlap: np.ndarray
    labeled: np.ndarray  # T row indices whose labels S holds (aligned with y_lab)


# ---------------------------------------------------------------- loss pieces


def check_labels(y):
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    return y


def T1(y):
    """Linear Taylor coefficient; the sign makes the expansion match
    log(1 + exp(-y psi))."""
    return -check_labels(y)


def T2(y):
    y = check_labels(y)
    return y * y


def taylor_l1(y, psi):
    return LOG2 + 0.5 * T1(y) * psi + 0.125 * T2(y) * np.square(psi)


def taylor_dl1(y, psi):
    return 0.5 * T1(y) + 0.25 * T2(y) * psi


def logistic_loss(y, psi):
    return np.logaddexp(0.0, -check_labels(y) * np.asarray(psi, dtype=np.float64))


def source_lambda(U_S, y):
    """Label-weighted mean of the source representations."""
    return (check_labels(y)[:, None] * U_S).mean(axis=0)


def translator_psi(lam, u_t):
    lam, u_t = np.asarray(lam, dtype=np.float64), np.asarray(u_t, dtype=np.float64)
    if lam.shape[-1] != u_t.shape[-1]:
        raise ValueError("dimension mismatch")
    return u_t @ lam


def predict_labels(psi):
    return np.where(np.asarray(psi) >= 0, 1, -1)


def lambda_jacobian(net, cache, y):
    """d x P matrix of d Lambda_k / d theta for a source net."""
    hs, Ds = cache
    n, d = hs[-1].shape
    w_y = check_labels(y) / n
    # delta for all k at once: (d, n, d_out) with delta[k, i, j] = w_y[i] * [j == k] * D_L[i, j]
    delta = np.einsum("i,kj,ij->kij", w_y, np.eye(d), Ds[-1])
    rows = []
    grads = [None] * net.n_layers
    for l in range(net.n_layers, 0, -1):
        grads[l - 1] = (np.einsum("ia,kib->kab", hs[l - 1], delta), delta.sum(axis=1))
        if l > 1:
            delta = np.einsum("kib,ab->kia", delta, net.weights[l - 1]) * Ds[l - 1][None]
    for k in range(d):
        rows.append(net.flatten([(gw[k], gb[k]) for gw, gb in grads]))
    return np.stack(rows)


def total_loss(net_S, net_T, src, tgt, hp):
    """Direct evaluation of the full (Taylor) objective."""
    U_S = net_S.forward(src.X)
    U_T = net_T.forward(tgt.X)
    lam = source_lambda(U_S, src.y)
    psi = translator_psi(lam, U_T[tgt.labeled])
    uS, uT = U_S[src.overlap], U_T[tgt.overlap]
    align = np.sum(uS * uS) + np.sum(uT * uT) + hp.kappa * np.sum(uS * uT)
    return float(np.sum(taylor_l1(src.y_lab, psi)) + hp.gamma * align
                 + 0.5 * hp.lam * (net_S.sq_weights() + net_T.sq_weights()))


def local_terms_S(net_S, src, hp, cache=None):
    """(L1^S, local gradient) for the source party."""
    cache = cache or net_S.forward_cache(src.X)
    uS = cache[0][-1][src.overlap]
    loss = len(src.y_lab) * LOG2 + hp.gamma * np.sum(uS * uS) + 0.5 * hp.lam * net_S.sq_weights()
    grad = net_S.vjp(cache, 2 * hp.gamma * uS, rows=src.overlap) if len(src.overlap) else 0.0
    grad = grad + hp.lam * net_S.flatten() * net_S.weight_mask()
    return float(loss), grad


def local_terms_T(net_T, tgt, hp, cache=None):
    cache = cache or net_T.forward_cache(tgt.X)
    uT = cache[0][-1][tgt.overlap]
    loss = hp.gamma * np.sum(uT * uT) + 0.5 * hp.lam * net_T.sq_weights()
    grad = net_T.vjp(cache, 2 * hp.gamma * uT, rows=tgt.overlap) if len(tgt.overlap) else 0.0
    grad = grad + hp.lam * net_T.flatten() * net_T.weight_mask()
    return float(loss), grad


def joint_terms(net_S, net_T, src, tgt, hp):
    """Float reference of the cross-party terms: (L1^ST, g_S, g_T)."""
    cS, cT = net_S.forward_cache(src.X), net_T.forward_cache(tgt.X)
    U_S, U_T = cS[0][-1], cT[0][-1]
    lam = source_lambda(U_S, src.y)
    uL = U_T[tgt.labeled]
    psi = translator_psi(lam, uL)
    g = taylor_dl1(src.y_lab, psi)
    uS, uT = U_S[src.overlap], U_T[tgt.overlap]
    gk = hp.gamma * hp.kappa
    loss = np.sum(taylor_l1(src.y_lab, psi) - LOG2) + gk * np.sum(uS * uT)
    gT = np.zeros(net_T.n_params)
    if len(uL):
        gT = gT + net_T.vjp(cT, g[:, None] * lam[None, :], rows=tgt.labeled)
    if len(uT):
        gT = gT + net_T.vjp(cT, gk * uS, rows=tgt.overlap)
    gS = np.zeros(net_S.n_params)
    if len(uL):
        gS = gS + lambda_jacobian(net_S, cS, src.y).T @ (g @ uL)
    if len(uS):
        gS = gS + net_S.vjp(cS, gk * uT, rows=src.overlap)
    return float(loss), gS, gT


def analytic_gradients(net_S, net_T, src, tgt, hp):
    """(L, dL/d omega_S, dL/d omega_T) assembled from local and joint parts."""
    l_st, j_s, j_t = joint_terms(net_S, net_T, src, tgt, hp)
    l_s, g_s = local_terms_S(net_S, src, hp)
    l_t, g_t = local_terms_T(net_T, tgt, hp)
    return l_st + l_s + l_t, j_s + g_s, j_t + g_t


def plaintext_train(net_S, net_T, src, tgt, hp):
    """Centralised reference of the secure training loop; returns losses."""
    losses, prev = [], None
    for it in range(hp.max_iter + 1):
        loss, g_s, g_t = analytic_gradients(net_S, net_T, src, tgt, hp)
        losses.append(loss)
        net_S.apply_update(g_s, hp.eta)
        net_T.apply_update(g_t, hp.eta)
        if it >= 1 and prev - loss < hp.eps:
            break
        prev = loss
    return losses


# ---------------------------------------------------------------- secure joint terms


@dataclass(frozen=True)
class CircuitShape:
    """Public dimensions of one secure iteration."""

    n_lab: int
    n_overlap: int
    sizes_S: tuple
    sizes_T: tuple

    def __post_init__(self):
        if self.sizes_S[-1] != self.sizes_T[-1]:
            raise ValueError("both nets must end in the same hidden width d")

    @property
    def d(self):
        return self.sizes_S[-1]

    @property
    def rows_T(self):
        return self.n_lab + self.n_overlap

    @staticmethod
    def n_params(sizes):
        return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def _vjp_shapes(sizes, rows):
    out = [("D_last", (rows, sizes[-1]))]
    L = len(sizes) - 1
    for l in range(1, L + 1):
        out.append((f"h{l - 1}", (rows, sizes[l - 1])))
        if l >= 2:
            out.append((f"W{l}", (sizes[l - 1], sizes[l]) if rows else (0, sizes[l])))
            out.append((f"D{l - 1}", (rows, sizes[l - 1])))
    return out


def operand_shapes(role, shape):
    """Ordered (name, shape) list of the private operands each role inputs."""
    nl, no, d = shape.n_lab, shape.n_overlap, shape.d
    if role == "S":
        p_s = CircuitShape.n_params(shape.sizes_S)
        out = [("lam", (d if nl else 0,)), ("lamB", (d if nl else 0,)), ("a", (nl,)), ("b8", (nl,)),
               ("uS", (no, d)), ("jac", (d if nl else 0, p_s))]
        return out + _vjp_shapes(shape.sizes_S, no) + [("L1", (1,))]
    if role == "T":
        out = [("uL", (nl, d)), ("uO", (no, d))]
        return out + _vjp_shapes(shape.sizes_T, shape.rows_T) + [("L1", (1,))]
    raise ValueError(role)


def _vjp_operands(net, cache, rows, last_scale=1.0):
    hs, Ds = cache
    L = net.n_layers
    ops = {"D_last": last_scale * Ds[L][rows]}
    for l in range(1, L + 1):
        ops[f"h{l - 1}"] = hs[l - 1][rows]
        if l >= 2:
            ops[f"W{l}"] = net.weights[l - 1] if len(rows) else np.zeros((0, net.sizes[l]))
            ops[f"D{l - 1}"] = Ds[l - 1][rows]
    return ops


def source_operands(net_S, src, hp, boost=BOOST_BITS):
    """Float operands S contributes, plus its local loss and gradient.

    Operands that end up in a gradient or loss output are pre-multiplied by
    ``2**boost`` so those outputs carry ``f + boost`` fractional bits.
    """
    cache = net_S.forward_cache(src.X)
    U_S = cache[0][-1]
    nl = len(src.y_lab)
    B = float(2**boost)
    gk = hp.gamma * hp.kappa * B
    y_lab = check_labels(src.y_lab) if nl else np.zeros(0)
    lam = source_lambda(U_S, src.y)
    ops = {
        "lam": lam if nl else np.zeros(0),
        "lamB": B * lam if nl else np.zeros(0),
        "a": 0.5 * T1(y_lab) if nl else np.zeros(0),
        "b8": 0.125 * T2(y_lab) if nl else np.zeros(0),
        "uS": gk * U_S[src.overlap],
        "jac": B * lambda_jacobian(net_S, cache, src.y) if nl else np.zeros((0, net_S.n_params)),
    }
    ops.update(_vjp_operands(net_S, cache, src.overlap, gk))
    l1, g_local = local_terms_S(net_S, src, hp, cache)
    ops["L1"] = np.array([B * l1])
    return ops, g_local, lam


def target_operands(net_T, tgt, hp, boost=BOOST_BITS):
    cache = net_T.forward_cache(tgt.X)
    U_T = cache[0][-1]
    rows = np.concatenate([np.asarray(tgt.labeled, dtype=np.int64),
                           np.asarray(tgt.overlap, dtype=np.int64)])
    ops = {"uL": U_T[tgt.labeled], "uO": U_T[tgt.overlap]}
    ops.update(_vjp_operands(net_T, cache, rows))
    l1, g_local = local_terms_T(net_T, tgt, hp, cache)
    ops["L1"] = np.array([float(2**boost) * l1])
    return ops, g_local


def share_operands(engine, role, ops, shape, codec):
    """Input-share both parties' operand dicts in a single round."""
    mine = operand_shapes(role, shape)
    peer = operand_shapes("T" if role == "S" else "S", shape)
    arrays = []
    for name, shp in mine:
        arr = np.asarray(ops[name], dtype=np.float64)
        if arr.shape != shp:
            raise ValueError(f"operand {name}: shape {arr.shape} != {shp}")
        arrays.append(encode(arr, codec, engine.domain).reshape(shp))
    own, other = engine.input_many(arrays, [s for _, s in peer])
    own = dict(zip([n for n, _ in mine], own))
    other = dict(zip([n for n, _ in peer], other))
    return (own, other) if role == "S" else (other, own)


def _flat_shared(engine, parts):
    return SharedArray.concat([p.ravel() for p in parts]) if parts else None


def _vjp_lockstep(engine, jobs, extra_pairs=()):
    """Backpropagate several shared output deltas through their owners'
    (shared) layer operands; all jobs advance one layer per round pair.

    Each job is ``(delta, ops, sizes)`` with delta of shape rows x d.
    Returns ``(flat gradients per job, products of extra_pairs truncated)``.
    """
    grads = [[None] * (len(sizes) - 1) for _, _, sizes in jobs]
    deltas = [delta for delta, _, _ in jobs]
    layer = [len(sizes) - 1 for _, _, sizes in jobs]
    extra_out = []
    first = True
    while any(l >= 1 for l in layer) or first:
        pairs, tags = [], []
        if first:
            for k, (x, y, axis) in enumerate(extra_pairs):
                pairs.append((x, y))
                tags.append(("extra", k, axis))
        for j, (_, ops, _) in enumerate(jobs):
            l = layer[j]
            if l < 1:
                continue
            delta = deltas[j]
            pairs.append((ops[f"h{l - 1}"][:, :, None], delta[:, None, :]))
            tags.append(("gW", j, 0))
            if l > 1:
                pairs.append((delta[:, None, :], ops[f"W{l}"][None, :, :]))
                tags.append(("back", j, 2))
        first = False
        if not pairs:
            break
        prods = engine.mul_many(pairs)
        sums = [engine.sum(p, axis=axis) for p, (_, _, axis) in zip(prods, tags)]
        truncated = engine.trunc_many(sums)
        back = {}
        for val, (tag, j, _) in zip(truncated, tags):
            if tag == "extra":
                extra_out.append(val)
            elif tag == "gW":
                l = layer[j]
                grads[j][l - 1] = (val, engine.sum(deltas[j], axis=0))
            else:
                back[j] = val
        if back:
            prods = engine.mul_many([(back[j], jobs[j][1][f"D{layer[j] - 1}"]) for j in back])
            for j, v in zip(back, engine.trunc_many(prods)):
                deltas[j] = v
        for j in range(len(jobs)):
            layer[j] -= 1
    flats = []
    for g in grads:
        flats.append(_flat_shared(engine, [p for gw_gb in g for p in gw_gb]) if g[0] is not None else None)
    return flats, extra_out


def secure_joint(engine, S, T, shape, boost=BOOST_BITS):
    """Evaluate the cross-party loss and gradients on shared operands.

    ``S`` and ``T`` map operand names (see :func:`operand_shapes`) to
    SharedArrays. Returns shared ``(L1_ST, grad_S, grad_T)`` with
    ``f + boost`` fractional bits; gradients are flat in each net's
    parameter order, or None when no joint term touches that party.
    """
    nl, no = shape.n_lab, shape.n_overlap
    pairs, tags = [], []
    if nl:
        pairs += [(S["lam"][None, :], T["uL"]), (S["lamB"][None, :], T["D_last"][:nl])]
        tags += ["psi", "lamD"]
    if no:
        pairs += [(S["uS"], T["uO"]), (S["uS"], T["D_last"][nl:]), (T["uO"], S["D_last"])]
        tags += ["align", "dT_O", "dS"]
    got = dict(zip(tags, engine.mul_many(pairs)))
    if nl:
        got["psi"] = engine.sum(got["psi"], axis=1)
    to_trunc = [t for t in ("psi", "lamD", "dT_O", "dS") if t in got]
    got.update(zip(to_trunc, engine.trunc_many([got[t] for t in to_trunc])))
    align_raw = engine.sum(got["align"]).reshape(1) if no else None

    extra, loss_raw = [], []
    if nl:
        psi = got["psi"]
        b8psi = engine.trunc(engine.mul(S["b8"], psi))
        g = engine.add(engine.scale_int(b8psi, 2), S["a"])
        quad, d_lab, q = engine.mul_many([(psi, engine.add(b8psi, S["a"])),
                                          (g[:, None], got["lamD"]),
                                          (g[:, None], T["uL"])])
        loss_raw.append(engine.scale_int(engine.sum(quad).reshape(1), 2**boost))
        if align_raw is not None:
            loss_raw.append(align_raw)
        l_st, d_lab, q = engine.trunc_many([_sum_all(engine, loss_raw), d_lab, engine.sum(q, axis=0)])
        extra.append((S["jac"], q[:, None], 0))
    elif no:
        l_st = engine.trunc(align_raw)
    else:
        l_st = engine.zeros((1,))

    jobs, owners = [], []
    if nl or no:
        parts = ([d_lab] if nl else []) + ([got["dT_O"]] if no else [])
        jobs.append((SharedArray.concat(parts), T, shape.sizes_T))
        owners.append("T")
    if no:
        jobs.append((got["dS"], S, shape.sizes_S))
        owners.append("S")
    flats, extra_out = _vjp_lockstep(engine, jobs, extra)
    by_owner = dict(zip(owners, flats))
    grad_T = by_owner.get("T")
    grad_S = by_owner.get("S")
    if extra_out:
        grad_S = extra_out[0] if grad_S is None else engine.add(grad_S, extra_out[0])
    return l_st, grad_S, grad_T


def _sum_all(engine, items):
    out = items[0]
    for it in items[1:]:
        out = engine.add(out, it)
    return out


def decode_output(values, codec, domain, boost=BOOST_BITS):
    """Decode a secure output carrying ``f + boost`` fractional bits."""
    return np.asarray(decode(values, codec, domain), dtype=np.float64) / 2.0**boost
