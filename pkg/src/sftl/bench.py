"""Scaling sweeps: two party processes over loopback TCP per point.

Material is dealt before the clock starts, so the timings cover the online
phase only. Each point trains for two iterations and reports the second
(which includes the convergence check, i.e. a full steady-state iteration).
"""

import csv
import multiprocessing as mp
from dataclasses import asdict, dataclass

import numpy as np

from .arith import FixedCodec
from .data import DatasetSpec, load_and_split
from .model import Hyperparams, LocalNet
from .net import accept, connect, free_port
from .preprocessing import Dealer, count_required_material, iteration_cost
from .protocol import PartyInput, SessionConfig, open_session, train_party

AXES = ("samples", "overlap", "t_features", "d")


@dataclass
class BenchPlan:
    axis: str
    values: list
    engine: str = "mal"
    repetitions: int = 1
    samples: int = 100
    p_s: int = 10
    p_t: int = 10
    d: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        vals = list(self.values)
        if not vals or any(v <= 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("axis values must be positive and increasing")

    def point(self, value):
        """(samples, overlap rows, p_t, d) for one axis value."""
        n, p_t, d = self.samples, self.p_t, self.d
        n_overlap = n
        if self.axis == "samples":
            n = n_overlap = int(value)
        elif self.axis == "overlap":
            n_overlap = int(value)
            n = max(n, n_overlap)
        elif self.axis == "t_features":
            p_t = int(value)
        else:
            d = int(value)
        return n, n_overlap, p_t, d


@dataclass
class BenchRow:
    axis: str
    value: int
    engine: str
    rep: int
    n_lab: int
    n_overlap: int
    init_ms: float
    compute_ms: float
    reveal_ms: float
    total_ms: float
    bytes_sent: int
    bytes_received: int
    rounds: int
    triples: int
    model_bytes: int


def point_inputs(plan, value):
    """Deterministic data and nets for one sweep point.

    ``samples`` N gives N_S = N_T = N_ST = N and N_L = N/2.
    """
    n, n_overlap, p_t, d = plan.point(value)
    frac = n_overlap / n
    sp = load_and_split(DatasetSpec(n_samples=n, p_s=plan.p_s, p_t=p_t, overlap=1.0,
                                    n_lab=max(1, n // 2), seed=plan.seed))
    if frac < 1.0:
        keep = int(round(frac * len(sp.source.overlap)))
        sp.source.overlap = sp.source.overlap[:keep]
        sp.target.overlap = sp.target.overlap[:keep]
    net_S = LocalNet.init([plan.p_s, d], plan.seed + 1)
    net_T = LocalNet.init([p_t, d], plan.seed + 2)
    return sp, net_S, net_T


def _party_main(role, plan, value, port, store, queue):
    sp, net_S, net_T = point_inputs(plan, value)
    hp = Hyperparams(max_iter=1, eps=1e-12)
    if role == "S":
        channel = accept(port)
        inp = PartyInput("S", net_S, sp.source)
    else:
        channel = connect(("127.0.0.1", port))
        inp = PartyInput("T", net_T, sp.target)
    cfg = SessionConfig(role, plan.engine, hp, FixedCodec(), seed=plan.seed)
    try:
        engine, shape = open_session(channel, cfg, inp, store)
        res = train_party(engine, role, inp.net, inp.data, hp, shape, cfg.codec)
        queue.put((role, [asdict(m) for m in res.metrics]))
    finally:
        channel.close()


def run_point(plan, value, rep=0):
    """Run both parties as child processes and return a :class:`BenchRow`."""
    sp, net_S, net_T = point_inputs(plan, value)
    nl, no = len(sp.source.y_lab), len(sp.source.overlap)
    material = count_required_material(nl, no, net_S.sizes, net_T.sizes, plan.engine, 2)
    s_store, t_store = Dealer(plan.engine, plan.seed + rep).stores(material.counts)
    ctx = mp.get_context("fork")
    queue = ctx.Queue()
    port = free_port()
    procs = [ctx.Process(target=_party_main, args=("S", plan, value, port, s_store, queue)),
             ctx.Process(target=_party_main, args=("T", plan, value, port, t_store, queue))]
    procs[0].start()
    procs[1].start()
    got = dict(queue.get(timeout=900) for _ in procs)
    for p in procs:
        p.join(60)
    m = got["S"][-1]
    cost = iteration_cost(nl, no, net_S.sizes, net_T.sizes, plan.engine, True)
    total = m["init_ms"] + m["compute_ms"] + m["reveal_ms"]
    return BenchRow(plan.axis, int(value), plan.engine, rep, nl, no, m["init_ms"], m["compute_ms"],
                    m["reveal_ms"], total, m["bytes_sent"], m["bytes_received"], m["rounds"],
                    m["triples"], cost.bytes_sent(0))


def run_plan(plan, progress=None):
    rows = []
    for value in plan.values:
        for rep in range(plan.repetitions):
            row = run_point(plan, value, rep)
            rows.append(row)
            if progress:
                progress(row)
    return rows


def fit_r2(x, y, degree=1):
    """Least-squares polynomial fit; returns (coefficients, R^2)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    coef = np.polyfit(x, y, degree)
    resid = y - np.polyval(coef, x)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return coef, 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0


def median_by_value(rows, key):
    vals = sorted({r.value for r in rows})
    return vals, [float(np.median([getattr(r, key) for r in rows if r.value == v])) for v in vals]


def diagnostics(rows):
    """Linear and quadratic fit summaries for time and bytes."""
    out = {}
    for key in ("total_ms", "bytes_sent"):
        x, y = median_by_value(rows, key)
        if len(x) < 3:
            continue
        _, r2_lin = fit_r2(x, y, 1)
        coef_q, r2_quad = fit_r2(x, y, 2)
        out[key] = {"r2_linear": r2_lin, "r2_quadratic": r2_quad, "quadratic_coef": coef_q[0]}
    return out


def write_csv(rows, path):
    fields = list(asdict(rows[0]).keys()) if rows else list(BenchRow.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))
