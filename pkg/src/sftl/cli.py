"""Command-line harness: ``sftl {deal,train,predict,bench}``.

Each ``train``/``predict`` invocation runs one party. Both parties are
given the same data flags and seed so that they derive the same entity
split; each keeps only its own view.

Exit status: 0 on success, 3 on a protocol abort (MAC failure, peer abort,
parameter mismatch), 4 on transport failure, 5 when preprocessing runs out,
2 on usage errors.
"""

import argparse
import csv
import json
import sys
from dataclasses import asdict, fields

import numpy as np

from .arith import FixedCodec
from .bench import AXES, BenchPlan, diagnostics, run_plan, write_csv
from .data import DatasetSpec, load_and_split
from .model import Hyperparams, LocalNet
from .net import PeerAborted, TransportError, accept, connect
from .preprocessing import (Dealer, DealerConfig, FileStore, PreprocessingExhausted,
                            count_required_material, deal, prediction_cost)
from .protocol import (ROLES, IterationMetrics, PartyInput, SessionConfig, handshake,
                       open_session, oracle_psi, predict_party, train_party)
from .sharing import ProtocolAbort, make_engine

EXIT_OK, EXIT_USAGE, EXIT_ABORT, EXIT_TRANSPORT, EXIT_EXHAUSTED = 0, 2, 3, 4, 5


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()] if text else None


def _int_list(text):
    return [int(t) for t in _csv_list(text) or []]


def _add_data_flags(p):
    g = p.add_argument_group("data")
    g.add_argument("--data", help="CSV file (omit for the synthetic generator)")
    g.add_argument("--label", default="label")
    g.add_argument("--s-features", type=_csv_list, help="comma-separated S columns")
    g.add_argument("--t-features", type=_csv_list, help="comma-separated T columns")
    g.add_argument("--overlap", type=float, default=0.5, help="fraction of S samples held by T")
    g.add_argument("--n-lab", type=int, help="labelled samples (default: whole overlap)")
    g.add_argument("--samples", type=int, default=200, help="synthetic sample count")
    g.add_argument("--p-s", type=int, default=6, help="synthetic S feature count")
    g.add_argument("--p-t", type=int, default=4, help="synthetic T feature count")
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--test-fraction", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0, help="split, init and dealer seed")


def _add_model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--d", type=int, default=32, help="shared representation dimension")
    g.add_argument("--hidden", type=_int_list, default=[], help="extra hidden widths, e.g. 16,8")
    g.add_argument("--eta", type=float, default=Hyperparams.eta)
    g.add_argument("--gamma", type=float, default=Hyperparams.gamma)
    g.add_argument("--lambda", dest="lam", type=float, default=Hyperparams.lam)
    g.add_argument("--kappa", type=float, default=Hyperparams.kappa)
    g.add_argument("--max-iter", type=int, default=Hyperparams.max_iter)
    g.add_argument("--eps", type=float, default=Hyperparams.eps)
    g.add_argument("--frac-bits", type=int, default=FixedCodec.f)


def _add_session_flags(p):
    g = p.add_argument_group("session")
    g.add_argument("--role", choices=sorted(ROLES), required=True)
    g.add_argument("--engine", choices=["sh", "mal"], default="mal")
    g.add_argument("--peer", help="host:port to connect to")
    g.add_argument("--listen", type=int, help="port to accept the peer on")
    g.add_argument("--bind", default="127.0.0.1", help="address for --listen")
    g.add_argument("--preproc", help="this party's preprocessing file "
                                     "(default: in-process dealer seeded by --dealer-seed)")
    g.add_argument("--dealer-seed", type=int, help="defaults to --seed")
    g.add_argument("--timeout", type=float, default=30.0, help="connect/accept timeout in seconds")


def build_parser():
    parser = argparse.ArgumentParser(prog="sftl", description=__doc__.split("\n")[0])
    parser.add_argument("--config", help="JSON file of flag defaults (flags override it)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("deal", help="write preprocessing files for both parties")
    p.add_argument("--engine", choices=["sh", "mal"], default="mal")
    p.add_argument("--mode", choices=["train", "predict"], default="train")
    p.add_argument("--rows", type=int, help="prediction rows (predict mode; default: T's rows)")
    p.add_argument("--iterations", type=int, help="training iterations to cover (default: max-iter + 1)")
    p.add_argument("--out", required=True, help="output prefix; writes PREFIX.S and PREFIX.T")
    _add_model_flags(p)
    _add_data_flags(p)

    p = sub.add_parser("train", help="run one party of federated training")
    _add_session_flags(p)
    _add_model_flags(p)
    _add_data_flags(p)
    p.add_argument("--cheat", choices=["none", "share", "open", "output"], default="none")
    p.add_argument("--cheat-at", type=int, default=0, help="which event to tamper with")
    p.add_argument("--metrics-out", help="per-iteration metrics CSV")
    p.add_argument("--weights-out", help="trained local weights")
    p.add_argument("--reveal-loss", action="store_true",
                   help="debug only: also open L each iteration and log it (leaks the loss)")

    p = sub.add_parser("predict", help="run one party of federated inference")
    _add_session_flags(p)
    _add_model_flags(p)
    _add_data_flags(p)
    p.add_argument("--weights", required=True, help="this party's trained weights")
    p.add_argument("--labels-out", help="(T) write predicted labels as CSV")
    p.add_argument("--oracle-weights", help="(T) S weights, to report agreement with plaintext")

    p = sub.add_parser("bench", help="scaling sweep over two loopback processes")
    p.add_argument("--axis", choices=AXES, default="samples")
    p.add_argument("--values", type=_int_list, default=[10, 20, 50, 100, 500])
    p.add_argument("--engine", choices=["sh", "mal"], default="mal")
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--p-s", type=int, default=10)
    p.add_argument("--p-t", type=int, default=10)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--out", help="bench CSV path")
    p.add_argument("--seed", type=int, default=0)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        with open(args.config) as fh:
            conf = json.load(fh)
        sp = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sp._actions}
        unknown = sorted(set(k.replace("-", "_") for k in conf) - known - {"lambda"})
        if unknown:
            parser.error(f"unknown config keys: {unknown}")
        sp.set_defaults(**{("lam" if k == "lambda" else k.replace("-", "_")): v
                           for k, v in conf.items()})
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------- helpers


def _dataset(args):
    return load_and_split(DatasetSpec(args.data, args.label, args.s_features, args.t_features,
                                      args.overlap, args.n_lab, args.seed, args.samples,
                                      args.p_s, args.p_t, args.noise, args.test_fraction))


def _hyper(args):
    return Hyperparams(args.gamma, args.lam, args.kappa, args.eta, args.max_iter, args.eps)


def _codec(args):
    return FixedCodec(f=args.frac_bits)


def _sizes(args, p_in):
    return [p_in] + list(args.hidden) + [args.d]


def _nets(args, split):
    """Initial nets; each party's is seeded from (seed, party)."""
    net_S = LocalNet.init(_sizes(args, split.source.X.shape[1]), [args.seed, 0])
    net_T = LocalNet.init(_sizes(args, split.target.X.shape[1]), [args.seed, 1])
    return net_S, net_T


def _channel(args):
    if (args.peer is None) == (args.listen is None):
        raise SystemExit("exactly one of --peer and --listen is required")
    if args.listen is not None:
        return accept(args.listen, host=args.bind, timeout=args.timeout)
    host, _, port = args.peer.rpartition(":")
    return connect((host or "127.0.0.1", int(port)), timeout=args.timeout)


def _store(args):
    party = ROLES[args.role]
    if args.preproc:
        store = FileStore(args.preproc)
        if store.party != party or store.file.engine != args.engine:
            raise SystemExit(f"{args.preproc} is {store.file.engine} material for party "
                             f"{store.party}, not {args.engine} for {args.role}")
        return store
    seed = args.seed if args.dealer_seed is None else args.dealer_seed
    return Dealer(args.engine, seed, args.frac_bits).stream(party)


def _run(fn, args):
    try:
        return fn(args)
    except (ProtocolAbort, PeerAborted) as exc:
        print(f"sftl: protocol aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except PreprocessingExhausted as exc:
        print(f"sftl: preprocessing exhausted: {exc}", file=sys.stderr)
        return EXIT_EXHAUSTED
    except (TransportError, TimeoutError, ConnectionError) as exc:
        print(f"sftl: transport failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except ValueError as exc:
        print(f"sftl: {exc}", file=sys.stderr)
        return EXIT_USAGE


def write_metrics(rows, path, losses=None):
    names = [f.name for f in fields(IterationMetrics)] + (["loss"] if losses else [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=names)
        w.writeheader()
        for i, m in enumerate(rows):
            rec = asdict(m)
            if losses:
                rec["loss"] = repr(losses[i]) if i < len(losses) else ""
            w.writerow(rec)


# ---------------------------------------------------------------- commands


def cmd_deal(args):
    split = _dataset(args)
    net_S, net_T = _nets(args, split)
    if args.mode == "train":
        counts = count_required_material(len(split.source.y_lab), len(split.source.overlap),
                                         net_S.sizes, net_T.sizes, args.engine,
                                         args.max_iter + 1 if args.iterations is None
                                         else args.iterations).counts
    else:
        rows = args.rows if args.rows is not None else _predict_rows(split).shape[0]
        counts = prediction_cost(rows, args.d, args.engine)
    cfg = DealerConfig(args.engine, counts, args.seed, args.frac_bits)
    paths = (args.out + ".S", args.out + ".T")
    deal(cfg, paths)
    print(json.dumps({"files": paths, "counts": counts}))
    return EXIT_OK


def cmd_train(args):
    split = _dataset(args)
    net_S, net_T = _nets(args, split)
    role = args.role
    net, data = (net_S, split.source) if role == "S" else (net_T, split.target)
    inp = PartyInput(role, net, data, split.overlap_ids, split.label_ids)
    hp, codec = _hyper(args), _codec(args)
    cfg = SessionConfig(role, args.engine, hp, codec, seed=args.seed,
                        cheat=args.cheat, cheat_at=args.cheat_at)
    rows, res = [], None
    store = _store(args)
    channel = _channel(args)
    try:
        engine, shape = open_session(channel, cfg, inp, store)
        res = train_party(engine, role, net, data, hp, shape, codec, metrics_cb=rows.append,
                          reveal_loss=args.reveal_loss)
    finally:
        channel.close()
        if args.metrics_out:
            write_metrics(rows, args.metrics_out, res.losses if res is not None else None)
    if args.weights_out:
        res.net.save(args.weights_out)
    print(json.dumps({"role": role, "iterations": res.iterations, "converged": res.converged,
                      "bytes_sent": sum(m.bytes_sent for m in rows),
                      "bytes_received": sum(m.bytes_received for m in rows)}))
    return EXIT_OK


def _predict_rows(split):
    return split.test_X_T if split.test_X_T is not None else split.target.X


def cmd_predict(args):
    split = _dataset(args)
    role = args.role
    net = LocalNet.load(args.weights)
    codec = _codec(args)
    store = _store(args)
    channel = _channel(args)
    X = _predict_rows(split)
    try:
        params = {"mode": "predict", "engine": args.engine, "codec": [codec.f, codec.k, codec.sigma],
                  "d": net.sizes[-1]}
        peer = handshake(channel, params, [0] if role == "S" else [len(X)])
        engine = make_engine(args.engine, ROLES[role], channel, store, codec=codec,
                             seed=args.seed)
        if role == "S":
            labels = predict_party(engine, "S", net, src=split.source, codec=codec, n=peer[0])
        else:
            labels = predict_party(engine, "T", net, X=X, codec=codec)
    finally:
        channel.close()
    out = {"role": role, "rows": int(len(labels)), "positive": int(np.sum(labels == 1))}
    if role == "T":
        if args.labels_out:
            np.savetxt(args.labels_out, labels, fmt="%d")
        if args.oracle_weights:
            plain = np.where(oracle_psi(LocalNet.load(args.oracle_weights), split.source, net, X) >= 0,
                             1, -1)
            out["agreement"] = float(np.mean(plain == labels))
    print(json.dumps(out))
    return EXIT_OK


def cmd_bench(args):
    plan = BenchPlan(args.axis, args.values, args.engine, args.repetitions, args.samples,
                     args.p_s, args.p_t, args.d, args.seed)

    def progress(row):
        print(f"{row.axis}={row.value} rep={row.rep} total_ms={row.total_ms:.1f} "
              f"bytes={row.bytes_sent} rounds={row.rounds}", file=sys.stderr)
    rows = run_plan(plan, progress)
    if args.out:
        write_csv(rows, args.out)
    diag = diagnostics(rows)
    print(json.dumps({"axis": args.axis, "engine": args.engine, "fits": diag,
                      "bytes_match_model": all(r.bytes_sent == r.model_bytes for r in rows)}))
    return EXIT_OK


COMMANDS = {"deal": cmd_deal, "train": cmd_train, "predict": cmd_predict, "bench": cmd_bench}


def main(argv=None):
    args = parse_args(argv)
    return _run(COMMANDS[args.command], args)


if __name__ == "__main__":
    sys.exit(main())
