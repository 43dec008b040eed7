"""Command line interface: ``hpalign {simulate,align,bench,eval,replay}``.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .hawkes import InfeasibleParametersError, simulate
from .io import (
    ValidationError,
    params_to_dict,
    read_events,
    read_matrix,
    read_params,
    write_events,
    write_json,
    write_matrix,
    write_pgm,
)
from .learn import AlignmentConfig, SGDConfig, align
from .metrics import evaluate
from .synth import METHODS, TrialSpec, run_benchmark
from .transport import SinkhornError

log = logging.getLogger("hpalign")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _flag(parser, name, **kw):
    # every config field is reachable as --snake_case and --kebab-case
    opts = [f"--{name}"]
    if "_" in name:
        opts.append(f"--{name.replace('_', '-')}")
    parser.add_argument(*opts, dest=name, default=None, **kw)


def _bool(s):
    v = s.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {s!r}")


def _add_config_flags(p):
    p.add_argument("--config", type=Path, help="JSON file with AlignmentConfig fields")
    _flag(p, "alpha", type=float)
    _flag(p, "gamma", type=float)
    _flag(p, "tau", type=float)
    _flag(p, "outer_rounds", type=int)
    _flag(p, "hp_steps", type=int)
    _flag(p, "learning_rate", type=float)
    _flag(p, "beta", type=float)
    _flag(p, "fit_infectivity", type=_bool)
    _flag(p, "warm_start", type=_bool)
    _flag(p, "ot_max_iter", type=int)
    _flag(p, "ot_tol", type=float)
    _flag(p, "sinkhorn_max_iter", type=int)
    _flag(p, "sinkhorn_tol", type=float)
    _flag(p, "smoothing", type=float)
    _flag(p, "sgd", type=_bool, help="use minibatch gradients")
    _flag(p, "batch_size", type=int)
    _flag(p, "history_window", type=int)
    _flag(p, "seed", type=int)


def build_config(args) -> AlignmentConfig:
    """Config file first, then every flag that was given on the command line."""
    d = {}
    if args.config is not None:
        d = json.loads(Path(args.config).read_text())
        if not isinstance(d, dict):
            raise ValidationError(f"{args.config}: config must be a JSON object")
    sgd = dict(d.pop("sgd", None) or {})
    for f in fields(AlignmentConfig):
        if f.name != "sgd" and getattr(args, f.name, None) is not None:
            d[f.name] = getattr(args, f.name)
    if args.sgd is not None:
        sgd["enabled"] = args.sgd
    for name in ("batch_size", "history_window"):
        if getattr(args, name) is not None:
            sgd[name] = getattr(args, name)
    try:
        return AlignmentConfig.from_dict({**d, "sgd": SGDConfig(**sgd)})
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    return int(os.environ.get("HA_THREADS", "1"))


def _manifest(args, argv, config, inputs, outputs, started):
    return {
        "command": args.command,
        "argv": list(argv),
        "config": config.to_dict() if config is not None else None,
        "seed": getattr(args, "seed", None),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "timings": {"wall_seconds": time.time() - started},
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def cmd_simulate(args, argv):
    started = time.time()
    params = read_params(args.params)
    if not params.is_stable():
        raise ValidationError(f"{args.params}: parameters are unstable (spectral radius >= 1)")
    ss = np.random.SeedSequence(args.seed)
    seqs = [simulate(params, args.horizon, s) for s in ss.spawn(args.count)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    outputs = write_events(out, seqs)
    manifest = out.with_name(out.stem + ".manifest.json")
    write_json(manifest, _manifest(args, argv, None, [args.params], outputs, started))
    log.info("wrote %d sequences (%d events) to %s", len(seqs), sum(len(s) for s in seqs), out)
    return EXIT_OK


def cmd_align(args, argv):
    started = time.time()
    config = build_config(args)
    seqs_s = read_events(args.source)
    seqs_t = read_events(args.target)
    state = align(seqs_s, seqs_t, config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = [
        write_matrix(out / "plan.csv", state.plan),
        write_pgm(out / "plan.pgm", state.plan),
        write_json(
            out / "params.json",
            {"source": params_to_dict(state.params_s), "target": params_to_dict(state.params_t),
             "gamma": state.gamma},
        ),
    ]
    with open(out / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "nll_s", "nll_t", "fgw", "total"])
        for r in state.trace:
            w.writerow([r.round] + [format(v, ".17g") for v in (r.nll_s, r.nll_t, r.fgw, r.total)])
    outputs.append(out / "trace.csv")
    inputs = [args.source, args.target]
    if args.truth is not None:
        truth = read_matrix(args.truth)
        _check_shapes(state.plan, truth)
        outputs.append(write_json(out / "metrics.json", evaluate(truth, state.plan, args.k)))
        inputs.append(args.truth)
    write_json(out / "manifest.json", _manifest(args, argv, config, inputs, outputs, started))
    return EXIT_OK


def cmd_bench(args, argv):
    started = time.time()
    config = build_config(args)
    spec = TrialSpec(C=args.c, num_sequences=args.num_sequences, horizon=args.horizon,
                     trials=args.trials, seed=config.seed)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ValidationError(f"unknown method(s) {bad}; choose from {list(METHODS)}")
    table = run_benchmark(spec, methods, config, threads=_threads(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = [out / "table.csv", out / "trials.csv"]
    with open(out / "table.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "acc1", "sim", "entropy"])
        for row in table.rows():
            w.writerow([row["method"]] + [format(row[k], ".17g") for k in ("acc1", "sim", "entropy")])
    with open(out / "trials.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "method", "acc1", "sim", "entropy"])
        for r in table.reports:
            w.writerow([r.trial, r.method] + [format(v, ".17g") for v in (r.acc1, r.sim, r.entropy)])
    # first-trial plans, one heatmap per method
    for r in table.reports:
        if r.trial == 0:
            outputs.append(write_matrix(out / f"plan_{r.method}.csv", r.plan))
            outputs.append(write_pgm(out / f"plan_{r.method}.pgm", r.plan))
    outputs.append(write_matrix(out / "truth.csv", table.reports[0].truth))
    manifest = _manifest(args, argv, config, [], outputs, started)
    manifest["trial_spec"] = {"C": spec.C, "num_sequences": spec.num_sequences,
                              "horizon": spec.horizon, "trials": spec.trials, "seed": spec.seed}
    write_json(out / "manifest.json", manifest)
    for row in table.rows():
        print(f"{row['method']:>10}  Acc-1 {row['acc1']:.3f}  Sim {row['sim']:.3f}  H {row['entropy']:.3f}")
    return EXIT_OK


def _check_shapes(plan, truth):
    if plan.shape != truth.shape:
        raise ValidationError(
            f"plan is {plan.shape[0]}x{plan.shape[1]} but truth is {truth.shape[0]}x{truth.shape[1]}"
        )


def cmd_eval(args, argv):
    plan = read_matrix(args.plan)
    truth = read_matrix(args.truth)
    _check_shapes(plan, truth)
    if not 1 <= args.k <= plan.shape[1]:
        raise ValidationError(f"k={args.k} must lie in [1, {plan.shape[1]}] (plan has {plan.shape[1]} columns)")
    result = evaluate(truth, plan, args.k)
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out is not None:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_replay(args, argv):
    manifest = json.loads(Path(args.manifest).read_text())
    old = list(manifest["argv"])
    if args.out is not None:
        for flag in ("--out-dir", "--out_dir", "--out"):
            if flag in old:
                old[old.index(flag) + 1] = str(args.out)
    return main(old)


def build_parser():
    parser = argparse.ArgumentParser(prog="hpalign", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate event sequences from a params JSON")
    p.add_argument("--params", type=Path, required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="event CSV path; sidecar JSON written next to it")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("align", help="jointly learn two Hawkes processes and their type alignment")
    p.add_argument("--source", type=Path, required=True)
    p.add_argument("--target", type=Path, required=True)
    p.add_argument("--truth", type=Path, help="ground-truth correspondence matrix CSV")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--out-dir", "--out_dir", dest="out_dir", type=Path, required=True)
    p.add_argument("--threads", type=int)
    _add_config_flags(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("bench", help="synthetic benchmark over all methods")
    p.add_argument("--c", "--C", dest="c", type=int, default=10)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--num-sequences", "--num_sequences", dest="num_sequences", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--out-dir", "--out_dir", dest="out_dir", type=Path, required=True)
    p.add_argument("--threads", type=int)
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="score a plan against a ground-truth correspondence")
    p.add_argument("--plan", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, help="redirect outputs")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except (ValidationError, ValueError) as exc:
        if isinstance(exc, InfeasibleParametersError):
            print(f"hpalign: numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        print(f"hpalign: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SinkhornError, FloatingPointError, ArithmeticError) as exc:
        print(f"hpalign: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"hpalign: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
