"""Command line entry point: ``sladecomp {gen,train,decompose,experiment,contour}``.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Progress goes to
stderr as one JSON object per line.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .contour import export_contour
from .decompose import DecompositionResult, decompose
from .harness import domain_dataset, run_experiment
from .preprocess import PoSolverError
from .rng import make_rng
from .serialize import ModelFormatError, load_model, save_model
from .slo import SloVector
from .synth import Dataset
from .train import MethodKind, TrainingError, train

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(message)


def _method(text: str) -> MethodKind:
    try:
        return MethodKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _methods(text: str) -> tuple[MethodKind, ...]:
    return tuple(_method(t) for t in text.split(",") if t)


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sladecomp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="TOML experiment config (default: bundled)")
        sp.add_argument("--seed", type=int, help="override the config seed")

    g = sub.add_parser("gen", help="generate one dataset per domain")
    common(g)
    g.add_argument("--samples", type=int, help="samples per domain (default: first configured size)")
    g.add_argument("--rep", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")

    t = sub.add_parser("train", help="train one risk model")
    common(t)
    t.add_argument("--method", type=_method, required=True)
    t.add_argument("--samples", type=int)
    t.add_argument("--domain", type=int, default=0, help="domain index in the config")
    t.add_argument("--data", help="train on this CSV instead of generating data")
    t.add_argument("--log", help="write per-epoch training log CSV here")
    t.add_argument("--out", required=True, help="model file to write")

    d = sub.add_parser("decompose", help="decompose an e2e SLA with trained models")
    common(d)
    d.add_argument("--models", nargs="+", required=True, help="one model file per domain")
    d.add_argument("--delay", type=float, help="e2e delay bound in ms")
    d.add_argument("--throughput", type=float, help="e2e throughput floor in Gbps")
    d.add_argument("--out", help="append the result row to this CSV")

    e = sub.add_parser("experiment", help="run the full repeated pipeline")
    common(e)
    e.add_argument("--method", type=_methods, help="comma-separated subset of methods")
    e.add_argument("--samples", type=_ints, help="comma-separated sample sizes")
    e.add_argument("--reps", type=int)
    e.add_argument("--workers", type=int)
    e.add_argument("--no-timing", action="store_true", help="do not record wall-clock times")
    e.add_argument("--out", help="output directory (default: config output_dir)")

    c = sub.add_parser("contour", help="export an acceptance-probability map")
    common(c)
    src = c.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="trained model file")
    src.add_argument("--domain", type=int, help="ground truth of this domain index")
    c.add_argument("--resolution", type=int, default=101)
    c.add_argument("--out", required=True, help="output prefix; writes .csv and .svg")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _progress(**fields):
    print(json.dumps(fields, sort_keys=True), file=sys.stderr, flush=True)


def _cmd_gen(args) -> int:
    cfg = _config(args)
    K = args.samples or cfg.sample_sizes[0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, dom in enumerate(cfg.domains):
        path = out / f"{dom.name}.csv"
        domain_dataset(cfg, K, args.rep, i).to_csv(path)
        _progress(event="dataset", domain=dom.name, samples=K, path=str(path))
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _config(args)
    if not 0 <= args.domain < len(cfg.domains):
        raise UsageError(f"--domain must be in [0, {len(cfg.domains) - 1}]")
    dom = cfg.domains[args.domain]
    if args.data:
        data = Dataset.from_csv(args.data, dom.spec)
        K = len(data)
    else:
        K = args.samples or cfg.sample_sizes[0]
        data = domain_dataset(cfg, K, 0, args.domain)
    log = [] if args.log else None
    model = train(data, args.method, cfg.train,
                  make_rng("train", cfg.seed, args.method.value, K, 0, args.domain), log=log)
    save_model(model, args.out)
    if log is not None:
        with open(args.log, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "wall_ms"])
            for row in log:
                w.writerow([row.epoch, repr(row.train_loss), repr(row.val_loss), repr(row.wall_ms)])
    _progress(event="trained", method=model.method.value, epochs=model.epochs_run,
              val_loss=model.final_val_loss, wall_ms=model.wall_time_s * 1e3, path=args.out)
    return EXIT_OK


def _cmd_decompose(args) -> int:
    cfg = _config(args)
    models = [load_model(p) for p in args.models]
    e2e = SloVector(
        args.delay if args.delay is not None else cfg.e2e.delay,
        args.throughput if args.throughput is not None else cfg.e2e.throughput,
    )
    result = decompose(models, e2e, cfg.decompose)
    if args.out:
        path = Path(args.out)
        new = not path.exists()
        with path.open("a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if new:
                w.writerow(DecompositionResult.csv_header(len(models)))
            w.writerow(result.csv_row())
    print(json.dumps({
        "parts": [[p.delay, p.throughput] for p in result.parts],
        "objective": result.objective,
        "model_prob": result.model_e2e_prob,
        "converged": result.converged,
    }))
    return EXIT_OK


def _cmd_experiment(args) -> int:
    cfg = _config(args)
    kw = {}
    if args.method:
        kw["methods"] = args.method
    if args.samples:
        kw["sample_sizes"] = args.samples
    if args.reps is not None:
        kw["repetitions"] = args.reps
    if args.workers is not None:
        kw["workers"] = args.workers
    if args.no_timing:
        kw["record_timing"] = False
    try:
        cfg = cfg.replace(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = args.out or cfg.output_dir
    report = run_experiment(cfg, out_dir=out, progress=sys.stderr)
    _progress(event="report", out=str(out), optimum=report.optimum_prob)
    return EXIT_OK


def _cmd_contour(args) -> int:
    cfg = _config(args)
    if args.model:
        model = load_model(args.model)
        spec, title = model.spec, model.method.value
    else:
        if not 0 <= args.domain < len(cfg.domains):
            raise UsageError(f"--domain must be in [0, {len(cfg.domains) - 1}]")
        dom = cfg.domains[args.domain]
        model, spec, title = dom.truth, dom.spec, f"ground truth: {dom.name}"
    if args.resolution < 2:
        raise UsageError("--resolution must be >= 2")
    export_contour(model, spec, args.resolution, args.out, title)
    _progress(event="contour", out=args.out)
    return EXIT_OK


COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "decompose": _cmd_decompose,
    "experiment": _cmd_experiment,
    "contour": _cmd_contour,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        if str(exc) and not isinstance(exc.__context__, argparse.ArgumentError):
            print(f"sladecomp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help exits 0 through argparse
        return int(exc.code or 0)
    except (TrainingError, PoSolverError, ModelFormatError, OSError, ValueError) as exc:
        print(f"sladecomp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
