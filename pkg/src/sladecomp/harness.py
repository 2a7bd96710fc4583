"""Repeated generate -> train -> decompose -> score experiments.

Seeds: the dataset of domain ``d`` in repetition ``rep`` at sample size ``K``
comes from ``make_rng("data", seed, K, rep, d)``; every method sees the same
data there. Training draws from
``make_rng("train", seed, method, K, rep, d)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .decompose import decompose
from .preprocess import PoSolverError
from .rng import make_rng
from .slo import SloVector
from .synth import Dataset, generate_dataset, optimal_decomposition
from .train import MethodKind, RiskModel, TrainingError, train

RAW_HEADER = ["method", "K", "rep", "e2e_prob", "objective", "train_ms", "status"]
AGG_HEADER = ["method", "K", "mean_prob", "sd_prob", "mean_train_ms", "n_ok", "n_fail"]


@dataclass
class RepetitionRow:
    method: MethodKind
    K: int
    rep: int
    e2e_prob: float
    objective: float
    train_ms: float
    status: str = "ok"
    parts: list[SloVector] = field(default_factory=list)
    domain_probs: list[float] = field(default_factory=list)
    domain_train_ms: list[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class Aggregate:
    method: MethodKind
    K: int
    mean_prob: float
    sd_prob: float
    mean_train_ms: float
    n_ok: int
    n_fail: int


@dataclass
class ExperimentReport:
    rows: list[RepetitionRow]
    aggregates: list[Aggregate]
    optimum_prob: float
    optimum_parts: list[SloVector]

    def aggregate(self, method, K) -> Aggregate:
        method = MethodKind.parse(method)
        for a in self.aggregates:
            if a.method is method and a.K == K:
                return a
        raise KeyError((method, K))

    def rows_for(self, method, K) -> list[RepetitionRow]:
        method = MethodKind.parse(method)
        return [r for r in self.rows if r.method is method and r.K == K]


def domain_dataset(cfg: ExperimentConfig, K: int, rep: int, d: int) -> Dataset:
    dom = cfg.domains[d]
    return generate_dataset(dom.truth, dom.spec, K, make_rng("data", cfg.seed, K, rep, d),
                            seed=cfg.seed)


def score(cfg: ExperimentConfig, parts) -> tuple[float, list[float]]:
    """True e2e acceptance: product of the per-domain ground-truth probabilities."""
    probs = [float(d.truth.predict(p.delay, p.throughput)[0]) for d, p in zip(cfg.domains, parts)]
    return float(np.prod(probs)), probs


def train_domain_models(cfg: ExperimentConfig, method, K: int, rep: int) -> list[RiskModel]:
    method = MethodKind.parse(method)
    return [
        train(domain_dataset(cfg, K, rep, d), method, cfg.train,
              make_rng("train", cfg.seed, method.value, K, rep, d))
        for d in range(len(cfg.domains))
    ]


def run_repetition(cfg: ExperimentConfig, method, K: int, rep_index: int) -> RepetitionRow:
    """One independent run. Training failures become a tagged row, not an exception.

    ``train_ms`` is the mean per-domain model build time (preprocessing plus
    optimisation); data generation and decomposition are excluded.
    """
    method = MethodKind.parse(method)
    try:
        models = train_domain_models(cfg, method, K, rep_index)
    except (TrainingError, PoSolverError) as exc:
        return RepetitionRow(method, K, rep_index, math.nan, math.nan, math.nan,
                             f"fail:{type(exc).__name__}")
    times = [m.wall_time_s * 1e3 for m in models] if cfg.record_timing else []
    result = decompose(models, cfg.e2e, cfg.decompose)
    e2e_prob, probs = score(cfg, result.parts)
    return RepetitionRow(
        method, K, rep_index, e2e_prob, result.objective,
        float(np.mean(times)) if times else math.nan,
        "ok", result.parts, probs, times,
    )


def _run_task(args):
    cfg, method, K, rep = args
    return run_repetition(cfg, method, K, rep)


def aggregate_rows(rows: list[RepetitionRow], method: MethodKind, K: int) -> Aggregate:
    mine = [r for r in rows if r.method is method and r.K == K]
    ok = [r for r in mine if r.ok]
    probs = np.array([r.e2e_prob for r in ok])
    times = np.array([r.train_ms for r in ok])
    mean = float(np.mean(probs)) if len(ok) else math.nan
    sd = float(np.std(probs, ddof=1)) if len(ok) > 1 else (0.0 if ok else math.nan)
    mean_t = float(np.mean(times)) if len(ok) else math.nan
    return Aggregate(method, K, mean, sd, mean_t, len(ok), len(mine) - len(ok))


def _progress(stream, **fields):
    if stream is not None:
        print(json.dumps(fields, sort_keys=True), file=stream, flush=True)


def run_experiment(cfg: ExperimentConfig, out_dir=None, progress=None) -> ExperimentReport:
    """Every (method, K, rep) cell, aggregated; optionally written to ``out_dir``.

    With ``cfg.workers > 1`` repetitions run in a process pool. Rows are
    re-sorted into (method, K, rep) order before aggregation, so results do
    not depend on completion order. ``progress`` is a text stream for JSON
    progress lines; None keeps quiet.
    """
    opt_parts, opt_prob = optimal_decomposition(cfg.truths, cfg.e2e, cfg.optimum_grid_resolution, cfg.specs)
    _progress(progress, event="optimum", prob=opt_prob)
    tasks = [(cfg, m, K, rep) for m in cfg.methods for K in cfg.sample_sizes for rep in range(cfg.repetitions)]
    rows: list[RepetitionRow] = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for row in pool.map(_run_task, tasks, chunksize=4):
                rows.append(row)
                _progress(progress, event="rep", method=row.method.value, K=row.K, rep=row.rep,
                          status=row.status, e2e_prob=row.e2e_prob)
    else:
        for task in tasks:
            row = _run_task(task)
            rows.append(row)
            _progress(progress, event="rep", method=row.method.value, K=row.K, rep=row.rep,
                      status=row.status, e2e_prob=row.e2e_prob)
    method_rank = {m: i for i, m in enumerate(cfg.methods)}
    rows.sort(key=lambda r: (method_rank[r.method], r.K, r.rep))
    aggregates = [aggregate_rows(rows, m, K) for m in cfg.methods for K in cfg.sample_sizes]
    report = ExperimentReport(rows, aggregates, opt_prob, opt_parts)
    if out_dir is not None:
        write_report(report, out_dir)
    _progress(progress, event="done", rows=len(rows))
    return report


def _fmt(v) -> str:
    if isinstance(v, MethodKind):
        return v.value
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def raw_csv(report: ExperimentReport) -> str:
    return _csv(RAW_HEADER, [
        (r.method, r.K, r.rep, r.e2e_prob, r.objective, r.train_ms, r.status) for r in report.rows
    ])


def aggregates_csv(report: ExperimentReport) -> str:
    return _csv(AGG_HEADER, [
        (a.method, a.K, a.mean_prob, a.sd_prob, a.mean_train_ms, a.n_ok, a.n_fail) for a in report.aggregates
    ])


def write_report(report: ExperimentReport, out_dir) -> Path:
    """Write ``raw.csv``, ``aggregates.csv`` and ``optimum.csv`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "raw.csv").write_text(raw_csv(report))
    (out / "aggregates.csv").write_text(aggregates_csv(report))
    n = len(report.optimum_parts)
    opt_rows = [[p.delay for p in report.optimum_parts] + [p.throughput for p in report.optimum_parts]
                + [report.optimum_prob]]
    header = [f"tau_{i + 1}" for i in range(n)] + [f"theta_{i + 1}" for i in range(n)] + ["prob"]
    (out / "optimum.csv").write_text(_csv(header, opt_rows))
    return out
