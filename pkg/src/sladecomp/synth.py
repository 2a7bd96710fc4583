"""Synthetic ground-truth domains, dataset generation and the optimum oracle."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit

from .slo import FeatureSpec, SloVector


class InfeasibleSLA(ValueError):
    pass


@dataclass(frozen=True)
class DomainGroundTruth:
    """Acceptance probability ``logistic(a_delay*delay - b_thr*throughput + c_off)``."""

    a_delay: float
    b_thr: float
    c_off: float
    form: str = "logistic-linear"

    def __post_init__(self):
        if not (self.a_delay > 0 and self.b_thr > 0):
            raise ValueError("a_delay and b_thr must be positive")
        if self.form != "logistic-linear":
            raise ValueError(f"unsupported ground-truth form {self.form!r}")

    def score(self, delay, throughput):
        return self.a_delay * np.asarray(delay, float) - self.b_thr * np.asarray(throughput, float) + self.c_off

    def predict(self, delay, throughput) -> np.ndarray:
        return np.atleast_1d(expit(self.score(delay, throughput)))

    def predict_delay_grad(self, delay, throughput) -> np.ndarray:
        p = self.predict(delay, throughput)
        return self.a_delay * p * (1.0 - p)

    def log_prob(self, delay, throughput) -> np.ndarray:
        return np.atleast_1d(log_expit(self.score(delay, throughput)))


def gt_probability(gt: DomainGroundTruth, s: SloVector) -> float:
    return float(gt.predict(s.delay, s.throughput)[0])


@dataclass(frozen=True)
class Sample:
    x: SloVector
    y: float


@dataclass
class Dataset:
    """Observations of one domain stored column-wise."""

    delays: np.ndarray
    throughputs: np.ndarray
    labels: np.ndarray
    spec: FeatureSpec = field(default_factory=FeatureSpec)
    seed: int | None = None

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=float)
        self.throughputs = np.asarray(self.throughputs, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        n = len(self.delays)
        if len(self.throughputs) != n or len(self.labels) != n:
            raise ValueError("column lengths differ")
        if not (np.all(np.isfinite(self.delays)) and np.all(np.isfinite(self.throughputs))):
            raise ValueError("SLO values must be finite")
        if np.any((self.labels < 0) | (self.labels > 1)):
            raise ValueError("labels must lie in [0, 1]")

    def __len__(self):
        return len(self.labels)

    @property
    def samples(self) -> list[Sample]:
        return [
            Sample(SloVector(float(d), float(t)), float(y))
            for d, t, y in zip(self.delays, self.throughputs, self.labels)
        ]

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.labels == 0) | (self.labels == 1)))

    def features(self) -> np.ndarray:
        return self.spec.orient(self.delays, self.throughputs)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.delays[idx], self.throughputs[idx], self.labels[idx], self.spec, self.seed)

    def with_labels(self, labels) -> "Dataset":
        return Dataset(self.delays, self.throughputs, labels, self.spec, self.seed)

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], spec: FeatureSpec | None = None, seed=None):
        return cls(
            [s.x.delay for s in samples],
            [s.x.throughput for s in samples],
            [s.y for s in samples],
            spec or FeatureSpec(),
            seed,
        )

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delay_ms", "throughput_gbps", "label"])
        for d, t, y in zip(self.delays, self.throughputs, self.labels):
            w.writerow([repr(float(d)), repr(float(t)), repr(float(y))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text, spec: FeatureSpec | None = None) -> "Dataset":
        text = str(path_or_text)
        if "\n" not in text:
            text = Path(text).read_text()
        rows = list(csv.DictReader(io.StringIO(text)))
        if rows and set(rows[0]) != {"delay_ms", "throughput_gbps", "label"}:
            raise ValueError("expected header delay_ms,throughput_gbps,label")
        return cls(
            [float(r["delay_ms"]) for r in rows],
            [float(r["throughput_gbps"]) for r in rows],
            [float(r["label"]) for r in rows],
            spec or FeatureSpec(),
        )


def sample_slo(spec: FeatureSpec, rng: np.random.Generator) -> SloVector:
    d = rng.uniform(*spec.delay_interval)
    t = rng.uniform(*spec.throughput_interval)
    return SloVector(float(d), float(t))


def generate_dataset(
    gt: DomainGroundTruth, spec: FeatureSpec, K: int, rng: np.random.Generator, seed=None
) -> Dataset:
    """Draw ``K`` uniform SLOs and label each by a coin toss against ``gt``.

    Draw order is fixed: all delays, then all throughputs, then the K coin
    uniforms.
    """
    if K <= 0:
        raise ValueError("K must be >= 1")
    delays = rng.uniform(*spec.delay_interval, size=K)
    thr = rng.uniform(*spec.throughput_interval, size=K)
    coins = rng.uniform(size=K)
    labels = (coins < gt.predict(delays, thr)).astype(float)
    return Dataset(delays, thr, labels, spec, seed)


def simplex_grid(n_parts: int, resolution: int) -> np.ndarray:
    """Integer compositions of ``resolution - 1`` into ``n_parts`` parts.

    Rows come in lexicographic order of the first ``n_parts - 1`` entries;
    the last entry takes the remainder.
    """
    steps = resolution - 1
    if n_parts == 1:
        return np.array([[steps]])
    rows = [
        head + (steps - sum(head),)
        for head in itertools.product(range(steps + 1), repeat=n_parts - 1)
        if sum(head) <= steps
    ]
    return np.array(rows, dtype=int)


def _check_feasible(gts, specs, e2e: SloVector):
    for spec in specs:
        lo, hi = spec.throughput_interval
        if not (lo <= e2e.throughput <= hi):
            raise InfeasibleSLA(f"throughput {e2e.throughput} outside [{lo}, {hi}]")
    if e2e.delay > sum(s.delay_interval[1] for s in specs):
        raise InfeasibleSLA(f"delay {e2e.delay} exceeds the summed delay intervals")


def optimal_decomposition(
    gts: Sequence[DomainGroundTruth],
    e2e: SloVector,
    grid_res: int = 101,
    specs: Sequence[FeatureSpec] | None = None,
) -> tuple[list[SloVector], float]:
    """Best split of ``e2e`` under the true acceptance models.

    Throughputs are pinned to ``e2e.throughput`` (acceptance never rises with
    throughput and the composition takes the minimum). Delays are searched on
    a simplex grid and then polished with SLSQP on the closed form.
    """
    n = len(gts)
    if n < 1:
        raise ValueError("need at least one domain")
    if grid_res < 2:
        raise ValueError("grid_res must be >= 2")
    specs = list(specs) if specs is not None else [FeatureSpec()] * n
    _check_feasible(gts, specs, e2e)
    theta = e2e.throughput
    if n == 1:
        return [e2e], float(gts[0].predict(e2e.delay, theta)[0])

    total = e2e.delay
    grid = simplex_grid(n, grid_res) * (total / (grid_res - 1))

    def neg_log(taus):
        return -sum(float(g.log_prob(t, theta)[0]) for g, t in zip(gts, taus))

    def neg_log_grad(taus):
        return np.array([-g.a_delay * (1.0 - g.predict(t, theta)[0]) for g, t in zip(gts, taus)])

    values = -sum(g.log_prob(grid[:, i], theta) for i, g in enumerate(gts))
    start = grid[int(np.argmin(values))]

    res = minimize(
        neg_log,
        start,
        jac=neg_log_grad,
        method="SLSQP",
        bounds=[(0.0, total)] * n,
        constraints=[{"type": "eq", "fun": lambda t: np.sum(t) - total, "jac": lambda t: np.ones(n)}],
        options={"ftol": 1e-14, "maxiter": 500},
    )
    best = start
    if res.success and neg_log(res.x) <= neg_log(start):
        best = np.clip(res.x, 0.0, total)
        best[-1] = total - np.sum(best[:-1])
        if best[-1] < 0:
            best = start
    parts = [SloVector(float(t), theta) for t in best]
    return parts, math.exp(-neg_log(best))
