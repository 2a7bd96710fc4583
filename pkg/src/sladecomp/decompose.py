"""Split an end-to-end SLA across domains using per-domain risk models.

A *model* here is anything exposing ``predict(delay, throughput)`` and
``predict_delay_grad(delay, throughput)`` on arrays: trained
:class:`~sladecomp.train.RiskModel` objects and
:class:`~sladecomp.synth.DomainGroundTruth` both qualify.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .slo import FeatureSpec, SloVector, validate_decomposition
from .synth import simplex_grid


class InfeasibleStart(ValueError):
    pass


@dataclass(frozen=True)
class DecomposeConfig:
    grid_resolution: int = 21
    refine_max_iters: int = 200
    refine_step_tol: float = 1e-6
    constraint_tol: float = 1e-9
    eps_clip: float = 1e-7
    # Search throughputs too; only useful for models that are not monotone.
    joint_throughput: bool = False
    throughput_resolution: int = 11

    def __post_init__(self):
        if self.grid_resolution < 2:
            raise ValueError("grid_resolution must be >= 2")
        if self.throughput_resolution < 2:
            raise ValueError("throughput_resolution must be >= 2")
        if self.refine_max_iters < 0:
            raise ValueError("refine_max_iters must be >= 0")
        for name in ("refine_step_tol", "constraint_tol", "eps_clip"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class DecompositionResult:
    parts: list[SloVector]
    model_e2e_prob: float
    objective: float
    grid_objective: float
    refine_iterations: int = 0
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    @staticmethod
    def csv_header(n: int) -> list[str]:
        return (
            [f"tau_{i + 1}" for i in range(n)]
            + [f"theta_{i + 1}" for i in range(n)]
            + ["objective", "model_prob"]
        )

    def csv_row(self) -> list[str]:
        vals = [p.delay for p in self.parts] + [p.throughput for p in self.parts]
        vals += [self.objective, self.model_e2e_prob]
        return [repr(float(v)) for v in vals]


def _neg_log(models, taus, thetas, eps_clip):
    """Per-domain ``-log clamp(F_n)`` for arrays of delays; shape (N, ...)."""
    out = []
    for m, t, th in zip(models, taus, thetas):
        p = m.predict(t, np.broadcast_to(th, np.shape(t)))
        out.append(-np.log(np.clip(p, eps_clip, 1.0 - eps_clip)))
    return out


def objective(models: Sequence, parts: Sequence[SloVector], eps_clip: float = 1e-7) -> float:
    """Summed negative log acceptance probability of a decomposition."""
    if len(models) != len(parts):
        raise ValueError(f"{len(models)} models for {len(parts)} parts")
    terms = _neg_log(models, [[p.delay] for p in parts], [p.throughput for p in parts], eps_clip)
    return float(sum(float(t[0]) for t in terms))


def _objective_and_grad(models, taus, thetas, eps_clip):
    f = 0.0
    g = np.empty(len(models))
    for n, m in enumerate(models):
        p = float(m.predict(taus[n], thetas[n])[0])
        q = min(max(p, eps_clip), 1.0 - eps_clip)
        f -= math.log(q)
        if eps_clip < p < 1.0 - eps_clip:
            g[n] = -float(m.predict_delay_grad(taus[n], thetas[n])[0]) / p
        else:
            g[n] = 0.0
    return f, g


def _objective_only(models, taus, thetas, eps_clip):
    f = 0.0
    for n, m in enumerate(models):
        p = float(m.predict(taus[n], thetas[n])[0])
        f -= math.log(min(max(p, eps_clip), 1.0 - eps_clip))
    return f


def project_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) = total}``."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    ks = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def _throughput_options(model, e2e: SloVector, cfg: DecomposeConfig) -> np.ndarray:
    hi = getattr(model, "spec", FeatureSpec()).throughput_interval[1]
    hi = max(hi, e2e.throughput)
    return np.linspace(e2e.throughput, hi, cfg.throughput_resolution)


def exhaustive_search(models: Sequence, e2e: SloVector, cfg: DecomposeConfig | None = None):
    """Best grid point of the delay simplex; returns ``(parts, objective)``.

    Candidates are the integer compositions of ``grid_resolution - 1`` steps
    of ``e2e.delay / (grid_resolution - 1)``, visited in lexicographic order of
    the first N-1 step counts; the first minimum wins. Each domain keeps
    ``e2e.throughput`` unless ``cfg.joint_throughput`` is set.
    """
    cfg = cfg or DecomposeConfig()
    n = len(models)
    if n < 1:
        raise ValueError("need at least one model")
    res = cfg.grid_resolution
    levels = np.arange(res) * (e2e.delay / (res - 1))
    steps = simplex_grid(n, res)

    if not cfg.joint_throughput:
        table = np.array(_neg_log(models, [levels] * n, [e2e.throughput] * n, cfg.eps_clip))
        costs = table[np.arange(n), steps].sum(axis=1)
        best = int(np.argmin(costs))
        parts = [SloVector(float(levels[k]), e2e.throughput) for k in steps[best]]
        return parts, float(costs[best])

    # Per domain and delay level: the cost with throughput pinned to the e2e
    # floor, and the best cost over throughputs at or above it. At least one
    # domain must stay pinned for the minimum to equal the floor.
    pinned = np.empty((n, res))
    free = np.empty((n, res))
    free_arg = np.empty((n, res), dtype=int)
    options = []
    for i, m in enumerate(models):
        opts = _throughput_options(m, e2e, cfg)
        options.append(opts)
        dd, tt = np.meshgrid(levels, opts, indexing="ij")
        p = m.predict(dd.ravel(), tt.ravel()).reshape(dd.shape)
        c = -np.log(np.clip(p, cfg.eps_clip, 1.0 - cfg.eps_clip))
        pinned[i] = c[:, 0]
        free_arg[i] = np.argmin(c, axis=1)
        free[i] = c[np.arange(res), free_arg[i]]
    rows = np.arange(n)
    free_cost = free[rows, steps]
    penalty = pinned[rows, steps] - free_cost
    pin = np.argmin(penalty, axis=1)
    costs = free_cost.sum(axis=1) + penalty[np.arange(len(steps)), pin]
    best = int(np.argmin(costs))
    parts = []
    for i, k in enumerate(steps[best]):
        th = e2e.throughput if i == pin[best] else float(options[i][free_arg[i, k]])
        parts.append(SloVector(float(levels[k]), th))
    return parts, float(costs[best])


def refine(models: Sequence, e2e: SloVector, initial_parts: Sequence[SloVector],
           cfg: DecomposeConfig | None = None):
    """Projected-gradient descent of the objective over the delay simplex.

    Throughputs stay as given. Steps use a Barzilai-Borwein length with
    Armijo backtracking, so every accepted iterate lowers the objective.
    Returns ``(parts, objective, iterations, converged)``.
    """
    cfg = cfg or DecomposeConfig()
    if not validate_decomposition(initial_parts, e2e, cfg.constraint_tol):
        raise InfeasibleStart("initial decomposition does not compose to the e2e SLA")
    total = e2e.delay
    tau = np.array([p.delay for p in initial_parts], dtype=float)
    thetas = [p.throughput for p in initial_parts]
    f, g = _objective_and_grad(models, tau, thetas, cfg.eps_clip)
    alpha = None
    converged = False
    it = 0
    for it in range(1, cfg.refine_max_iters + 1):
        if alpha is None:
            gmax = float(np.max(np.abs(g)))
            alpha = 0.1 * total / gmax if gmax > 0 else 1.0
        while True:
            cand = project_simplex(tau - alpha * g, total)
            step = cand - tau
            f_new = _objective_only(models, cand, thetas, cfg.eps_clip)
            if f_new <= f + 1e-4 * float(g @ step):
                break
            alpha *= 0.5
            if alpha * max(float(np.max(np.abs(g))), 1e-300) < 1e-14 * max(total, 1.0):
                step = None
                break
        if step is None or float(np.linalg.norm(step)) <= cfg.refine_step_tol:
            if step is not None and f_new <= f:
                tau, f = cand, f_new
            converged = True
            break
        f_new, g_new = _objective_and_grad(models, cand, thetas, cfg.eps_clip)
        s, yv = cand - tau, g_new - g
        sy = float(s @ yv)
        alpha = float(s @ s) / sy if sy > 1e-300 else alpha * 2.0
        tau, f, g = cand, f_new, g_new
    parts = [SloVector(float(t), th) for t, th in zip(tau, thetas)]
    return parts, f, it, converged


def decompose(models: Sequence, e2e: SloVector, cfg: DecomposeConfig | None = None) -> DecompositionResult:
    """Grid search over delay splits followed by local refinement."""
    cfg = cfg or DecomposeConfig()
    n = len(models)
    if n < 1:
        raise ValueError("need at least one model")
    if n == 1:
        obj = objective(models, [e2e], cfg.eps_clip)
        return DecompositionResult([e2e], math.exp(-obj), obj, obj, 0, True)
    grid_parts, grid_obj = exhaustive_search(models, e2e, cfg)
    parts, obj, iters, converged = refine(models, e2e, grid_parts, cfg)
    obj = objective(models, parts, cfg.eps_clip)
    return DecompositionResult(
        parts=parts,
        model_e2e_prob=math.exp(-obj),
        objective=obj,
        grid_objective=grid_obj,
        refine_iterations=iters,
        converged=converged,
        diagnostics={"grid_parts": grid_parts},
    )
