"""Data refinement before training: conflicting-sample elimination and
order-constrained probability relabelling."""

from __future__ import annotations

import networkx as nx
import numpy as np

from .slo import stricter_matrix
from .synth import Dataset


class NonBinaryLabels(ValueError):
    pass


class PoSolverError(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


def _require_binary(d: Dataset) -> None:
    if not d.is_binary:
        raise NonBinaryLabels("this operation needs 0/1 labels")


def dataset_order(d: Dataset) -> np.ndarray:
    return stricter_matrix(d.delays, d.throughputs)


def conflict_matrix(order: np.ndarray, labels) -> np.ndarray:
    """``C[i, j]`` is true when samples i and j contradict the order.

    ``order[i, j]`` means x_i ⪯ x_j; the pair conflicts when the stricter one
    carries the larger label.
    """
    y = np.asarray(labels, dtype=float)
    higher = y[:, None] > y[None, :]
    c = order & higher
    return c | c.T


def count_conflicts(d: Dataset) -> dict[int, int]:
    _require_binary(d)
    counts = conflict_matrix(dataset_order(d), d.labels).sum(axis=1)
    return {i: int(c) for i, c in enumerate(counts)}


def cse_removal_order(order: np.ndarray, labels) -> list[int]:
    """Indices removed by greedy elimination, in removal order.

    Each round drops the sample with the most live conflicts (lowest index on
    ties) and decrements its partners, until no conflicts remain.
    """
    C = conflict_matrix(order, labels)
    counts = C.sum(axis=1).astype(np.int64)
    alive = np.ones(len(counts), dtype=bool)
    removed = []
    while True:
        i = int(np.argmax(counts))
        if counts[i] <= 0:
            break
        removed.append(i)
        alive[i] = False
        counts[C[i] & alive] -= 1
        counts[i] = -1
    return removed


def cse_filter(d: Dataset) -> Dataset:
    _require_binary(d)
    removed = cse_removal_order(dataset_order(d), d.labels)
    keep = np.setdiff1d(np.arange(len(d)), removed)
    return d.subset(keep)


def _min_weight_lower_set(w: np.ndarray, order: np.ndarray, tol: float):
    """Lower set of minimum total weight, or None if no set beats ``-tol``.

    Solved as a minimum closure problem by one s-t minimum cut.
    """
    neg = w < 0
    if not neg.any():
        return None
    g = nx.DiGraph()
    g.add_nodes_from(range(len(w)))
    for i in np.flatnonzero(neg):
        g.add_edge("s", int(i), capacity=float(-w[i]))
    for i in np.flatnonzero(w > 0):
        g.add_edge(int(i), "t", capacity=float(w[i]))
    # Closure: membership of j forces every i with x_i ⪯ x_j. No capacity
    # attribute means infinite capacity to networkx.
    ii, jj = np.nonzero(order)
    g.add_edges_from((int(j), int(i)) for i, j in zip(ii, jj) if i != j)
    cut, (source_side, _) = nx.minimum_cut(g, "s", "t")
    if float(w[neg].sum()) + cut >= -tol:
        return None
    mask = np.zeros(len(w), dtype=bool)
    mask[[v for v in source_side if v != "s"]] = True
    return mask


def isotonic_fit(y, order: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Least-squares fit of ``y`` subject to ``p_i <= p_j`` wherever ``order[i, j]``.

    Recursive partitioning: a block is split at its mean into the lower set of
    minimum residual weight and its complement until no split helps. The same
    level sets maximise the Bernoulli likelihood under the same constraints.
    """
    y = np.asarray(y, dtype=float)
    fitted = np.empty_like(y)
    stack = [np.arange(len(y))]
    n_cuts = 0
    while stack:
        block = stack.pop()
        mean = float(y[block].mean())
        lower = None
        if len(block) > 1:
            lower = _min_weight_lower_set(y[block] - mean, order[np.ix_(block, block)], tol)
            n_cuts += 1
        if lower is None:
            fitted[block] = mean
            continue
        stack.append(block[~lower])
        stack.append(block[lower])
        if n_cuts > 4 * len(y) + 10:
            raise PoSolverError("partitioning did not terminate", {"cuts": n_cuts, "n": len(y)})
    ii, jj = np.nonzero(order)
    violation = float(np.max(fitted[ii] - fitted[jj], initial=0.0))
    if violation > 1e-6:
        raise PoSolverError(
            "order constraints violated after solve",
            {"max_violation": violation, "cuts": n_cuts, "n": len(y)},
        )
    return fitted


def log_likelihood(p, y, eps_clip: float = 1e-7) -> float:
    p = np.clip(np.asarray(p, dtype=float), eps_clip, 1.0 - eps_clip)
    y = np.asarray(y, dtype=float)
    return float(np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def po_labels(d: Dataset, eps_clip: float = 1e-7) -> Dataset:
    """Replace binary labels by order-consistent maximum-likelihood probabilities."""
    _require_binary(d)
    p = isotonic_fit(d.labels, dataset_order(d))
    return d.with_labels(np.clip(p, eps_clip, 1.0 - eps_clip))
