"""Loss terms used by the training methods.

Each public loss returns a float; the ``*_grad`` helpers return the gradient
pieces the trainer feeds back into :meth:`Mlp.backward`.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .mlp import Mlp
from .slo import FeatureSpec, SloVector, stricter_matrix


def bce_loss(preds, labels, eps_clip: float = 1e-7) -> float:
    preds = np.asarray(preds, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {labels.shape}")
    p = np.minimum(np.maximum(preds, eps_clip), 1.0 - eps_clip)
    return float(-(labels * np.log(p) + (1.0 - labels) * np.log1p(-p)).sum() / max(len(p), 1))


def bce_logit_grad(preds, labels, eps_clip: float = 1e-7) -> np.ndarray:
    """d(mean BCE)/d(logit) for sigmoid outputs; zero where the clamp is active."""
    active = (preds > eps_clip) & (preds < 1.0 - eps_clip)
    return np.where(active, preds - labels, 0.0) / len(preds)


def reg_loss(weights: Sequence[np.ndarray]) -> float:
    """Squared magnitude of the negative weight entries (biases excluded)."""
    return float(sum(np.sum(np.minimum(W, 0.0) ** 2) for W in weights))


def add_reg_grad(mlp: Mlp, grad: np.ndarray, k: float) -> None:
    gW, _ = mlp.views(grad)
    for g, W in zip(gW, mlp.weights):
        g += k * 2.0 * np.minimum(W, 0.0)


def mol_pair_loss(order: np.ndarray, preds: np.ndarray) -> float:
    """Order loss given ``order[i, j] = x_i ⪯ x_j`` with the diagonal ignored."""
    diff = preds[:, None] - preds[None, :]
    mask = order.copy()
    np.fill_diagonal(mask, False)
    return float(np.sum(np.maximum(diff, 0.0)[mask]))


def mol_pred_grad(order: np.ndarray, preds: np.ndarray) -> np.ndarray:
    diff = preds[:, None] - preds[None, :]
    active = order & (diff > 0)
    np.fill_diagonal(active, False)
    return active.sum(axis=1) - active.sum(axis=0)


def mol_loss(batch_inputs: Sequence[SloVector], batch_preds) -> float:
    """Sum over ordered pairs i != j with x_i ⪯ x_j of ``max(pred_i - pred_j, 0)``."""
    preds = np.asarray(batch_preds, dtype=float)
    if len(batch_inputs) != len(preds):
        raise ValueError("inputs and predictions differ in length")
    order = stricter_matrix([s.delay for s in batch_inputs], [s.throughput for s in batch_inputs])
    return mol_pair_loss(order, preds)


def dp_points(n_points: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points in oriented-feature space, i.e. uniform over the feature box."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    return rng.uniform(0.0, 1.0, size=(n_points, 2))


def dp_loss(m: Mlp, spec: FeatureSpec, n_points: int, rng: np.random.Generator) -> float:
    """Squared negative input-derivative penalty at random points of ``spec``'s box.

    Features are min-max scaled to the box, so sampling the unit square is the
    same as sampling the box uniformly.
    """
    return m.derivative_penalty(dp_points(n_points, rng))
