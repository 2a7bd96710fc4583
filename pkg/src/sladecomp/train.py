"""Risk-model training: seven methods on top of one MLP engine."""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _fast, losses
from .mlp import WIDTHS, Adam, Mlp
from .preprocess import cse_filter, po_labels
from .slo import FeatureSpec, stricter_matrix
from .synth import Dataset


class MethodKind(enum.Enum):
    VANILLA = "vanilla"
    REGULARISED = "regularised"
    AWET = "awet"
    MOL = "mol"
    CSE = "cse"
    PO = "po"
    DP = "dp"

    @classmethod
    def parse(cls, name) -> "MethodKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        aliases = {"reg": "regularised", "regularized": "regularised"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(
                f"unknown method {name!r}; choose from {', '.join(m.value for m in cls)}"
            ) from None


# Epochs per compiled call. Permutations (and DP points) are drawn a block at
# a time, so this constant is part of the random-stream contract.
EPOCH_BLOCK = 32


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 16
    val_fraction: float = 0.2
    patience: int = 100
    max_epochs: int = 5000
    k_reg: float = 0.1
    k_mol: float = 1.0
    k_dp: float = 1.0
    dp_points_per_step: int = 16
    eps_clip: float = 1e-7
    bn_momentum: float = 0.1
    seed: int = 0

    def __post_init__(self):
        positive = ("learning_rate", "batch_size", "patience", "max_epochs", "dp_points_per_step")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("k_reg", "k_mol", "k_dp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0, 1)")
        if not 0 < self.eps_clip <= 0.01:
            raise ValueError("eps_clip must lie in (0, 0.01]")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for batch norm")

    def with_overrides(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


@dataclass(eq=False)
class RiskModel:
    """A trained, frozen risk network plus its input scaling."""

    mlp: Mlp
    spec: FeatureSpec
    method: MethodKind
    epochs_run: int = 0
    best_epoch: int = 0
    final_val_loss: float = float("nan")
    wall_time_s: float = 0.0
    n_train_samples: int = 0

    def predict(self, delay, throughput) -> np.ndarray:
        return self.mlp.predict(self.spec.orient(delay, throughput))

    def predict_delay_grad(self, delay, throughput) -> np.ndarray:
        _, dz = self.mlp.input_gradient(self.spec.orient(delay, throughput))
        return dz[:, 0] / self.spec.delay_width

    def predict_grad(self, delay, throughput) -> np.ndarray:
        """dF/d(delay, throughput) in raw units, shape ``(n, 2)``."""
        _, dz = self.mlp.input_gradient(self.spec.orient(delay, throughput))
        return dz * self.spec.chain_factors()

    def __eq__(self, other):
        if not isinstance(other, RiskModel):
            return NotImplemented
        same_loss = self.final_val_loss == other.final_val_loss or (
            np.isnan(self.final_val_loss) and np.isnan(other.final_val_loss)
        )
        return (
            self.mlp == other.mlp
            and self.spec == other.spec
            and self.method == other.method
            and self.epochs_run == other.epochs_run
            and self.best_epoch == other.best_epoch
            and same_loss
            and self.wall_time_s == other.wall_time_s
            and self.n_train_samples == other.n_train_samples
        )


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    wall_ms: float


def preprocess(d: Dataset, method: MethodKind, cfg: TrainConfig) -> Dataset:
    if method is MethodKind.CSE:
        return cse_filter(d)
    if method is MethodKind.PO:
        return po_labels(d, cfg.eps_clip)
    return d


def split(n: int, val_fraction: float, rng: np.random.Generator):
    """Random (train, validation) index split; validation gets round(n * fraction), at least 1."""
    perm = rng.permutation(n)
    n_val = min(max(1, int(round(val_fraction * n))), n - 1)
    return perm[n_val:], perm[:n_val]


def _batch_slices(perm: np.ndarray, batch_size: int):
    for start in range(0, len(perm), batch_size):
        idx = perm[start:start + batch_size]
        if len(idx) >= 2:
            yield idx


_KERNEL_CODE = {
    MethodKind.REGULARISED: _fast.REG,
    MethodKind.MOL: _fast.MOL,
    MethodKind.DP: _fast.DP,
}


def _method_weight(method: MethodKind, cfg: TrainConfig) -> float:
    return {
        MethodKind.REGULARISED: cfg.k_reg,
        MethodKind.MOL: cfg.k_mol,
        MethodKind.DP: cfg.k_dp,
    }.get(method, 0.0)


def reference_epoch(mlp: Mlp, opt: Adam, method: MethodKind, cfg: TrainConfig,
                    Z, y, perm, order=None, dp_pts=None) -> tuple[float, int]:
    """Numpy version of one training epoch, kept for cross-checking the kernel."""
    k = _method_weight(method, cfg)
    grad = np.zeros(mlp.n_params)
    total, steps = 0.0, 0
    for idx in _batch_slices(perm, cfg.batch_size):
        preds, cache = mlp.forward_train(Z[idx])
        yb = y[idx]
        loss = losses.bce_loss(preds, yb, cfg.eps_clip)
        dlogit = losses.bce_logit_grad(preds, yb, cfg.eps_clip)
        grad[:] = 0.0
        if method is MethodKind.MOL:
            sub = order[np.ix_(idx, idx)]
            loss += k * losses.mol_pair_loss(sub, preds)
            dlogit = dlogit + k * losses.mol_pred_grad(sub, preds) * preds * (1.0 - preds)
        mlp.backward(cache, dlogit, grad)
        if method is MethodKind.REGULARISED:
            loss += k * losses.reg_loss(mlp.weights)
            losses.add_reg_grad(mlp, grad, k)
        elif method is MethodKind.DP:
            dp_grad = np.zeros_like(grad)
            loss += k * mlp.derivative_penalty(dp_pts[steps], dp_grad)
            grad += k * dp_grad
        opt.step(mlp.params, grad)
        total += loss
        steps += 1
    return total, steps


_kernel_ready = False


def _warm_kernel() -> None:
    """Load the compiled kernel once per process so it is not billed to a model."""
    global _kernel_ready
    if _kernel_ready:
        return
    _kernel_ready = True
    z = np.linspace(0.0, 1.0, 8)
    tiny = Dataset(z * 100.0, 1.0 - z, (z > 0.5).astype(float), FeatureSpec())
    train(tiny, MethodKind.VANILLA, TrainConfig(max_epochs=1, patience=1), np.random.default_rng(0), log=[])


def train(
    d: Dataset,
    method,
    cfg: TrainConfig | None = None,
    rng: np.random.Generator | None = None,
    log: list | None = None,
) -> RiskModel:
    """Fit a risk model with one of the seven methods.

    CSE and PO rewrite the dataset first; the split, mini-batching, early
    stopping and best-snapshot restore are shared by every method. Wall time
    covers preprocessing and optimisation. ``log`` receives one
    :class:`EpochLog` per epoch when given.

    Random draws per epoch, in order: the batch permutation, then (DP only)
    the penalty points for every step of the epoch.
    """
    method = MethodKind.parse(method)
    cfg = cfg or TrainConfig()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if len(d) < 5:
        raise TrainingError(f"need at least 5 samples, got {len(d)}")

    _warm_kernel()
    t0 = time.perf_counter()
    data = preprocess(d, method, cfg)
    if len(data) < 3:
        raise TrainingError(f"{method.value} preprocessing left {len(data)} samples")

    Z = data.features()
    y = data.labels
    tr, va = split(len(data), cfg.val_fraction, rng)
    if len(tr) < 2:
        raise TrainingError("training split smaller than 2 samples")
    Z_tr, y_tr = np.ascontiguousarray(Z[tr]), np.ascontiguousarray(y[tr])
    Z_va, y_va = np.ascontiguousarray(Z[va]), np.ascontiguousarray(y[va])
    if method is MethodKind.MOL:
        order = stricter_matrix(data.delays[tr], data.throughputs[tr])
    else:
        order = np.zeros((1, 1), dtype=bool)

    mlp = Mlp(WIDTHS, awet=method is MethodKind.AWET, momentum=cfg.bn_momentum).init_weights(rng)
    opt = Adam(mlp.n_params, lr=cfg.learning_rate)
    widths = np.array(mlp.widths, dtype=np.int64)
    code = _KERNEL_CODE.get(method, _fast.PLAIN)
    k = _method_weight(method, cfg)
    n_tr = len(tr)
    steps_per_epoch = _fast.n_steps(n_tr, cfg.batch_size)
    n_pts = cfg.dp_points_per_step if method is MethodKind.DP else 0

    best_params, best_mean, best_var = mlp.state()
    es_state = np.array([np.inf, 0.0, 0.0, 0.0])
    adam_state = np.zeros(1, dtype=np.int64)
    train_losses = np.empty(EPOCH_BLOCK)
    val_losses = np.empty(EPOCH_BLOCK)
    stamps = np.zeros(EPOCH_BLOCK)
    base = np.broadcast_to(np.arange(n_tr), (EPOCH_BLOCK, n_tr))
    flag = 0
    while flag == 0:
        perms = rng.permuted(base, axis=1)
        if n_pts:
            pts = losses.dp_points(EPOCH_BLOCK * steps_per_epoch * n_pts, rng)
            pts = pts.reshape(EPOCH_BLOCK, steps_per_epoch, n_pts, 2)
        else:
            pts = np.zeros((EPOCH_BLOCK, steps_per_epoch, 0, 2))
        first_epoch = int(es_state[3])
        done, flag = _fast.fit_chunk(
            mlp.params, widths, mlp.awet, mlp.bn_mean, mlp.bn_var, mlp.momentum,
            Z_tr, y_tr, Z_va, y_va, perms, cfg.batch_size, cfg.eps_clip, code, k, order, pts,
            opt.m, opt.v, adam_state, opt.lr, opt.beta1, opt.beta2, opt.eps,
            best_params, best_mean, best_var, es_state, cfg.patience, cfg.max_epochs,
            train_losses, val_losses, stamps, log is not None,
        )
        if log is not None:
            for e in range(done):
                log.append(EpochLog(first_epoch + e + 1, float(train_losses[e]),
                                    float(val_losses[e]), float(stamps[e] - t0) * 1e3))
        if flag == 2:
            raise TrainingError(f"non-finite loss at epoch {int(es_state[3])}")
    opt.t = int(adam_state[0])
    best_state = (best_params, best_mean, best_var)
    best_val = float(es_state[0])
    best_epoch = int(es_state[1])
    epoch = int(es_state[3])

    mlp.load_state(best_state)
    return RiskModel(
        mlp=mlp,
        spec=d.spec,
        method=method,
        epochs_run=epoch,
        best_epoch=best_epoch,
        final_val_loss=float(best_val),
        wall_time_s=time.perf_counter() - t0,
        n_train_samples=len(tr),
    )


def monotonicity_violation_rate(
    model, spec: FeatureSpec, n_pairs: int, rng: np.random.Generator, tol: float = 1e-12
) -> float:
    """Fraction of random comparable pairs ``a ⪯ b`` with ``F(a) > F(b) + tol``.

    Pairs are drawn by sampling ``a`` uniformly in the box and loosening it by
    a uniform amount in both coordinates, so every pair is comparable.
    """
    dlo, dhi = spec.delay_interval
    tlo, thi = spec.throughput_interval
    a_d = rng.uniform(dlo, dhi, n_pairs)
    a_t = rng.uniform(tlo, thi, n_pairs)
    b_d = a_d + rng.uniform(0, 1, n_pairs) * (dhi - a_d)
    b_t = a_t - rng.uniform(0, 1, n_pairs) * (a_t - tlo)
    fa = model.predict(a_d, a_t)
    fb = model.predict(b_d, b_t)
    return float(np.mean(fa > fb + tol))
