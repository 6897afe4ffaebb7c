"""Loss, AdamW, the training loop and localization metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .dataset import Dataset, unscale_labels

logger = logging.getLogger(__name__)


class TrainingDivergence(RuntimeError):
    def __init__(self, msg: str, history: list):
        super().__init__(msg)
        self.history = history


# ---------------------------------------------------------------------------
# loss and optimizer


def mse_loss(pred: nc.Tensor, target) -> nc.Tensor:
    """Mean over the batch of the squared Euclidean error."""
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise nc.DimensionError(f"prediction {pred.shape} vs target {target.shape}")
    diff = nc.sub(pred, target)
    sq = nc.mul(diff, diff)
    n = int(np.prod(target.shape[:-1])) if target.ndim > 1 else 1
    return nc.scale(nc.sum_all(sq), 1.0 / n)


@dataclass
class AdamW:
    """Adam with decoupled weight decay.

    Moments are keyed by parameter position in the list handed to
    :meth:`step`, so always pass the same list.
    """

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params: list[nc.Tensor]) -> bool:
        """Apply one update from ``p.grad``; returns False (no change) on non-finite gradients."""
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]
        if not all(np.all(np.isfinite(g)) for g in grads):
            logger.warning("non-finite gradient at step %d; update rejected", self.step_count + 1)
            return False
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in params]
            self.v = [np.zeros_like(p.data) for p in params]
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        return True


def adamw_step(params: list[nc.Tensor], state: AdamW) -> bool:
    return state.step(params)


# ---------------------------------------------------------------------------
# metrics


def errors_m(pred_scaled, true_scaled, bounds) -> np.ndarray:
    """Euclidean error in meters after undoing the label scaling."""
    d = unscale_labels(pred_scaled, bounds) - unscale_labels(true_scaled, bounds)
    return np.sqrt(np.sum(d * d, axis=-1))


def mae(errors) -> float:
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("mae of an empty set")
    return float(errors.mean())


def percentile95(errors) -> float:
    """Nearest-rank 95th percentile: the ``ceil(0.95 n)``-th smallest error."""
    errors = np.sort(np.asarray(errors, dtype=float).ravel())
    if errors.size == 0:
        raise ValueError("percentile of an empty set")
    return float(errors[math.ceil(0.95 * errors.size) - 1])


def ecdf(errors) -> np.ndarray:
    """``(n, 2)`` array of sorted errors and cumulative fractions ``i / n``."""
    errors = np.sort(np.asarray(errors, dtype=float).ravel())
    if errors.size == 0:
        raise ValueError("ecdf of an empty set")
    n = errors.size
    return np.column_stack([errors, np.arange(1, n + 1) / n])


def write_ecdf(errors, path) -> None:
    np.savetxt(path, ecdf(errors), fmt="%.9g", header="error_m fraction")


# ---------------------------------------------------------------------------
# training loop


@dataclass
class FitConfig:
    epochs: int = 300
    batch: int = 512
    lr: float = 3e-4
    weight_decay: float = 1e-4
    patience: int = 0  # 0 disables early stopping
    seed: int = 0


@dataclass
class FitResult:
    history: list  # (epoch, train_loss, val_mae_m)
    best_epoch: int
    best_val_mae: float
    steps: int
    stopped_early: bool


def predict(model, features, batch: int = 1024) -> np.ndarray:
    out = []
    for i in range(0, len(features), batch):
        out.append(model.forward(np.asarray(features[i : i + batch], dtype=float)).data)
    return np.concatenate(out) if out else np.zeros((0, 2))


def evaluate(model, ds: Dataset, idx) -> np.ndarray:
    """Per-sample errors in meters on ``idx``."""
    idx = np.asarray(idx)
    return errors_m(predict(model, ds.features[idx]), ds.labels[idx], ds.bounds)


def _snapshot(params: dict) -> dict:
    return {k: v.data.copy() for k, v in params.items()}


def fit(model, ds: Dataset, cfg: FitConfig, train_idx=None, val_idx=None) -> FitResult:
    """Mini-batch AdamW on the MSE of scaled labels.

    After each epoch the validation MAE (meters) is logged; the parameters of
    the best epoch are restored into ``model`` at the end. With
    ``cfg.patience > 0`` training stops once validation has not improved for
    that many epochs.
    """
    train_idx = ds.train_idx if train_idx is None else np.asarray(train_idx)
    val_idx = ds.val_idx if val_idx is None else np.asarray(val_idx)
    if len(train_idx) == 0:
        raise ValueError("fit needs a non-empty training split")
    if len(val_idx) == 0:
        val_idx = train_idx
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    opt = AdamW(lr=cfg.lr, weight_decay=cfg.weight_decay)
    X = ds.features.astype(np.float64)
    Y = ds.labels

    history = []
    best = (math.inf, -1, _snapshot(model.params))
    since_best = 0
    stopped = False
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(train_idx)
        total, count = 0.0, 0
        for i in range(0, len(order), cfg.batch):
            bi = order[i : i + cfg.batch]
            nc.zero_grad(params)
            try:
                loss = mse_loss(model.forward(X[bi], training=True, rng=rng), Y[bi])
            except FloatingPointError as exc:
                raise TrainingDivergence(f"epoch {epoch}: {exc}", history) from exc
            if not np.isfinite(loss.data):
                raise TrainingDivergence(f"epoch {epoch}: non-finite loss", history)
            nc.backward(loss)
            opt.step(params)
            total += float(loss.data) * len(bi)
            count += len(bi)
        val = mae(errors_m(predict(model, X[val_idx]), Y[val_idx], ds.bounds))
        history.append((epoch, total / count, val))
        logger.debug("epoch %d loss %.6g val_mae %.4g", epoch, total / count, val)
        if val < best[0]:
            best = (val, epoch, _snapshot(model.params))
            since_best = 0
        else:
            since_best += 1
            if cfg.patience and since_best >= cfg.patience:
                stopped = True
                break
    for k, arr in best[2].items():
        model.params[k].data[...] = arr
    return FitResult(history, best[1], best[0], opt.step_count, stopped)


def write_history(history, path) -> None:
    with open(path, "w") as fh:
        fh.write("# epoch, train_loss, val_mae_m\n")
        for epoch, loss, val in history:
            fh.write(f"{epoch}, {loss:.9g}, {val:.9g}\n")
