"""Cross-entropy training with AdamW, cosine learning rate and early stopping."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .layers import BatchNorm2d, Module
from .metrics import compute_eer
from .ops import cross_entropy
from .tensor import Tensor, backward, no_grad

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "step", "lr", "train_loss", "val_eer", "wall_seconds")

__all__ = [
    "AdamWState",
    "TrainConfig",
    "TrainResult",
    "cosine_lr",
    "cross_entropy",
    "fit",
    "optimizer_step",
    "recalibrate_batch_norm",
    "split_indices",
]


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 5
    patience: int = 3
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 5.0
    seed: int = 0
    split_ratio: float = 0.8
    recalibrate_bn: bool = True

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if not 0 < self.lr_min <= self.lr_max:
            raise ConfigError(f"need 0 < lr_min <= lr_max, got {self.lr_min}, {self.lr_max}")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError(f"split_ratio must be in (0, 1), got {self.split_ratio}")
        if self.weight_decay < 0 or self.grad_clip <= 0:
            raise ConfigError("weight_decay must be >= 0 and grad_clip > 0")


# --------------------------------------------------------------- optimizer
@dataclass
class AdamWState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(params: dict[str, Tensor | np.ndarray], grads: dict[str, np.ndarray], state: AdamWState, lr: float) -> None:
    """One AdamW update in place; decay is applied to the weights, not the gradient."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, g in grads.items():
        p = params[name]
        theta = p.data if isinstance(p, Tensor) else p
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.eps) + state.weight_decay * theta
        theta -= lr * update


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    if total_steps <= 0:
        raise ConfigError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps}]")
    if step == total_steps:
        return lr_min
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


# ------------------------------------------------------------------ fitting
def split_indices(labels: np.ndarray, ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded stratified split; each class is cut at ``ratio``."""
    rng = np.random.default_rng(seed)
    train, val = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        cut = int(round(ratio * idx.size))
        train.append(idx[:cut])
        val.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


@dataclass
class TrainResult:
    best_epoch: int
    best_val_eer: float
    history: list[dict] = field(default_factory=list)
    state: dict[str, np.ndarray] = field(default_factory=dict)
    stopped_early: bool = False


def recalibrate_batch_norm(model: Module, x: np.ndarray, batch_size: int = 32) -> None:
    """Re-estimate every running mean/variance as an equal-weight average over ``x``.

    With only a few dozen optimizer steps the momentum-averaged statistics
    still remember the early weights; one extra pass over the training data
    with cumulative averaging matches them to the final weights.
    """
    norms = [m for m in model.modules() if isinstance(m, BatchNorm2d)]
    saved = [m.momentum for m in norms]
    for m in norms:
        m.running_mean[:] = 0.0
        m.running_var[:] = 1.0
    model.train()
    starts = [s for s in range(0, len(x), batch_size) if len(x) - s >= 2]
    try:
        with no_grad():
            for k, s in enumerate(starts):
                for m in norms:
                    m.momentum = 1.0 / (k + 1)
                model(x[s : s + batch_size])
    finally:
        for m, mom in zip(norms, saved):
            m.momentum = mom
    model.eval()


def evaluate_scores(model: Module, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    model.eval()
    return np.concatenate([model.scores(x[i : i + batch_size]) for i in range(0, len(x), batch_size)])


def fit(
    model: Module,
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    log_path=None,
    checkpoint=None,
    val: tuple[np.ndarray, np.ndarray] | None = None,
) -> TrainResult:
    """Train ``model`` in place on features ``x`` (N x 1 x F x T) and labels ``y``.

    Without ``val`` the data is split ``split_ratio``/rest under ``cfg.seed``.
    After every epoch the validation EER is computed; the best weights are
    kept (and passed to ``checkpoint(model, epoch)`` if given) and restored at
    the end.  Training stops after ``patience`` epochs without improvement.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if val is None:
        tr, va = split_indices(y, cfg.split_ratio, cfg.seed)
        xt, yt, xv, yv = x[tr], y[tr], x[va], y[va]
    else:
        xt, yt = x, y
        xv, yv = np.asarray(val[0], dtype=np.float64), np.asarray(val[1], dtype=np.int64)
    for name, labels in (("training", yt), ("validation", yv)):
        if set(np.unique(labels).tolist()) != {0, 1}:
            raise ConfigError(f"{name} split must contain both classes, got {sorted(set(labels.tolist()))}")

    rng = np.random.default_rng(cfg.seed)
    params = model.named_parameters()
    state = AdamWState(cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)
    steps_per_epoch = -(-len(xt) // cfg.batch_size)
    total = steps_per_epoch * cfg.max_epochs
    result = TrainResult(best_epoch=0, best_val_eer=math.inf)
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
    start = time.perf_counter()
    step = 0
    stale = 0
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            model.train()
            order = rng.permutation(len(xt))
            losses = []
            for b in range(steps_per_epoch):
                idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
                if len(idx) < 2:
                    continue  # batch norm needs more than one example
                lr = cosine_lr(step, total, cfg.lr_max, cfg.lr_min)
                model.zero_grad()
                loss = cross_entropy(model(xt[idx]), yt[idx])
                backward(loss)
                grads = {n: p.grad if p.grad is not None else np.zeros_like(p.data) for n, p in params.items()}
                clip_gradients(grads, cfg.grad_clip)
                optimizer_step(params, grads, state, lr)
                losses.append(loss.item())
                step += 1
            if cfg.recalibrate_bn:
                recalibrate_batch_norm(model, xt[order], cfg.batch_size)
            val_eer = compute_eer(evaluate_scores(model, xv), yv)[0]
            row = {
                "epoch": epoch,
                "step": step,
                "lr": cosine_lr(step, total, cfg.lr_max, cfg.lr_min),
                "train_loss": float(np.mean(losses)) if losses else math.nan,
                "val_eer": val_eer,
                "wall_seconds": time.perf_counter() - start,
            }
            result.history.append(row)
            if writer is not None:
                writer.writerow([row[c] for c in LOG_COLUMNS])
                fh.flush()
            log.info("epoch %d loss %.4f val_eer %.4f", epoch, row["train_loss"], val_eer)
            if val_eer < result.best_val_eer:
                result.best_val_eer = val_eer
                result.best_epoch = epoch
                result.state = {k: v.copy() for k, v in model.state_dict().items()}
                stale = 0
                if checkpoint is not None:
                    checkpoint(model, epoch)
            else:
                stale += 1
                if stale >= cfg.patience:
                    result.stopped_early = epoch < cfg.max_epochs
                    break
    finally:
        if fh is not None:
            fh.close()
    model.load_state_dict(result.state)
    model.eval()
    return result
