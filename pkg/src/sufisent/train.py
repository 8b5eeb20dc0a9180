"""SGD training with the epoch-wise learning-rate schedule and global-norm clipping."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .autodiff import Graph, NonFiniteError
from .data import NliExample, Vocab, make_batches
from .head import predict
from .model import Model, zero_padding_grad

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Divergence or non-finite gradients; carries the reports produced so far."""

    def __init__(self, message, reports=()):
        super().__init__(message)
        self.reports = list(reports)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.1
    epoch_decay: float = 0.99
    drop_decay: float = 0.2
    clip_norm: float = 5.0
    batch_size: int = 64
    max_epochs: int = 20
    min_lr: float = 1e-5
    seed: int = 0
    # "previous": a drop means lower than the last epoch; "best": lower than the best so far
    drop_reference: str = "previous"

    def __post_init__(self):
        for name in ("epoch_decay", "drop_decay"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.lr0 < 0:
            raise ValueError("lr0 must be non-negative")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.drop_reference not in ("previous", "best"):
            raise ValueError("drop_reference must be 'previous' or 'best'")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class EpochReport:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float
    lr: float
    next_lr: float
    grad_norm_max: float
    seconds: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    sq = 0.0
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {name}")
        sq += float(np.dot(g.ravel(), g.ravel()))
    norm = float(np.sqrt(sq))
    if norm <= max_norm:
        return grads, norm
    factor = max_norm / norm
    return {k: g * factor for k, g in grads.items()}, norm


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
    """In place p -= lr * g. Aliased (tied) arrays must appear under one name only."""
    seen = set()
    for name, p in params.items():
        if id(p) in seen:
            raise ValueError(f"{name} aliases another parameter; pass tied storage once")
        seen.add(id(p))
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        p -= lr * g


def lr_update(lr: float, prev_val_acc: float | None, new_val_acc: float, cfg: TrainConfig | None = None) -> float:
    """One multiplier per epoch: drop_decay if validation accuracy fell, else epoch_decay."""
    cfg = cfg or TrainConfig()
    if lr <= 0:
        raise ValueError("lr must be positive")
    if prev_val_acc is not None and new_val_acc < prev_val_acc:
        return lr * cfg.drop_decay
    return lr * cfg.epoch_decay


def evaluate_accuracy(model: Model, examples: Sequence[NliExample], batch_size: int = 256) -> float:
    if not examples:
        raise ValueError("cannot evaluate on an empty dataset")
    correct = 0
    for batch in make_batches(examples, model.vocab, batch_size, seed=None):
        g = Graph()
        z = model.logits(g, batch)
        correct += int((predict(z.value) == batch.labels).sum())
    return correct / len(examples)


def batch_gradients(model: Model, batch) -> tuple[float, np.ndarray, dict[str, np.ndarray]]:
    params = model.trainable_arrays()
    g = Graph()
    loss, z = model.loss(g, batch)
    g.backward(loss)
    grads = {}
    for name, p in params.items():
        grad = g.grad_of(p).copy()
        zero_padding_grad(name, grad)
        grads[name] = grad
    return float(loss.value), z.value, grads


def fit(
    model: Model,
    train: Sequence[NliExample],
    val: Sequence[NliExample],
    cfg: TrainConfig,
    metrics_path: str | Path | None = None,
    on_epoch: Callable[[EpochReport], bool | None] | None = None,
):
    """Train ``model`` in place. Returns (best checkpoint, epoch reports).

    ``on_epoch`` sees every report; returning True ends training after that epoch.
    """
    from .checkpoint import Checkpoint

    if not train or not val:
        raise ValueError("train and validation sets must be non-empty")
    params = model.trainable_arrays()
    lr = cfg.lr0
    prev_acc = None
    best_acc = -1.0
    best = None
    reports: list[EpochReport] = []
    metrics = open(metrics_path, "w") if metrics_path else None
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            t0 = time.perf_counter()
            batches = make_batches(train, model.vocab, cfg.batch_size, seed=cfg.seed * 100003 + epoch)
            loss_sum = 0.0
            correct = 0
            gmax = 0.0
            for batch in batches:
                try:
                    loss, z, grads = batch_gradients(model, batch)
                except NonFiniteError as exc:
                    raise TrainingError(f"epoch {epoch}: {exc}", reports) from exc
                if not np.isfinite(loss):
                    raise TrainingError(f"epoch {epoch}: loss diverged", reports)
                grads, norm = clip_global_norm(grads, cfg.clip_norm)
                gmax = max(gmax, norm)
                if lr > 0:
                    sgd_step(params, grads, lr)
                loss_sum += loss * len(batch)
                correct += int((predict(z) == batch.labels).sum())
            try:
                val_acc = evaluate_accuracy(model, val)
            except NonFiniteError as exc:
                raise TrainingError(f"epoch {epoch}: validation {exc}", reports) from exc
            if cfg.drop_reference == "best" and prev_acc is not None:
                reference = max(prev_acc, best_acc)
            else:
                reference = prev_acc
            next_lr = lr_update(lr, reference, val_acc, cfg) if lr > 0 else lr
            rep = EpochReport(epoch, loss_sum / len(train), correct / len(train), val_acc, lr, next_lr,
                              gmax, time.perf_counter() - t0)
            reports.append(rep)
            log.info("epoch %d loss %.4f train %.3f val %.3f lr %.5f", epoch, rep.train_loss,
                     rep.train_acc, val_acc, lr)
            if metrics:
                # wall time is excluded so reruns produce identical files
                rec = {k: v for k, v in json.loads(rep.to_json()).items() if k != "seconds"}
                metrics.write(json.dumps(rec, sort_keys=True) + "\n")
                metrics.flush()
            if val_acc > best_acc:
                best_acc = val_acc
                best = Checkpoint.from_model(model, cfg, best_acc)
            prev_acc = val_acc
            lr = next_lr
            stop = bool(on_epoch(rep)) if on_epoch else False
            if stop or lr < cfg.min_lr:
                break
    finally:
        if metrics:
            metrics.close()
    return best, reports
