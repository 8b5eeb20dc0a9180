"""Frozen-encoding transfer evaluation with linear probes."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Graph
from .data import CONTENT_TOKENS, DISTRACTOR_TOKENS, gen_toy_nli
from .head import NliLabel
from .model import Model
from .train import TrainConfig, clip_global_norm, lr_update, sgd_step


@dataclass
class ProbeTask:
    name: str
    # each item is one sentence, or a (sentence1, sentence2) pair
    items: list[str | tuple[str, str]]
    labels: np.ndarray
    is_train: np.ndarray  # bool per item; the rest is the held-out split

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.is_train = np.asarray(self.is_train, dtype=bool)
        if len(self.items) != len(self.labels) or len(self.labels) != len(self.is_train):
            raise ValueError(f"{self.name}: items, labels and split flags differ in length")
        if self.n_classes < 2:
            raise ValueError(f"{self.name}: a probe task needs at least two classes")
        if self.is_train.all() or not self.is_train.any():
            raise ValueError(f"{self.name}: both train and validation splits must be non-empty")

    @property
    def n_classes(self) -> int:
        return int(len(np.unique(self.labels)))

    @property
    def is_pair(self) -> bool:
        return bool(self.items) and isinstance(self.items[0], tuple)

    @property
    def split_sizes(self) -> tuple[int, int]:
        return int(self.is_train.sum()), int((~self.is_train).sum())


def write_probe_task(path: str | Path, task: ProbeTask) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item, label, tr in zip(task.items, task.labels, task.is_train):
            rec = {"text1": item[0], "text2": item[1]} if isinstance(item, tuple) else {"text": item}
            rec.update(label=int(label), split="train" if tr else "val")
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_probe_tasks(directory: str | Path) -> list[ProbeTask]:
    """One task per ``*.jsonl`` file, sorted by file name."""
    tasks = []
    for path in sorted(Path(directory).glob("*.jsonl")):
        items, labels, split = [], [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    items.append((rec["text1"], rec["text2"]) if "text1" in rec else rec["text"])
                    labels.append(int(rec["label"]))
                    if rec["split"] not in ("train", "val"):
                        raise ValueError(f"bad split {rec['split']!r}")
                    split.append(rec["split"] == "train")
                except (KeyError, ValueError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: malformed probe record ({exc})") from None
        tasks.append(ProbeTask(path.stem, items, np.array(labels), np.array(split)))
    if not tasks:
        raise ValueError(f"no *.jsonl probe tasks in {directory}")
    return tasks


def gen_probe_tasks(seed: int) -> list[ProbeTask]:
    """Synthetic probe suite over the toy vocabulary, with unequal task sizes."""
    rng = np.random.default_rng(seed)

    def sentence(lo=3, hi=9, distractor=False):
        toks = [CONTENT_TOKENS[i] for i in rng.choice(40, size=int(rng.integers(lo, hi)), replace=False)]
        if distractor:
            toks[int(rng.integers(len(toks)))] = DISTRACTOR_TOKENS[int(rng.integers(10))]
        return " ".join(toks)

    def split(n):
        flags = np.zeros(n, dtype=bool)
        flags[rng.permutation(n)[: int(0.75 * n)]] = True
        return flags

    tasks = []
    n = 400
    labels = rng.integers(0, 2, size=n)
    tasks.append(ProbeTask("distractor", [sentence(distractor=bool(y)) for y in labels], labels, split(n)))

    n = 240
    labels = rng.integers(0, 2, size=n)
    items = [sentence(3, 5) if y == 0 else sentence(6, 9) for y in labels]
    tasks.append(ProbeTask("length", items, labels, split(n)))

    n = 320
    labels = rng.integers(0, 2, size=n)
    lo, hi = CONTENT_TOKENS[:20], CONTENT_TOKENS[20:]
    items = [" ".join(rng.choice(hi if y else lo, size=int(rng.integers(3, 7)), replace=False)) for y in labels]
    tasks.append(ProbeTask("half", items, labels, split(n)))

    pairs = gen_toy_nli(int(rng.integers(2**31)), 360)
    items = [(" ".join(ex.premise), " ".join(ex.hypothesis)) for ex in pairs]
    labels = np.array([int(ex.label == NliLabel.ENTAILMENT) for ex in pairs])
    tasks.append(ProbeTask("pair-entail", items, labels, split(len(pairs))))
    return tasks


def encode_dataset(model: Model, sentences: Sequence[str], batch_size: int = 64) -> np.ndarray:
    return model.encode_sentences(list(sentences), batch_size)


def task_features(model: Model, task: ProbeTask) -> np.ndarray:
    if not task.is_pair:
        return encode_dataset(model, task.items)
    u = encode_dataset(model, [a for a, _ in task.items])
    v = encode_dataset(model, [b for _, b in task.items])
    return np.concatenate([u, v, np.abs(u - v), u * v], axis=1)


def probe_train(encodings: np.ndarray, labels, seed: int, split=None, val_fraction: float = 0.25,
                epochs: int = 60, cfg: TrainConfig | None = None) -> float:
    """Multinomial logistic regression on frozen features; returns held-out accuracy.

    ``split`` marks training rows; without it a seeded ``val_fraction`` is held
    out. Features are standardised with training statistics. The learning-rate
    schedule reacts to training accuracy so the held-out split stays unseen.
    """
    X = np.asarray(encodings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    if split is None:
        split = np.ones(len(y), dtype=bool)
        split[rng.permutation(len(y))[: max(1, int(round(val_fraction * len(y))))]] = False
    split = np.asarray(split, dtype=bool)
    Xtr, ytr, Xva, yva = X[split], y[split], X[~split], y[~split]
    if len(np.unique(ytr)) < 2:
        raise ValueError("probe training split contains a single class")
    if len(yva) == 0:
        raise ValueError("probe needs a non-empty held-out split")
    cfg = cfg or TrainConfig(lr0=0.1, batch_size=32, max_epochs=epochs, seed=seed)

    mu = Xtr.mean(axis=0)
    sd = Xtr.std(axis=0)
    sd[sd < 1e-12] = 1.0
    Xtr, Xva = (Xtr - mu) / sd, (Xva - mu) / sd
    k = int(max(y.max(), ytr.max())) + 1
    W = np.zeros((X.shape[1], k))
    b = np.zeros(k)
    params = {"W": W, "b": b}

    def accuracy(A, t):
        return float(((A @ W + b).argmax(axis=1) == t).mean())

    lr, prev = cfg.lr0, None
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(ytr))
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            g = Graph()
            loss = ad.softmax_cross_entropy(ad.linear(g.const(Xtr[idx]), g.param(W), g.param(b)), ytr[idx])
            g.backward(loss)
            grads, _ = clip_global_norm({"W": g.grad_of(W), "b": g.grad_of(b)}, cfg.clip_norm)
            sgd_step(params, grads, lr)
        acc = accuracy(Xtr, ytr)
        lr = lr_update(lr, prev, acc, cfg)
        prev = acc
        if lr < cfg.min_lr:
            break
    return accuracy(Xva, yva)


def micro_macro(accuracies: Sequence[float], sizes: Sequence[int]) -> tuple[float, float]:
    """(size-weighted mean, unweighted mean) of per-task accuracies."""
    if len(accuracies) != len(sizes):
        raise ValueError(f"{len(accuracies)} accuracies but {len(sizes)} sizes")
    if not accuracies:
        raise ValueError("no tasks")
    if any(s <= 0 for s in sizes):
        raise ValueError("task sizes must be positive")
    a = np.asarray(accuracies, dtype=np.float64)
    s = np.asarray(sizes, dtype=np.float64)
    return float((a * s).sum() / s.sum()), float(a.mean())


@dataclass
class TransferReport:
    accuracy: dict[str, float] = field(default_factory=dict)  # percent
    size: dict[str, int] = field(default_factory=dict)
    micro: float = 0.0
    macro: float = 0.0

    def records(self) -> list[dict]:
        rows = [{"task": t, "accuracy": self.accuracy[t], "size": self.size[t]} for t in self.accuracy]
        rows.append({"task": "ALL", "micro": self.micro, "macro": self.macro})
        return rows

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def table(self) -> str:
        width = max([len(t) for t in self.accuracy] + [len("micro / macro")])
        lines = [f"{'task':<{width}}  {'acc':>6}  {'n':>5}"]
        for t, a in self.accuracy.items():
            lines.append(f"{t:<{width}}  {a:6.1f}  {self.size[t]:5d}")
        lines.append(f"{'micro / macro':<{width}}  {self.micro:.1f} / {self.macro:.1f}")
        return "\n".join(lines)


def run_transfer(model: Model, tasks: Sequence[ProbeTask], seed: int = 0) -> TransferReport:
    report = TransferReport()
    for task in tasks:
        feats = task_features(model, task)
        acc = probe_train(feats, task.labels, seed, split=task.is_train)
        report.accuracy[task.name] = 100.0 * acc
        report.size[task.name] = task.split_sizes[1]
    report.micro, report.macro = micro_macro(list(report.accuracy.values()), list(report.size.values()))
    return report
