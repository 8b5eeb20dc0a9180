"""Central-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

# Gradients smaller than this are compared on an absolute scale: with h=1e-6
# the central difference carries ~1e-10 of roundoff, so a purely relative
# test on near-zero entries would measure noise.
REL_FLOOR = 1e-4


def relative_error(analytic, numeric, floor: float = REL_FLOOR) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


@dataclass
class GradCheckReport:
    tolerance: float
    max_error: dict[str, float] = field(default_factory=dict)
    worst: list[tuple[str, tuple[int, ...], float, float, float]] = field(default_factory=list)
    checked: int = 0

    @property
    def worst_error(self) -> float:
        return max(self.max_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst_error < self.tolerance

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [f"{status}: {self.checked} scalars, worst relative error {self.worst_error:.3e} (tol {self.tolerance:g})"]
        for name, idx, a, n, err in self.worst[:5]:
            lines.append(f"  {name}{list(idx)}: analytic={a:.6e} numeric={n:.6e} rel={err:.3e}")
        return "\n".join(lines)


def grad_check(
    f: Callable[[], float],
    params: Mapping[str, np.ndarray],
    analytic: Mapping[str, np.ndarray],
    h: float = 1e-6,
    tolerance: float = 1e-5,
    floor: float = REL_FLOOR,
    local: Mapping[str, Callable[[], float]] | None = None,
) -> GradCheckReport:
    """Compare ``analytic`` gradients against (f(p+h) - f(p-h)) / 2h.

    ``f`` must read the arrays in ``params`` at call time; they are perturbed
    in place one scalar at a time and restored afterwards. ``local`` may map a
    parameter name to a cheaper function that equals ``f`` whenever only that
    parameter moves.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    report = GradCheckReport(tolerance=tolerance)
    offenders = []
    for name, p in params.items():
        g = np.asarray(analytic[name])
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        fn = (local or {}).get(name, f)
        numeric = np.zeros_like(p)
        flat = p.reshape(-1)  # view: writes reach the parameter
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            fp = fn()
            flat[k] = old - h
            fm = fn()
            flat[k] = old
            numeric.reshape(-1)[k] = (fp - fm) / (2.0 * h)
        err = relative_error(g, numeric, floor)
        report.max_error[name] = float(err.max(initial=0.0))
        report.checked += p.size
        if err.size:
            k = int(err.argmax())
            idx = np.unravel_index(k, p.shape)
            offenders.append((name, tuple(int(i) for i in idx), float(g[idx]), float(numeric[idx]), float(err[idx])))
    report.worst = sorted(offenders, key=lambda t: -t[-1])
    return report


def check_pipeline(variant: str, d: int, e: int, n: int, seed: int = 0, fc_dim: int = 8,
                   h: float = 1e-6, tolerance: float = 1e-5, corrupt: bool = False) -> GradCheckReport:
    """Gradient check of encoder + features + head + loss on two seeded NLI pairs.

    Every scalar of every trainable array (embeddings included) is perturbed.
    The second pair is shorter than the first so padding and masks are exercised.
    ``corrupt`` adds a deliberate error to one analytic gradient (negative control).
    """
    from .autodiff import Graph
    from .data import Vocab, collate, random_embeddings
    from .encoder import EncoderConfig
    from .data import NliExample
    from .head import HeadConfig, NliLabel, build_features, head_logits
    from .model import Model
    from . import autodiff as ad

    rng = np.random.default_rng(seed)
    vocab = Vocab(["<pad>", "<unk>"] + [f"t{i}" for i in range(8)])
    emb = random_embeddings(vocab, e, seed=seed + 1, trainable=True)
    model = Model.init(EncoderConfig(variant, d, e), HeadConfig(fc_dim=fc_dim), vocab, emb, seed=seed + 2)

    def words(k):
        return tuple(vocab.itos[i] for i in rng.integers(2, len(vocab), size=k))

    short = max(1, n - 2)
    examples = [NliExample(words(n), words(max(1, n - 1)), NliLabel(int(rng.integers(3)))),
                NliExample(words(short), words(n), NliLabel(int(rng.integers(3))))]
    batch = collate(examples, vocab)
    params = model.trainable_arrays()

    g = Graph()
    loss, _ = model.loss(g, batch)
    g.backward(loss)
    analytic = {k: g.grad_of(p).copy() for k, p in params.items()}
    analytic.pop("embedding", None)
    params = {k: p for k, p in params.items() if k != "embedding"}
    # padding and unknown rows are never looked up, so only real-token rows are checked
    emb_rows = emb.matrix[2:]
    params["embedding"] = emb_rows
    analytic["embedding"] = g.grad_of(emb.matrix)[2:].copy()
    if corrupt:
        first = next(iter(analytic))
        analytic[first].reshape(-1)[0] += 1e-2 + abs(analytic[first].reshape(-1)[0])

    def f():
        return float(model.loss(Graph(check_finite=False), batch)[0].value)

    # head weights do not reach the encoder, so their perturbations reuse the features
    B = len(batch)
    enc = np.concatenate([model.encode_ids(Graph(), batch.premise, batch.premise_mask).value,
                          model.encode_ids(Graph(), batch.hypothesis, batch.hypothesis_mask).value])

    def f_head():
        gh = Graph(check_finite=False)
        feats = build_features(gh.const(enc[:B]), gh.const(enc[B:]))
        return float(ad.softmax_cross_entropy(head_logits(model.head, feats), batch.labels).value)

    local = {k: f_head for k in params if k.startswith("head.")}
    return grad_check(f, params, analytic, h=h, tolerance=tolerance, local=local)
