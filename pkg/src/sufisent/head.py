"""Entailment classifier on top of a pair of sentence encodings."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Node, ShapeError


class NliLabel(enum.IntEnum):
    ENTAILMENT = 0
    NEUTRAL = 1
    CONTRADICTION = 2


LABEL_NAMES = {"entailment": NliLabel.ENTAILMENT, "neutral": NliLabel.NEUTRAL,
               "contradiction": NliLabel.CONTRADICTION}
NUM_CLASSES = 3


@dataclass(frozen=True)
class HeadConfig:
    fc_dim: int = 512
    nonlinearity: str = "tanh"

    def __post_init__(self):
        if self.nonlinearity not in ("tanh", "none"):
            raise ValueError(f"nonlinearity must be 'tanh' or 'none', got {self.nonlinearity!r}")
        if self.fc_dim < 1:
            raise ValueError("fc_dim must be positive")

    def to_dict(self) -> dict:
        return {"fc_dim": self.fc_dim, "nonlinearity": self.nonlinearity}


@dataclass
class HeadParams:
    W1: np.ndarray  # (4*enc_dim, fc)
    b1: np.ndarray
    W2: np.ndarray  # (fc, fc)
    b2: np.ndarray
    Wout: np.ndarray  # (fc, 3)
    bout: np.ndarray
    nonlinearity: str = "tanh"

    @classmethod
    def init(cls, enc_dim: int, config: HeadConfig, rng: np.random.Generator) -> "HeadParams":
        def layer(n_in, n_out):
            k = 1.0 / np.sqrt(n_in)
            return rng.uniform(-k, k, size=(n_in, n_out)), np.zeros(n_out)

        W1, b1 = layer(4 * enc_dim, config.fc_dim)
        W2, b2 = layer(config.fc_dim, config.fc_dim)
        Wout, bout = layer(config.fc_dim, NUM_CLASSES)
        return cls(W1, b1, W2, b2, Wout, bout, config.nonlinearity)

    @classmethod
    def zeros(cls, enc_dim: int, config: HeadConfig) -> "HeadParams":
        f = config.fc_dim
        return cls(np.zeros((4 * enc_dim, f)), np.zeros(f), np.zeros((f, f)), np.zeros(f),
                   np.zeros((f, NUM_CLASSES)), np.zeros(NUM_CLASSES), config.nonlinearity)

    def check(self) -> None:
        f = self.W1.shape[1]
        chain = [(self.W1, self.b1), (self.W2, self.b2), (self.Wout, self.bout)]
        widths = [self.W1.shape[0], f, f, NUM_CLASSES]
        for (W, b), n_in, n_out in zip(chain, widths[:-1], widths[1:]):
            if W.shape != (n_in, n_out) or b.shape != (n_out,):
                raise ShapeError(f"head layer {W.shape}/{b.shape} breaks the chain {widths}")

    def named_arrays(self, prefix: str = "head") -> dict[str, np.ndarray]:
        return {f"{prefix}.{k}": getattr(self, k) for k in ("W1", "b1", "W2", "b2", "Wout", "bout")}

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], nonlinearity: str, prefix: str = "head"):
        p = cls(*(arrays[f"{prefix}.{k}"] for k in ("W1", "b1", "W2", "b2", "Wout", "bout")), nonlinearity)
        p.check()
        return p


def build_features(u: Node, v: Node) -> Node:
    """[u; v; |u - v|; u * v] along the last axis."""
    if u.shape != v.shape:
        raise ShapeError(f"encodings differ in shape: {u.shape} vs {v.shape}")
    return ad.concat([u, v, ad.absolute(ad.sub(u, v)), ad.mul(u, v)])


def head_logits(params: HeadParams, features: Node) -> Node:
    if features.shape[-1] != params.W1.shape[0]:
        raise ShapeError(f"features of width {features.shape[-1]} do not fit layer1 {params.W1.shape}")
    g = features.graph
    act = ad.tanh if params.nonlinearity == "tanh" else (lambda n: n)
    x = features if features.value.ndim == 2 else ad.reshape(features, (1, -1))
    h = act(ad.linear(x, g.param(params.W1), g.param(params.b1)))
    h = act(ad.linear(h, g.param(params.W2), g.param(params.b2)))
    out = ad.linear(h, g.param(params.Wout), g.param(params.bout))
    return out if features.value.ndim == 2 else ad.reshape(out, (NUM_CLASSES,))


def head_logits_array(params: HeadParams, features: np.ndarray) -> np.ndarray:
    g = Graph()
    return head_logits(params, g.const(features)).value


def predict(logits) -> np.ndarray | NliLabel:
    """Argmax over the last axis; np.argmax already breaks ties toward index 0."""
    z = np.asarray(logits.value if isinstance(logits, Node) else logits)
    if z.shape[-1] != NUM_CLASSES:
        raise ShapeError(f"expected {NUM_CLASSES} logits, got shape {z.shape}")
    if z.ndim == 1:
        return NliLabel(int(np.argmax(z)))
    return np.argmax(z, axis=-1)
