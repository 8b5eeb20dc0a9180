"""Prefix/suffix LSTM encoders and the pooled sentence encodings.

Batched inputs use a time-major flat layout: an embedded batch is an
``(n*B, e)`` matrix whose row ``t*B + b`` holds token ``t`` of sentence ``b``,
together with an ``(n, B)`` boolean mask. A single sentence is the ``B = 1``
case, i.e. an ``(n, e)`` matrix with an optional length-``n`` mask. Every
state sequence returned here uses the same layout, so row ``i*B + b`` is the
state for window index ``i`` of sentence ``b``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Node, ShapeError


class Variant(str, enum.Enum):
    SUFISENT = "sufisent"
    SUFISENT_TIED = "sufisent-tied"
    SUFISENT_CAT = "sufisent-cat"
    SUFISENT_CAT_TIED = "sufisent-cat-tied"
    BILSTM_MAX = "bilstm-max"

    @property
    def tied(self) -> bool:
        return self in (Variant.SUFISENT_TIED, Variant.SUFISENT_CAT_TIED)

    @property
    def uses_suffix(self) -> bool:
        return self is not Variant.BILSTM_MAX

    @property
    def concatenates(self) -> bool:
        return self in (Variant.SUFISENT_CAT, Variant.SUFISENT_CAT_TIED)


VARIANT_NAMES = [v.value for v in Variant]


def encoding_dim(variant: Variant | str, d: int) -> int:
    return 4 * d if Variant(variant).concatenates else 2 * d


@dataclass(frozen=True)
class EncoderConfig:
    variant: Variant = Variant.SUFISENT_TIED
    d: int = 16
    e: int = 16

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.d < 1 or self.e < 1:
            raise ValueError(f"d and e must be positive, got d={self.d}, e={self.e}")

    @property
    def encoding_dim(self) -> int:
        return encoding_dim(self.variant, self.d)

    def to_dict(self) -> dict:
        return {"variant": self.variant.value, "d": self.d, "e": self.e}


@dataclass
class LstmParams:
    """Gate order along the 4d axis is input, forget, candidate, output."""

    Wx: np.ndarray  # (4d, e)
    Wh: np.ndarray  # (4d, d)
    b: np.ndarray  # (4d,)

    @property
    def d(self) -> int:
        return self.Wh.shape[1]

    @property
    def e(self) -> int:
        return self.Wx.shape[1]

    def validate(self, d: int, e: int) -> None:
        want = {"Wx": (4 * d, e), "Wh": (4 * d, d), "b": (4 * d,)}
        for name, shape in want.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ShapeError(f"LSTM {name} has shape {got}, expected {shape}")
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"LSTM {name} has non-finite entries")

    def arrays(self) -> dict[str, np.ndarray]:
        return {"Wx": self.Wx, "Wh": self.Wh, "b": self.b}

    def copy(self) -> "LstmParams":
        return LstmParams(self.Wx.copy(), self.Wh.copy(), self.b.copy())

    @classmethod
    def init(cls, d: int, e: int, rng: np.random.Generator) -> "LstmParams":
        k = 1.0 / math.sqrt(d)
        return cls(
            Wx=rng.uniform(-k, k, size=(4 * d, e)),
            Wh=rng.uniform(-k, k, size=(4 * d, d)),
            b=np.zeros(4 * d),
        )

    @classmethod
    def zeros(cls, d: int, e: int) -> "LstmParams":
        return cls(np.zeros((4 * d, e)), np.zeros((4 * d, d)), np.zeros(4 * d))


@dataclass
class EncoderParams:
    fwd_prefix: LstmParams
    fwd_suffix: LstmParams | None
    bwd_prefix: LstmParams
    bwd_suffix: LstmParams | None

    @classmethod
    def init(cls, config: EncoderConfig, rng: np.random.Generator) -> "EncoderParams":
        d, e, v = config.d, config.e, config.variant
        fp = LstmParams.init(d, e, rng)
        fs = fp if v.tied else (LstmParams.init(d, e, rng) if v.uses_suffix else None)
        bp = LstmParams.init(d, e, rng)
        bs = bp if v.tied else (LstmParams.init(d, e, rng) if v.uses_suffix else None)
        return cls(fp, fs, bp, bs)

    def check(self, config: EncoderConfig) -> None:
        v = config.variant
        for lstm in self.unique().values():
            lstm.validate(config.d, config.e)
        if v.tied:
            if self.fwd_suffix is not self.fwd_prefix or self.bwd_suffix is not self.bwd_prefix:
                raise ValueError(f"{v.value} requires suffix LSTMs to alias the prefix LSTMs")
        elif v.uses_suffix:
            if self.fwd_suffix is None or self.bwd_suffix is None:
                raise ValueError(f"{v.value} needs separate suffix LSTMs")
            if self.fwd_suffix is self.fwd_prefix or self.bwd_suffix is self.bwd_prefix:
                raise ValueError(f"{v.value} must not tie prefix and suffix weights")

    def unique(self) -> dict[str, LstmParams]:
        """Distinct LSTMs by role name; aliases are listed once under the prefix name."""
        out: dict[str, LstmParams] = {}
        for role in ("fwd_prefix", "fwd_suffix", "bwd_prefix", "bwd_suffix"):
            lstm = getattr(self, role)
            if lstm is not None and all(lstm is not other for other in out.values()):
                out[role] = lstm
        return out

    def named_arrays(self, prefix: str = "encoder") -> dict[str, np.ndarray]:
        return {
            f"{prefix}.{role}.{k}": arr
            for role, lstm in self.unique().items()
            for k, arr in lstm.arrays().items()
        }

    @classmethod
    def from_arrays(cls, config: EncoderConfig, arrays: dict[str, np.ndarray], prefix: str = "encoder"):
        def get(role):
            return LstmParams(*(arrays[f"{prefix}.{role}.{k}"] for k in ("Wx", "Wh", "b")))

        v = config.variant
        fp, bp = get("fwd_prefix"), get("bwd_prefix")
        if v.tied:
            fs, bs = fp, bp
        elif v.uses_suffix:
            fs, bs = get("fwd_suffix"), get("bwd_suffix")
        else:
            fs = bs = None
        params = cls(fp, fs, bp, bs)
        params.check(config)
        return params


class StepCounter:
    """Counts LSTM cell applications (one per batched time step)."""

    def __init__(self):
        self.steps = 0


# -- cell and runners ---------------------------------------------------------
def lstm_step(params: LstmParams, x: Node, h_prev: Node, c_prev: Node,
              counter: StepCounter | None = None) -> tuple[Node, Node]:
    """One LSTM step on a row batch: x is (B, e), h_prev and c_prev are (B, d)."""
    g = x.graph
    d = params.d
    if x.shape[-1] != params.e or h_prev.shape[-1] != d or c_prev.shape[-1] != d:
        raise ShapeError(
            f"lstm_step: x {x.shape}, h {h_prev.shape}, c {c_prev.shape} do not fit d={d}, e={params.e}"
        )
    wx = ad.transpose(g.param(params.Wx))
    wh = ad.transpose(g.param(params.Wh))
    pre = ad.add_bias(ad.add(ad.matmul(x, wx), ad.matmul(h_prev, wh)), g.param(params.b))
    i = ad.sigmoid(ad.slice_cols(pre, 0, d))
    f = ad.sigmoid(ad.slice_cols(pre, d, 2 * d))
    cand = ad.tanh(ad.slice_cols(pre, 2 * d, 3 * d))
    o = ad.sigmoid(ad.slice_cols(pre, 3 * d, 4 * d))
    c = ad.add(ad.mul(f, c_prev), ad.mul(i, cand))
    h = ad.mul(o, ad.tanh(c))
    if counter is not None:
        counter.steps += 1
    return h, c


def _layout(x: Node, mask) -> tuple[int, int, np.ndarray]:
    if mask is None:
        n = x.shape[0]
        m = np.ones((n, 1), dtype=bool)
    else:
        m = np.asarray(mask, dtype=bool)
        if m.ndim == 1:
            m = m[:, None]
    n, batch = m.shape
    if x.value.ndim != 2 or x.shape[0] != n * batch:
        raise ShapeError(f"embedded input {x.shape} does not match mask {m.shape}")
    if n < 1:
        raise ValueError("empty sentence")
    return n, batch, m


def _transposed(g: Graph, array: np.ndarray) -> Node:
    """Transpose of a parameter, built once per graph."""
    key = ("T", id(array))
    node = g.memo.get(key)
    if node is None:
        node = g.memo[key] = ad.transpose(g.param(array))
    return node


def _input_projection(params: LstmParams, x: Node) -> Node:
    """x Wx^T + b for every row at once, so each time step only adds the recurrent term."""
    return ad.linear(x, _transposed(x.graph, params.Wx), x.graph.param(params.b))


def prefix_states(params: LstmParams, x: Node, mask=None, counter: StepCounter | None = None) -> Node:
    """Single left-to-right pass; row i*B+b is the state after tokens 0..i of sentence b.

    Masked (padding) steps carry the previous state forward unchanged.
    """
    n, batch, m = _layout(x, mask)
    g = x.graph
    d = params.d
    xp = _input_projection(params, x)
    wh = _transposed(g, params.Wh)
    hc = g.const(np.zeros((batch, 2 * d)))
    rows = []
    for t in range(n):
        xt = ad.take_rows(xp, np.arange(t * batch, (t + 1) * batch)) if n > 1 else xp
        new = ad.lstm_cell(xt, hc, wh)
        if counter is not None:
            counter.steps += 1
        hc = new if m[t].all() else ad.select_rows(m[t], new, hc)
        rows.append(hc)
    packed = ad.vstack(rows) if n > 1 else rows[0]
    return ad.slice_cols(packed, 0, d)


def suffix_states(params: LstmParams, x: Node, mask=None, counter: StepCounter | None = None) -> Node:
    """Row i*B+b is the final state of a fresh pass over tokens i..len_b-1 of sentence b.

    All n suffixes of every sentence run together as one padded batch of n*B
    sequences, aligned at their first token, for n batched cell steps.
    Suffixes that start past a sentence's end stay at the zero state.
    """
    n, batch, m = _layout(x, mask)
    g = x.graph
    d = params.d
    lengths = m.sum(axis=0)
    start = np.repeat(np.arange(n), batch)  # suffix start index per row r = i*B + b
    sent = np.tile(np.arange(batch), n)
    xp = _input_projection(params, x)
    wh = _transposed(g, params.Wh)
    hc = g.const(np.zeros((n * batch, 2 * d)))
    for t in range(n):
        pos = start + t
        active = pos < lengths[sent]
        src = np.where(active, pos, 0) * batch + sent
        new = ad.lstm_cell(ad.take_rows(xp, src), hc, wh)
        if counter is not None:
            counter.steps += 1
        hc = new if active.all() else ad.select_rows(active, new, hc)
    return ad.slice_cols(hc, 0, d)


def naive_suffix_states(params: LstmParams, x: Node, counter: StepCounter | None = None) -> Node:
    """Reference path: one fresh prefix pass per suffix of a single sentence.

    Costs n(n+1)/2 cell steps.
    """
    n = x.shape[0]
    finals = []
    for i in range(n):
        sub = ad.take_rows(x, np.arange(i, n))
        states = prefix_states(params, sub, counter=counter)
        finals.append(ad.take_rows(states, [n - i - 1]))
    return ad.vstack(finals) if n > 1 else finals[0]


def _reverse_index(m: np.ndarray) -> np.ndarray:
    """Row permutation that reverses each sentence within its own length.

    Padding rows map to themselves, so the permutation is an involution.
    """
    n, batch = m.shape
    lengths = m.sum(axis=0)
    t = np.arange(n)[:, None]
    b = np.arange(batch)[None, :]
    src_t = np.where(t < lengths[None, :], lengths[None, :] - 1 - t, t)
    return (src_t * batch + b).reshape(-1)


def reverse_sentences(x: Node, mask=None) -> Node:
    _, _, m = _layout(x, mask)
    return ad.take_rows(x, _reverse_index(m))


def backward_direction_states(prefix: LstmParams, suffix: LstmParams | None, x: Node, mask=None,
                              counter: StepCounter | None = None) -> tuple[Node, Node | None]:
    """States of the right-to-left LSTMs, indexed by original word position.

    Row i of the first result encodes words n..i (read right to left); row i of
    the second encodes words i..1. Both are computed by running the forward
    machinery on the reversed sentence and mapping rows back.
    """
    _, _, m = _layout(x, mask)
    perm = _reverse_index(m)
    xr = ad.take_rows(x, perm)
    bp = ad.take_rows(prefix_states(prefix, xr, m, counter), perm)
    bs = None
    if suffix is not None:
        bs = ad.take_rows(suffix_states(suffix, xr, m, counter), perm)
    return bp, bs


@dataclass
class PooledStates:
    fwd_prefix: Node
    fwd_suffix: Node | None
    bwd_prefix: Node
    bwd_suffix: Node | None


def pooled_states(config: EncoderConfig, params: EncoderParams, x: Node, mask=None,
                  counter: StepCounter | None = None) -> PooledStates:
    n, batch, m = _layout(x, mask)
    pool_mask = m[:, 0] if (mask is None or np.ndim(mask) == 1) else m
    v = config.variant
    fp = prefix_states(params.fwd_prefix, x, m, counter)
    fs = suffix_states(params.fwd_suffix, x, m, counter) if v.uses_suffix else None
    bp, bs = backward_direction_states(
        params.bwd_prefix, params.bwd_suffix if v.uses_suffix else None, x, m, counter
    )
    pool = lambda s: None if s is None else ad.time_max_pool(s, pool_mask)  # noqa: E731
    return PooledStates(pool(fp), pool(fs), pool(bp), pool(bs))


def encode(config: EncoderConfig, params: EncoderParams, x: Node, mask=None,
           counter: StepCounter | None = None) -> Node:
    """Sentence encoding(s): a vector for one sentence, (B, dim) for a batch."""
    params.check(config)
    p = pooled_states(config, params, x, mask, counter)
    v = config.variant
    if v is Variant.BILSTM_MAX:
        return ad.concat([p.fwd_prefix, p.bwd_prefix])
    if v.concatenates:
        return ad.concat([p.fwd_prefix, p.fwd_suffix, p.bwd_prefix, p.bwd_suffix])
    return ad.concat([ad.maximum(p.fwd_prefix, p.fwd_suffix), ad.maximum(p.bwd_prefix, p.bwd_suffix)])


def encode_array(config: EncoderConfig, params: EncoderParams, embedded: np.ndarray, mask=None) -> np.ndarray:
    """Numpy convenience wrapper around :func:`encode` on a throwaway graph."""
    g = Graph()
    return encode(config, params, g.const(embedded), mask).value
