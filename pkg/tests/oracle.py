"""Independent reference implementations used only by tests.

Nothing here touches the autodiff tape: the LSTM cell is written out per
gate with plain numpy vector code, and every window state is recomputed
from scratch by its definition.
"""
import math

import numpy as np

from sufisent.encoder import EncoderParams, LstmParams, Variant


def _sig(v):
    return np.array([1.0 / (1.0 + math.exp(-t)) for t in v])


def cell(p: LstmParams, x, h, c):
    d = p.Wh.shape[1]
    blocks = [slice(k * d, (k + 1) * d) for k in range(4)]
    a = [p.Wx[s] @ x + p.Wh[s] @ h + p.b[s] for s in blocks]
    i, f, o = _sig(a[0]), _sig(a[1]), _sig(a[3])
    g = np.tanh(a[2])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def run(p: LstmParams, xs):
    """Final hidden state after reading the rows of xs in order from zero state."""
    d = p.Wh.shape[1]
    h, c = np.zeros(d), np.zeros(d)
    for x in xs:
        h, c = cell(p, x, h, c)
    return h


def window_states(params: EncoderParams, X):
    """Four (n, d) state matrices by definition, 0-based word positions.

    fwd prefix i: words 0..i; fwd suffix i: words i..n-1;
    bwd prefix i: words n-1..i; bwd suffix i: words i..0.
    """
    n = len(X)
    fp = np.array([run(params.fwd_prefix, X[: i + 1]) for i in range(n)])
    bp = np.array([run(params.bwd_prefix, X[i:][::-1]) for i in range(n)])
    fs = bs = None
    if params.fwd_suffix is not None:
        fs = np.array([run(params.fwd_suffix, X[i:]) for i in range(n)])
        bs = np.array([run(params.bwd_suffix, X[: i + 1][::-1]) for i in range(n)])
    return fp, fs, bp, bs


def encode(variant: Variant, params: EncoderParams, X):
    fp, fs, bp, bs = window_states(params, X)
    pool = lambda s: s.max(axis=0)  # noqa: E731
    if variant is Variant.BILSTM_MAX:
        return np.concatenate([pool(fp), pool(bp)])
    if variant.concatenates:
        return np.concatenate([pool(fp), pool(fs), pool(bp), pool(bs)])
    return np.concatenate([np.maximum(pool(fp), pool(fs)), np.maximum(pool(bp), pool(bs))])


def random_lstm(rng, d, e, scale=0.5):
    return LstmParams(rng.uniform(-scale, scale, (4 * d, e)), rng.uniform(-scale, scale, (4 * d, d)),
                      rng.uniform(-scale, scale, 4 * d))
