"""Layer-attention readout and the MLP rating head.

The readout scores each of the T+1 per-layer embeddings with a shared gated
attention (scores sum-normalized, not softmaxed) and returns their weighted
sum. Because the ReLU gate can zero every score, rows whose score total
vanishes fall back to uniform weights. The head is a [2D -> D -> D/2 -> 1]
MLP over the concatenated user/item readouts; eval-mode output is clamped to
the rating range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine as eg
from .engine import Tensor
from .optim import gaussian_init

_DENOM_FLOOR = 1e-12


@dataclass
class ReadoutParams:
    """Shared across users and items and across layers."""

    w: Tensor       # D x D
    score: Tensor   # D
    bias: Tensor    # D


@dataclass
class MlpParams:
    w1: Tensor      # D x 2D
    b1: Tensor      # D
    w2: Tensor      # D/2 x D
    b2: Tensor      # D/2
    w3: Tensor      # D/2
    b3: Tensor      # scalar


def init_readout(dim: int, rng) -> ReadoutParams:
    return ReadoutParams(w=gaussian_init((dim, dim), rng), score=gaussian_init((dim,), rng), bias=gaussian_init((dim,), rng))


def init_mlp(dim: int, rng) -> MlpParams:
    hidden = max(1, dim // 2)
    return MlpParams(
        w1=gaussian_init((dim, 2 * dim), rng),
        b1=gaussian_init((dim,), rng),
        w2=gaussian_init((hidden, dim), rng),
        b2=gaussian_init((hidden,), rng),
        w3=gaussian_init((hidden,), rng),
        b3=gaussian_init((), rng),
    )


def layer_attention_readout(embeds: list[Tensor], params: ReadoutParams) -> Tensor:
    """Weighted sum over the T+1 layer embeddings (rows = batch nodes)."""
    if not embeds:
        raise ValueError("readout needs at least one layer embedding")
    n_layers = len(embeds)
    scores = [
        eg.matvec(eg.relu(eg.add_rowvec(eg.matmul(e, eg.transpose(params.w)), params.bias)), params.score)
        for e in embeds
    ]
    denom = scores[0]
    for s in scores[1:]:
        denom = eg.add(denom, s)
    all_zero = np.ones(denom.shape[0], dtype=bool)
    for s in scores:
        all_zero &= s.data == 0.0
    fallback = all_zero.astype(np.float64) / n_layers
    inv = eg.divide(Tensor(np.ones(denom.shape[0])), eg.clamp_min(denom, _DENOM_FLOOR))
    out = None
    for e, s in zip(embeds, scores):
        alpha = eg.mul(s, inv)
        if fallback.any():
            alpha = eg.add(alpha, Tensor(fallback))
        term = eg.scale_rows(e, alpha)
        out = term if out is None else eg.add(out, term)
    return out


def mlp_forward(
    user_final: Tensor,
    item_final: Tensor,
    params: MlpParams,
    dropout_p: float = 0.0,
    rng=None,
    training: bool = False,
) -> Tensor:
    """Raw (unclamped) predictions, one scalar per row."""
    z = eg.concat([user_final, item_final], axis=1)
    h1 = eg.relu(eg.add_rowvec(eg.matmul(z, eg.transpose(params.w1)), params.b1))
    h1 = eg.dropout(h1, dropout_p, rng, training)
    h2 = eg.relu(eg.add_rowvec(eg.matmul(h1, eg.transpose(params.w2)), params.b2))
    h2 = eg.dropout(h2, dropout_p, rng, training)
    return eg.add_scalar(eg.matvec(h2, params.w3), params.b3)


def predict_rating(
    user_final: Tensor,
    item_final: Tensor,
    params: MlpParams,
    mode: str = "train",
    rating_range: tuple[float, float] | None = None,
    dropout_p: float = 0.0,
    rng=None,
):
    """Train mode returns the differentiable raw predictions; eval mode
    returns a plain array clamped to the rating range."""
    if mode == "train":
        return mlp_forward(user_final, item_final, params, dropout_p, rng, training=True)
    if mode != "eval":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    raw = mlp_forward(user_final, item_final, params)
    out = raw.data.copy()
    if rating_range is not None:
        out = np.clip(out, rating_range[0], rating_range[1])
    return out
