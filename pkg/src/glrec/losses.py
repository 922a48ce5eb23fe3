"""Rating MSE, graph-regularization terms, and the hybrid combination.

The refined B x C adjacency is first symmetrized to B x B; the smoothness
term then penalizes feature differences across high-weight learned edges,
while the connectivity/sparsity term keeps row sums away from zero and the
matrix from densifying. Together with the rating loss and an L2 penalty they
form the training objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine as eg
from .engine import Tensor

_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    beta: float = 1.0     # smoothness scale
    beta1: float = 0.1    # connectivity
    beta2: float = 0.1    # sparsity
    gamma_u: float = 0.1  # user-side graph loss
    gamma_v: float = 0.1  # item-side graph loss
    eta: float = 1e-4     # L2

    def __post_init__(self):
        for name in ("beta", "beta1", "beta2", "gamma_u", "gamma_v", "eta"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be nonnegative")


def symmetrize(refined: Tensor, eps: float = _EPS) -> Tensor:
    """A_hat = A Delta^-1 A^T with Delta the (floored) column sums of A."""
    col_sums = eg.sum_(refined, axis=0)
    inv = eg.divide(Tensor(np.ones(col_sums.shape[0])), eg.clamp_min(col_sums, eps))
    return eg.matmul(eg.scale_cols(refined, inv), eg.transpose(refined))


def smoothness_loss(sym: Tensor, feats: Tensor) -> Tensor:
    """(1 / 2B^2) * sum_{i,n} A_hat[i,n] * ||x_i - x_n||^2."""
    b = sym.shape[0]
    if sym.shape != (b, b) or feats.shape[0] != b:
        raise eg.ShapeError(f"smoothness: adjacency {sym.shape} vs features {feats.shape}")
    sq = eg.sum_(eg.square(feats), axis=1)
    gram = eg.matmul(feats, eg.transpose(feats))
    dist2 = eg.sub(eg.outer_add(sq, sq), eg.scale(gram, 2.0))
    return eg.scale(eg.sum_(eg.mul(sym, dist2)), 1.0 / (2.0 * b * b))


def connectivity_sparsity(sym: Tensor, beta1: float, beta2: float) -> Tensor:
    """-(beta1/B) * 1^T log(A 1) + (beta2/B^2) * ||A||_F, row sums floored."""
    b = sym.shape[0]
    row_sums = eg.sum_(sym, axis=1)
    connectivity = eg.scale(eg.sum_(eg.log(eg.clamp_min(row_sums, _EPS))), -beta1 / b)
    sparsity = eg.scale(eg.l2_norm(sym), beta2 / (b * b))
    return eg.add(connectivity, sparsity)


def graph_learner_loss(refined: Tensor, feats: Tensor, weights: LossWeights) -> Tensor:
    """beta * smoothness + connectivity/sparsity, on the symmetrized matrix.

    The same formula serves the full and the anchored learner; only the
    candidate width of `refined` differs.
    """
    sym = symmetrize(refined)
    return eg.add(
        eg.scale(smoothness_loss(sym, feats), weights.beta),
        connectivity_sparsity(sym, weights.beta1, weights.beta2),
    )


def rating_loss(predictions: Tensor, targets: np.ndarray) -> Tensor:
    """Mean squared error over the batch."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.size == 0:
        raise ValueError("rating_loss: empty batch")
    if predictions.shape != targets.shape:
        raise eg.ShapeError(f"rating_loss: predictions {predictions.shape} vs targets {targets.shape}")
    diff = eg.sub(predictions, Tensor(targets))
    return eg.scale(eg.sum_(eg.square(diff)), 1.0 / targets.size)


def hybrid_loss(
    l_rating: Tensor,
    l_graph_u: Tensor | None,
    l_graph_v: Tensor | None,
    l2_term: Tensor,
    weights: LossWeights,
) -> Tensor:
    """L_r + gamma_u * L_G^u + gamma_v * L_G^v + eta * Omega(params)."""
    total = l_rating
    if l_graph_u is not None:
        total = eg.add(total, eg.scale(l_graph_u, weights.gamma_u))
    if l_graph_v is not None:
        total = eg.add(total, eg.scale(l_graph_v, weights.gamma_v))
    return eg.add(total, eg.scale(l2_term, weights.eta))
