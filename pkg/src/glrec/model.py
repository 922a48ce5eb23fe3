"""Parameter container and the per-batch forward composition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine as eg
from .engine import Tensor
from .graph import HeteroGlobalGraph, NodeKind
from .hgnn import HgnnLayerParams, build_batch_subgraph, hgnn_forward
from .learner import (
    ADD_ATTENTION,
    AnchorSet,
    OpCounter,
    SimilarityConfig,
    learn_subgraph,
    learn_subgraph_anchored,
)
from .optim import gaussian_init
from .predictor import MlpParams, ReadoutParams, init_mlp, init_readout, layer_attention_readout, mlp_forward


@dataclass
class ModelParams:
    """Embedding tables plus every trainable weight, in a fixed registry order."""

    user_embed: Tensor
    item_embed: Tensor
    layers: list[HgnnLayerParams]
    sim_user: SimilarityConfig
    sim_item: SimilarityConfig
    readout: ReadoutParams
    mlp: MlpParams

    def named(self) -> list[tuple[str, Tensor]]:
        out = [("user_embed", self.user_embed), ("item_embed", self.item_embed)]
        for t, lp in enumerate(self.layers):
            out.append((f"layer{t}.w_social", lp.w_social))
            out.append((f"layer{t}.b_social", lp.b_social))
            for k, (w, b) in enumerate(zip(lp.w_rating, lp.b_rating)):
                out.append((f"layer{t}.w_rating{k}", w))
                out.append((f"layer{t}.b_rating{k}", b))
            out.append((f"layer{t}.w_sim", lp.w_sim))
            out.append((f"layer{t}.b_sim", lp.b_sim))
        for f, w in enumerate(self.sim_user.weights):
            out.append((f"sim_user.f{f}", w))
        for f, w in enumerate(self.sim_item.weights):
            out.append((f"sim_item.f{f}", w))
        out.append(("readout.w", self.readout.w))
        out.append(("readout.score", self.readout.score))
        out.append(("readout.bias", self.readout.bias))
        out.append(("mlp.w1", self.mlp.w1))
        out.append(("mlp.b1", self.mlp.b1))
        out.append(("mlp.w2", self.mlp.w2))
        out.append(("mlp.b2", self.mlp.b2))
        out.append(("mlp.w3", self.mlp.w3))
        out.append(("mlp.b3", self.mlp.b3))
        return out

    def zero_grads(self) -> None:
        for _, p in self.named():
            p.grad = None


def _init_sim(metric: str, perspectives: int, dim: int, rng) -> SimilarityConfig:
    shape = (dim,) if metric == ADD_ATTENTION else (dim, dim)
    return SimilarityConfig(metric=metric, weights=[gaussian_init(shape, rng) for _ in range(perspectives)])


def init_model(
    n_users: int,
    n_items: int,
    n_levels: int,
    dim: int,
    n_layers: int,
    metric: str,
    perspectives: int,
    seed: int,
) -> ModelParams:
    """All parameters drawn N(0, 0.01^2) from a model-init substream of `seed`."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    layers = []
    for _ in range(n_layers):
        layers.append(
            HgnnLayerParams(
                w_social=gaussian_init((dim, dim), rng),
                b_social=gaussian_init((dim,), rng),
                w_rating=[gaussian_init((dim, dim), rng) for _ in range(n_levels)],
                b_rating=[gaussian_init((dim,), rng) for _ in range(n_levels)],
                w_sim=gaussian_init((dim, dim), rng),
                b_sim=gaussian_init((dim,), rng),
            )
        )
    return ModelParams(
        user_embed=gaussian_init((n_users, dim), rng),
        item_embed=gaussian_init((n_items, dim), rng),
        layers=layers,
        sim_user=_init_sim(metric, perspectives, dim, rng),
        sim_item=_init_sim(metric, perspectives, dim, rng),
        readout=init_readout(dim, rng),
        mlp=init_mlp(dim, rng),
    )


@dataclass
class BatchForward:
    """Everything the loss and the metrics need from one batch pass."""

    predictions: object            # Tensor (train) or np.ndarray (eval, clamped)
    refined_u: object | None
    refined_v: object | None
    target_users: np.ndarray
    target_items: np.ndarray


def forward_batch(
    params: ModelParams,
    graph: HeteroGlobalGraph,
    batch_users: np.ndarray,
    batch_items: np.ndarray,
    depth: int,
    lambda_w: float,
    trunc: int,
    mode: str = "train",
    rating_range: tuple[float, float] | None = None,
    dropout_p: float = 0.0,
    rng: np.random.Generator | None = None,
    gl_enabled: bool = True,
    anchors_u: AnchorSet | None = None,
    anchors_v: AnchorSet | None = None,
    counter: OpCounter | None = None,
) -> BatchForward:
    """Refine target rows, run the HGNN, read out, and predict pair ratings.

    `batch_users`/`batch_items` are the per-pair indices; targets are their
    distinct values. Training-time anchors restrict GL candidates; eval always
    refines against all nodes (anchor sampling is a training-cost device).
    """
    target_users = np.unique(np.asarray(batch_users, dtype=np.intp))
    target_items = np.unique(np.asarray(batch_items, dtype=np.intp))
    refined_u = refined_v = None
    if gl_enabled:
        if anchors_u is not None:
            refined_u = learn_subgraph_anchored(target_users, graph, anchors_u, params.user_embed, params.sim_user, lambda_w, trunc, counter)
        else:
            refined_u = learn_subgraph(target_users, graph, params.user_embed, params.sim_user, lambda_w, trunc, NodeKind.USER, counter)
        if anchors_v is not None:
            refined_v = learn_subgraph_anchored(target_items, graph, anchors_v, params.item_embed, params.sim_item, lambda_w, trunc, counter)
        else:
            refined_v = learn_subgraph(target_items, graph, params.item_embed, params.sim_item, lambda_w, trunc, NodeKind.ITEM, counter)

    sub = build_batch_subgraph(graph, target_users, target_items, depth, refined_u, refined_v)
    training = mode == "train"
    p_layers, q_layers = hgnn_forward(sub, params.layers, params.user_embed, params.item_embed, dropout_p, rng, training)
    p_final = layer_attention_readout(p_layers, params.readout)
    q_final = layer_attention_readout(q_layers, params.readout)

    upos = np.searchsorted(target_users, np.asarray(batch_users, dtype=np.intp))
    vpos = np.searchsorted(target_items, np.asarray(batch_items, dtype=np.intp))
    p_rows = eg.gather_rows(p_final, upos)
    q_rows = eg.gather_rows(q_final, vpos)
    if training:
        preds = mlp_forward(p_rows, q_rows, params.mlp, dropout_p, rng, training=True)
    else:
        raw = mlp_forward(p_rows, q_rows, params.mlp)
        preds = raw.data.copy()
        if rating_range is not None:
            preds = np.clip(preds, rating_range[0], rating_range[1])
    return BatchForward(
        predictions=preds,
        refined_u=refined_u,
        refined_v=refined_v,
        target_users=target_users,
        target_items=target_items,
    )
