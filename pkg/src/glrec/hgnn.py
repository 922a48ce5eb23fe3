"""T-layer heterogeneous message passing over the (refined) global graph.

Each layer aggregates, per node, one message per edge type: degree-normalized
sums of linearly transformed neighbor embeddings plus a per-type bias (an
edge type with no neighbors contributes exactly its bias). The K+1 messages
are averaged and passed through ReLU. Batch computation walks per-layer
frontiers gathered by reverse BFS from the batch targets; target rows of the
user-user and item-item subgraphs are replaced by refined neighbor lists,
everything else keeps the initial adjacency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine as eg
from .engine import Tensor
from .graph import HeteroGlobalGraph
from .learner import RefinedAdjacency


@dataclass
class HgnnLayerParams:
    """One layer's weights: social, K rating levels (direction-shared), item-item."""

    w_social: Tensor
    b_social: Tensor
    w_rating: list[Tensor]
    b_rating: list[Tensor]
    w_sim: Tensor
    b_sim: Tensor

    @property
    def n_levels(self) -> int:
        return len(self.w_rating)


def _positions(ids: np.ndarray) -> dict[int, int]:
    return {int(n): i for i, n in enumerate(ids)}


class _EdgePlan:
    """Precomputed (dst position, src position, coefficient) arrays for one type."""

    __slots__ = ("dst", "src", "coeff")

    def __init__(self, dst, src, coeff):
        self.dst = np.asarray(dst, dtype=np.intp)
        self.src = np.asarray(src, dtype=np.intp)
        self.coeff = np.asarray(coeff, dtype=np.float64)


class BatchSubgraph:
    """Frontiers and per-layer aggregation plans for one mini-batch."""

    def __init__(
        self,
        graph: HeteroGlobalGraph,
        target_users,
        target_items,
        depth: int,
        refined_u: RefinedAdjacency | None = None,
        refined_v: RefinedAdjacency | None = None,
    ):
        self.graph = graph
        self.depth = depth
        self.target_users = np.unique(np.asarray(target_users, dtype=np.intp))
        self.target_items = np.unique(np.asarray(target_items, dtype=np.intp))
        self.refined_u = refined_u
        self.refined_v = refined_v
        if refined_u is not None and set(map(int, refined_u.target_ids)) != set(map(int, self.target_users)):
            raise ValueError("refined user adjacency must cover exactly the batch's target users")
        if refined_v is not None and set(map(int, refined_v.target_ids)) != set(map(int, self.target_items)):
            raise ValueError("refined item adjacency must cover exactly the batch's target items")

        self.frontiers = self._build_frontiers()
        self.plans = [self._layer_plan(t) for t in range(1, depth + 1)]

    # -- adjacency with refined override -------------------------------------

    def _uu(self, u: int) -> list[int]:
        if self.refined_u is not None and self.refined_u.is_target(u):
            return self.refined_u.neighbor_ids(u)
        return self.graph.social_neighbors(u)

    def _vv(self, v: int) -> list[int]:
        if self.refined_v is not None and self.refined_v.is_target(v):
            return self.refined_v.neighbor_ids(v)
        return self.graph.sim_neighbors(v)

    def _uu_deg(self, u: int) -> int:
        if self.refined_u is not None and self.refined_u.is_target(u):
            return len(self.refined_u.neighbor_ids(u))
        return self.graph.uu_deg[u]

    def _vv_deg(self, v: int) -> int:
        if self.refined_v is not None and self.refined_v.is_target(v):
            return len(self.refined_v.neighbor_ids(v))
        return self.graph.vv_deg[v]

    # -- frontiers ------------------------------------------------------------

    def _build_frontiers(self):
        g = self.graph
        users = set(map(int, self.target_users))
        items = set(map(int, self.target_items))
        frontiers = [None] * (self.depth + 1)
        frontiers[self.depth] = (
            np.array(sorted(users), dtype=np.intp),
            np.array(sorted(items), dtype=np.intp),
        )
        for t in range(self.depth, 0, -1):
            next_users = set(users)
            next_items = set(items)
            for u in users:
                next_users.update(self._uu(u))
                for k in range(1, g.n_levels + 1):
                    next_items.update(g.rated_items(u, k))
            for v in items:
                next_items.update(self._vv(v))
                for k in range(1, g.n_levels + 1):
                    next_users.update(g.rating_users(v, k))
            users, items = next_users, next_items
            frontiers[t - 1] = (
                np.array(sorted(users), dtype=np.intp),
                np.array(sorted(items), dtype=np.intp),
            )
        return frontiers

    # -- aggregation plans ------------------------------------------------------

    def _layer_plan(self, t: int):
        g = self.graph
        dst_users, dst_items = self.frontiers[t]
        src_users, src_items = self.frontiers[t - 1]
        upos = _positions(src_users)
        vpos = _positions(src_items)

        def social_plan():
            dst, src, coeff = [], [], []
            for du, u in enumerate(dst_users):
                u = int(u)
                di = self._uu_deg(u)
                for n in self._uu(u):
                    dst.append(du)
                    src.append(upos[n])
                    coeff.append(1.0 / np.sqrt(max(di, 1) * max(self._uu_deg(n), 1)))
            return _EdgePlan(dst, src, coeff)

        def sim_plan():
            dst, src, coeff = [], [], []
            for dv, v in enumerate(dst_items):
                v = int(v)
                di = self._vv_deg(v)
                for m in self._vv(v):
                    dst.append(dv)
                    src.append(vpos[m])
                    coeff.append(1.0 / np.sqrt(max(di, 1) * max(self._vv_deg(m), 1)))
            return _EdgePlan(dst, src, coeff)

        def rating_user_plans():
            plans = []
            for k in range(1, g.n_levels + 1):
                dst, src, coeff = [], [], []
                for du, u in enumerate(dst_users):
                    u = int(u)
                    di = g.uv_deg[k - 1][u]
                    for m in g.rated_items(u, k):
                        dst.append(du)
                        src.append(vpos[m])
                        coeff.append(1.0 / np.sqrt(di * g.vu_deg[k - 1][m]))
                plans.append(_EdgePlan(dst, src, coeff))
            return plans

        def rating_item_plans():
            plans = []
            for k in range(1, g.n_levels + 1):
                dst, src, coeff = [], [], []
                for dv, v in enumerate(dst_items):
                    v = int(v)
                    di = g.vu_deg[k - 1][v]
                    for n in g.rating_users(v, k):
                        dst.append(dv)
                        src.append(upos[n])
                        coeff.append(1.0 / np.sqrt(di * g.uv_deg[k - 1][n]))
                plans.append(_EdgePlan(dst, src, coeff))
            return plans

        return {
            "social": social_plan(),
            "sim": sim_plan(),
            "rating_user": rating_user_plans(),
            "rating_item": rating_item_plans(),
        }


def build_batch_subgraph(
    graph: HeteroGlobalGraph,
    target_users,
    target_items,
    depth: int,
    refined_u: RefinedAdjacency | None = None,
    refined_v: RefinedAdjacency | None = None,
) -> BatchSubgraph:
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    return BatchSubgraph(graph, target_users, target_items, depth, refined_u, refined_v)


# ---------------------------------------------------------------------------
# Forward propagation


def _aggregate(plan: _EdgePlan, transformed: Tensor, bias: Tensor, n_dst: int) -> Tensor:
    """Degree-normalized neighbor sum plus bias; bias alone when no edges."""
    if plan.dst.size == 0:
        return eg.add_rowvec(Tensor(np.zeros((n_dst, bias.shape[0]))), bias)
    rows = eg.gather_rows(transformed, plan.src)
    summed = eg.segment_sum(eg.scale_rows(rows, Tensor(plan.coeff)), plan.dst, n_dst)
    return eg.add_rowvec(summed, bias)


def user_layer(
    plan: dict,
    x_users_prev: Tensor,
    x_items_prev: Tensor,
    params: HgnnLayerParams,
    n_dst: int,
) -> Tensor:
    """Next-layer embeddings for one frontier's users (pre-dropout)."""
    k_levels = params.n_levels
    total = _aggregate(plan["social"], eg.matmul(x_users_prev, eg.transpose(params.w_social)), params.b_social, n_dst)
    for k in range(k_levels):
        msg = _aggregate(plan["rating_user"][k], eg.matmul(x_items_prev, eg.transpose(params.w_rating[k])), params.b_rating[k], n_dst)
        total = eg.add(total, msg)
    return eg.relu(eg.scale(total, 1.0 / (k_levels + 1)))


def item_layer(
    plan: dict,
    x_users_prev: Tensor,
    x_items_prev: Tensor,
    params: HgnnLayerParams,
    n_dst: int,
) -> Tensor:
    """Next-layer embeddings for one frontier's items (pre-dropout)."""
    k_levels = params.n_levels
    total = _aggregate(plan["sim"], eg.matmul(x_items_prev, eg.transpose(params.w_sim)), params.b_sim, n_dst)
    for k in range(k_levels):
        msg = _aggregate(plan["rating_item"][k], eg.matmul(x_users_prev, eg.transpose(params.w_rating[k])), params.b_rating[k], n_dst)
        total = eg.add(total, msg)
    return eg.relu(eg.scale(total, 1.0 / (k_levels + 1)))


def hgnn_forward(
    subgraph: BatchSubgraph,
    layer_params: list[HgnnLayerParams],
    user_table: Tensor,
    item_table: Tensor,
    dropout_p: float = 0.0,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> tuple[list[Tensor], list[Tensor]]:
    """All T+1 per-layer embeddings of the batch targets (layer 0 = raw rows)."""
    depth = subgraph.depth
    if len(layer_params) != depth:
        raise ValueError(f"need {depth} layer parameter sets, got {len(layer_params)}")
    x_u = eg.gather_rows(user_table, subgraph.frontiers[0][0])
    x_v = eg.gather_rows(item_table, subgraph.frontiers[0][1])

    def target_rows(x, frontier_ids, target_ids):
        pos = np.searchsorted(frontier_ids, target_ids)
        return eg.gather_rows(x, pos)

    p_layers = [target_rows(x_u, subgraph.frontiers[0][0], subgraph.target_users)]
    q_layers = [target_rows(x_v, subgraph.frontiers[0][1], subgraph.target_items)]
    for t in range(1, depth + 1):
        plan = subgraph.plans[t - 1]
        n_users_t = len(subgraph.frontiers[t][0])
        n_items_t = len(subgraph.frontiers[t][1])
        lp = layer_params[t - 1]
        new_u = user_layer(plan, x_u, x_v, lp, n_users_t)
        new_v = item_layer(plan, x_u, x_v, lp, n_items_t)
        new_u = eg.dropout(new_u, dropout_p, rng, training)
        new_v = eg.dropout(new_v, dropout_p, rng, training)
        x_u, x_v = new_u, new_v
        p_layers.append(target_rows(x_u, subgraph.frontiers[t][0], subgraph.target_users))
        q_layers.append(target_rows(x_v, subgraph.frontiers[t][1], subgraph.target_items))
    return p_layers, q_layers
