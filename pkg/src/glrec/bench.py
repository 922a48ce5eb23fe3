"""Scaling harness: similarity-op counts and wall time over (N, tau) grids."""

from __future__ import annotations

import os
import time

import numpy as np

from .data import generate_synthetic
from .graph import NodeKind
from .learner import OpCounter, learn_subgraph, learn_subgraph_anchored, sample_anchors
from .trainer import TrainConfig, prepare_state, _batches


def scaling_bench(
    sizes=(2000, 4000, 8000),
    taus=(0.0, 1.0, 0.05),
    batch: int = 128,
    n_batches: int = 3,
    dim: int = 16,
    seed: int = 0,
    work_dir: str = ".",
) -> list[dict]:
    """Rows of {n, tau, ops, seconds} for the refinement step alone.

    tau = 0 runs the full learner (all candidates); tau > 0 runs the anchored
    learner with per-run anchors. Item count scales as N // 2 so the total op
    count stays linear in N.
    """
    rows = []
    for n in sizes:
        data_dir = os.path.join(work_dir, f"bench_n{n}")
        ratings, links, _ = generate_synthetic(
            n_users=n, n_items=n // 2, n_ratings=2 * n, n_links=2 * n,
            noise_frac=0.1, seed=seed, out_dir=data_dir,
        )
        config = TrainConfig(dim=dim, batch=batch, k_i=5, epochs=1, seed=seed)
        state = prepare_state(config, ratings, links)
        u_tr, v_tr, _ = state.bundle.indexed("train")
        take = min(len(u_tr), batch * n_batches)
        batches = [(u_tr[idx], v_tr[idx]) for idx in _batches(take, batch)]

        for tau in taus:
            counter = OpCounter()
            anchors_u = anchors_v = None
            if tau > 0:
                anchors_u = sample_anchors(NodeKind.USER, tau, state.bundle.n_users, 0, seed)
                anchors_v = sample_anchors(NodeKind.ITEM, tau, state.bundle.n_items, 0, seed)
            t0 = time.perf_counter()
            for bu, bv in batches:
                tu, tv = np.unique(bu), np.unique(bv)
                if tau > 0:
                    learn_subgraph_anchored(tu, state.graph, anchors_u, state.params.user_embed,
                                            state.params.sim_user, config.lambda_w, config.trunc, counter)
                    learn_subgraph_anchored(tv, state.graph, anchors_v, state.params.item_embed,
                                            state.params.sim_item, config.lambda_w, config.trunc, counter)
                else:
                    learn_subgraph(tu, state.graph, state.params.user_embed, state.params.sim_user,
                                   config.lambda_w, config.trunc, NodeKind.USER, counter)
                    learn_subgraph(tv, state.graph, state.params.item_embed, state.params.sim_item,
                                   config.lambda_w, config.trunc, NodeKind.ITEM, counter)
            rows.append({
                "n": int(n),
                "tau": float(tau),
                "ops": int(counter.pairs),
                "seconds": time.perf_counter() - t0,
            })
    return rows
