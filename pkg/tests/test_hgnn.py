import numpy as np
import pytest

import glrec.engine as eg
from glrec.engine import Tensor
from glrec.graph import HeteroGlobalGraph, NodeKind
from glrec.hgnn import HgnnLayerParams, build_batch_subgraph, hgnn_forward
from glrec.learner import WEIGHTED_COSINE, SimilarityConfig, learn_subgraph
from glrec.losses import rating_loss

from dense_oracle import dense_forward
from fdcheck import gradcheck


def make_params(dim, n_levels, rng, scale=0.5):
    return HgnnLayerParams(
        w_social=Tensor(rng.normal(0, scale, (dim, dim)), requires_grad=True),
        b_social=Tensor(rng.normal(0, scale, dim), requires_grad=True),
        w_rating=[Tensor(rng.normal(0, scale, (dim, dim)), requires_grad=True) for _ in range(n_levels)],
        b_rating=[Tensor(rng.normal(0, scale, dim), requires_grad=True) for _ in range(n_levels)],
        w_sim=Tensor(rng.normal(0, scale, (dim, dim)), requires_grad=True),
        b_sim=Tensor(rng.normal(0, scale, dim), requires_grad=True),
    )


def zero_params(dim, n_levels):
    z = lambda *s: Tensor(np.zeros(s))
    return HgnnLayerParams(
        w_social=z(dim, dim), b_social=z(dim),
        w_rating=[z(dim, dim) for _ in range(n_levels)],
        b_rating=[z(dim) for _ in range(n_levels)],
        w_sim=z(dim, dim), b_sim=z(dim),
    )


def random_graph(rng, n_users, n_items, n_levels, p_social=0.3, p_rating=0.3, p_sim=0.3):
    g = HeteroGlobalGraph(n_users, n_items, n_levels)
    for a in range(n_users):
        for b in range(a + 1, n_users):
            if rng.random() < p_social:
                g.add_social(a, b)
    for a in range(n_items):
        for b in range(a + 1, n_items):
            if rng.random() < p_sim:
                g.add_similarity(a, b)
    for u in range(n_users):
        for v in range(n_items):
            if rng.random() < p_rating:
                g.add_rating(u, v, int(rng.integers(1, n_levels + 1)))
    return g


# -- frontier construction -----------------------------------------------------


def test_depth_zero_frontier_is_target_set():
    g = random_graph(np.random.default_rng(0), 6, 5, 2)
    sub = build_batch_subgraph(g, [2, 4], [1], 0)
    np.testing.assert_array_equal(sub.frontiers[0][0], [2, 4])
    np.testing.assert_array_equal(sub.frontiers[0][1], [1])


def test_star_graph_one_hop_frontier():
    g = HeteroGlobalGraph(5, 2, 2)
    for leaf in range(1, 5):
        g.add_social(0, leaf)
    sub = build_batch_subgraph(g, [0], [0], 1)
    np.testing.assert_array_equal(sub.frontiers[0][0], [0, 1, 2, 3, 4])
    np.testing.assert_array_equal(sub.frontiers[1][0], [0])


def brute_force_closure(g, users, items, hops):
    users, items = set(users), set(items)
    for _ in range(hops):
        nu, ni = set(users), set(items)
        for u in users:
            nu.update(g.social_neighbors(u))
            for k in range(1, g.n_levels + 1):
                ni.update(g.rated_items(u, k))
        for v in items:
            ni.update(g.sim_neighbors(v))
            for k in range(1, g.n_levels + 1):
                nu.update(g.rating_users(v, k))
        users, items = nu, ni
    return sorted(users), sorted(items)


def test_two_hop_frontier_matches_brute_force_closure():
    rng = np.random.default_rng(4)
    g = random_graph(rng, 10, 8, 3, 0.2, 0.15, 0.2)
    sub = build_batch_subgraph(g, [0, 3], [2], 2)
    exp_users, exp_items = brute_force_closure(g, [0, 3], [2], 2)
    assert sub.frontiers[0][0].tolist() == exp_users
    assert sub.frontiers[0][1].tolist() == exp_items


def test_refined_rows_must_cover_targets():
    g = random_graph(np.random.default_rng(1), 5, 4, 2)
    rng = np.random.default_rng(2)
    cfg = SimilarityConfig(WEIGHTED_COSINE, [Tensor(rng.normal(size=(3, 3)))])
    table = Tensor(rng.normal(size=(5, 3)))
    refined = learn_subgraph([0, 1], g, table, cfg, 0.5, 2, NodeKind.USER)
    with pytest.raises(ValueError):
        build_batch_subgraph(g, [0, 2], [0], 1, refined_u=refined)


# -- layer conventions ----------------------------------------------------------


def test_all_zero_params_give_zero_output():
    g = random_graph(np.random.default_rng(3), 4, 4, 2)
    sub = build_batch_subgraph(g, [0, 1], [0, 1], 1)
    p, q = hgnn_forward(sub, [zero_params(3, 2)], Tensor(np.ones((4, 3))), Tensor(np.ones((4, 3))))
    np.testing.assert_array_equal(p[1].data, 0.0)
    np.testing.assert_array_equal(q[1].data, 0.0)


def test_isolated_user_gets_relu_of_mean_bias():
    g = HeteroGlobalGraph(2, 2, 2)  # user 1 fully isolated
    g.add_social(0, 1)  # keep user 0 connected; target user 1 isolated? no: 0-1 edge
    g = HeteroGlobalGraph(2, 2, 2)
    rng = np.random.default_rng(9)
    lp = make_params(3, 2, rng)
    sub = build_batch_subgraph(g, [1], [0], 1)
    p, _ = hgnn_forward(sub, [lp], Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    expected = np.maximum(
        (lp.b_social.data + lp.b_rating[0].data + lp.b_rating[1].data) / 3.0, 0.0
    )
    np.testing.assert_allclose(p[1].data[0], expected, atol=1e-12)


def test_symmetric_toy_user_equals_item():
    # isomorphic user and item subgraphs with shared weights and embeddings
    g = HeteroGlobalGraph(3, 3, 1)
    g.add_social(0, 1)
    g.add_social(1, 2)
    g.add_similarity(0, 1)
    g.add_similarity(1, 2)
    rng = np.random.default_rng(12)
    lp = make_params(4, 1, rng)
    lp.w_sim = lp.w_social
    lp.b_sim = lp.b_social
    emb = rng.normal(size=(3, 4))
    sub = build_batch_subgraph(g, [0, 1, 2], [0, 1, 2], 1)
    p, q = hgnn_forward(sub, [lp], Tensor(emb.copy()), Tensor(emb.copy()))
    np.testing.assert_allclose(p[1].data, q[1].data, atol=1e-12)


def test_item_with_only_similarity_neighbors_gets_bias_rating_terms():
    g = HeteroGlobalGraph(2, 3, 2)
    g.add_similarity(0, 1)
    rng = np.random.default_rng(13)
    lp = make_params(3, 2, rng)
    emb_v = rng.normal(size=(3, 3))
    sub = build_batch_subgraph(g, [0], [0], 1)
    _, q = hgnn_forward(sub, [lp], Tensor(np.ones((2, 3))), Tensor(emb_v))
    # hand-compose: similarity message + the two rating biases
    sim_msg = lp.b_sim.data + lp.w_sim.data @ emb_v[1]
    expected = np.maximum((sim_msg + lp.b_rating[0].data + lp.b_rating[1].data) / 3.0, 0.0)
    np.testing.assert_allclose(q[1].data[0], expected, atol=1e-12)


# -- dense-oracle equivalence -----------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_sparse_matches_dense_oracle_depth2(seed):
    rng = np.random.default_rng(seed)
    n_users = int(rng.integers(4, 11))
    n_items = int(rng.integers(4, 10))
    g = random_graph(rng, n_users, n_items, 3)
    layer_params = [make_params(5, 3, rng) for _ in range(2)]
    p0 = rng.normal(size=(n_users, 5))
    q0 = rng.normal(size=(n_items, 5))
    sub = build_batch_subgraph(g, np.arange(n_users), np.arange(n_items), 2)
    p_layers, q_layers = hgnn_forward(sub, layer_params, Tensor(p0.copy()), Tensor(q0.copy()))
    dp, dq = dense_forward(g, p0, q0, layer_params, 2)
    for t in range(3):
        np.testing.assert_allclose(p_layers[t].data, dp[t], atol=1e-10)
        np.testing.assert_allclose(q_layers[t].data, dq[t], atol=1e-10)


def test_removing_edge_type_changes_contribution_to_exactly_bias():
    rng = np.random.default_rng(21)
    g_with = HeteroGlobalGraph(3, 2, 1)
    g_with.add_social(0, 1)
    g_with.add_rating(0, 0, 1)
    g_without = HeteroGlobalGraph(3, 2, 1)
    g_without.add_rating(0, 0, 1)
    lp = make_params(3, 1, rng)
    emb_u, emb_v = rng.normal(size=(3, 3)), rng.normal(size=(2, 3))
    out_with = hgnn_forward(build_batch_subgraph(g_with, [0], [0], 1), [lp], Tensor(emb_u), Tensor(emb_v))
    out_without = hgnn_forward(build_batch_subgraph(g_without, [0], [0], 1), [lp], Tensor(emb_u), Tensor(emb_v))
    # pre-activation difference is exactly the social neighbor sum (bias stays)
    social = lp.w_social.data @ emb_u[1]  # both degree-1 endpoints: coeff 1
    diff_pre = 2.0 * (out_with[0][1].data[0] * 1 - 0)  # placeholder to keep shapes obvious
    with_pre = (lp.b_social.data + social + lp.b_rating[0].data + lp.w_rating[0].data @ emb_v[0]) / 2.0
    without_pre = (lp.b_social.data + lp.b_rating[0].data + lp.w_rating[0].data @ emb_v[0]) / 2.0
    np.testing.assert_allclose(out_with[0][1].data[0], np.maximum(with_pre, 0.0), atol=1e-12)
    np.testing.assert_allclose(out_without[0][1].data[0], np.maximum(without_pre, 0.0), atol=1e-12)


def test_permutation_equivariance():
    rng = np.random.default_rng(30)
    n_users, n_items = 6, 5
    g = random_graph(rng, n_users, n_items, 2)
    perm_u = rng.permutation(n_users)
    perm_v = rng.permutation(n_items)
    g2 = HeteroGlobalGraph(n_users, n_items, 2)
    for u in range(n_users):
        for n in g.social_neighbors(u):
            if u < n:
                g2.add_social(int(perm_u[u]), int(perm_u[n]))
        for k in range(1, 3):
            for v in g.rated_items(u, k):
                g2.add_rating(int(perm_u[u]), int(perm_v[v]), k)
    for a in range(n_items):
        for b in g.sim_neighbors(a):
            if a < b:
                g2.add_similarity(int(perm_v[a]), int(perm_v[b]))
    lp = make_params(4, 2, rng)
    p0 = rng.normal(size=(n_users, 4))
    q0 = rng.normal(size=(n_items, 4))
    p0_perm = np.empty_like(p0)
    p0_perm[perm_u] = p0
    q0_perm = np.empty_like(q0)
    q0_perm[perm_v] = q0
    out1 = hgnn_forward(build_batch_subgraph(g, np.arange(n_users), np.arange(n_items), 2), [lp, lp], Tensor(p0), Tensor(q0))
    out2 = hgnn_forward(build_batch_subgraph(g2, np.arange(n_users), np.arange(n_items), 2), [lp, lp], Tensor(p0_perm), Tensor(q0_perm))
    np.testing.assert_allclose(out1[0][2].data, out2[0][2].data[perm_u], atol=1e-12)
    np.testing.assert_allclose(out1[1][2].data, out2[1][2].data[perm_v], atol=1e-12)


def test_forward_gradients_match_finite_differences():
    rng = np.random.default_rng(77)
    g = random_graph(rng, 5, 4, 2, 0.4, 0.4, 0.4)
    layer_params = [make_params(3, 2, rng) for _ in range(2)]
    p_table = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    q_table = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    targets_r = rng.normal(size=2)

    def build():
        sub = build_batch_subgraph(g, [0, 2], [1], 2)
        p_layers, q_layers = hgnn_forward(sub, layer_params, p_table, q_table)
        preds = eg.sum_(eg.mul(eg.gather_rows(p_layers[2], [0, 1]), eg.gather_rows(p_layers[2], [0, 1])), axis=1)
        return rating_loss(preds, targets_r)

    params = [p_table, q_table]
    for lp in layer_params:
        params += [lp.w_social, lp.b_social, lp.w_sim, lp.b_sim] + lp.w_rating + lp.b_rating
    gradcheck(build, params)
