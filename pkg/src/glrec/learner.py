"""Graph structure learning: item-item construction and per-batch refinement.

The refinement path computes multi-perspective similarities between a batch's
target nodes and a candidate set (all nodes, or a random anchor subset),
fuses them with the initial adjacency rows, and truncates each row to its
top-L neighbors. The fused matrix stays on the autodiff tape for the
regularization losses; the truncated neighbor lists enter message passing as
plain (unweighted) structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine as eg
from .engine import Tensor
from .graph import HeteroGlobalGraph, NodeKind

WEIGHTED_COSINE = "weighted_cosine"
ATTENTION = "attention"
ADD_ATTENTION = "add_attention"
METRICS = (WEIGHTED_COSINE, ATTENTION, ADD_ATTENTION)

_NORM_FLOOR = 1e-24  # squared-norm floor before sqrt in cosine


@dataclass
class SimilarityConfig:
    """Similarity metric plus its per-perspective learned weights.

    weighted_cosine / attention take DxD matrices (a (D,) vector is accepted
    for weighted_cosine as an elementwise-scaling variant); add_attention
    takes (D,) vectors.
    """

    metric: str
    weights: list[Tensor]

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown similarity metric {self.metric!r}")
        if not self.weights:
            raise ValueError("similarity config needs at least one perspective")

    @property
    def perspectives(self) -> int:
        return len(self.weights)


@dataclass
class OpCounter:
    """Counts pairwise similarity evaluations (target x candidate x perspective)."""

    pairs: int = 0

    def reset(self) -> None:
        self.pairs = 0


@dataclass
class AnchorSet:
    kind: NodeKind
    ids: np.ndarray  # sorted, distinct
    epoch: int

    @property
    def H(self) -> int:
        return len(self.ids)


@dataclass
class RefinedAdjacency:
    """Per-batch refinement result for one node kind."""

    kind: NodeKind
    target_ids: np.ndarray
    candidate_ids: np.ndarray
    fused: Tensor                                   # B x C, entries in [0, 1]
    neighbors: list[list[tuple[int, float]]]        # per target, <= L pairs
    neighbor_map: dict[int, list[int]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.neighbor_map is None:
            self.neighbor_map = {
                int(t): [n for n, _ in row] for t, row in zip(self.target_ids, self.neighbors)
            }

    def neighbor_ids(self, target: int) -> list[int]:
        return self.neighbor_map[target]

    def is_target(self, node: int) -> bool:
        return node in self.neighbor_map


# ---------------------------------------------------------------------------
# Item-item construction


def build_item_item_edges(rating_matrix, k_items: int) -> list[tuple[int, int]]:
    """Top-K_I cosine neighbors per item over sparse rating columns.

    Returns the (j, m) selections; the caller inserts them symmetrically.
    Items whose column has zero norm make no selections, and only candidates
    with strictly positive cosine are eligible (ties break to the smaller
    index).
    """
    from scipy import sparse

    if k_items < 1:
        raise ValueError(f"k_items must be >= 1, got {k_items}")
    R = sparse.csc_matrix(rating_matrix, dtype=np.float64)
    n_items = R.shape[1]
    norms = np.sqrt(np.asarray(R.power(2).sum(axis=0)).ravel())
    inv = np.zeros_like(norms)
    nz = norms > 0
    inv[nz] = 1.0 / norms[nz]
    Rn = R @ sparse.diags(inv)
    G = (Rn.T @ Rn).tocsr()

    edges = []
    for j in range(n_items):
        if not nz[j]:
            continue
        lo, hi = G.indptr[j], G.indptr[j + 1]
        cols = G.indices[lo:hi]
        vals = G.data[lo:hi]
        keep = (vals > 0.0) & (cols != j)
        cols, vals = cols[keep], vals[keep]
        if cols.size == 0:
            continue
        order = np.lexsort((cols, -vals))
        for m in cols[order[:k_items]]:
            edges.append((j, int(m)))
    return edges


# ---------------------------------------------------------------------------
# Pairwise similarity


def _cosine_rows(x: Tensor) -> Tensor:
    nsq = eg.sum_(eg.square(x), axis=1)
    inv = eg.divide(Tensor(np.ones(x.shape[0])), eg.sqrt(eg.clamp_min(nsq, _NORM_FLOOR)))
    return eg.scale_rows(x, inv)


def pairwise_similarity(
    targets: Tensor,
    candidates: Tensor,
    config: SimilarityConfig,
    counter: OpCounter | None = None,
) -> Tensor:
    """B x C similarity matrix, averaged over the config's perspectives."""
    b, d = targets.shape
    c, d2 = candidates.shape
    if d != d2:
        raise eg.ShapeError(f"pairwise_similarity: embed dims {targets.shape} vs {candidates.shape}")
    total = None
    for w in config.weights:
        if config.metric == ADD_ATTENTION:
            if w.shape != (d,):
                raise eg.ShapeError(f"add_attention weight must be ({d},), got {w.shape}")
            s = eg.relu(eg.outer_add(eg.matvec(targets, w), eg.matvec(candidates, w)))
        else:
            if w.shape == (d,):
                tx = eg.scale_cols(targets, w)
                cx = eg.scale_cols(candidates, w)
            elif w.shape == (d, d):
                wt = eg.transpose(w)
                tx = eg.matmul(targets, wt)
                cx = eg.matmul(candidates, wt)
            else:
                raise eg.ShapeError(f"{config.metric} weight must be ({d},{d}) or ({d},), got {w.shape}")
            if config.metric == WEIGHTED_COSINE:
                tx = _cosine_rows(tx)
                cx = _cosine_rows(cx)
            s = eg.matmul(tx, eg.transpose(cx))
        total = s if total is None else eg.add(total, s)
    if counter is not None:
        counter.pairs += b * c * config.perspectives
    return eg.scale(total, 1.0 / config.perspectives)


def fuse_with_initial(sim: Tensor, initial_rows: np.ndarray, lambda_w: float) -> Tensor:
    """lambda_w * clamp01(sim) + (1 - lambda_w) * initial."""
    if not 0.0 <= lambda_w <= 1.0:
        raise ValueError(f"lambda_w must be in [0, 1], got {lambda_w}")
    if sim.shape != initial_rows.shape:
        raise eg.ShapeError(f"fuse: similarity {sim.shape} vs initial rows {initial_rows.shape}")
    clamped = eg.clamp(sim, 0.0, 1.0)
    return eg.add(eg.scale(clamped, lambda_w), Tensor(initial_rows * (1.0 - lambda_w)))


def truncate_top_l(
    fused: np.ndarray,
    trunc: int,
    target_ids: np.ndarray,
    candidate_ids: np.ndarray,
) -> list[list[tuple[int, float]]]:
    """Per row, the at most `trunc` largest positive entries, self excluded.

    Ties break to the smaller candidate index; output is sorted by descending
    weight. Zero-weight entries are never selected (a zero fused weight means
    no edge, which keeps lambda_w=0 refinement an exact identity).
    """
    if trunc < 1:
        raise ValueError(f"truncation length must be >= 1, got {trunc}")
    candidate_ids = np.asarray(candidate_ids)
    out = []
    for r, t in enumerate(np.asarray(target_ids)):
        row = fused[r]
        eligible = np.flatnonzero((row > 0.0) & (candidate_ids != t))
        if eligible.size:
            order = np.lexsort((candidate_ids[eligible], -row[eligible]))[:trunc]
            picked = eligible[order]
            out.append([(int(candidate_ids[m]), float(row[m])) for m in picked])
        else:
            out.append([])
    return out


# ---------------------------------------------------------------------------
# Anchors and the refinement drivers


def sample_anchors(kind: NodeKind, tau: float, count: int, epoch: int, seed: int) -> AnchorSet:
    """H = max(1, round(tau * count)) distinct ids from a per-epoch substream."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"anchor rate must be in (0, 1], got {tau}")
    h = max(1, int(round(tau * count)))
    kind_code = 0 if kind == NodeKind.USER else 1
    rng = np.random.default_rng(np.random.SeedSequence((seed, 101, epoch, kind_code)))
    ids = np.sort(rng.choice(count, size=h, replace=False)).astype(np.intp)
    return AnchorSet(kind=kind, ids=ids, epoch=epoch)


def _initial_rows(graph: HeteroGlobalGraph, kind: NodeKind, target_ids, candidate_ids) -> np.ndarray:
    adj = graph.social_neighbors if kind == NodeKind.USER else graph.sim_neighbors
    n = graph.n_users if kind == NodeKind.USER else graph.n_items
    candidate_ids = np.asarray(candidate_ids)
    full = candidate_ids.size == n and np.array_equal(candidate_ids, np.arange(n))
    rows = np.zeros((len(target_ids), candidate_ids.size), dtype=np.float64)
    for r, t in enumerate(target_ids):
        nbrs = adj(int(t))
        if not nbrs:
            continue
        if full:
            rows[r, nbrs] = 1.0
        else:
            pos = np.searchsorted(candidate_ids, nbrs)
            ok = (pos < candidate_ids.size) & (candidate_ids[np.minimum(pos, candidate_ids.size - 1)] == nbrs)
            rows[r, pos[ok]] = 1.0
    return rows


def _refine(
    kind: NodeKind,
    target_ids: np.ndarray,
    candidate_ids: np.ndarray,
    graph: HeteroGlobalGraph,
    embeddings: Tensor,
    config: SimilarityConfig,
    lambda_w: float,
    trunc: int,
    counter: OpCounter | None,
) -> RefinedAdjacency:
    tgt = eg.gather_rows(embeddings, target_ids)
    cand = eg.gather_rows(embeddings, candidate_ids)
    sim = pairwise_similarity(tgt, cand, config, counter)
    fused = fuse_with_initial(sim, _initial_rows(graph, kind, target_ids, candidate_ids), lambda_w)
    neighbors = truncate_top_l(fused.data, trunc, target_ids, candidate_ids)
    return RefinedAdjacency(
        kind=kind,
        target_ids=np.asarray(target_ids, dtype=np.intp),
        candidate_ids=np.asarray(candidate_ids, dtype=np.intp),
        fused=fused,
        neighbors=neighbors,
    )


def learn_subgraph(
    target_ids,
    graph: HeteroGlobalGraph,
    embeddings: Tensor,
    config: SimilarityConfig,
    lambda_w: float,
    trunc: int,
    kind: NodeKind,
    counter: OpCounter | None = None,
) -> RefinedAdjacency:
    """Refine target rows against all nodes of `kind` (full graph learning)."""
    target_ids = np.asarray(target_ids, dtype=np.intp)
    if target_ids.size == 0:
        raise ValueError("learn_subgraph: empty target batch")
    n = graph.n_users if kind == NodeKind.USER else graph.n_items
    return _refine(kind, target_ids, np.arange(n, dtype=np.intp), graph, embeddings, config, lambda_w, trunc, counter)


def learn_subgraph_anchored(
    target_ids,
    graph: HeteroGlobalGraph,
    anchors: AnchorSet,
    embeddings: Tensor,
    config: SimilarityConfig,
    lambda_w: float,
    trunc: int,
    counter: OpCounter | None = None,
) -> RefinedAdjacency:
    """Refine target rows against the anchor subset only (B x H similarities)."""
    target_ids = np.asarray(target_ids, dtype=np.intp)
    if target_ids.size == 0:
        raise ValueError("learn_subgraph_anchored: empty target batch")
    if anchors.H == 0:
        raise ValueError("learn_subgraph_anchored: empty anchor set")
    return _refine(anchors.kind, target_ids, anchors.ids, graph, embeddings, config, lambda_w, trunc, counter)
