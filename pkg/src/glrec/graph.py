"""Heterogeneous global graph over users and items.

Three edge families live here: user-user social edges, user-item rating
edges partitioned into K discrete levels, and item-item similarity edges.
Social and similarity edges are undirected (stored symmetrically); rating
edges are stored in both directions inside their level partition. The graph
is built single-writer and treated as immutable afterwards.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from enum import Enum


class NodeKind(Enum):
    USER = "user"
    ITEM = "item"


@dataclass(frozen=True)
class NodeId:
    kind: NodeKind
    index: int


SOCIAL = "social"
RATING = "rating"
SIMILARITY = "similarity"


class RatingScale:
    """Discrete rating levels; level indices are 1-based (1..K)."""

    def __init__(self, levels):
        levels = sorted(set(float(v) for v in levels))
        if len(levels) < 2:
            raise ValueError(f"rating scale needs at least 2 distinct levels, got {levels}")
        self.levels: tuple[float, ...] = tuple(levels)
        self._index = {v: k + 1 for k, v in enumerate(self.levels)}

    @property
    def K(self) -> int:
        return len(self.levels)

    @property
    def min(self) -> float:
        return self.levels[0]

    @property
    def max(self) -> float:
        return self.levels[-1]

    def level_of(self, rating: float) -> int:
        k = self._index.get(float(rating))
        if k is None:
            raise ValueError(f"rating {rating} is not one of the scale levels {self.levels}")
        return k

    def value_of(self, level: int) -> float:
        if not 1 <= level <= self.K:
            raise IndexError(f"level {level} outside 1..{self.K}")
        return self.levels[level - 1]


def _insert(adj: list[list[int]], members: list[set[int]], deg: list[int], a: int, b: int) -> bool:
    if b in members[a]:
        return False
    members[a].add(b)
    bisect.insort(adj[a], b)
    deg[a] += 1
    return True


class HeteroGlobalGraph:
    """Adjacency lists plus degree caches for all K+2 edge types.

    Neighbor lists are kept in ascending index order; duplicate insertions
    are no-ops; self-loops are rejected for social/similarity edges.
    """

    def __init__(self, n_users: int, n_items: int, n_levels: int):
        if n_users <= 0 or n_items <= 0 or n_levels < 1:
            raise ValueError(f"invalid sizes: {n_users} users, {n_items} items, {n_levels} levels")
        self.n_users = n_users
        self.n_items = n_items
        self.n_levels = n_levels
        self._uu = [[] for _ in range(n_users)]
        self._uu_sets = [set() for _ in range(n_users)]
        self.uu_deg = [0] * n_users
        self._vv = [[] for _ in range(n_items)]
        self._vv_sets = [set() for _ in range(n_items)]
        self.vv_deg = [0] * n_items
        # rating partitions, both directions, one pair of structures per level
        self._uv = [[[] for _ in range(n_users)] for _ in range(n_levels)]
        self._vu = [[[] for _ in range(n_items)] for _ in range(n_levels)]
        self.uv_deg = [[0] * n_users for _ in range(n_levels)]
        self.vu_deg = [[0] * n_items for _ in range(n_levels)]
        self._rated_level = [dict() for _ in range(n_users)]  # item -> level

    # -- validation ---------------------------------------------------------

    def _check_user(self, i: int) -> None:
        if not 0 <= i < self.n_users:
            raise IndexError(f"user index {i} outside 0..{self.n_users - 1}")

    def _check_item(self, j: int) -> None:
        if not 0 <= j < self.n_items:
            raise IndexError(f"item index {j} outside 0..{self.n_items - 1}")

    def _check_level(self, k: int) -> None:
        if not 1 <= k <= self.n_levels:
            raise IndexError(f"rating level {k} outside 1..{self.n_levels}")

    # -- insertion ----------------------------------------------------------

    def add_social(self, a: int, b: int) -> None:
        self._check_user(a)
        self._check_user(b)
        if a == b:
            raise ValueError(f"self-loop social edge on user {a}")
        _insert(self._uu, self._uu_sets, self.uu_deg, a, b)
        _insert(self._uu, self._uu_sets, self.uu_deg, b, a)

    def add_similarity(self, a: int, b: int) -> None:
        self._check_item(a)
        self._check_item(b)
        if a == b:
            raise ValueError(f"self-loop similarity edge on item {a}")
        _insert(self._vv, self._vv_sets, self.vv_deg, a, b)
        _insert(self._vv, self._vv_sets, self.vv_deg, b, a)

    def add_rating(self, u: int, v: int, level: int) -> None:
        self._check_user(u)
        self._check_item(v)
        self._check_level(level)
        prev = self._rated_level[u].get(v)
        if prev is not None:
            if prev == level:
                return
            raise ValueError(f"user {u} already rated item {v} at level {prev}, got {level}")
        self._rated_level[u][v] = level
        bisect.insort(self._uv[level - 1][u], v)
        self.uv_deg[level - 1][u] += 1
        bisect.insort(self._vu[level - 1][v], u)
        self.vu_deg[level - 1][v] += 1

    def add_edge(self, a: NodeId, b: NodeId, edge_type: str, level: int | None = None) -> None:
        """Generic typed insertion; dispatches on edge_type."""
        if edge_type == SOCIAL:
            if a.kind != NodeKind.USER or b.kind != NodeKind.USER:
                raise TypeError(f"social edge needs two users, got {a.kind.value}-{b.kind.value}")
            self.add_social(a.index, b.index)
        elif edge_type == SIMILARITY:
            if a.kind != NodeKind.ITEM or b.kind != NodeKind.ITEM:
                raise TypeError(f"similarity edge needs two items, got {a.kind.value}-{b.kind.value}")
            self.add_similarity(a.index, b.index)
        elif edge_type == RATING:
            if level is None:
                raise ValueError("rating edge needs a level")
            if a.kind == NodeKind.USER and b.kind == NodeKind.ITEM:
                self.add_rating(a.index, b.index, level)
            elif a.kind == NodeKind.ITEM and b.kind == NodeKind.USER:
                self.add_rating(b.index, a.index, level)
            else:
                raise TypeError(f"rating edge needs a user and an item, got {a.kind.value}-{b.kind.value}")
        else:
            raise ValueError(f"unknown edge type {edge_type!r}")

    # -- queries (ascending index order) -------------------------------------

    def social_neighbors(self, u: int) -> list[int]:
        self._check_user(u)
        return self._uu[u]

    def sim_neighbors(self, v: int) -> list[int]:
        self._check_item(v)
        return self._vv[v]

    def rated_items(self, u: int, level: int) -> list[int]:
        self._check_user(u)
        self._check_level(level)
        return self._uv[level - 1][u]

    def rating_users(self, v: int, level: int) -> list[int]:
        self._check_item(v)
        self._check_level(level)
        return self._vu[level - 1][v]

    def neighbors(self, node: NodeId, edge_type: str, level: int | None = None) -> list[int]:
        if edge_type == SOCIAL:
            if node.kind != NodeKind.USER:
                raise TypeError("social neighbors are defined for users only")
            return list(self.social_neighbors(node.index))
        if edge_type == SIMILARITY:
            if node.kind != NodeKind.ITEM:
                raise TypeError("similarity neighbors are defined for items only")
            return list(self.sim_neighbors(node.index))
        if edge_type == RATING:
            if level is None:
                raise ValueError("rating neighbors need a level")
            if node.kind == NodeKind.USER:
                return list(self.rated_items(node.index, level))
            return list(self.rating_users(node.index, level))
        raise ValueError(f"unknown edge type {edge_type!r}")

    def max_social_degree(self) -> int:
        return max(self.uu_deg, default=0)

    def max_sim_degree(self) -> int:
        return max(self.vv_deg, default=0)
