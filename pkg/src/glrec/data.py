"""Dataset ingestion, deterministic splitting, and synthetic data generation.

File formats: tab-separated UTF-8 text, LF or CRLF line endings, `#` comment
lines and blank lines ignored. Ratings files carry `user<TAB>item<TAB>rating`,
link files carry `user<TAB>user`.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .graph import HeteroGlobalGraph, RatingScale

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InteractionTriple:
    user: str
    item: str
    rating: float


def _data_lines(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def load_ratings(path) -> list[InteractionTriple]:
    """Parse rating triples in file order."""
    triples = []
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}: line {lineno}: expected user<TAB>item<TAB>rating, got {line!r}")
        user, item, rating_s = parts
        try:
            rating = float(rating_s)
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: non-numeric rating {rating_s!r}") from None
        triples.append(InteractionTriple(user, item, rating))
    return triples


def load_links(path) -> list[tuple[str, str]]:
    """Parse user-user link pairs; self-links are dropped (with a warning)."""
    pairs = []
    dropped = 0
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}: line {lineno}: expected user<TAB>user, got {line!r}")
        a, b = parts
        if a == b:
            dropped += 1
            continue
        pairs.append((a, b))
    if dropped:
        logger.warning("%s: dropped %d self-links", path, dropped)
    return pairs


def split(triples, ratios=(0.7, 0.1, 0.2), seed: int = 0):
    """Shuffle under `seed`, then slice train=floor(r0*n), valid=floor(r1*n), test=rest."""
    if not math.isclose(sum(ratios), 1.0):
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    n = len(triples)
    order = np.random.default_rng(np.random.SeedSequence((seed, 7))).permutation(n)
    n_train = int(math.floor(ratios[0] * n))
    n_valid = int(math.floor(ratios[1] * n))
    shuffled = [triples[i] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_valid],
        shuffled[n_train + n_valid :],
    )


@dataclass
class DatasetBundle:
    """Split triples, social links, dense id maps, and the rating scale."""

    train: list[InteractionTriple]
    valid: list[InteractionTriple]
    test: list[InteractionTriple]
    links: list[tuple[str, str]]
    user_ids: list[str]                 # dense index -> raw id
    item_ids: list[str]
    user_index: dict[str, int] = field(repr=False, default=None)
    item_index: dict[str, int] = field(repr=False, default=None)
    scale: RatingScale = None

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def indexed(self, which: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(user_idx, item_idx, rating) arrays for one split."""
        triples = getattr(self, which)
        u = np.array([self.user_index[t.user] for t in triples], dtype=np.intp)
        v = np.array([self.item_index[t.item] for t in triples], dtype=np.intp)
        r = np.array([t.rating for t in triples], dtype=np.float64)
        return u, v, r

    def cold_mask(self, which: str) -> np.ndarray:
        """True where a split pair touches a user or item unseen in training."""
        seen_u = {self.user_index[t.user] for t in self.train}
        seen_v = {self.item_index[t.item] for t in self.train}
        u, v, _ = self.indexed(which)
        return np.array([(a not in seen_u) or (b not in seen_v) for a, b in zip(u, v)], dtype=bool)


def build_bundle(triples, links, ratios=(0.7, 0.1, 0.2), seed: int = 0) -> DatasetBundle:
    """Dedup (keep last occurrence per user-item pair), split, and index."""
    last = {}
    for t in triples:
        last[(t.user, t.item)] = t
    deduped = list(last.values())
    train, valid, test = split(deduped, ratios, seed)

    users = sorted({t.user for t in deduped} | {a for a, _ in links} | {b for _, b in links})
    items = sorted({t.item for t in deduped})
    bundle = DatasetBundle(
        train=train,
        valid=valid,
        test=test,
        links=links,
        user_ids=users,
        item_ids=items,
        user_index={u: i for i, u in enumerate(users)},
        item_index={v: j for j, v in enumerate(items)},
        scale=RatingScale([t.rating for t in train]),
    )
    return bundle


def train_rating_matrix(bundle: DatasetBundle):
    """Sparse N x M rating matrix built from the training split only."""
    from scipy import sparse

    u, v, r = bundle.indexed("train")
    return sparse.csc_matrix((r, (u, v)), shape=(bundle.n_users, bundle.n_items))


def build_graph(bundle: DatasetBundle, k_items: int) -> HeteroGlobalGraph:
    """Assemble the global graph: social + train rating partitions + item-item edges."""
    from .learner import build_item_item_edges

    g = HeteroGlobalGraph(bundle.n_users, bundle.n_items, bundle.scale.K)
    for a, b in bundle.links:
        g.add_social(bundle.user_index[a], bundle.user_index[b])
    for t in bundle.train:
        g.add_rating(bundle.user_index[t.user], bundle.item_index[t.item], bundle.scale.level_of(t.rating))
    if k_items > 0:
        for j, m in build_item_item_edges(train_rating_matrix(bundle), k_items):
            g.add_similarity(j, m)
    return g


# ---------------------------------------------------------------------------
# Synthetic data

_LATENT_DIM = 8
_RATING_GAIN = 1.5


def _sample_distinct_pairs(rng, n_rows, n_cols, count):
    """Distinct (row, col) pairs, deterministic under rng."""
    chosen = []
    seen = set()
    space = n_rows * n_cols
    if count > space:
        raise ValueError(f"cannot sample {count} distinct pairs from {space}")
    while len(chosen) < count:
        draw = rng.integers(0, space, size=2 * (count - len(chosen)) + 8)
        for code in draw:
            code = int(code)
            if code in seen:
                continue
            seen.add(code)
            chosen.append((code // n_cols, code % n_cols))
            if len(chosen) == count:
                break
    return chosen


def generate_synthetic(n_users, n_items, n_ratings, n_links, noise_frac, seed, out_dir):
    """Write a latent-factor synthetic dataset: ratings, links, and a manifest.

    Ratings are clipped rounded scaled dot products of d=8 latent vectors on a
    1..5 scale. Good social links join users with high latent cosine; a
    round(noise_frac * n_links) remainder is uniformly random noise, recorded
    in the manifest together with the cosine threshold of the good links.
    """
    if min(n_users, n_items, n_ratings, n_links) <= 0:
        raise ValueError("all synthetic counts must be positive")
    if not 0.0 <= noise_frac <= 1.0:
        raise ValueError(f"noise_frac must be in [0, 1], got {noise_frac}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 11)))
    os.makedirs(out_dir, exist_ok=True)

    lat_u = rng.normal(0.0, 1.0, size=(n_users, _LATENT_DIM))
    lat_v = rng.normal(0.0, 1.0, size=(n_items, _LATENT_DIM))

    pairs = _sample_distinct_pairs(rng, n_users, n_items, n_ratings)
    ratings_path = os.path.join(out_dir, "ratings.tsv")
    with open(ratings_path, "w", encoding="utf-8", newline="\n") as fh:
        for u, v in pairs:
            z = lat_u[u] @ lat_v[v] / math.sqrt(_LATENT_DIM)
            r = int(np.clip(np.rint(3.0 + _RATING_GAIN * z), 1, 5))
            fh.write(f"u{u}\ti{v}\t{r}\n")

    n_noise = int(round(noise_frac * n_links))
    n_good = n_links - n_noise
    norms = np.linalg.norm(lat_u, axis=1)

    # good links: highest-cosine pairs out of a random candidate pool
    pool_size = min(max(50 * n_links, 1000), n_users * (n_users - 1) // 2)
    pool = set()
    while len(pool) < pool_size:
        draw = rng.integers(0, n_users, size=(2 * (pool_size - len(pool)) + 8, 2))
        for a, b in draw:
            a, b = int(a), int(b)
            if a == b:
                continue
            pool.add((min(a, b), max(a, b)))
            if len(pool) == pool_size:
                break
    pool = sorted(pool)
    cosines = np.array([lat_u[a] @ lat_u[b] / (norms[a] * norms[b]) for a, b in pool])
    order = np.lexsort((np.arange(len(pool)), -cosines))
    good = [pool[i] for i in order[:n_good]]
    threshold = float(cosines[order[n_good - 1]]) if n_good else 1.0

    noise = []
    taken = set(good)
    while len(noise) < n_noise:
        draw = rng.integers(0, n_users, size=(2 * (n_noise - len(noise)) + 8, 2))
        for a, b in draw:
            a, b = int(a), int(b)
            if a == b:
                continue
            pair = (min(a, b), max(a, b))
            if pair in taken:
                continue
            taken.add(pair)
            noise.append(pair)
            if len(noise) == n_noise:
                break

    links_path = os.path.join(out_dir, "links.tsv")
    with open(links_path, "w", encoding="utf-8", newline="\n") as fh:
        for a, b in good:
            fh.write(f"u{a}\tu{b}\n")
        for a, b in noise:
            fh.write(f"u{a}\tu{b}\n")

    manifest = {
        "n_users": n_users,
        "n_items": n_items,
        "n_ratings": n_ratings,
        "n_links": n_links,
        "noise_frac": noise_frac,
        "seed": seed,
        "latent_dim": _LATENT_DIM,
        "cosine_threshold": threshold,
        "n_noise_links": n_noise,
        "noise_links": [[f"u{a}", f"u{b}"] for a, b in noise],
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ratings_path, links_path, manifest_path
