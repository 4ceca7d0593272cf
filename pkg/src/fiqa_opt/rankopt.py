"""Rank-based optimization of baseline quality labels.

Each repetition clusters every identity, samples mated pairs, ranks the pair
similarities and the baseline qualities on a fractional [0, 1] scale and moves
every image's quality rank a fraction ``theta`` toward the mean similarity rank
of the pairs in which it is the lower-quality member. Ranks are averaged over
repetitions, images are re-sorted by the averaged rank and receive the
baseline scores in that order, so the score distribution is unchanged.
"""

from __future__ import annotations

from collections.abc import Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusterAssignment, cluster_all
from .datamodel import DataError, DatasetBundle, OptimConfig, QualityTable
from .hashing import derive_seed
from .pairing import MatedPairList, sample_mated_pairs


def fractional_ranks(values) -> np.ndarray:
    """Rank ``p / (n - 1)`` of each value's stable ascending sort position ``p``.

    A single value gets rank 0.5.
    """
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if n == 0:
        return np.zeros(0)
    if n == 1:
        return np.array([0.5])
    order = np.argsort(values, kind="stable")
    ranks = np.empty(n)
    ranks[order] = np.arange(n) / (n - 1)
    return ranks


@dataclass(frozen=True, eq=False)
class RankTable:
    """Sorted values with the fractional rank of every item."""

    sorted_values: tuple[float, ...]
    rank_of: dict

    def __len__(self):
        return len(self.sorted_values)


def build_rank_table(values) -> RankTable:
    """Rank ``(item, value)`` pairs ascending, ties broken by input order."""
    values = list(values)
    if not values:
        raise DataError("cannot rank an empty list")
    items = [item for item, _ in values]
    if len(set(items)) != len(items):
        raise DataError("rank table items must be unique")
    vals = np.array([v for _, v in values], dtype=np.float64)
    ranks = fractional_ranks(vals)
    return RankTable(
        sorted_values=tuple(np.sort(vals, kind="stable").tolist()),
        rank_of={item: float(r) for item, r in zip(items, ranks)},
    )


def mean_pair_rank(image_idx: int, pair_list: MatedPairList, sim_ranks: RankTable,
                   qualities) -> float | None:
    """Mean similarity rank of the pairs where ``image_idx`` has the lower quality.

    ``sim_ranks`` is keyed by pair index and ``qualities`` is indexable by image
    index. A pair whose members have equal quality counts for both. Returns
    ``None`` when no pair qualifies.
    """
    total = 0.0
    count = 0
    q_self = qualities[image_idx]
    for l, (a, p) in enumerate(zip(pair_list.anchors.tolist(), pair_list.partners.tolist())):
        if a == image_idx:
            other = p
        elif p == image_idx:
            other = a
        else:
            continue
        if q_self <= qualities[other]:
            total += sim_ranks.rank_of[l]
            count += 1
    if count == 0:
        return None
    return total / count


def update_index(quality_rank: float, mean_rank: float | None, theta: float) -> float:
    """Move ``quality_rank`` a fraction ``theta`` toward ``mean_rank``."""
    if mean_rank is None:
        return quality_rank
    updated = quality_rank + theta * (mean_rank - quality_rank)
    lo, hi = min(quality_rank, mean_rank), max(quality_rank, mean_rank)
    return min(max(updated, lo), hi)


def mean_pair_ranks(pairs: MatedPairList, scores: np.ndarray, n_images: int):
    """Vectorized :func:`mean_pair_rank` for every image.

    Returns ``(means, counts)``; ``means`` is NaN where ``counts`` is zero.
    """
    if len(pairs) == 0:
        return np.full(n_images, np.nan), np.zeros(n_images, dtype=np.int64)
    sim_rank = fractional_ranks(pairs.similarities)
    qa = scores[pairs.anchors]
    qp = scores[pairs.partners]
    # interleave (anchor, partner) per pair so sums accumulate in pair order
    idx = np.stack([pairs.anchors, pairs.partners], axis=1).ravel()
    keep = np.stack([qa <= qp, qp <= qa], axis=1).ravel()
    weights = np.repeat(sim_rank, 2)
    sums = np.bincount(idx[keep], weights=weights[keep], minlength=n_images)
    counts = np.bincount(idx[keep], minlength=n_images)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return means, counts


def updated_ranks(quality_rank: np.ndarray, means: np.ndarray, theta: float) -> np.ndarray:
    """Vectorized :func:`update_index`; NaN means leave the rank unchanged."""
    has = ~np.isnan(means)
    m = np.where(has, means, quality_rank)
    out = quality_rank + theta * (m - quality_rank)
    out = np.clip(out, np.minimum(quality_rank, m), np.maximum(quality_rank, m))
    return np.where(has, out, quality_rank)


@dataclass(frozen=True)
class RepetitionResult:
    updated: np.ndarray
    n_pairs: int


@dataclass(frozen=True, eq=False)
class OptimizedQualityTable:
    """Optimized scores plus the averaged rank that produced them."""

    entries: QualityTable
    mean_opt_index: dict[str, float]
    baseline_rank: dict[str, float]
    pairs_per_repetition: tuple[int, ...] = field(default=())


def repetition_seeds(seed: int, r: int) -> tuple[int, int]:
    """``(cluster_seed, pair_seed)`` of repetition ``r`` (1-based)."""
    rep = derive_seed(seed, "repetition", r)
    return derive_seed(rep, "cluster"), derive_seed(rep, "pairs")


def run_repetition(bundle: DatasetBundle, config: OptimConfig, r: int,
                   quality_rank: np.ndarray,
                   assignments: Mapping[str, ClusterAssignment] | None = None
                   ) -> RepetitionResult:
    cluster_seed, pair_seed = repetition_seeds(config.seed, r)
    if assignments is None:
        assignments = cluster_all(bundle, config.clusters, cluster_seed)
    pairs = sample_mated_pairs(bundle, assignments, pair_seed)
    means, _ = mean_pair_ranks(pairs, bundle.scores, bundle.n_images)
    return RepetitionResult(updated_ranks(quality_rank, means, config.theta), len(pairs))


def optimize_labels(bundle: DatasetBundle, config: OptimConfig,
                    assignments: Mapping[str, ClusterAssignment] | None = None,
                    threads: int = 1) -> OptimizedQualityTable:
    """Optimize the bundle's baseline qualities.

    Args:
        bundle: validated dataset with at least two images.
        config: clusters, theta, repeats and seed.
        assignments: fixed per-identity clusterings reused by every repetition
            instead of re-clustering (for controlled experiments).
        threads: worker threads for the repetitions; output does not depend
            on it.

    Returns:
        Table whose scores are a permutation of the baseline scores.
    """
    n = bundle.n_images
    if n < 2:
        raise DataError("label optimization needs at least two images")
    scores = bundle.scores
    quality_rank = fractional_ranks(scores)

    reps = range(1, config.repeats + 1)

    def work(r):
        return run_repetition(bundle, config, r, quality_rank, assignments)

    if threads > 1 and config.repeats > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, reps))
    else:
        results = [work(r) for r in reps]

    total = np.zeros(n)
    for res in results:
        total = total + res.updated
    mean_index = total / config.repeats

    ids = bundle.image_ids
    id_order = np.empty(n, dtype=np.int64)
    id_order[np.array(sorted(range(n), key=ids.__getitem__))] = np.arange(n)
    order = np.lexsort((id_order, quality_rank, mean_index))
    new_scores = np.empty(n)
    new_scores[order] = np.sort(scores, kind="stable")

    return OptimizedQualityTable(
        entries=QualityTable(zip(ids, new_scores.tolist())),
        mean_opt_index=dict(zip(ids, mean_index.tolist())),
        baseline_rank=dict(zip(ids, quality_rank.tolist())),
        pairs_per_repetition=tuple(res.n_pairs for res in results),
    )
