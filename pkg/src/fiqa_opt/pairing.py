"""Cluster-stratified mated-pair sampling."""

from __future__ import annotations

import csv
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from .cluster import ClusterAssignment
from .datamodel import DataError, DatasetBundle
from .hashing import identity_seed


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between ``a`` and ``b``, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"dimension mismatch {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DataError("cosine similarity of a zero-norm vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def pair_similarities(vectors: np.ndarray, left, right) -> np.ndarray:
    """Row-wise cosine similarity between ``vectors[left]`` and ``vectors[right]``."""
    a = vectors[left]
    b = vectors[right]
    norms = np.linalg.norm(vectors, axis=1)
    sims = np.einsum("ij,ij->i", a, b) / (norms[left] * norms[right])
    return np.clip(sims, -1.0, 1.0)


@dataclass(frozen=True)
class MatedPair:
    anchor_idx: int
    partner_idx: int
    similarity: float


@dataclass(frozen=True, eq=False)
class MatedPairList:
    """Sampled mated pairs stored column-wise.

    ``anchors``, ``partners`` and ``similarities`` are parallel arrays of
    length ``L``.
    """

    anchors: np.ndarray
    partners: np.ndarray
    similarities: np.ndarray

    def __len__(self):
        return len(self.anchors)

    @property
    def pairs(self) -> list[MatedPair]:
        return [
            MatedPair(int(a), int(p), float(s))
            for a, p, s in zip(self.anchors, self.partners, self.similarities)
        ]

    @property
    def per_image(self) -> dict[int, list[int]]:
        """Map image index -> indices of the pairs it takes part in."""
        out: dict[int, list[int]] = {}
        for l, (a, p) in enumerate(zip(self.anchors.tolist(), self.partners.tolist())):
            out.setdefault(a, []).append(l)
            out.setdefault(p, []).append(l)
        return out

    @classmethod
    def from_pairs(cls, vectors, pairs) -> "MatedPairList":
        """Build a list from explicit ``(anchor, partner)`` index pairs."""
        pairs = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        vectors = np.asarray(vectors, dtype=np.float64)
        sims = pair_similarities(vectors, pairs[:, 0], pairs[:, 1])
        return cls(pairs[:, 0].copy(), pairs[:, 1].copy(), sims)


def expected_pair_count(assignments: Mapping[str, ClusterAssignment]) -> int:
    return sum(len(a.labels) * (a.n_clusters - 1) for a in assignments.values())


def sample_mated_pairs(bundle: DatasetBundle,
                       assignments: Mapping[str, ClusterAssignment],
                       seed: int) -> MatedPairList:
    """Pair every image with one random image from each other cluster of its identity.

    Identities are visited in bundle order, images in bundle order within an
    identity and partner clusters in ascending order. The partner is member
    ``floor(u * size)`` of the target cluster for a uniform ``u``; draws for
    identity ``k`` come from ``np.random.default_rng(seed XOR fnv1a64(k))``.
    """
    members_parts, label_parts, offset_parts, count_parts, draws = [], [], [], [], []
    offset = 0
    for identity, members in bundle.identity_index.items():
        try:
            assign = assignments[identity]
        except KeyError:
            raise DataError(f"no cluster assignment for identity {identity!r}") from None
        if len(assign.labels) != len(members):
            raise DataError(f"assignment size mismatch for identity {identity!r}")
        n_clusters = assign.n_clusters
        if n_clusters < 2:
            continue
        m = len(members)
        rng = np.random.default_rng(identity_seed(seed, identity))
        draws.append(rng.random(m * (n_clusters - 1)))
        members_parts.append(np.asarray(members, dtype=np.int64))
        label_parts.append(assign.labels + offset)
        offset_parts.append(np.full(m, offset, dtype=np.int64))
        count_parts.append(np.full(m, n_clusters, dtype=np.int64))
        offset += n_clusters
    if not draws:
        empty = np.zeros(0, dtype=np.int64)
        return MatedPairList(empty, empty.copy(), np.zeros(0))

    members = np.concatenate(members_parts)
    labels = np.concatenate(label_parts)
    offsets = np.concatenate(offset_parts)
    u = np.concatenate(draws)
    # members of every (global) cluster, ascending, laid out cluster by cluster
    flat = members[np.argsort(labels, kind="stable")]
    sizes = np.bincount(labels, minlength=offset)
    starts = np.cumsum(sizes) - sizes

    per_anchor = np.concatenate(count_parts) - 1
    anchors = np.repeat(members, per_anchor)
    row_start = np.repeat(np.cumsum(per_anchor) - per_anchor, per_anchor)
    j = np.arange(len(anchors)) - row_start
    own_local = np.repeat(labels - offsets, per_anchor)
    # j-th cluster of the identity other than the anchor's own
    target = np.repeat(offsets, per_anchor) + j + (j >= own_local)
    pick = np.minimum((u * sizes[target]).astype(np.int64), sizes[target] - 1)
    partners = flat[starts[target] + pick]
    sims = pair_similarities(bundle.vectors, anchors, partners)
    return MatedPairList(anchors, partners, sims)


def write_pair_list(path, bundle: DatasetBundle, pairs: MatedPairList) -> None:
    """Debug dump as ``anchor_id,partner_id,similarity``."""
    ids = bundle.image_ids
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["anchor_id", "partner_id", "similarity"])
        for a, p, s in zip(pairs.anchors, pairs.partners, pairs.similarities):
            writer.writerow([ids[a], ids[p], repr(float(s))])
