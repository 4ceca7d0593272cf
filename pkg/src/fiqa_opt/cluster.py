"""Per-identity K-Means (Forgy init + Lloyd iterations)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datamodel import DataError, DatasetBundle
from .hashing import identity_seed


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    """Result of :func:`kmeans`.

    ``labels[i]`` is the index of the center nearest to point ``i`` (ties go to
    the lowest index). ``sse_history`` holds the SSE after the initial
    assignment and after every Lloyd iteration.
    """

    labels: np.ndarray
    centers: np.ndarray
    sse: float
    sse_history: tuple[float, ...] = field(default=())
    iterations: int = 0

    @property
    def n_clusters(self) -> int:
        return len(self.centers)

    def members(self) -> list[np.ndarray]:
        """Point indices of each cluster, ascending."""
        return [np.flatnonzero(self.labels == j) for j in range(self.n_clusters)]


def _sq_dists(points, centers):
    diff = points[:, None, :] - centers[None, :, :]
    return (diff * diff).sum(axis=2)


def _assign(points, centers):
    d = _sq_dists(points, centers)
    labels = d.argmin(axis=1)
    return labels, d[np.arange(len(points)), labels]


def _repair_empty(points, labels, own_dist, centers, k):
    # Move the point farthest from its center into each empty cluster, taking
    # only from clusters that keep at least one member.
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        eligible = counts[labels] >= 2
        cand = np.where(eligible, own_dist, -np.inf)
        p = int(np.argmax(cand))
        counts[labels[p]] -= 1
        labels[p] = j
        counts[j] = 1
        own_dist[p] = 0.0
        centers[j] = points[p]
    return labels


def _update(points, labels, counts, centers):
    sums = np.zeros_like(centers)
    np.add.at(sums, labels, points)
    filled = counts > 0
    new = centers.copy()
    new[filled] = sums[filled] / counts[filled, None]
    return new


def kmeans(points, c: int, seed: int, max_iters: int = 100, tol: float = 1e-6,
           init=None) -> ClusterAssignment:
    """Cluster ``points`` into ``min(c, len(points))`` groups.

    Centers start at distinct points drawn with ``np.random.default_rng(seed)``
    (or at ``points[init]`` when ``init`` is given). Lloyd iterations run until
    the SSE improves by less than ``tol`` or ``max_iters`` is reached. Empty
    clusters are re-seeded with the point farthest from its center. Clusters
    that are empty after the final assignment are dropped and labels compacted.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise DataError("kmeans needs a non-empty (n, D) point array")
    if c < 1:
        raise DataError("cluster count must be >= 1")
    n = len(points)
    k = min(int(c), n)
    if n == 1:
        return ClusterAssignment(np.zeros(1, dtype=np.int64), points.copy(), 0.0,
                                 (0.0, 0.0), 1)
    if init is None:
        init = np.random.default_rng(seed).choice(n, size=k, replace=False)
    else:
        init = np.asarray(init, dtype=np.int64)
        if len(init) != k or len(set(init.tolist())) != k:
            raise DataError(f"init must hold {k} distinct point indices")
    centers = points[init].copy()

    labels, own = _assign(points, centers)
    sse = float(own.sum())
    if k == n and sse == 0.0 and np.bincount(labels, minlength=k).max() == 1:
        # each point is its own center already; one Lloyd step changes nothing
        return ClusterAssignment(labels.astype(np.int64), centers, 0.0, (0.0, 0.0), 1)
    history = [sse]
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        counts = np.bincount(labels, minlength=k)
        if counts.min() == 0:
            labels = _repair_empty(points, labels.copy(), own.copy(), centers, k)
            counts = np.bincount(labels, minlength=k)
        centers = _update(points, labels, counts, centers)
        labels, own = _assign(points, centers)
        new_sse = float(own.sum())
        history.append(new_sse)
        improved = sse - new_sse
        sse = new_sse
        if improved < tol:
            break

    used = np.flatnonzero(np.bincount(labels, minlength=k))
    if len(used) < k:
        remap = np.full(k, -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        labels = remap[labels]
        centers = centers[used]
    return ClusterAssignment(
        labels=labels.astype(np.int64),
        centers=centers,
        sse=sse,
        sse_history=tuple(history),
        iterations=iterations,
    )


def kmeans_batch(point_sets, c: int, seeds, max_iters: int = 100, tol: float = 1e-6,
                 chunk_elements: int = 200_000) -> list[ClusterAssignment]:
    """Run :func:`kmeans` on many small point sets at once.

    Sets are padded and iterated in lockstep; every set's result is identical
    to ``kmeans(points, c, seed)`` on its own.
    """
    results: list[ClusterAssignment | None] = [None] * len(point_sets)
    pending = []
    for i, (pts, seed) in enumerate(zip(point_sets, seeds)):
        pts = np.asarray(pts, dtype=np.float64)
        if len(pts) <= min(c, 2):
            results[i] = kmeans(pts, c, seed, max_iters, tol)
        else:
            pending.append(i)
    pending.sort(key=lambda i: len(point_sets[i]))
    start = 0
    while start < len(pending):
        stop = start + 1
        dim = np.shape(point_sets[pending[start]])[1]
        while stop < len(pending):
            n_max = len(point_sets[pending[stop]])
            if (stop + 1 - start) * n_max * min(c, n_max) * dim > chunk_elements:
                break
            stop += 1
        chunk = pending[start:stop]
        out = _kmeans_lockstep([np.asarray(point_sets[i], dtype=np.float64) for i in chunk],
                               c, [seeds[i] for i in chunk], max_iters, tol)
        for i, res in zip(chunk, out):
            results[i] = res
        start = stop
    return results


def _kmeans_lockstep(sets, c, seeds, max_iters, tol):
    m = len(sets)
    ns = np.array([len(p) for p in sets])
    ks = np.minimum(c, ns)
    n_max, k_max, dim = ns.max(), ks.max(), sets[0].shape[1]
    pts = np.zeros((m, n_max, dim))
    centers = np.zeros((m, k_max, dim))
    for s, p in enumerate(sets):
        pts[s, : ns[s]] = p
        init = np.random.default_rng(seeds[s]).choice(ns[s], size=ks[s], replace=False)
        centers[s, : ks[s]] = p[init]
    point_ok = np.arange(n_max)[None, :] < ns[:, None]
    center_ok = np.arange(k_max)[None, :] < ks[:, None]

    def assign(sub, cent):
        diff = pts[sub, :, None, :] - cent[:, None, :, :]
        d = (diff * diff).sum(axis=3)
        d[~np.broadcast_to(center_ok[sub, None, :], d.shape)] = np.inf
        lab = d.argmin(axis=2)
        own = np.take_along_axis(d, lab[:, :, None], axis=2)[:, :, 0]
        return lab, own

    labels, own = assign(slice(None), centers)
    sse = [float(own[s, : ns[s]].sum()) for s in range(m)]
    history = [[v] for v in sse]
    iterations = np.zeros(m, dtype=np.int64)
    active = np.ones(m, dtype=bool)
    # each point's own center already (k == n, zero SSE): the scalar path stops here
    done_early = np.zeros(m, dtype=bool)
    for s in range(m):
        if ks[s] == ns[s] and sse[s] == 0.0 and \
                np.bincount(labels[s, : ns[s]], minlength=ks[s]).max() == 1:
            done_early[s] = True
            active[s] = False
            history[s].append(0.0)
            iterations[s] = 1

    flat_slot = np.arange(m)[:, None] * k_max
    dummy = m * k_max
    for _ in range(max_iters):
        if not active.any():
            break
        iterations[active] += 1
        labels_upd = labels.copy()
        new_centers = centers.copy()
        counts = np.zeros((m, k_max), dtype=np.int64)
        for s in np.flatnonzero(active):
            n, k = ns[s], ks[s]
            cnt = np.bincount(labels[s, :n], minlength=k)
            if cnt.min() == 0:
                lab_s = _repair_empty(pts[s, :n], labels[s, :n].copy(), own[s, :n].copy(),
                                      new_centers[s, :k], k)
                labels_upd[s, :n] = lab_s
                cnt = np.bincount(lab_s, minlength=k)
            counts[s, :k] = cnt
        use = point_ok & active[:, None]
        index = np.where(use, flat_slot + labels_upd, dummy).ravel()
        sums = np.zeros((m * k_max + 1, dim))
        np.add.at(sums, index, pts.reshape(-1, dim))
        sums = sums[:-1].reshape(m, k_max, dim)
        filled = (counts > 0) & active[:, None]
        new_centers[filled] = sums[filled] / counts[filled][:, None]
        centers = new_centers
        sub = np.flatnonzero(active)
        labels[sub], own[sub] = assign(sub, centers[sub])
        for s in np.flatnonzero(active):
            new_sse = float(own[s, : ns[s]].sum())
            history[s].append(new_sse)
            improved = sse[s] - new_sse
            sse[s] = new_sse
            if improved < tol:
                active[s] = False

    out = []
    for s in range(m):
        n, k = ns[s], ks[s]
        lab = labels[s, :n].astype(np.int64)
        cen = centers[s, :k].copy()
        if done_early[s]:
            out.append(ClusterAssignment(lab, cen, 0.0, (0.0, 0.0), 1))
            continue
        used = np.flatnonzero(np.bincount(lab, minlength=k))
        if len(used) < k:
            remap = np.full(k, -1, dtype=np.int64)
            remap[used] = np.arange(len(used))
            lab = remap[lab]
            cen = cen[used]
        out.append(ClusterAssignment(lab, cen, sse[s], tuple(history[s]), int(iterations[s])))
    return out


def cluster_identity(bundle: DatasetBundle, identity_id: str, c: int,
                     seed: int) -> ClusterAssignment:
    """K-Means over one identity's embeddings.

    The RNG seed is ``seed XOR fnv1a64(identity_id)`` so that results do not
    depend on the order identities are processed in.
    """
    try:
        members = bundle.identity_index[identity_id]
    except KeyError:
        raise DataError(f"unknown identity {identity_id!r}") from None
    return kmeans(bundle.identity_vectors[identity_id], c, identity_seed(seed, identity_id))


def cluster_all(bundle: DatasetBundle, c: int, seed: int) -> dict[str, ClusterAssignment]:
    """:func:`cluster_identity` for every identity, computed in one batch."""
    ids = list(bundle.identity_index)
    sets = [bundle.identity_vectors[k] for k in ids]
    seeds = [identity_seed(seed, k) for k in ids]
    return dict(zip(ids, kmeans_batch(sets, c, seeds)))
