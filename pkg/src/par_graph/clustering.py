"""Group detection from a relation matrix.

Self-tuning spectral clustering: normalized Laplacian, cyclic Jacobi
eigensolver, eigengap cluster count, k-means on row-normalized eigenvectors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .config import ClusterConfig
from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Partition:
    groups: Tuple[FrozenSet[int], ...]
    singletons: FrozenSet[int] = frozenset()

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for group in self.groups:
            if len(group) < 2:
                raise InvalidArgumentError("partition groups need at least two members")
            if group & seen:
                raise InvalidArgumentError("partition groups overlap")
            seen |= group
        if self.singletons & seen:
            raise InvalidArgumentError("a singleton also appears in a group")

    @property
    def members(self) -> FrozenSet[int]:
        return frozenset().union(*self.groups, self.singletons)

    def canonical(self) -> "Partition":
        return Partition(
            groups=tuple(sorted(self.groups, key=lambda g: sorted(g))),
            singletons=self.singletons,
        )

    @classmethod
    def from_labels(cls, labels: Sequence[int], ids: Sequence[int]) -> "Partition":
        clusters: Dict[int, List[int]] = {}
        for label, sid in zip(labels, ids):
            clusters.setdefault(int(label), []).append(sid)
        groups, singletons = [], set()
        for label in sorted(clusters):
            members = clusters[label]
            if len(members) >= 2:
                groups.append(frozenset(members))
            else:
                singletons.update(members)
        return cls(groups=tuple(groups), singletons=frozenset(singletons))

    @classmethod
    def all_singletons(cls, ids: Sequence[int]) -> "Partition":
        return cls(groups=(), singletons=frozenset(ids))


def partition_to_relation(partition: Partition, ids: Sequence[int]) -> np.ndarray:
    index = {sid: i for i, sid in enumerate(ids)}
    if set(index) != set(partition.members):
        raise InvalidArgumentError("partition does not cover the given subject ids")
    rel = np.eye(len(ids))
    for group in partition.groups:
        rows = [index[m] for m in group]
        rel[np.ix_(rows, rows)] = 1.0
    return rel


def jacobi_eigh(
    matrix: np.ndarray, tol: float = 1e-10, max_sweeps: int = 100
) -> Tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigensolver for a symmetric matrix.

    Returns ascending eigenvalues and the matching eigenvectors as columns.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = float(np.sqrt((np.triu(a, 1) ** 2).sum() * 2.0))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 1.0 / (2.0 * theta)
                else:
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        logger.warning("jacobi_eigh: no convergence after %d sweeps", max_sweeps)
    values = np.diag(a).copy()
    order = np.argsort(values, kind="stable")
    return values[order], v[:, order]


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 100) -> np.ndarray:
    """Lloyd's k-means with farthest-point seeding; returns a label per row."""
    m = points.shape[0]
    rng = np.random.default_rng(seed)
    centers = [points[int(rng.integers(m))]]
    for _ in range(1, k):
        d2 = np.min(((points[:, None, :] - np.array(centers)[None, :, :]) ** 2).sum(-1), axis=1)
        centers.append(points[int(np.argmax(d2))])
    centers = np.array(centers)

    labels = np.full(m, -1)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        new_labels = np.argmin(d2, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = points[members].mean(axis=0)
            else:
                logger.warning("kmeans: cluster %d is empty, keeping its center", c)
    return labels


def _check_relation(relation: np.ndarray) -> np.ndarray:
    relation = np.asarray(relation, dtype=np.float64)
    if relation.ndim != 2 or relation.shape[0] != relation.shape[1] or relation.size == 0:
        raise InvalidArgumentError(f"relation matrix must be square, got {relation.shape}")
    if not np.all(np.isfinite(relation)):
        raise InvalidArgumentError("relation matrix has non-finite entries")
    if np.max(np.abs(relation - relation.T)) > 1e-9:
        raise InvalidArgumentError("relation matrix is not symmetric")
    return relation


def _local_scaling(affinity: np.ndarray, k: int) -> np.ndarray:
    n = affinity.shape[0]
    dist = 1.0 - affinity
    np.fill_diagonal(dist, 0.0)
    if n < 2:
        return np.zeros_like(affinity)
    kth = min(k, n - 1)
    sigma = np.sort(dist + np.diag(np.full(n, np.inf)), axis=1)[:, kth - 1]
    sigma = np.maximum(sigma, 1e-12)
    scaled = np.exp(-(dist ** 2) / np.outer(sigma, sigma))
    np.fill_diagonal(scaled, 0.0)
    return scaled


def above_floor(relation: np.ndarray, floor: float) -> np.ndarray:
    """Map off-diagonal affinities from [floor, 1] onto [0, 1]; the diagonal is zeroed."""
    if not 0.0 <= floor < 1.0:
        raise InvalidArgumentError(f"affinity floor must lie in [0, 1), got {floor}")
    weights = np.clip((relation - floor) / (1.0 - floor), 0.0, 1.0)
    np.fill_diagonal(weights, 0.0)
    return weights


def cluster_groups(
    relation: np.ndarray,
    k_max: Optional[int] = None,
    ids: Optional[Sequence[int]] = None,
    config: Optional[ClusterConfig] = None,
    floor: float = 0.0,
) -> Partition:
    """Partition subjects from a relation matrix.

    ``floor`` is the lowest value an off-diagonal entry can take (a relation
    matrix fused with the distance affinity never drops below it); a non-null
    ``config.affinity_floor`` overrides it.
    """
    config = config or ClusterConfig()
    relation = _check_relation(relation)
    n = relation.shape[0]
    ids = list(range(n)) if ids is None else list(ids)
    if len(ids) != n:
        raise InvalidArgumentError("ids length does not match the relation matrix")
    k_max = k_max if k_max is not None else config.k_max
    if k_max is not None and not 1 <= k_max <= n:
        raise InvalidArgumentError(f"k_max must lie in [1, {n}], got {k_max}")
    if n == 1:
        return Partition.all_singletons(ids)

    floor = config.affinity_floor if config.affinity_floor is not None else floor
    weights = above_floor(relation, floor)

    # zero-degree subjects are singletons before the spectral step
    active = np.flatnonzero(weights.sum(axis=1) > 1e-12)
    m = active.size
    if m < 2:
        return Partition.all_singletons(ids)
    w = weights[np.ix_(active, active)]
    spectral = _local_scaling(w, config.local_scaling_k) if config.local_scaling else w

    degree = spectral.sum(axis=1)
    inv_sqrt = np.zeros_like(degree)
    nonzero = degree > 0
    inv_sqrt[nonzero] = 1.0 / np.sqrt(degree[nonzero])
    laplacian = np.eye(m) - inv_sqrt[:, None] * spectral * inv_sqrt[None, :]
    laplacian = (laplacian + laplacian.T) / 2.0

    values, vectors = jacobi_eigh(laplacian, tol=config.jacobi_tol)
    k_limit = k_max if k_max is not None else int(np.ceil(m / 2))
    k_limit = max(1, min(k_limit, m - 1))
    gaps = values[1 : k_limit + 1] - values[:k_limit]
    n_clusters = int(np.flatnonzero(gaps >= gaps.max() - 1e-9)[0]) + 1
    logger.debug("cluster_groups: m=%d eigengap picks k=%d", m, n_clusters)

    embedding = vectors[:, :n_clusters]
    norms = np.linalg.norm(embedding, axis=1, keepdims=True)
    embedding = np.divide(embedding, norms, out=np.zeros_like(embedding), where=norms > 0)
    labels = kmeans(embedding, n_clusters, seed=config.seed, max_iter=config.max_iter)
    labels = _detach_weak_members(w, labels, config.min_member_affinity)

    full = -(np.arange(n) + 1)
    full[active] = labels
    return Partition.from_labels(full.tolist(), ids)


def _detach_weak_members(w: np.ndarray, labels: np.ndarray, threshold: float) -> np.ndarray:
    """Split off members whose mean affinity to the rest of their cluster is below threshold."""
    labels = labels.copy()
    next_label = int(labels.max()) + 1
    for label in np.unique(labels):
        members = list(np.flatnonzero(labels == label))
        while len(members) >= 2:
            sub = w[np.ix_(members, members)]
            support = sub.sum(axis=1) / (len(members) - 1)
            weakest = int(np.argmin(support))
            if support[weakest] >= threshold:
                break
            labels[members[weakest]] = next_label
            next_label += 1
            members.pop(weakest)
    return labels


def threshold_groups(
    distances: np.ndarray, threshold: float, ids: Optional[Sequence[int]] = None
) -> Partition:
    """Connected components of the graph linking pairs with distance <= threshold."""
    distances = np.asarray(distances, dtype=np.float64)
    n = distances.shape[0]
    ids = list(range(n)) if ids is None else list(ids)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for u in range(n):
        for v in range(u + 1, n):
            if distances[u, v] <= threshold:
                ru, rv = find(u), find(v)
                if ru != rv:
                    parent[max(ru, rv)] = min(ru, rv)
    return Partition.from_labels([find(i) for i in range(n)], ids)
