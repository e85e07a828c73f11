"""Bottom-to-up aggregation and top-to-down readout.

Distances between subjects follow the near-large/far-small rule: the anchor
distance is divided by the square root of the summed box areas. The learned
affinities and the distance affinity are fused into the relation matrix that
drives both the relation loss and group detection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor, concat, row_softmax, sigmoid
from .errors import ConfigError, InvalidArgumentError
from .graph import AffinityMatrix
from .nn import MlpParams, mlp_forward

if TYPE_CHECKING:
    from .scene import FrameAnnotation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SceneGeometry:
    anchors: np.ndarray
    areas: np.ndarray
    image_width: float
    image_height: Optional[float] = None

    def __post_init__(self) -> None:
        if self.anchors.ndim != 2 or self.anchors.shape[1] != 2:
            raise InvalidArgumentError(f"anchors must be N x 2, got {self.anchors.shape}")
        if self.areas.shape != (self.anchors.shape[0],):
            raise InvalidArgumentError("one area per anchor is required")
        outside = (self.anchors[:, 0] < 0) | (self.anchors[:, 0] > self.image_width)
        if self.image_height is not None:
            outside |= (self.anchors[:, 1] < 0) | (self.anchors[:, 1] > self.image_height)
        if outside.any():
            logger.warning("%d subject anchors lie outside the image", int(outside.sum()))

    @property
    def n(self) -> int:
        return self.anchors.shape[0]

    @classmethod
    def from_frame(cls, frame: "FrameAnnotation") -> "SceneGeometry":
        return cls(
            anchors=np.array([s.anchor for s in frame.subjects], dtype=np.float64),
            areas=np.array([s.area for s in frame.subjects], dtype=np.float64),
            image_width=float(frame.image_width),
            image_height=float(frame.image_height),
        )


@dataclass
class RelationBundle:
    distances: np.ndarray
    distance_affinity: np.ndarray
    keep: np.ndarray
    relation: Tensor
    lam: float
    rho: float
    floor: float = 0.0

    @property
    def additive_mask(self) -> np.ndarray:
        return additive_mask(self.keep)


@dataclass
class NodeHierarchy:
    individual: Tensor
    groups: Tuple[Tuple[int, ...], ...]
    singletons: Tuple[int, ...]
    group_nodes: Tensor
    global_node: Tensor

    @property
    def n_groups(self) -> int:
        return len(self.groups)


@dataclass
class LocalGcn:
    """Bilinear pair building the local affinity inside an AiO module."""

    left: MlpParams
    right: MlpParams


@dataclass
class AioParams:
    to_group: LocalGcn
    to_global: LocalGcn


@dataclass
class Readout:
    individual: Tensor
    social: Tensor
    global_: Tensor


def spatial_distance_matrix(geometry: SceneGeometry, euclid: bool = False) -> np.ndarray:
    if np.any(geometry.areas <= 0):
        raise InvalidArgumentError("box areas must be positive")
    diff = geometry.anchors[:, None, :] - geometry.anchors[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    if not euclid:
        dist = dist / np.sqrt(geometry.areas[:, None] + geometry.areas[None, :])
    np.fill_diagonal(dist, 0.0)
    return dist


def distance_mask(distances: np.ndarray, rho: float) -> np.ndarray:
    """Boolean keep-matrix: pairs with D <= rho, diagonal always kept."""
    if not rho > 0:
        raise InvalidArgumentError(f"rho must be positive, got {rho}")
    keep = distances <= rho
    np.fill_diagonal(keep, True)
    return keep


def additive_mask(keep: np.ndarray) -> np.ndarray:
    return np.where(keep, 0.0, -np.inf)


def distance_affinity(distances: np.ndarray) -> np.ndarray:
    """sigmoid(1/D); coincident subjects get the limit value 1."""
    inv = np.divide(1.0, distances, out=np.zeros_like(distances), where=distances > 0)
    out = sigmoid(inv)
    out[distances <= 0] = 1.0
    return out


def relation_matrix(
    affinity: AffinityMatrix,
    dbreve: np.ndarray,
    lam: float,
    use_affinity: bool = True,
    use_distance: bool = True,
) -> Tensor:
    """R = lam * E + (1 - lam) * dbreve, symmetrized, with a unit diagonal.

    Dropping one term leaves the other at full weight; dropping both is an error.
    """
    n = affinity.n
    if dbreve.shape != (n, n):
        raise InvalidArgumentError(f"distance affinity {dbreve.shape} does not match {n}x{n}")
    if not 0.0 <= lam <= 1.0:
        raise InvalidArgumentError(f"lambda must lie in [0, 1], got {lam}")
    if use_affinity and use_distance:
        raw = affinity.weights * lam + Tensor(dbreve * (1.0 - lam))
    elif use_affinity:
        raw = affinity.weights
    elif use_distance:
        raw = Tensor(dbreve)
    else:
        raise ConfigError("relation matrix needs the affinity term, the distance term, or both")
    sym = (raw + raw.T) * 0.5
    off = 1.0 - np.eye(n)
    return sym * off + Tensor(np.eye(n))


def relation_floor(lam: float, use_affinity: bool = True, use_distance: bool = True) -> float:
    """Lower bound of the off-diagonal relation entries.

    The distance affinity is sigmoid of a non-negative value, so it never drops below 1/2.
    """
    if not use_distance:
        return 0.0
    if not use_affinity:
        return 0.5
    return 0.5 * (1.0 - lam)


def aio_aggregate(nodes: Tensor, local_gcn: LocalGcn, maxpool: bool = False) -> Tensor:
    """Collapse m x d member nodes into one 1 x d node.

    The local affinity is row-softmaxed, its columns are summed and normalized
    to a convex weight vector, and the members are mixed with those weights.
    """
    if nodes.data.ndim != 2 or nodes.rows == 0:
        raise InvalidArgumentError("aio_aggregate needs at least one node")
    if maxpool:
        return nodes.max_rows()
    m = nodes.rows
    logits = mlp_forward(local_gcn.left, nodes) @ mlp_forward(local_gcn.right, nodes).T
    local = row_softmax(logits)
    # rows sum to 1, so the column sums total m
    weights = local.sum(axis=0, keepdims=True) * (1.0 / m)
    return weights @ nodes


def _check_cover(
    n: int, groups: Sequence[Sequence[int]], singletons: Sequence[int]
) -> None:
    seen: set[int] = set()
    for group in groups:
        if len(group) < 2:
            raise InvalidArgumentError("groups need at least two members")
        for row in group:
            if row in seen:
                raise InvalidArgumentError(f"subject row {row} appears in two groups")
            seen.add(row)
    for row in singletons:
        if row in seen:
            raise InvalidArgumentError(f"singleton row {row} also belongs to a group")
        seen.add(row)
    if seen != set(range(n)):
        raise InvalidArgumentError("groups and singletons must cover every subject exactly once")


def build_hierarchy(
    individual: Tensor,
    groups: Sequence[Sequence[int]],
    singletons: Sequence[int],
    aio: AioParams,
    maxpool: bool = False,
) -> NodeHierarchy:
    n, d = individual.shape
    _check_cover(n, groups, singletons)

    group_nodes = [
        aio_aggregate(individual.take_rows(g), aio.to_group, maxpool) for g in groups
    ]
    stacked = concat(group_nodes, axis=0) if group_nodes else Tensor(np.zeros((0, d)))

    global_inputs = []
    if singletons:
        global_inputs.append(individual.take_rows(singletons))
    if group_nodes:
        global_inputs.append(stacked)
    global_node = aio_aggregate(concat(global_inputs, axis=0), aio.to_global, maxpool)

    return NodeHierarchy(
        individual=individual,
        groups=tuple(tuple(g) for g in groups),
        singletons=tuple(singletons),
        group_nodes=stacked,
        global_node=global_node,
    )


def t2d_readout(
    hierarchy: NodeHierarchy,
    fi: MlpParams,
    fp: MlpParams,
    fg: MlpParams,
    sizes: Optional[Tuple[int, int, int]] = None,
    feed_individual: bool = True,
    feed_group: bool = True,
) -> Readout:
    d = hierarchy.individual.cols
    if fi.spec.in_dim != 2 * d or fp.spec.in_dim != 2 * d or fg.spec.in_dim != d:
        raise ConfigError(f"readout heads do not accept node width {d}")
    if sizes is not None:
        widths = (fi.spec.out_dim, fp.spec.out_dim, fg.spec.out_dim)
        if widths != tuple(sizes):
            raise ConfigError(f"readout widths {widths} do not match vocabulary sizes {tuple(sizes)}")

    n_glob = hierarchy.global_node
    zero_glob = Tensor(np.zeros((1, d)))

    n = hierarchy.individual.rows
    g_for_i = n_glob if feed_individual else zero_glob
    a_i = mlp_forward(fi, concat([hierarchy.individual, Tensor(np.ones((n, 1))) @ g_for_i], axis=1))

    k = hierarchy.n_groups
    if k:
        g_for_p = n_glob if feed_group else zero_glob
        a_p = mlp_forward(fp, concat([hierarchy.group_nodes, Tensor(np.ones((k, 1))) @ g_for_p], axis=1))
    else:
        a_p = Tensor(np.zeros((0, fp.spec.out_dim)))

    a_g = mlp_forward(fg, n_glob)
    return Readout(individual=a_i, social=a_p, global_=a_g)
