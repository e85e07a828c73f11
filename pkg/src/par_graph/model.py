from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor
from .clustering import Partition
from .config import ModelConfig
from .errors import DataError, InvalidArgumentError
from .graph import (
    AffinityMatrix,
    IndividualNodes,
    edge_affinity,
    individual_repr,
    node_update,
    normalize_affinity,
)
from .hierarchy import (
    AioParams,
    LocalGcn,
    NodeHierarchy,
    Readout,
    RelationBundle,
    SceneGeometry,
    additive_mask,
    build_hierarchy,
    distance_affinity,
    distance_mask,
    relation_floor,
    relation_matrix,
    spatial_distance_matrix,
    t2d_readout,
)
from .nn import Activation, MlpParams, MlpSpec, ParamStore, init_mlp
from .scene import FrameAnnotation

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FrameInputs:
    """Per-frame constants: features and distance geometry never change while training."""

    frame_id: int
    ids: Tuple[int, ...]
    features: np.ndarray
    distances: np.ndarray
    distance_affinity: np.ndarray
    keep: np.ndarray
    rho: float

    @property
    def n(self) -> int:
        return len(self.ids)

    def rows_of(self, partition: Partition) -> Tuple[List[Tuple[int, ...]], List[int]]:
        index = {sid: i for i, sid in enumerate(self.ids)}
        if set(index) != set(partition.members):
            raise InvalidArgumentError(
                f"frame {self.frame_id}: partition does not cover the frame's subjects"
            )
        groups = [tuple(sorted(index[m] for m in g)) for g in partition.groups]
        singletons = sorted(index[m] for m in partition.singletons)
        return groups, singletons


@dataclass
class Encoding:
    nodes: IndividualNodes
    affinity: AffinityMatrix
    relation: RelationBundle


@dataclass
class ModelOutput:
    encoding: Encoding
    hierarchy: NodeHierarchy
    readout: Readout


def prepare_frame(frame: FrameAnnotation, config: ModelConfig) -> FrameInputs:
    geometry = SceneGeometry.from_frame(frame)
    distances = spatial_distance_matrix(geometry, euclid=config.ablations.euclid_dist)
    rho = config.rho_ratio * frame.image_width
    features = frame.features()
    if features.shape[1] != config.feature_dim:
        raise DataError(
            f"feature dim {features.shape[1]} != model dim {config.feature_dim}",
            frame_id=frame.frame_id,
        )
    return FrameInputs(
        frame_id=frame.frame_id,
        ids=tuple(frame.subject_ids),
        features=features,
        distances=distances,
        distance_affinity=distance_affinity(distances),
        keep=distance_mask(distances, rho),
        rho=rho,
    )


class ParModel:
    """Hierarchical relation network over one frame of subjects.

    Parameters live in a single `ParamStore` so optimizers and weight files
    see every trainable tensor by name.
    """

    def __init__(self, config: Optional[ModelConfig] = None, seed: int = 0):
        self.config = config or ModelConfig()
        self.config.validate()
        cfg = self.config
        d, h = cfg.feature_dim, cfg.hidden_dim
        rng = np.random.default_rng(seed)

        def linear() -> MlpParams:
            return init_mlp(MlpSpec((d, d)), rng)

        def head(dims: Tuple[int, ...]) -> MlpParams:
            return init_mlp(MlpSpec(dims, output_activation=Activation.SIGMOID), rng)

        self.f1 = linear()
        self.f2 = linear()
        self.fn = linear()
        group_gcn = LocalGcn(left=linear(), right=linear())
        if cfg.shared_aio:
            self.aio = AioParams(to_group=group_gcn, to_global=group_gcn)
        else:
            self.aio = AioParams(to_group=group_gcn, to_global=LocalGcn(left=linear(), right=linear()))
        self.fi = head((2 * d, h, h, cfg.num_actions))
        self.fp = head((2 * d, h, h, cfg.num_social))
        self.fg = head((d, h, cfg.num_global))

        self.params = ParamStore()
        self.params.add_mlp("F1", self.f1)
        self.params.add_mlp("F2", self.f2)
        self.params.add_mlp("Fn", self.fn)
        if cfg.shared_aio:
            self.params.add_mlp("aio.left", self.aio.to_group.left)
            self.params.add_mlp("aio.right", self.aio.to_group.right)
        else:
            self.params.add_mlp("aio_group.left", self.aio.to_group.left)
            self.params.add_mlp("aio_group.right", self.aio.to_group.right)
            self.params.add_mlp("aio_global.left", self.aio.to_global.left)
            self.params.add_mlp("aio_global.right", self.aio.to_global.right)
        self.params.add_mlp("Fi", self.fi)
        self.params.add_mlp("Fp", self.fp)
        self.params.add_mlp("Fg", self.fg)
        logger.debug("ParModel: %d tensors, seed %d", len(self.params), seed)

    @property
    def sizes(self) -> Tuple[int, int, int]:
        return (self.config.num_actions, self.config.num_social, self.config.num_global)

    def zero_heads(self) -> None:
        """Zero the output layer of every readout head so each probability is 0.5."""
        for head in (self.fi, self.fp, self.fg):
            head.weights[-1].data[...] = 0.0
            head.biases[-1].data[...] = 0.0

    def prepare(self, frame: FrameAnnotation) -> FrameInputs:
        return prepare_frame(frame, self.config)

    def encode(self, inputs: FrameInputs) -> Encoding:
        cfg = self.config
        flags = cfg.ablations
        mask = additive_mask(inputs.keep)
        f = Tensor(inputs.features)
        update_mask = mask if cfg.mask_node_update else None
        for _ in range(cfg.gcn_rounds):
            affinity = edge_affinity(f, self.f1, self.f2, update_mask)
            f_hat = node_update(f, affinity, self.fn)
            n_i = individual_repr(
                f, f_hat, use_original=not flags.no_residual_f, use_updated=not flags.no_fhat
            )
            nodes = IndividualNodes(features=f, updated=f_hat, representation=n_i)
            f = n_i

        masked = affinity if cfg.mask_node_update else normalize_affinity(affinity.logits, mask)
        relation = relation_matrix(
            masked,
            inputs.distance_affinity,
            cfg.relation_lambda,
            use_affinity=not flags.no_e,
            use_distance=not flags.no_dbreve,
        )
        bundle = RelationBundle(
            distances=inputs.distances,
            distance_affinity=inputs.distance_affinity,
            keep=inputs.keep,
            relation=relation,
            lam=cfg.relation_lambda,
            rho=inputs.rho,
            floor=relation_floor(
                cfg.relation_lambda, use_affinity=not flags.no_e, use_distance=not flags.no_dbreve
            ),
        )
        return Encoding(nodes=nodes, affinity=masked, relation=bundle)

    def readout(
        self,
        individual: Tensor,
        groups: Sequence[Sequence[int]],
        singletons: Sequence[int],
    ) -> Tuple[NodeHierarchy, Readout]:
        flags = self.config.ablations
        hierarchy = build_hierarchy(individual, groups, singletons, self.aio, maxpool=flags.maxpool_agg)
        readout = t2d_readout(
            hierarchy,
            self.fi,
            self.fp,
            self.fg,
            sizes=self.sizes,
            feed_individual=not flags.no_g2i,
            feed_group=not flags.no_g2p,
        )
        return hierarchy, readout

    def forward(self, inputs: FrameInputs, partition: Partition) -> ModelOutput:
        encoding = self.encode(inputs)
        groups, singletons = inputs.rows_of(partition)
        hierarchy, readout = self.readout(encoding.nodes.representation, groups, singletons)
        return ModelOutput(encoding=encoding, hierarchy=hierarchy, readout=readout)
