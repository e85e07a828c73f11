"""Multi-level loss, the ground-truth-grouped training loop, and multi-label inference."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor
from .clustering import Partition, cluster_groups, threshold_groups
from .config import ClusterConfig, ModelConfig, TrainConfig
from .errors import DataError, InvalidArgumentError, NumericalError
from .hierarchy import RelationBundle
from .model import FrameInputs, ModelOutput, ParModel
from .nn import AdamState, adam_step, bce_loss
from .scene import FrameAnnotation, ground_truth_relation
from .schema import EpochLog

logger = logging.getLogger(__name__)

LOSS_KEYS = ("individual", "social", "global", "relation")


@dataclass
class LossBreakdown:
    total: Tensor
    components: Dict[str, float]


@dataclass(frozen=True, eq=False)
class PredictedGroup:
    members: FrozenSet[int]
    activities: FrozenSet[int]
    probabilities: np.ndarray


@dataclass(eq=False)
class ParPrediction:
    frame_id: int
    subject_ids: Tuple[int, ...]
    actions: Dict[int, FrozenSet[int]]
    partition: Partition
    groups: Tuple[PredictedGroup, ...]
    global_activities: FrozenSet[int]
    individual_probs: np.ndarray
    global_probs: np.ndarray
    relation: np.ndarray


@dataclass
class TrainResult:
    model: ParModel
    adam: AdamState
    trace: List[EpochLog] = field(default_factory=list)
    epoch: int = 0


def _multi_hot(label_sets: Sequence[Iterable[int]], width: int, frame_id: int, tier: str) -> np.ndarray:
    out = np.zeros((len(label_sets), width))
    for row, labels in enumerate(label_sets):
        for label in labels:
            if not 0 <= label < width:
                raise DataError(f"{tier} label {label} outside a head of width {width}", frame_id=frame_id)
            out[row, label] = 1.0
    return out


def total_loss(
    frame: FrameAnnotation,
    output: ModelOutput,
    weights: Optional[Dict[str, float]] = None,
) -> LossBreakdown:
    """Sum of the individual, social, global and relation BCE terms for one frame.

    `output` must come from a forward pass over the ground-truth partition so
    that group rows line up with `frame.social_groups()`.
    """
    weights = weights or {}
    readout = output.readout
    n_actions = readout.individual.cols
    n_social = readout.social.data.shape[1]
    n_global = readout.global_.cols

    gt_groups = frame.social_groups()
    if readout.social.rows != len(gt_groups):
        raise DataError(
            f"{readout.social.rows} group predictions for {len(gt_groups)} ground-truth groups",
            frame_id=frame.frame_id,
        )

    l_i = bce_loss(
        readout.individual,
        _multi_hot([s.actions for s in frame.subjects], n_actions, frame.frame_id, "action"),
    )
    if gt_groups:
        l_p = bce_loss(
            readout.social,
            _multi_hot([g.activities for g in gt_groups], n_social, frame.frame_id, "social"),
        )
    else:
        l_p = Tensor(0.0)
    l_g = bce_loss(
        readout.global_,
        _multi_hot([frame.global_activities], n_global, frame.frame_id, "global"),
    )
    n = frame.n_subjects
    if n > 1:
        off = ~np.eye(n, dtype=bool)
        l_d = bce_loss(output.encoding.relation.relation, ground_truth_relation(frame), mask=off)
    else:
        l_d = Tensor(0.0)

    terms = {"individual": l_i, "social": l_p, "global": l_g, "relation": l_d}
    total: Tensor = Tensor(0.0)
    for key in LOSS_KEYS:
        total = total + terms[key] * float(weights.get(key, 1.0))
    return LossBreakdown(total=total, components={k: terms[k].item() for k in LOSS_KEYS})


def frame_loss(model: ParModel, frame: FrameAnnotation, inputs: FrameInputs, weights: Dict[str, float]) -> LossBreakdown:
    output = model.forward(inputs, frame.partition())
    return total_loss(frame, output, weights)


def train(
    frames: Sequence[FrameAnnotation],
    model_config: Optional[ModelConfig] = None,
    train_config: Optional[TrainConfig] = None,
    model: Optional[ParModel] = None,
    adam: Optional[AdamState] = None,
    start_epoch: int = 0,
    log_callback: Optional[Callable[[EpochLog], None]] = None,
) -> TrainResult:
    """Mini-batch training with Adam on ground-truth groups.

    The shuffle order of epoch ``e`` depends only on ``(seed, e)``, so a run
    resumed from a checkpoint sees the same batches as an uninterrupted one.
    """
    if not frames:
        raise DataError("training set is empty")
    train_config = train_config or TrainConfig()
    train_config.validate()
    if model is None:
        model = ParModel(model_config, seed=train_config.seed)
    if adam is None:
        adam = AdamState.for_params(model.params)

    inputs = [model.prepare(f) for f in frames]
    result = TrainResult(model=model, adam=adam, epoch=start_epoch)
    batch = train_config.batch_size

    for epoch in range(start_epoch, train_config.epochs):
        order = np.random.default_rng([train_config.seed, epoch]).permutation(len(frames))
        sums = dict.fromkeys(("loss",) + LOSS_KEYS, 0.0)
        steps = 0
        for start in range(0, len(order), batch):
            chunk = order[start : start + batch]
            model.params.zero_grad()
            batch_total: Tensor = Tensor(0.0)
            for idx in chunk:
                frame = frames[int(idx)]
                breakdown = frame_loss(model, frame, inputs[int(idx)], train_config.loss_weights)
                value = breakdown.total.item()
                if not np.isfinite(value):
                    raise NumericalError(
                        f"non-finite loss on frame {frame.frame_id} in epoch {epoch + 1}",
                        frame_id=frame.frame_id,
                    )
                sums["loss"] += value
                for key in LOSS_KEYS:
                    sums[key] += breakdown.components[key]
                batch_total = batch_total + breakdown.total
            batch_loss = batch_total * (1.0 / len(chunk))
            batch_loss.backward()
            adam_step(adam, model.params, model.params.grads(), train_config.learning_rate)
            steps += 1

        count = float(len(frames))
        log = EpochLog(
            epoch=epoch + 1,
            steps=steps,
            loss=sums["loss"] / count,
            individual=sums["individual"] / count,
            social=sums["social"] / count,
            global_=sums["global"] / count,
            relation=sums["relation"] / count,
        )
        result.trace.append(log)
        result.epoch = epoch + 1
        logger.info("epoch %d/%d loss %.5f", epoch + 1, train_config.epochs, log.loss)
        if log_callback is not None:
            log_callback(log)
    model.params.zero_grad()
    return result


def detect_groups(
    relation: RelationBundle, ids: Sequence[int], config: Optional[ClusterConfig] = None
) -> Partition:
    config = config or ClusterConfig()
    if config.method == "threshold":
        return threshold_groups(relation.distances, config.distance_threshold, ids)
    return cluster_groups(relation.relation.data, ids=ids, config=config, floor=relation.floor)


def infer(
    frame: FrameAnnotation,
    model: ParModel,
    config: Optional[TrainConfig] = None,
    partition: Optional[Partition] = None,
    cluster_config: Optional[ClusterConfig] = None,
) -> ParPrediction:
    """Predict labels and groups; a label is emitted iff its probability exceeds the threshold."""
    tau = (config or TrainConfig()).label_threshold
    inputs = model.prepare(frame)
    encoding = model.encode(inputs)
    if partition is None:
        partition = detect_groups(encoding.relation, inputs.ids, cluster_config).canonical()
    groups, singletons = inputs.rows_of(partition)
    _, readout = model.readout(encoding.nodes.representation, groups, singletons)

    p_i = readout.individual.data
    p_p = readout.social.data
    p_g = readout.global_.data[0]
    actions = {
        sid: frozenset(int(a) for a in np.flatnonzero(p_i[row] > tau))
        for row, sid in enumerate(inputs.ids)
    }
    predicted = tuple(
        PredictedGroup(
            members=frozenset(inputs.ids[r] for r in rows),
            activities=frozenset(int(a) for a in np.flatnonzero(p_p[k] > tau)),
            probabilities=p_p[k].copy(),
        )
        for k, rows in enumerate(groups)
    )
    return ParPrediction(
        frame_id=frame.frame_id,
        subject_ids=inputs.ids,
        actions=actions,
        partition=partition,
        groups=predicted,
        global_activities=frozenset(int(a) for a in np.flatnonzero(p_g > tau)),
        individual_probs=p_i.copy(),
        global_probs=p_g.copy(),
        relation=encoding.relation.relation.data.copy(),
    )


def predict_all(
    frames: Sequence[FrameAnnotation],
    model: ParModel,
    config: Optional[TrainConfig] = None,
    cluster_config: Optional[ClusterConfig] = None,
    threads: int = 1,
    use_gt_groups: bool = False,
) -> List[ParPrediction]:
    """Run `infer` over frames; results come back in input order."""
    if threads < 1:
        raise InvalidArgumentError(f"threads must be at least 1, got {threads}")

    def _one(frame: FrameAnnotation) -> ParPrediction:
        gt = frame.partition() if use_gt_groups else None
        return infer(frame, model, config, partition=gt, cluster_config=cluster_config)

    if threads == 1:
        return [_one(f) for f in frames]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        futures = [executor.submit(_one, f) for f in frames]
        wait(futures)
        return [future.result() for future in futures]
