"""Evaluation: the three activity protocols, overall F1 and group detection.

Protocol I (individual actions) and III (global activities) average
sample-wise multi-label P/R/F1. Protocol II (social activities) matches
predicted groups to ground-truth groups by member IoU > 0.5 and counts
labels micro-style over the matched and unmatched groups.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import linear_sum_assignment

from .clustering import Partition, partition_to_relation
from .errors import DataError, InvalidArgumentError
from .scene import FrameAnnotation
from .schema import MetricsReport
from .training import ParPrediction

logger = logging.getLogger(__name__)

IOU_THRESHOLDS: Tuple[float, ...] = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
HALF = 0.5

Prf = Tuple[float, float, float]


@dataclass(frozen=True)
class GroupMatch:
    pred_index: int
    gt_index: int
    iou: float


@dataclass
class LabelCounts:
    hits: int = 0
    predicted: int = 0
    expected: int = 0

    def add(self, other: "LabelCounts") -> None:
        self.hits += other.hits
        self.predicted += other.predicted
        self.expected += other.expected

    def prf(self) -> Prf:
        p = _ratio(self.hits, self.predicted, self.expected == 0)
        r = _ratio(self.hits, self.expected, self.predicted == 0)
        return p, r, f1(p, r)


@dataclass
class GroupDetection:
    recall_curve: Dict[float, float] = field(default_factory=dict)
    precision_curve: Dict[float, float] = field(default_factory=dict)
    mat_iou: float = 1.0

    @property
    def iou_05(self) -> float:
        return self.recall_curve[HALF]

    @property
    def iou_auc(self) -> float:
        return curve_auc(self.recall_curve)

    @property
    def iou_05_precision(self) -> float:
        return self.precision_curve[HALF]

    @property
    def iou_auc_precision(self) -> float:
        return curve_auc(self.precision_curve)


def _ratio(num: float, den: float, other_empty: bool) -> float:
    if den > 0:
        return num / den
    return 1.0 if other_empty else 0.0


def f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def _check_ids(labels: Iterable[int], vocab_size: Optional[int]) -> None:
    if vocab_size is None:
        return
    for label in labels:
        if not 0 <= label < vocab_size:
            raise InvalidArgumentError(f"label {label} outside a vocabulary of {vocab_size}")


def multilabel_prf(
    pred: FrozenSet[int], gt: FrozenSet[int], vocab_size: Optional[int] = None
) -> Prf:
    _check_ids(pred, vocab_size)
    _check_ids(gt, vocab_size)
    if not pred and not gt:
        return 1.0, 1.0, 1.0
    if not pred or not gt:
        return 0.0, 0.0, 0.0
    hits = len(pred & gt)
    p = hits / len(pred)
    r = hits / len(gt)
    return p, r, f1(p, r)


def group_iou(a: FrozenSet[int], b: FrozenSet[int]) -> float:
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def _passes(iou: float, theta: float) -> bool:
    # IoU > theta, except that theta = 1 accepts exact matches
    if theta >= 1.0:
        return iou >= 1.0
    return iou > theta


def match_groups(
    pred: Sequence[FrozenSet[int]], gt: Sequence[FrozenSet[int]], theta: float = HALF
) -> List[GroupMatch]:
    """One-to-one matching maximizing total IoU over pairs that pass `theta`.

    Groups with fewer than two members never take part.
    """
    if not 0.0 < theta <= 1.0:
        raise InvalidArgumentError(f"theta must lie in (0, 1], got {theta}")
    pred_idx = [i for i, g in enumerate(pred) if len(g) >= 2]
    gt_idx = [j for j, g in enumerate(gt) if len(g) >= 2]
    if not pred_idx or not gt_idx:
        return []
    gain = np.zeros((len(pred_idx), len(gt_idx)))
    for a, i in enumerate(pred_idx):
        for b, j in enumerate(gt_idx):
            iou = group_iou(pred[i], gt[j])
            if _passes(iou, theta):
                gain[a, b] = iou
    rows, cols = linear_sum_assignment(gain, maximize=True)
    return [
        GroupMatch(pred_idx[a], gt_idx[b], float(gain[a, b]))
        for a, b in zip(rows, cols)
        if gain[a, b] > 0
    ]


def social_counts(
    pred: Sequence[Tuple[FrozenSet[int], FrozenSet[int]]],
    gt: Sequence[Tuple[FrozenSet[int], FrozenSet[int]]],
    vocab_size: Optional[int] = None,
) -> LabelCounts:
    """Label-level counts for (members, activities) pairs under IoU > 0.5 matching."""
    pred = [p for p in pred if len(p[0]) >= 2]
    gt = [g for g in gt if len(g[0]) >= 2]
    for _, labels in list(pred) + list(gt):
        _check_ids(labels, vocab_size)
    matches = match_groups([p[0] for p in pred], [g[0] for g in gt], HALF)
    counts = LabelCounts(
        predicted=sum(len(p[1]) for p in pred),
        expected=sum(len(g[1]) for g in gt),
    )
    for m in matches:
        counts.hits += len(pred[m.pred_index][1] & gt[m.gt_index][1])
    return counts


def social_prf(
    pred: Sequence[Tuple[FrozenSet[int], FrozenSet[int]]],
    gt: Sequence[Tuple[FrozenSet[int], FrozenSet[int]]],
) -> Prf:
    return social_counts(pred, gt).prf()


def curve_auc(curve: Dict[float, float]) -> float:
    """Trapezoid area under an accuracy curve over 0.5..1.0, divided by the 0.5 span."""
    values = [curve[t] for t in IOU_THRESHOLDS]
    return float(trapezoid(values, dx=0.1)) / 0.5


def _frame_match_counts(
    pred: Partition, gt: Partition, theta: float
) -> Tuple[int, int, int]:
    matches = match_groups(list(pred.groups), list(gt.groups), theta)
    return len(matches), len(pred.groups), len(gt.groups)


def mat_iou_counts(pred: Partition, gt: Partition, ids: Sequence[int]) -> Tuple[int, int]:
    r_pred = partition_to_relation(pred, ids).astype(bool)
    r_gt = partition_to_relation(gt, ids).astype(bool)
    off = ~np.eye(len(ids), dtype=bool)
    both = int((r_pred & r_gt & off).sum())
    either = int(((r_pred | r_gt) & off).sum())
    return both, either


def group_detection_scores(
    pred: Sequence[Partition],
    gt: Sequence[Partition],
    ids: Sequence[Sequence[int]],
) -> GroupDetection:
    if not len(pred) == len(gt) == len(ids):
        raise InvalidArgumentError("prediction, ground truth and id lists differ in length")
    result = GroupDetection()
    for theta in IOU_THRESHOLDS:
        matched = n_pred = n_gt = 0
        for p, g in zip(pred, gt):
            m, np_, ng = _frame_match_counts(p, g, theta)
            matched += m
            n_pred += np_
            n_gt += ng
        result.recall_curve[theta] = _ratio(matched, n_gt, n_pred == 0)
        result.precision_curve[theta] = _ratio(matched, n_pred, n_gt == 0)

    both = either = 0
    for p, g, frame_ids in zip(pred, gt, ids):
        if set(p.members) != set(frame_ids) or set(g.members) != set(frame_ids):
            raise InvalidArgumentError("predicted and ground-truth partitions cover different subjects")
        b, e = mat_iou_counts(p, g, frame_ids)
        both += b
        either += e
    result.mat_iou = both / either if either else 1.0
    return result


def overall_f1(f_i: float, f_p: float, f_g: float) -> float:
    return (f_i + f_p + f_g) / 3.0


def _mean_prf(scores: List[Prf]) -> Prf:
    if not scores:
        return 1.0, 1.0, 1.0
    arr = np.array(scores)
    p, r, f = arr.mean(axis=0)
    return float(p), float(r), float(f)


def evaluate(
    frames: Sequence[FrameAnnotation],
    predictions: Sequence[ParPrediction],
    sizes: Optional[Tuple[int, int, int]] = None,
    gt_groups_used: bool = False,
    config_echo: Optional[dict] = None,
) -> MetricsReport:
    if not frames:
        raise DataError("evaluation set is empty")
    if len(frames) != len(predictions):
        raise InvalidArgumentError(f"{len(predictions)} predictions for {len(frames)} frames")
    n_act, n_soc, n_glob = sizes if sizes is not None else (None, None, None)

    individual: List[Prf] = []
    global_: List[Prf] = []
    social = LabelCounts()
    pred_parts, gt_parts, id_lists = [], [], []
    for frame, pred in zip(frames, predictions):
        if frame.frame_id != pred.frame_id:
            raise InvalidArgumentError(
                f"prediction for frame {pred.frame_id} paired with frame {frame.frame_id}"
            )
        for s in frame.subjects:
            individual.append(multilabel_prf(pred.actions.get(s.id, frozenset()), s.actions, n_act))
        global_.append(multilabel_prf(pred.global_activities, frame.global_activities, n_glob))
        social.add(
            social_counts(
                [(g.members, g.activities) for g in pred.groups],
                [(g.members, g.activities) for g in frame.social_groups()],
                n_soc,
            )
        )
        pred_parts.append(pred.partition)
        gt_parts.append(frame.partition())
        id_lists.append(frame.subject_ids)

    p_i, r_i, f_i = _mean_prf(individual)
    p_p, r_p, f_p = social.prf()
    p_g, r_g, f_g = _mean_prf(global_)
    detection = group_detection_scores(pred_parts, gt_parts, id_lists)
    logger.debug("evaluated %d frames", len(frames))

    return MetricsReport(
        p_i=p_i,
        r_i=r_i,
        f_i=f_i,
        p_p=p_p,
        r_p=r_p,
        f_p=f_p,
        p_g=p_g,
        r_g=r_g,
        f_g=f_g,
        f_a=overall_f1(f_i, f_p, f_g),
        iou_05=detection.iou_05,
        iou_auc=detection.iou_auc,
        mat_iou=detection.mat_iou,
        iou_05_precision=detection.iou_05_precision,
        iou_auc_precision=detection.iou_auc_precision,
        iou_curve={f"{t:.1f}": v for t, v in detection.recall_curve.items()},
        frames=len(frames),
        subjects=sum(f.n_subjects for f in frames),
        groups=sum(len(f.social_groups()) for f in frames),
        gt_groups_used=gt_groups_used,
        notes=[
            "group matching uses IoU > theta; theta = 1.0 accepts IoU >= 1.0",
            "social activities are scored with label-level micro counts over IoU > 0.5 matches",
        ],
        config_echo=config_echo or {},
    )
