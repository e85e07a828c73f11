from __future__ import annotations

import logging
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Tuple

import numpy as np

from .clustering import Partition, cluster_groups
from .config import ModelConfig, SynthConfig
from .errors import DataError, ParGraphError
from .metrics import group_detection_scores, multilabel_prf, overall_f1, social_prf
from .model import ParModel
from .nn import finite_diff_check
from .scene import ground_truth_relation
from .synth import synth_generate
from .training import frame_loss
from .weights import load_arrays, save_arrays

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _gradient_check() -> Tuple[bool, str]:
    dim = 6
    synth = SynthConfig(n_frames=1, n_subjects=5, n_groups=2, singleton_fraction=0.2, feature_dim=dim)
    frame = synth_generate(synth, seed=3)[0]
    model = ParModel(ModelConfig(feature_dim=dim, hidden_dim=8), seed=3)
    inputs = model.prepare(frame)
    err = finite_diff_check(lambda: frame_loss(model, frame, inputs, {}).total, model.params)
    return err < GRADIENT_TOLERANCE, f"max relative error {err:.2e} over {len(model.params)} tensors"


def _table_anchors() -> Tuple[bool, str]:
    rows = [((33.2, 8.2, 50.7), 30.7), ((40.3, 8.8, 31.4), 26.8)]
    got = [round(100.0 * overall_f1(*(v / 100.0 for v in f1s)), 1) for f1s, _ in rows]
    want = [expected for _, expected in rows]
    return got == want, f"overall F1 {got}, expected {want}"


def _metric_fixtures() -> Tuple[bool, str]:
    failures = []
    if multilabel_prf(frozenset({0, 1}), frozenset({1, 2})) != (0.5, 0.5, 0.5):
        failures.append("multilabel_prf")
    p, r, f = social_prf(
        [(frozenset({1, 2, 3}), frozenset({0, 1}))],
        [(frozenset({1, 2}), frozenset({1})), (frozenset({4, 5}), frozenset({2}))],
    )
    if (p, r, f) != (0.5, 0.5, 0.5):
        failures.append("social_prf")
    detection = group_detection_scores(
        [Partition(groups=(frozenset({1, 2}),), singletons=frozenset({3}))],
        [Partition(groups=(frozenset({1, 2, 3}),))],
        [[1, 2, 3]],
    )
    if abs(detection.mat_iou - 1.0 / 3.0) > 1e-12:
        failures.append("mat_iou")
    if abs(detection.iou_auc - 0.1) > 1e-12:
        failures.append("iou_auc")
    return not failures, "all fixtures match" if not failures else f"mismatch in {failures}"


def _clustering_recovery(seeds: int = 20) -> Tuple[bool, str]:
    synth = SynthConfig(n_frames=1, n_subjects=12, n_groups=3, noise_sigma=0.0)
    exact = 0
    for seed in range(seeds):
        frame = synth_generate(synth, seed=seed)[0]
        pred = cluster_groups(ground_truth_relation(frame), ids=frame.subject_ids)
        score = group_detection_scores([pred], [frame.partition()], [frame.subject_ids])
        exact += score.mat_iou == 1.0
    return exact == seeds, f"{exact}/{seeds} planted partitions recovered"


def _corruption_detected() -> Tuple[bool, str]:
    with tempfile.TemporaryDirectory() as tmp:
        manifest = Path(tmp) / "weights.json"
        save_arrays({"w": np.arange(6.0).reshape(2, 3)}, manifest)
        blob = manifest.with_suffix(".bin")
        raw = bytearray(blob.read_bytes())
        raw[3] ^= 0xFF
        blob.write_bytes(bytes(raw))
        try:
            load_arrays(manifest)
        except DataError as exc:
            return True, f"rejected: {exc}"
    return False, "corrupted blob loaded without error"


CHECKS: Tuple[Tuple[str, Callable[[], Tuple[bool, str]]], ...] = (
    ("gradient-check", _gradient_check),
    ("table-anchors", _table_anchors),
    ("metric-fixtures", _metric_fixtures),
    ("clustering-recovery", _clustering_recovery),
    ("weight-corruption", _corruption_detected),
)


def run_selftest() -> List[CheckResult]:
    results = []
    for name, check in CHECKS:
        try:
            passed, detail = check()
        except ParGraphError as exc:
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        logger.info("selftest %s: %s (%s)", name, "ok" if passed else "FAILED", detail)
        results.append(CheckResult(name=name, passed=passed, detail=detail))
    return results
