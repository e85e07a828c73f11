from __future__ import annotations

from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import pytest

from par_graph.config import ModelConfig, SynthConfig
from par_graph.scene import FrameAnnotation, GroupAnnotation, SubjectAnnotation

DIM = 8


def make_frame(
    positions: Sequence[Tuple[float, float]],
    groups: Iterable[Tuple[Iterable[int], Iterable[int]]] = (),
    actions: Optional[Dict[int, Iterable[int]]] = None,
    global_activities: Iterable[int] = (0,),
    dim: int = DIM,
    seed: int = 0,
    frame_id: int = 0,
    box: Tuple[float, float] = (20.0, 50.0),
) -> FrameAnnotation:
    """Frame whose subject i has id i and its anchor at positions[i]."""
    rng = np.random.default_rng(seed)
    actions = actions or {}
    w, h = box
    subjects = tuple(
        SubjectAnnotation(
            id=i,
            bbox=(x - w / 2.0, y - h, w, h),
            feature=rng.normal(size=dim),
            actions=frozenset(actions.get(i, {i % 3})),
        )
        for i, (x, y) in enumerate(positions)
    )
    return FrameAnnotation(
        frame_id=frame_id,
        image_width=640,
        image_height=480,
        subjects=subjects,
        groups=tuple(
            GroupAnnotation(members=frozenset(m), activities=frozenset(a)) for m, a in groups
        ),
        global_activities=frozenset(global_activities),
    )


@pytest.fixture
def five_subject_frame() -> FrameAnnotation:
    return make_frame(
        [(100, 200), (130, 210), (400, 300), (420, 310), (600, 100)],
        groups=[({0, 1}, {1}), ({2, 3}, {0, 2}), ({4}, {3})],
        global_activities=(1,),
    )


@pytest.fixture
def small_model_config() -> ModelConfig:
    return ModelConfig(feature_dim=DIM, hidden_dim=12)


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    return ModelConfig(feature_dim=DIM, hidden_dim=6, num_actions=5, num_social=4, num_global=3)


@pytest.fixture
def small_synth_config() -> SynthConfig:
    return SynthConfig(n_frames=6, n_subjects=8, n_groups=2, feature_dim=DIM, noise_sigma=0.05)
