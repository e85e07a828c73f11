"""Synthetic crowd scenes with planted group structure.

Groups are dropped into separate cells of a grid laid over the arena and
members scatter inside a disc of radius ``intra_spread`` around the group
centre. Label semantics (action embeddings, the social-to-action table and
the social-to-global map) come from ``label_seed`` alone, so datasets made
with different scene seeds share one vocabulary meaning.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .config import SynthConfig
from .errors import ConfigError
from .scene import FrameAnnotation, GroupAnnotation, SubjectAnnotation

logger = logging.getLogger(__name__)

# minimum cell size in units of the intra-group radius
_CELL_RATIO = 6.0


@dataclass(frozen=True)
class LabelTables:
    action_embeddings: np.ndarray
    social_embeddings: np.ndarray
    primary_action: np.ndarray
    secondary_action: np.ndarray
    global_of_social: np.ndarray

    @classmethod
    def build(cls, config: SynthConfig) -> "LabelTables":
        rng = np.random.default_rng(config.label_seed)
        scale = 1.0 / math.sqrt(config.feature_dim)
        actions = rng.normal(0.0, scale, size=(config.num_actions, config.feature_dim))
        social = rng.normal(0.0, scale, size=(config.num_social, config.feature_dim))
        order = rng.permutation(config.num_actions)
        primary = np.array([order[s % config.num_actions] for s in range(config.num_social)])
        secondary = np.array(
            [order[(s + config.num_social) % config.num_actions] for s in range(config.num_social)]
        )
        global_map = rng.permutation(config.num_social) % config.num_global
        return cls(actions, social, primary, secondary, global_map)


def _group_sizes(config: SynthConfig, rng: np.random.Generator) -> Tuple[List[int], int]:
    n = config.n_subjects
    if config.n_groups == 0:
        return [], n
    n_single = int(round(config.singleton_fraction * n))
    n_grouped = n - n_single
    if n_grouped < 2 * config.n_groups:
        raise ConfigError(
            f"{n_grouped} grouped subjects cannot fill {config.n_groups} groups of two or more"
        )
    base, extra = divmod(n_grouped, config.n_groups)
    sizes = [base] * config.n_groups
    for i in rng.permutation(config.n_groups)[:extra]:
        sizes[int(i)] += 1
    return sizes, n_single


def _grid(units: int, config: SynthConfig) -> Tuple[int, int, float]:
    cols = max(1, math.ceil(math.sqrt(units * config.arena_width / config.arena_height)))
    rows = math.ceil(units / cols)
    cell = min(config.arena_width / cols, config.arena_height / rows)
    if cell < _CELL_RATIO * config.intra_spread:
        raise ConfigError(
            f"arena {config.arena_width:g}x{config.arena_height:g} is too small to separate "
            f"{units} clusters with spread {config.intra_spread:g}"
        )
    return cols, rows, cell


def _frame_socials(
    n_groups: int, n_single: int, tables: LabelTables, rng: np.random.Generator
) -> List[int]:
    """Social activity per cluster, groups first and singletons after.

    A frame-level global activity is drawn first. A strict majority of the
    groups and every singleton share one social activity that maps to it; the
    remaining groups take activities that map to other globals.
    """
    mapping = tables.global_of_social
    target = int(rng.choice(np.unique(mapping)))
    dominant = int(rng.choice(np.flatnonzero(mapping == target)))
    others = np.flatnonzero(mapping != target)
    if others.size == 0:
        others = np.array([dominant])
    socials = [dominant] * (n_groups + n_single)
    for i in rng.permutation(n_groups)[n_groups // 2 + 1 :]:
        socials[int(i)] = int(rng.choice(others))
    return socials


def _make_frame(
    frame_id: int, config: SynthConfig, tables: LabelTables, rng: np.random.Generator
) -> FrameAnnotation:
    sizes, n_single = _group_sizes(config, rng)
    cluster_sizes = sizes + [1] * n_single
    cols, rows, cell = _grid(len(cluster_sizes), config)
    width = cols * cell
    height = rows * cell
    offset_x = (config.arena_width - width) / 2.0
    offset_y = (config.arena_height - height) / 2.0
    jitter = (cell - _CELL_RATIO * config.intra_spread) / 4.0
    cells = rng.permutation(cols * rows)[: len(cluster_sizes)]
    socials = _frame_socials(len(sizes), n_single, tables, rng)

    placed: List[Tuple[int, float, float, frozenset, int]] = []
    group_specs: List[Tuple[List[int], frozenset, int]] = []
    next_id = 0
    for size, cell_index, social in zip(cluster_sizes, cells, socials):
        cx = offset_x + (cell_index % cols + 0.5) * cell + rng.uniform(-jitter, jitter)
        cy = offset_y + (cell_index // cols + 0.5) * cell + rng.uniform(-jitter, jitter)
        activities = {social}
        if rng.random() < config.extra_label_prob:
            activities.add(int(rng.integers(config.num_social)))
        members = []
        for _ in range(size):
            radius = config.intra_spread * math.sqrt(rng.random())
            angle = rng.uniform(0.0, 2.0 * math.pi)
            actions = {int(tables.primary_action[social])}
            if rng.random() < config.extra_label_prob:
                actions.add(int(tables.secondary_action[social]))
            placed.append(
                (next_id, cx + radius * math.cos(angle), cy + radius * math.sin(angle), frozenset(actions), social)
            )
            members.append(next_id)
            next_id += 1
        group_specs.append((members, frozenset(activities), social))

    subjects = []
    for sid, x, y, actions, social in placed:
        h = config.box_height * (0.5 + y / config.arena_height)
        w = 0.4 * h
        feature = tables.social_embeddings[social].copy()
        for a in sorted(actions):
            feature += tables.action_embeddings[a]
        if config.noise_sigma > 0:
            feature += rng.normal(0.0, config.noise_sigma, size=config.feature_dim)
        subjects.append(
            SubjectAnnotation(id=sid, bbox=(x - w / 2.0, y - h, w, h), feature=feature, actions=actions)
        )
    order = rng.permutation(len(subjects))
    subjects = [subjects[int(i)] for i in order]

    groups = tuple(GroupAnnotation(members=frozenset(m), activities=a) for m, a, _ in group_specs)
    votes = Counter(int(tables.global_of_social[s]) for m, _, s in group_specs if len(m) >= 2)
    if not votes:
        votes = Counter(int(tables.global_of_social[s]) for _, _, s in group_specs)
    top = max(votes.values())
    majority = min(g for g, c in votes.items() if c == top)
    return FrameAnnotation(
        frame_id=frame_id,
        image_width=int(round(config.arena_width)),
        image_height=int(round(config.arena_height)),
        subjects=tuple(subjects),
        groups=groups,
        global_activities=frozenset({majority}),
    )


def synth_generate(config: SynthConfig, seed: int) -> List[FrameAnnotation]:
    """Seed-deterministic list of frames; frame ids step by ``config.frame_stride``."""
    config.validate()
    tables = LabelTables.build(config)
    rng = np.random.default_rng(seed)
    frames = [
        _make_frame(i * config.frame_stride, config, tables, rng) for i in range(config.n_frames)
    ]
    logger.info(
        "generated %d frames (%d subjects, %d groups, sigma %.3g, seed %d)",
        len(frames),
        config.n_subjects,
        config.n_groups,
        config.noise_sigma,
        seed,
    )
    return frames
