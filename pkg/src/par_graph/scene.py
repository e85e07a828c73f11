from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from .clustering import Partition
from .config import KEY_STRIDE, NUM_ACTIONS, NUM_GLOBAL, NUM_SOCIAL
from .errors import DataError
from .schema import DatasetStats, FeatureRef, FrameRecord, GroupRecord, SubjectRecord, VocabRecord

logger = logging.getLogger(__name__)

BLOB_MAGIC = b"PARF"
_BLOB_HEADER = np.dtype([("magic", "S4"), ("rows", "<u4"), ("dim", "<u4")])
_BLOB_DTYPE = np.dtype("<f4")


@dataclass(frozen=True)
class LabelVocab:
    individual_actions: Tuple[str, ...]
    social_activities: Tuple[str, ...]
    global_activities: Tuple[str, ...]

    def __post_init__(self) -> None:
        for tier, names in (
            ("individual", self.individual_actions),
            ("social", self.social_activities),
            ("global", self.global_activities),
        ):
            if not names:
                raise DataError(f"{tier} vocabulary is empty")
            if len(set(names)) != len(names):
                raise DataError(f"{tier} vocabulary has duplicate names")

    @classmethod
    def default(
        cls,
        num_actions: int = NUM_ACTIONS,
        num_social: int = NUM_SOCIAL,
        num_global: int = NUM_GLOBAL,
    ) -> "LabelVocab":
        return cls(
            individual_actions=tuple(f"action-{i:02d}" for i in range(num_actions)),
            social_activities=tuple(f"social-{i:02d}" for i in range(num_social)),
            global_activities=tuple(f"global-{i:02d}" for i in range(num_global)),
        )

    @property
    def sizes(self) -> Tuple[int, int, int]:
        return (
            len(self.individual_actions),
            len(self.social_activities),
            len(self.global_activities),
        )

    def to_record(self) -> VocabRecord:
        return VocabRecord(
            individual_actions=list(self.individual_actions),
            social_activities=list(self.social_activities),
            global_activities=list(self.global_activities),
        )

    @classmethod
    def from_record(cls, record: VocabRecord) -> "LabelVocab":
        return cls(
            tuple(record.individual_actions),
            tuple(record.social_activities),
            tuple(record.global_activities),
        )


@dataclass(frozen=True, eq=False)
class SubjectAnnotation:
    id: int
    bbox: Tuple[float, float, float, float]
    feature: np.ndarray
    actions: FrozenSet[int] = frozenset()

    def __post_init__(self) -> None:
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise DataError(f"subject {self.id}: bbox width and height must be positive")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SubjectAnnotation):
            return NotImplemented
        return (
            self.id == other.id
            and self.bbox == other.bbox
            and self.actions == other.actions
            and np.array_equal(self.feature, other.feature)
        )

    @property
    def anchor(self) -> Tuple[float, float]:
        x, y, w, h = self.bbox
        return (x + w / 2.0, y + h)

    @property
    def area(self) -> float:
        return self.bbox[2] * self.bbox[3]


@dataclass(frozen=True)
class GroupAnnotation:
    members: FrozenSet[int]
    activities: FrozenSet[int] = frozenset()


@dataclass(frozen=True)
class FrameAnnotation:
    frame_id: int
    image_width: int
    image_height: int
    subjects: Tuple[SubjectAnnotation, ...]
    groups: Tuple[GroupAnnotation, ...] = ()
    global_activities: FrozenSet[int] = frozenset()

    def __post_init__(self) -> None:
        if not self.subjects:
            raise DataError("frame has no subjects", frame_id=self.frame_id)
        ids = [s.id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate subject ids", frame_id=self.frame_id)
        known = set(ids)
        seen: set[int] = set()
        for group in self.groups:
            dangling = group.members - known
            if dangling:
                raise DataError(
                    f"group cites unknown subject ids {sorted(dangling)}", frame_id=self.frame_id
                )
            if group.members & seen:
                raise DataError("group member sets overlap", frame_id=self.frame_id)
            seen |= group.members

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    @property
    def subject_ids(self) -> List[int]:
        return [s.id for s in self.subjects]

    def index_of(self) -> Dict[int, int]:
        return {s.id: i for i, s in enumerate(self.subjects)}

    def features(self) -> np.ndarray:
        return np.stack([s.feature for s in self.subjects]).astype(np.float64)

    def social_groups(self) -> List[GroupAnnotation]:
        """Groups that take part in social-activity evaluation (two or more members)."""
        return [g for g in self.groups if len(g.members) >= 2]

    def partition(self) -> Partition:
        groups = [g.members for g in self.social_groups()]
        grouped = frozenset().union(*groups) if groups else frozenset()
        return Partition(
            groups=tuple(groups),
            singletons=frozenset(self.subject_ids) - grouped,
        )


def ground_truth_relation(frame: FrameAnnotation) -> np.ndarray:
    """Binary co-membership matrix; the diagonal is 1 and excluded from the loss."""
    index = frame.index_of()
    n = frame.n_subjects
    rel = np.eye(n)
    for group in frame.groups:
        rows = [index[m] for m in group.members]
        rel[np.ix_(rows, rows)] = 1.0
    return rel


def key_frames(frames: Sequence[FrameAnnotation], stride: int = KEY_STRIDE) -> List[FrameAnnotation]:
    if stride <= 1:
        return list(frames)
    return [f for f in frames if f.frame_id % stride == 0]


def dataset_stats(frames: Sequence[FrameAnnotation], name: str = "all") -> DatasetStats:
    return DatasetStats(
        name=name,
        frames=len(frames),
        groups=sum(len(f.social_groups()) for f in frames),
        subjects=sum(f.n_subjects for f in frames),
        individual_labels=sum(len(s.actions) for f in frames for s in f.subjects),
        social_labels=sum(len(g.activities) for f in frames for g in f.social_groups()),
        global_labels=sum(len(f.global_activities) for f in frames),
    )


def write_feature_blob(path: Path, features: np.ndarray) -> None:
    features = np.asarray(features)
    header = np.array([(BLOB_MAGIC, features.shape[0], features.shape[1])], dtype=_BLOB_HEADER)
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(features, dtype=_BLOB_DTYPE).tobytes())


def read_feature_blob(path: Path) -> np.ndarray:
    if not path.exists():
        raise DataError(f"feature blob not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _BLOB_HEADER.itemsize:
        raise DataError(f"feature blob {path} is truncated")
    header = np.frombuffer(raw, dtype=_BLOB_HEADER, count=1)[0]
    if bytes(header["magic"]) != BLOB_MAGIC:
        raise DataError(f"feature blob {path} has a bad magic number")
    rows, dim = int(header["rows"]), int(header["dim"])
    expected = _BLOB_HEADER.itemsize + rows * dim * _BLOB_DTYPE.itemsize
    if len(raw) != expected:
        raise DataError(f"feature blob {path} has {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype=_BLOB_DTYPE, offset=_BLOB_HEADER.itemsize)
    return data.astype(np.float64).reshape(rows, dim)


def _frame_from_record(
    record: FrameRecord, base_dir: Path, blobs: Dict[str, np.ndarray], line: int
) -> FrameAnnotation:
    subjects = []
    for s in record.subjects:
        if s.feature is not None:
            feature = np.asarray(s.feature, dtype=np.float64)
        else:
            ref = s.feature_ref
            if ref.file not in blobs:
                blobs[ref.file] = read_feature_blob(base_dir / ref.file)
            table = blobs[ref.file]
            if ref.row >= table.shape[0]:
                raise DataError(f"feature_ref row {ref.row} outside {ref.file}", line=line)
            feature = table[ref.row].copy()
        subjects.append(
            SubjectAnnotation(
                id=s.id,
                bbox=tuple(float(v) for v in s.bbox),
                feature=feature,
                actions=frozenset(s.actions),
            )
        )
    groups = tuple(
        GroupAnnotation(members=frozenset(g.members), activities=frozenset(g.activities))
        for g in record.groups
    )
    return FrameAnnotation(
        frame_id=record.frame_id,
        image_width=record.image_width,
        image_height=record.image_height,
        subjects=tuple(subjects),
        groups=groups,
        global_activities=frozenset(record.global_activities),
    )


def _check_vocab(frame: FrameAnnotation, vocab: LabelVocab, line: int) -> None:
    n_act, n_soc, n_glob = vocab.sizes
    for s in frame.subjects:
        if any(a < 0 or a >= n_act for a in s.actions):
            raise DataError(f"subject {s.id} has an action id outside the vocabulary", line=line)
    for g in frame.groups:
        if any(a < 0 or a >= n_soc for a in g.activities):
            raise DataError("group activity id outside the vocabulary", line=line)
    if any(a < 0 or a >= n_glob for a in frame.global_activities):
        raise DataError("global activity id outside the vocabulary", line=line)


def load_dataset(path: Path, vocab: Optional[LabelVocab] = None) -> List[FrameAnnotation]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset not found: {path}")
    frames: List[FrameAnnotation] = []
    blobs: Dict[str, np.ndarray] = {}
    dim: Optional[int] = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = FrameRecord.model_validate(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON: {exc}", line=line_no) from exc
            except ValidationError as exc:
                raise DataError(f"schema violation: {exc}", line=line_no) from exc
            try:
                frame = _frame_from_record(record, path.parent, blobs, line_no)
            except DataError as exc:
                if exc.line is None:
                    raise DataError(str(exc), line=line_no) from exc
                raise
            if vocab is not None:
                _check_vocab(frame, vocab, line_no)
            for s in frame.subjects:
                if dim is None:
                    dim = s.feature.shape[0]
                elif s.feature.shape[0] != dim:
                    raise DataError(
                        f"feature dim {s.feature.shape[0]} differs from dataset dim {dim}",
                        line=line_no,
                    )
            frames.append(frame)
    logger.info("loaded %d frames from %s", len(frames), path)
    return frames


def _frame_record(frame: FrameAnnotation, refs: Optional[Iterable[FeatureRef]]) -> FrameRecord:
    ref_iter = iter(refs) if refs is not None else None
    subjects = []
    for s in frame.subjects:
        kwargs = {}
        if ref_iter is not None:
            kwargs["feature_ref"] = next(ref_iter)
        else:
            kwargs["feature"] = [float(v) for v in s.feature]
        subjects.append(
            SubjectRecord(id=s.id, bbox=list(s.bbox), actions=sorted(s.actions), **kwargs)
        )
    return FrameRecord(
        frame_id=frame.frame_id,
        image_width=frame.image_width,
        image_height=frame.image_height,
        subjects=subjects,
        groups=[
            GroupRecord(members=sorted(g.members), activities=sorted(g.activities))
            for g in frame.groups
        ],
        global_activities=sorted(frame.global_activities),
    )


def save_dataset(
    frames: Sequence[FrameAnnotation], path: Path, blob_path: Optional[Path] = None
) -> None:
    """Write frames as NDJSON; features go inline unless `blob_path` is given."""
    path = Path(path)
    row = 0
    refs_per_frame: List[Optional[List[FeatureRef]]] = []
    if blob_path is not None:
        blob_path = Path(blob_path)
        all_features = [s.feature for f in frames for s in f.subjects]
        dim = all_features[0].shape[0] if all_features else 0
        stacked = np.stack(all_features) if all_features else np.zeros((0, dim))
        write_feature_blob(blob_path, stacked)
        rel = os.path.relpath(blob_path.resolve(), path.parent.resolve())
        for f in frames:
            refs = []
            for _ in f.subjects:
                refs.append(FeatureRef(file=rel, row=row))
                row += 1
            refs_per_frame.append(refs)
    else:
        refs_per_frame = [None] * len(frames)

    with open(path, "w", encoding="utf-8") as fh:
        for frame, refs in zip(frames, refs_per_frame):
            record = _frame_record(frame, refs)
            fh.write(record.model_dump_json(by_alias=True, exclude_none=True))
            fh.write("\n")
    logger.info("wrote %d frames to %s", len(frames), path)
