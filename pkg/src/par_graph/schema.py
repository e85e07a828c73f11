from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

WEIGHTS_FORMAT = "pargraph-weights-v1"
CHECKPOINT_FORMAT = "pargraph-checkpoint-v1"
REPORT_FORMAT = "pargraph-report-v1"


class FeatureRef(BaseModel):
    model_config = ConfigDict(extra="forbid")

    file: str
    row: int = Field(ge=0)


class SubjectRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: int
    bbox: List[float] = Field(min_length=4, max_length=4)
    actions: List[int] = Field(default_factory=list)
    feature: Optional[List[float]] = None
    feature_ref: Optional[FeatureRef] = None

    @field_validator("bbox")
    @classmethod
    def _positive_size(cls, bbox: List[float]) -> List[float]:
        if bbox[2] <= 0 or bbox[3] <= 0:
            raise ValueError(f"bbox width and height must be positive, got {bbox}")
        return bbox

    @model_validator(mode="after")
    def _one_feature_source(self) -> "SubjectRecord":
        if (self.feature is None) == (self.feature_ref is None):
            raise ValueError("exactly one of 'feature' or 'feature_ref' is required")
        return self


class GroupRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    members: List[int] = Field(min_length=1)
    activities: List[int] = Field(default_factory=list)


class FrameRecord(BaseModel):
    """One NDJSON line."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    frame_id: int
    image_width: int = Field(gt=0)
    image_height: int = Field(gt=0)
    subjects: List[SubjectRecord] = Field(min_length=1)
    groups: List[GroupRecord] = Field(default_factory=list)
    global_activities: List[int] = Field(default_factory=list, alias="global")


class TensorEntry(BaseModel):
    name: str
    shape: List[int]


class WeightManifest(BaseModel):
    format: str = WEIGHTS_FORMAT
    blob: str
    sha256: str
    tensors: List[TensorEntry]

    @field_validator("format")
    @classmethod
    def _known_format(cls, value: str) -> str:
        if value != WEIGHTS_FORMAT:
            raise ValueError(f"unsupported weight format {value!r}")
        return value


class VocabRecord(BaseModel):
    individual_actions: List[str]
    social_activities: List[str]
    global_activities: List[str]


class TrainingState(BaseModel):
    format: str = CHECKPOINT_FORMAT
    epoch: int
    step: int
    seed: int
    adam_beta1: float
    adam_beta2: float
    adam_eps: float
    vocab: VocabRecord
    model: Dict[str, Any]
    train: Dict[str, Any]
    config_echo: Dict[str, Any] = Field(default_factory=dict)


class EpochLog(BaseModel):
    epoch: int
    steps: int
    loss: float
    individual: float
    social: float
    global_: float = Field(alias="global")
    relation: float

    model_config = ConfigDict(populate_by_name=True)


class DatasetStats(BaseModel):
    name: str
    frames: int
    groups: int
    subjects: int
    individual_labels: int
    social_labels: int
    global_labels: int


class MetricsReport(BaseModel):
    format: str = REPORT_FORMAT
    p_i: float
    r_i: float
    f_i: float
    p_p: float
    r_p: float
    f_p: float
    p_g: float
    r_g: float
    f_g: float
    f_a: float
    iou_05: float
    iou_auc: float
    mat_iou: float
    iou_05_precision: float
    iou_auc_precision: float
    iou_curve: Dict[str, float] = Field(default_factory=dict)
    frames: int
    subjects: int
    groups: int
    gt_groups_used: bool = False
    notes: List[str] = Field(default_factory=list)
    config_echo: Dict[str, Any] = Field(default_factory=dict)

    def write(self, path: Path) -> None:
        path.write_text(self.model_dump_json(indent=2), encoding="utf-8")

    @classmethod
    def from_file(cls, path: Path) -> "MetricsReport":
        return cls.model_validate_json(path.read_text(encoding="utf-8"))
