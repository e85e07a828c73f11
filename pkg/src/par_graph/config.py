from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

from .errors import ConfigError


NUM_ACTIONS = 27
NUM_SOCIAL = 11
NUM_GLOBAL = 7

FEATURE_DIM = 32
HIDDEN_DIM = 64

RELATION_LAMBDA = 0.5
RHO_RATIO = 0.2

BATCH_SIZE = 4
LEARNING_RATE = 2e-5
EPOCHS = 50
LABEL_THRESHOLD = 0.5

KEY_STRIDE = 15

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

BCE_CLAMP = 1e-7


@dataclass
class AblationFlags:
    """Each switch turns off one part of the network."""

    no_residual_f: bool = False
    no_fhat: bool = False
    euclid_dist: bool = False
    no_dbreve: bool = False
    no_e: bool = False
    maxpool_agg: bool = False
    no_g2i: bool = False
    no_g2p: bool = False


@dataclass
class ModelConfig:
    feature_dim: int = FEATURE_DIM
    hidden_dim: int = HIDDEN_DIM
    relation_lambda: float = RELATION_LAMBDA
    rho_ratio: float = RHO_RATIO
    gcn_rounds: int = 1
    shared_aio: bool = True
    mask_node_update: bool = False
    num_actions: int = NUM_ACTIONS
    num_social: int = NUM_SOCIAL
    num_global: int = NUM_GLOBAL
    ablations: AblationFlags = field(default_factory=AblationFlags)

    def validate(self) -> None:
        if self.feature_dim <= 0 or self.hidden_dim <= 0:
            raise ConfigError("feature_dim and hidden_dim must be positive")
        if not 0.0 <= self.relation_lambda <= 1.0:
            raise ConfigError(f"relation_lambda must lie in [0, 1], got {self.relation_lambda}")
        if self.rho_ratio <= 0:
            raise ConfigError(f"rho_ratio must be positive, got {self.rho_ratio}")
        if self.gcn_rounds < 1:
            raise ConfigError("gcn_rounds must be at least 1")
        if min(self.num_actions, self.num_social, self.num_global) <= 0:
            raise ConfigError("vocabulary sizes must be positive")


@dataclass
class ClusterConfig:
    method: str = "spectral"
    k_max: Optional[int] = None
    seed: int = 0
    max_iter: int = 100
    jacobi_tol: float = 1e-10
    affinity_floor: Optional[float] = None
    local_scaling: bool = False
    local_scaling_k: int = 7
    min_member_affinity: float = 0.25
    distance_threshold: float = 1.0

    def validate(self) -> None:
        if self.method not in ("spectral", "threshold"):
            raise ConfigError(f"unknown clustering method: {self.method}")
        if self.k_max is not None and self.k_max < 1:
            raise ConfigError("k_max must be at least 1")
        if self.affinity_floor is not None and not 0.0 <= self.affinity_floor < 1.0:
            raise ConfigError(f"affinity_floor must lie in [0, 1), got {self.affinity_floor}")
        if self.local_scaling_k < 1:
            raise ConfigError("local_scaling_k must be at least 1")


@dataclass
class TrainConfig:
    batch_size: int = BATCH_SIZE
    learning_rate: float = LEARNING_RATE
    epochs: int = EPOCHS
    label_threshold: float = LABEL_THRESHOLD
    loss_weights: Dict[str, float] = field(
        default_factory=lambda: {"individual": 1.0, "social": 1.0, "global": 1.0, "relation": 1.0}
    )
    seed: int = 0

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if not 0.0 < self.label_threshold < 1.0:
            raise ConfigError(f"label_threshold must lie in (0, 1), got {self.label_threshold}")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        unknown = set(self.loss_weights) - {"individual", "social", "global", "relation"}
        if unknown:
            raise ConfigError(f"unknown loss weight keys: {sorted(unknown)}")


@dataclass
class SynthConfig:
    n_frames: int = 40
    n_subjects: int = 10
    n_groups: int = 3
    arena_width: float = 1920.0
    arena_height: float = 1080.0
    feature_dim: int = FEATURE_DIM
    noise_sigma: float = 0.1
    label_seed: int = 7
    singleton_fraction: float = 0.2
    intra_spread: float = 40.0
    box_height: float = 160.0
    extra_label_prob: float = 0.0
    frame_stride: int = KEY_STRIDE
    num_actions: int = NUM_ACTIONS
    num_social: int = NUM_SOCIAL
    num_global: int = NUM_GLOBAL

    def validate(self) -> None:
        if self.n_subjects < 1:
            raise ConfigError("n_subjects must be at least 1")
        if self.n_groups < 0 or self.n_groups > self.n_subjects:
            raise ConfigError("n_groups must lie in [0, n_subjects]")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        if not 0.0 <= self.singleton_fraction <= 1.0:
            raise ConfigError("singleton_fraction must lie in [0, 1]")
        if not 0.0 <= self.extra_label_prob < 1.0:
            raise ConfigError("extra_label_prob must lie in [0, 1)")
        if self.intra_spread <= 0 or self.box_height <= 0:
            raise ConfigError("intra_spread and box_height must be positive")
        if self.frame_stride < 1:
            raise ConfigError("frame_stride must be at least 1")
