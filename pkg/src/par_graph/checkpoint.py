from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import ValidationError

from .config import AblationFlags, ModelConfig, TrainConfig
from .errors import DataError, InvalidArgumentError
from .model import ParModel
from .nn import AdamState
from .scene import LabelVocab
from .schema import CHECKPOINT_FORMAT, TrainingState
from .weights import load_arrays, save_arrays

logger = logging.getLogger(__name__)

WEIGHTS_FILE = "weights.json"
ADAM_FILE = "adam.json"
STATE_FILE = "state.json"


@dataclass
class Checkpoint:
    model: ParModel
    adam: AdamState
    vocab: LabelVocab
    train_config: TrainConfig
    epoch: int
    seed: int


def save_checkpoint(
    directory: Path,
    model: ParModel,
    adam: AdamState,
    vocab: LabelVocab,
    train_config: TrainConfig,
    epoch: int,
    config_echo: Optional[Dict[str, Any]] = None,
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_arrays(model.params.arrays(), directory / WEIGHTS_FILE)
    moments: Dict[str, Any] = {}
    for name in model.params.names():
        moments[f"m/{name}"] = adam.m[name]
        moments[f"v/{name}"] = adam.v[name]
    save_arrays(moments, directory / ADAM_FILE)
    state = TrainingState(
        epoch=epoch,
        step=adam.step,
        seed=train_config.seed,
        adam_beta1=adam.beta1,
        adam_beta2=adam.beta2,
        adam_eps=adam.eps,
        vocab=vocab.to_record(),
        model=asdict(model.config),
        train=asdict(train_config),
        config_echo=config_echo or {},
    )
    (directory / STATE_FILE).write_text(state.model_dump_json(indent=2), encoding="utf-8")
    logger.info("checkpoint for epoch %d written to %s", epoch, directory)


def _model_config(raw: Dict[str, Any]) -> ModelConfig:
    raw = dict(raw)
    flags = AblationFlags(**raw.pop("ablations", {}))
    return ModelConfig(ablations=flags, **raw)


def load_checkpoint(directory: Path) -> Checkpoint:
    directory = Path(directory)
    state_path = directory / STATE_FILE
    if not state_path.exists():
        raise DataError(f"checkpoint state not found: {state_path}")
    try:
        state = TrainingState.model_validate_json(state_path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise DataError(f"invalid checkpoint state {state_path}: {exc}") from exc
    if state.format != CHECKPOINT_FORMAT:
        raise DataError(f"unsupported checkpoint format {state.format!r}")

    try:
        model_config = _model_config(state.model)
        train_config = TrainConfig(**state.train)
    except TypeError as exc:
        raise DataError(f"checkpoint config does not match this version: {exc}") from exc

    model = ParModel(model_config, seed=state.seed)
    try:
        model.params.assign(load_arrays(directory / WEIGHTS_FILE))
    except InvalidArgumentError as exc:
        raise DataError(f"checkpoint weights do not fit the model: {exc}") from exc

    moments = load_arrays(directory / ADAM_FILE)
    adam = AdamState(step=state.step, beta1=state.adam_beta1, beta2=state.adam_beta2, eps=state.adam_eps)
    for name in model.params.names():
        try:
            adam.m[name] = moments[f"m/{name}"]
            adam.v[name] = moments[f"v/{name}"]
        except KeyError as exc:
            raise DataError(f"adam state is missing {exc.args[0]}") from exc

    return Checkpoint(
        model=model,
        adam=adam,
        vocab=LabelVocab.from_record(state.vocab),
        train_config=train_config,
        epoch=state.epoch,
        seed=state.seed,
    )
