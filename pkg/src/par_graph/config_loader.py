from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import yaml

from .config import AblationFlags, ClusterConfig, ModelConfig, SynthConfig, TrainConfig
from .errors import ConfigError


@dataclass
class RunConfig:
    """Complete run configuration"""
    model: ModelConfig = field(default_factory=ModelConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def validate(self) -> None:
        self.model.validate()
        self.cluster.validate()
        self.train.validate()
        self.synth.validate()

    def echo(self) -> Dict[str, Any]:
        """Plain dict copy written into every output artifact"""
        return asdict(self)


_SECTIONS = {
    "model": ModelConfig,
    "cluster": ClusterConfig,
    "train": TrainConfig,
    "synth": SynthConfig,
}


def _coerce(value: Any, current: Any, where: str) -> Any:
    # YAML reads "1e-3" as a string; floats also accept ints
    if isinstance(current, float) and not isinstance(current, bool):
        if isinstance(value, (int, str)) and not isinstance(value, bool):
            try:
                return float(value)
            except ValueError as exc:
                raise ConfigError(f"{where} expects a number, got {value!r}") from exc
    return value


def _build(cls: type, data: Dict[str, Any], where: str) -> Any:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    defaults = cls()
    kwargs = {k: _coerce(v, getattr(defaults, k), f"{where}.{k}") for k, v in data.items()}
    if cls is ModelConfig and "ablations" in kwargs:
        kwargs["ablations"] = _build(AblationFlags, kwargs["ablations"] or {}, f"{where}.ablations")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def config_from_dict(data: Optional[Dict[str, Any]]) -> RunConfig:
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a mapping")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    sections = {name: _build(cls, data.get(name) or {}, name) for name, cls in _SECTIONS.items()}
    return RunConfig(**sections)


def load_config(config_path: Path) -> RunConfig:
    """Load configuration from a YAML (or JSON) file"""
    if not config_path.exists():
        raise ConfigError(f"Config file not found: {config_path}")

    with open(config_path, "r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {config_path}: {exc}") from exc

    return config_from_dict(data)


def apply_overrides(config: RunConfig, overrides: Iterable[str]) -> RunConfig:
    """Apply `section.key=value` strings; values are parsed as YAML scalars"""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        path, raw = item.split("=", 1)
        parts = path.strip().split(".")
        if len(parts) < 2 or parts[0] not in _SECTIONS:
            raise ConfigError(f"override must name a section ({', '.join(_SECTIONS)}): {item!r}")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse override value {raw!r}") from exc

        target: Any = getattr(config, parts[0])
        for part in parts[1:-1]:
            if not is_dataclass(target) or not hasattr(target, part):
                raise ConfigError(f"unknown config key: {path}")
            target = getattr(target, part)
        key = parts[-1]
        if isinstance(target, dict):
            if key not in target:
                raise ConfigError(f"unknown config key: {path}")
            target[key] = _coerce(value, target[key], path)
        elif is_dataclass(target) and key in {f.name for f in fields(target)}:
            setattr(target, key, _coerce(value, getattr(target, key), path))
        else:
            raise ConfigError(f"unknown config key: {path}")
    return config


def create_default_config(output_path: Path) -> None:
    """Create a default config.yaml file"""
    defaults = RunConfig().echo()

    def dump(section: str) -> str:
        return yaml.safe_dump({section: defaults[section]}, sort_keys=False, default_flow_style=False)

    with open(output_path, "w", encoding="utf-8") as f:
        f.write("# par-graph Configuration File\n")
        f.write("# Generated default configuration\n\n")
        f.write("# Network shape, relation fusion weight (relation_lambda) and the\n")
        f.write("# distance cut-off ratio (rho = rho_ratio * image width).\n")
        f.write("# ablations switch off single parts of the network.\n")
        f.write(dump("model"))
        f.write("\n# Group detection at inference: spectral (eigengap) or threshold\n")
        f.write("# k_max: null picks ceil(M/2) for M connected subjects\n")
        f.write("# affinity_floor: null subtracts the lowest value the relation matrix can take\n")
        f.write(dump("cluster"))
        f.write("\n# Optimisation; a label is emitted when its probability > label_threshold\n")
        f.write(dump("train"))
        f.write("\n# Synthetic scene generator used by `par-graph synth`\n")
        f.write(dump("synth"))
