"""Experiment configuration: JSON in, validated dataclasses out.

A config file is a single JSON document. Every field has a default and
the resolved config (all defaults made explicit) is echoed next to the
experiment outputs, so a run can always be reproduced from its artifacts
alone. ``untrustworthy_fraction`` may be a list, in which case the run
is swept over the listed values.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Tuple

from .behaviors import AdversaryBehavior, BehaviorKind


class ConfigurationError(ValueError):
    """One or more invalid configuration values, all listed at once."""


DEFAULT_ADVERSARIES = (
    AdversaryBehavior(kind=BehaviorKind.LABEL_FLIP, intensity=1.0),
    AdversaryBehavior(kind=BehaviorKind.RESOURCE_OVERUSE, intensity=3.0),
)


@dataclass(frozen=True)
class DatasetConfig:
    source: str = "synthetic"  # "synthetic" | "idx"
    n_samples: int = 4000
    n_classes: int = 10
    noise: float = 0.25
    image_side: int = 28
    images_path: Optional[str] = None
    labels_path: Optional[str] = None


@dataclass(frozen=True)
class ModelConfig:
    epochs: int = 2
    learning_rate: float = 0.5
    batch_size: int = 32


@dataclass(frozen=True)
class PartitionConfig:
    labels_per_client: Tuple[int, int] = (3, 4)
    size_range: Tuple[int, int] = (30, 60)
    test_fraction: float = 0.2


@dataclass(frozen=True)
class ResourceConfig:
    ram_range: Tuple[float, float] = (100.0, 1300.0)
    cpu_range: Tuple[float, float] = (50.0, 1000.0)
    bandwidth_range: Tuple[float, float] = (50.0, 1300.0)
    band_rel_width: float = 0.2
    reference_size: int = 40


@dataclass(frozen=True)
class BootstrapConfig:
    enabled: bool = True
    past_servers: int = 8
    seen_prob: float = 0.6
    label_noise: float = 0.1
    records_per_server: Tuple[int, int] = (1, 3)
    initial_credibility: float = 0.5
    credibility_cap: float = 0.99
    eval_servers: int = 0
    eval_recommenders: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    n_devices: int = 20
    n_servers: int = 2
    quota: int = 5
    rounds: int = 10
    untrustworthy_fraction: float = 0.0
    adversaries: Tuple[AdversaryBehavior, ...] = DEFAULT_ADVERSARIES
    new_devices_per_round: int = 0
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    resources: ResourceConfig = field(default_factory=ResourceConfig)
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    output_dir: str = "out"

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["adversaries"] = [
            {"kind": b.kind.value, "intensity": b.intensity} for b in self.adversaries
        ]
        return payload

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _parse_adversaries(raw, errors) -> Tuple[AdversaryBehavior, ...]:
    behaviors = []
    for i, item in enumerate(raw):
        try:
            kind = BehaviorKind(item["kind"])
            behaviors.append(
                AdversaryBehavior(kind=kind, intensity=float(item.get("intensity", 1.0)))
            )
        except (KeyError, ValueError) as exc:
            errors.append(f"adversaries[{i}]: {exc}")
    return tuple(behaviors)


def _pair(raw, name, errors, cast=float):
    try:
        lo, hi = raw
        lo, hi = cast(lo), cast(hi)
        if lo > hi:
            errors.append(f"{name}: lower bound {lo} exceeds upper bound {hi}")
        return (lo, hi)
    except (TypeError, ValueError):
        errors.append(f"{name}: expected a [low, high] pair, got {raw!r}")
        return None


def _build_section(cls, raw: dict, errors, prefix: str, special: dict):
    kwargs = {}
    known = {f for f in cls.__dataclass_fields__}
    for key in raw:
        if key not in known:
            errors.append(f"{prefix}.{key}: unknown field")
    for name in known:
        if name not in raw:
            continue
        if name in special:
            value = special[name](raw[name])
        else:
            value = raw[name]
        if value is not None:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"{prefix}: {exc}")
        return cls()


def parse_config(raw: dict) -> ExperimentConfig:
    """Build a validated ExperimentConfig from a JSON-shaped dict.

    Raises ConfigurationError listing every problem found, not just the
    first one.
    """
    errors: List[str] = []
    known_top = set(ExperimentConfig.__dataclass_fields__)
    for key in raw:
        if key not in known_top:
            errors.append(f"{key}: unknown field")

    kwargs = {}
    for name in ("seed", "n_devices", "n_servers", "quota", "rounds", "new_devices_per_round"):
        if name in raw:
            try:
                kwargs[name] = int(raw[name])
            except (TypeError, ValueError):
                errors.append(f"{name}: expected an integer, got {raw[name]!r}")
    if "untrustworthy_fraction" in raw:
        value = raw["untrustworthy_fraction"]
        if isinstance(value, list):
            errors.append(
                "untrustworthy_fraction: sweep lists are expanded by "
                "load_experiment_configs, not parse_config"
            )
        else:
            kwargs["untrustworthy_fraction"] = float(value)
    if "adversaries" in raw:
        kwargs["adversaries"] = _parse_adversaries(raw["adversaries"], errors)
    if "output_dir" in raw:
        kwargs["output_dir"] = str(raw["output_dir"])

    sections = {
        "dataset": (DatasetConfig, {}),
        "model": (ModelConfig, {}),
        "partition": (
            PartitionConfig,
            {
                "labels_per_client": lambda v: _pair(v, "partition.labels_per_client", errors, int),
                "size_range": lambda v: _pair(v, "partition.size_range", errors, int),
            },
        ),
        "resources": (
            ResourceConfig,
            {
                "ram_range": lambda v: _pair(v, "resources.ram_range", errors),
                "cpu_range": lambda v: _pair(v, "resources.cpu_range", errors),
                "bandwidth_range": lambda v: _pair(v, "resources.bandwidth_range", errors),
            },
        ),
        "bootstrap": (
            BootstrapConfig,
            {
                "records_per_server": lambda v: _pair(
                    v, "bootstrap.records_per_server", errors, int
                ),
            },
        ),
    }
    for name, (cls, special) in sections.items():
        if name in raw:
            if not isinstance(raw[name], dict):
                errors.append(f"{name}: expected an object")
            else:
                kwargs[name] = _build_section(cls, raw[name], errors, name, special)

    config = None
    if not errors:
        config = ExperimentConfig(**kwargs)
        _validate(config, errors)
    if errors:
        raise ConfigurationError("invalid configuration:\n" + "\n".join(f"- {e}" for e in errors))
    return config


def _validate(config: ExperimentConfig, errors: List[str]) -> None:
    if config.rounds < 1:
        errors.append("rounds: must be >= 1")
    if config.n_devices < 1:
        errors.append("n_devices: must be >= 1")
    if config.n_servers < 1:
        errors.append("n_servers: must be >= 1")
    if not 1 <= config.quota <= config.n_devices:
        errors.append(f"quota: must be in [1, n_devices={config.n_devices}]")
    if not 0.0 <= config.untrustworthy_fraction <= 1.0:
        errors.append("untrustworthy_fraction: must be in [0, 1]")
    if config.untrustworthy_fraction > 0 and not config.adversaries:
        errors.append("adversaries: required when untrustworthy_fraction > 0")
    if config.new_devices_per_round < 0:
        errors.append("new_devices_per_round: must be >= 0")

    ds = config.dataset
    if ds.source not in ("synthetic", "idx"):
        errors.append(f"dataset.source: expected 'synthetic' or 'idx', got {ds.source!r}")
    if ds.source == "idx" and (not ds.images_path or not ds.labels_path):
        errors.append("dataset: idx source requires images_path and labels_path")
    if ds.source == "synthetic" and ds.n_samples < ds.n_classes:
        errors.append("dataset.n_samples: must cover at least one sample per class")

    if config.model.epochs < 0:
        errors.append("model.epochs: must be >= 0")
    if config.model.learning_rate <= 0:
        errors.append("model.learning_rate: must be positive")
    if config.model.batch_size < 1:
        errors.append("model.batch_size: must be >= 1")

    part = config.partition
    if part.labels_per_client[0] < 1:
        errors.append("partition.labels_per_client: lower bound must be >= 1")
    if part.size_range[0] < 1:
        errors.append("partition.size_range: lower bound must be >= 1")
    if not 0.0 < part.test_fraction < 1.0:
        errors.append("partition.test_fraction: must be in (0, 1)")

    res = config.resources
    if not 0.0 < res.band_rel_width < 2.0:
        errors.append("resources.band_rel_width: must be in (0, 2)")
    if res.reference_size < 4:
        errors.append("resources.reference_size: must be >= 4 for quartiles")

    boot = config.bootstrap
    if not 0.0 <= boot.seen_prob <= 1.0:
        errors.append("bootstrap.seen_prob: must be in [0, 1]")
    if not 0.0 <= boot.label_noise <= 1.0:
        errors.append("bootstrap.label_noise: must be in [0, 1]")
    if not 0.0 <= boot.initial_credibility <= 1.0:
        errors.append("bootstrap.initial_credibility: must be in [0, 1]")
    if not 0.0 < boot.credibility_cap <= 1.0:
        errors.append("bootstrap.credibility_cap: must be in (0, 1]")
    if boot.eval_servers > 0 and boot.eval_recommenders < 1:
        errors.append("bootstrap.eval_recommenders: must be >= 1 when evaluating")


def load_experiment_configs(path) -> List[Tuple[ExperimentConfig, str]]:
    """Load a config file, expanding an untrustworthy_fraction sweep.

    Returns (config, label) pairs; the label is empty for a single run
    and names the sweep point otherwise.
    """
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigurationError("configuration root must be a JSON object")

    fraction = raw.get("untrustworthy_fraction")
    if isinstance(fraction, list):
        configs = []
        for value in fraction:
            point = dict(raw)
            point["untrustworthy_fraction"] = float(value)
            label = f"uf{float(value):g}"
            configs.append((parse_config(point), label))
        return configs
    return [(parse_config(raw), "")]


def with_overrides(
    config: ExperimentConfig,
    seed: Optional[int] = None,
    output_dir: Optional[str] = None,
) -> ExperimentConfig:
    if seed is not None:
        config = replace(config, seed=seed)
    if output_dir is not None:
        config = replace(config, output_dir=output_dir)
    return config
