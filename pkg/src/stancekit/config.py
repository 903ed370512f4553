"""Run configuration: one YAML file plus flag overrides.

The file is a nested key-value document mirroring :class:`RunConfig`.
Unknown keys are rejected so typos fail loudly. The API key is never part
of the config; it is read from the ``STANCEKIT_API_KEY`` environment
variable only. All randomness flows from ``seed``, expanded per module via
:func:`stancekit.core.derive_seed`.

Example::

    seed: 7
    gateway:
      backend: mock
      mock:
        rules:
          - contains: "stance: agree"
            response: "A supportive post."
      cache_dir: .stancekit-cache
    adapt:
      k: 3
      label_mode: two
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .classifier import TrainHyper
from .datagen import GenSettings
from .gateway import RetryPolicy


class ConfigError(Exception):
    pass


@dataclass
class MockSettings:
    """Mock backend selection: fixture directory and/or substring rules."""

    fixtures_dir: Optional[str] = None
    rules: list[dict] = field(default_factory=list)
    strict: bool = True

    def __post_init__(self):
        for rule in self.rules:
            if not isinstance(rule, dict) or set(rule) != {"contains", "response"}:
                raise ConfigError(
                    "each mock rule must have exactly the keys contains/response"
                )


@dataclass
class GatewayConfig:
    backend: str = "http"  # "http" | "mock"
    endpoint_url: str = "https://api.openai.com/v1/chat/completions"
    model_name: str = "gpt-3.5-turbo"
    generation_temperature: float = 0.7
    classification_temperature: float = 0.0
    max_tokens: int = 256
    cache_dir: Optional[str] = None
    max_in_flight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    mock: MockSettings = field(default_factory=MockSettings)

    def __post_init__(self):
        if self.backend not in ("http", "mock"):
            raise ConfigError(f"gateway.backend must be http or mock, got {self.backend!r}")
        for name in ("generation_temperature", "classification_temperature"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"gateway.{name} must be finite and >= 0")
        if self.max_tokens < 1:
            raise ConfigError("gateway.max_tokens must be >= 1")
        if self.max_in_flight < 1:
            raise ConfigError("gateway.max_in_flight must be >= 1")


@dataclass
class AdaptSettings:
    k: int = 3
    label_mode: str = "two"
    grouping: str = "per_topic"
    finetune: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("adapt.k must be >= 1")
        if self.label_mode not in ("two", "three"):
            raise ConfigError(f"adapt.label_mode must be two or three, got {self.label_mode!r}")
        if self.grouping not in ("per_topic", "per_input"):
            raise ConfigError(
                f"adapt.grouping must be per_topic or per_input, got {self.grouping!r}"
            )


@dataclass
class DatagenSettings:
    parse_retries: int = 2
    strict_length: bool = False
    salt_template: str = "\n\n[sample {index}]"

    def __post_init__(self):
        if self.parse_retries < 0:
            raise ConfigError("datagen.parse_retries must be >= 0")
        if "{index}" not in self.salt_template:
            raise ConfigError("datagen.salt_template must contain {index}")


@dataclass
class RunConfig:
    seed: int = 0
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    adapt: AdaptSettings = field(default_factory=AdaptSettings)
    classifier: TrainHyper = field(default_factory=TrainHyper)
    datagen: DatagenSettings = field(default_factory=DatagenSettings)
    schemes: dict = field(default_factory=dict)  # per-format scheme override
    vast_columns: dict = field(
        default_factory=lambda: {"post": "post", "topic": "new_topic", "label": "label"}
    )

    def gen_settings(self) -> GenSettings:
        return GenSettings(
            model_name=self.gateway.model_name,
            temperature=self.gateway.generation_temperature,
            max_tokens=self.gateway.max_tokens,
            parse_retries=self.datagen.parse_retries,
            strict_length=self.datagen.strict_length,
            salt_template=self.datagen.salt_template,
        )


def _from_dict(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown config keys at {path or 'top level'}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        nested = _NESTED.get((cls, name))
        if nested is not None:
            kwargs[name] = _from_dict(nested, value, f"{path}{name}.")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config at {path or 'top level'}: {exc}") from exc


_NESTED = {
    (RunConfig, "gateway"): GatewayConfig,
    (RunConfig, "adapt"): AdaptSettings,
    (RunConfig, "classifier"): TrainHyper,
    (RunConfig, "datagen"): DatagenSettings,
    (GatewayConfig, "retry"): RetryPolicy,
    (GatewayConfig, "mock"): MockSettings,
}


def config_from_dict(data: dict) -> RunConfig:
    return _from_dict(RunConfig, data or {}, "")


def config_to_dict(config: RunConfig) -> dict:
    return dataclasses.asdict(config)


def load_config(path: "str | Path") -> RunConfig:
    """Load and validate a YAML config file."""
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a mapping")
    return config_from_dict(raw)


def save_config(config: RunConfig, path: "str | Path") -> None:
    Path(path).write_text(
        yaml.safe_dump(config_to_dict(config), sort_keys=True), encoding="utf-8"
    )
