"""Service configuration: JSON file plus DRIFT_-prefixed env overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping, Optional

from .pipeline import PipelineConfig

ENV_PREFIX = "DRIFT_"


class ConfigError(ValueError):
    """Invalid configuration; message names the offending key."""


@dataclass(frozen=True)
class ServiceConfig:
    registry_path: str = ""
    profile_path: str = ""
    host: str = "127.0.0.1"
    port: int = 8787
    event_log_path: str = "driftwatch-events.jsonl"
    command_log_path: str = "driftwatch-commands.jsonl"
    window_size: int = 500
    stride: int = 0
    min_window: int = 100
    alpha: float = 0.01
    bf_threshold: float = 5.0
    cooldown_windows: int = 10
    approval_ttl_hours: float = 24.0
    mc_samples: int = 20000
    seed: int = 0
    min_subgroup: int = 30
    reference_kappa: float = 100.0
    webhook_retries: int = 3

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            window_size=self.window_size, stride=self.stride,
            min_window=self.min_window, alpha=self.alpha,
            bf_threshold=self.bf_threshold, cooldown_windows=self.cooldown_windows,
            approval_ttl_ms=int(self.approval_ttl_hours * 3600 * 1000),
            mc_samples=self.mc_samples, seed=self.seed,
            min_subgroup=self.min_subgroup, reference_kappa=self.reference_kappa,
            webhook_retries=self.webhook_retries,
        )

    def validate_for_serve(self) -> None:
        if not self.registry_path:
            raise ConfigError("registry_path: required to serve")
        if not self.profile_path:
            raise ConfigError("profile_path: required to serve")
        for key, path in (("registry_path", self.registry_path),
                          ("profile_path", self.profile_path)):
            if not Path(path).exists():
                raise ConfigError(f"{key}: file not found: {path}")
        self._check_ranges()

    def _check_ranges(self) -> None:
        positive = ("port", "window_size", "min_window", "bf_threshold",
                    "approval_ttl_hours", "mc_samples", "reference_kappa")
        for key in positive:
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key}: must be positive, got {getattr(self, key)}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha: must lie in (0, 1), got {self.alpha}")
        if self.stride < 0 or self.cooldown_windows < 0 or self.webhook_retries < 1:
            raise ConfigError("stride/cooldown_windows/webhook_retries out of range")


_FIELD_TYPES = {f.name: f.type for f in fields(ServiceConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind in ("int",):
            return int(raw)
        if kind in ("float",):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def load_config(path: Optional[str] = None,
                env: Optional[Mapping[str, str]] = None) -> ServiceConfig:
    """Read the JSON config file, then apply DRIFT_* env overrides.

    Unknown keys in either source fail fast with the offending key named.
    """
    values: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config root must be a JSON object")
        for key, value in loaded.items():
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{key}: unknown configuration key")
            values[key] = value
    env = os.environ if env is None else env
    for name, raw in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{name}: unknown configuration key")
        values[key] = _coerce(key, raw)
    try:
        config = ServiceConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    config._check_ranges()
    return config
