"""Monitored-model identity and feature schema.

Every other component validates against the schema declared here: the
registry checks scenario estimates against it, the ingest layer rejects
nonconforming observations, and the inference engine picks a likelihood
family per feature kind.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping


class FeatureKind(str, Enum):
    """Declared type of a monitored feature.

    The kind fixes the likelihood family used for that feature:
    numeric -> normal, count -> poisson, binary -> bernoulli,
    categorical -> categorical. Keeping scenario and reference models on
    the same family per feature is what makes their marginal likelihoods
    comparable.
    """

    NUMERIC = "numeric"
    COUNT = "count"
    BINARY = "binary"
    CATEGORICAL = "categorical"

    @property
    def is_numeric(self) -> bool:
        """True for kinds whose values are stored as floats."""
        return self in (FeatureKind.NUMERIC, FeatureKind.COUNT, FeatureKind.BINARY)


#: Name under which a model's prediction is monitored alongside its inputs.
PREDICTION_FEATURE = "__prediction__"


@dataclass(frozen=True)
class ModelRef:
    """Name and version of a monitored ML model."""

    name: str
    version: str

    @property
    def key(self) -> str:
        return f"{self.name}:{self.version}"

    def to_json(self) -> dict:
        return {"name": self.name, "version": self.version}

    @classmethod
    def from_json(cls, obj: Mapping) -> "ModelRef":
        return cls(name=str(obj["name"]), version=str(obj["version"]))


class SchemaError(ValueError):
    """An observation or specification does not conform to the schema."""


@dataclass(frozen=True)
class ModelSchema:
    """Declared feature set of one monitored model.

    ``monitor_prediction`` adds a numeric pseudo-feature tracking the
    model's own output stream.
    """

    features: Mapping[str, FeatureKind] = field(default_factory=dict)
    monitor_prediction: bool = False

    def __post_init__(self):
        if not self.features:
            raise SchemaError("schema must declare at least one feature")

    @property
    def monitored_features(self) -> dict[str, FeatureKind]:
        """All features under drift surveillance, prediction included."""
        out = dict(self.features)
        if self.monitor_prediction:
            out[PREDICTION_FEATURE] = FeatureKind.NUMERIC
        return out

    def kind_of(self, feature: str) -> FeatureKind:
        try:
            return self.monitored_features[feature]
        except KeyError:
            raise SchemaError(f"unknown feature {feature!r}") from None

    def has(self, feature: str) -> bool:
        return feature in self.monitored_features

    def check_value(self, feature: str, value) -> None:
        """Raise SchemaError unless ``value`` is admissible for ``feature``."""
        kind = self.kind_of(feature)
        if kind is FeatureKind.CATEGORICAL:
            if not isinstance(value, str):
                raise SchemaError(
                    f"feature {feature!r} is categorical, got {type(value).__name__}"
                )
            return
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(
                f"feature {feature!r} is {kind.value}, got {value!r}"
            )
        if kind is FeatureKind.COUNT and (value < 0 or float(value) != int(value)):
            raise SchemaError(f"feature {feature!r} is a count, got {value!r}")
        if kind is FeatureKind.BINARY and value not in (0, 1):
            raise SchemaError(f"feature {feature!r} is binary, got {value!r}")

    def to_json(self) -> dict:
        return {
            "features": {name: kind.value for name, kind in self.features.items()},
            "monitor_prediction": self.monitor_prediction,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ModelSchema":
        return cls(
            features={k: FeatureKind(v) for k, v in obj["features"].items()},
            monitor_prediction=bool(obj.get("monitor_prediction", False)),
        )
