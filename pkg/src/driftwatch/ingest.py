"""Sliding windows over observation streams and training profiles.

The window sample is the evidence every downstream check runs on; the
training profile is the no-drift baseline it is compared against, and
also the lookup table for relative expert estimates.
"""

from __future__ import annotations

import csv
import json
import math
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .registry import Parameter, SubgroupPredicate
from .schema import PREDICTION_FEATURE, FeatureKind, ModelRef, ModelSchema, SchemaError

DEFAULT_WINDOW_SIZE = 500
DEFAULT_RESERVOIR_SIZE = 2000


@dataclass(frozen=True)
class Observation:
    """One row of the monitored model's input stream."""

    model: str
    version: str
    ts: int
    features: Mapping[str, Union[float, int, str]]
    prediction: Optional[float] = None

    @property
    def model_ref(self) -> ModelRef:
        return ModelRef(self.model, self.version)

    def to_json(self) -> dict:
        out = {"model": self.model, "version": self.version, "ts": self.ts,
               "features": dict(self.features)}
        if self.prediction is not None:
            out["prediction"] = self.prediction
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "Observation":
        known = {"model", "version", "ts", "features", "prediction"}
        extra = set(obj) - known
        if extra:
            raise SchemaError(f"unknown observation keys: {sorted(extra)}")
        try:
            return cls(
                model=obj["model"],
                version=obj["version"],
                ts=int(obj["ts"]),
                features=dict(obj["features"]),
                prediction=obj.get("prediction"),
            )
        except KeyError as exc:
            raise SchemaError(f"observation missing key {exc}") from None


def _check_observation(obs: Observation, schema: ModelSchema) -> None:
    declared = set(schema.features)
    present = set(obs.features)
    missing = declared - present
    if missing:
        raise SchemaError(f"observation missing features {sorted(missing)}")
    extra = present - declared
    if extra:
        raise SchemaError(f"observation has undeclared features {sorted(extra)}")
    for name in declared:
        schema.check_value(name, obs.features[name])
    if obs.prediction is not None and (
        isinstance(obs.prediction, bool) or not isinstance(obs.prediction, (int, float))
    ):
        raise SchemaError(f"prediction must be numeric, got {obs.prediction!r}")
    if schema.monitor_prediction and obs.prediction is None:
        raise SchemaError("schema monitors predictions but observation has none")


def _feature_value(obs: Observation, feature: str):
    if feature == PREDICTION_FEATURE:
        return obs.prediction
    return obs.features[feature]


# ---------------------------------------------------------------------------
# Window views
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowView:
    """Immutable snapshot of the last W observations of one model."""

    model_ref: ModelRef
    schema: ModelSchema
    rows: tuple[Observation, ...]

    @property
    def fill(self) -> int:
        return len(self.rows)

    def column(self, feature: str):
        """Columnar view: float array for numeric kinds, token list otherwise."""
        kind = self.schema.kind_of(feature)
        values = [_feature_value(r, feature) for r in self.rows]
        if kind.is_numeric:
            return np.asarray(values, dtype=float)
        return values

    def columns(self) -> dict:
        return {name: self.column(name) for name in self.schema.monitored_features}

    def category_counts(self, feature: str) -> dict[str, int]:
        """Category histogram; binary features count tokens "0" and "1"."""
        kind = self.schema.kind_of(feature)
        if kind is FeatureKind.CATEGORICAL:
            return dict(Counter(self.column(feature)))
        if kind is FeatureKind.BINARY:
            vals = self.column(feature)
            ones = int(np.sum(vals))
            return {"0": len(vals) - ones, "1": ones}
        raise SchemaError(f"feature {feature!r} is {kind.value}, not categorical")


def apply_subgroup_filter(view: WindowView, predicate: Optional[SubgroupPredicate]) -> WindowView:
    """Rows satisfying every clause, in arrival order."""
    if predicate is None:
        return view
    kept = tuple(r for r in view.rows if predicate.matches(r.features))
    return WindowView(model_ref=view.model_ref, schema=view.schema, rows=kept)


class WindowStore:
    """Per-model FIFO windows with atomic batch ingestion.

    One logical writer per model; ``view`` hands out immutable snapshots
    that stay valid while ingestion continues.
    """

    def __init__(self, window_size: int = DEFAULT_WINDOW_SIZE):
        if window_size < 1:
            raise ValueError("window_size must be >= 1")
        self.window_size = window_size
        self._windows: dict[str, deque[Observation]] = {}
        self._schemas: dict[str, ModelSchema] = {}
        self._refs: dict[str, ModelRef] = {}
        self._totals: dict[str, int] = {}

    def register(self, model_ref: ModelRef, schema: ModelSchema) -> None:
        self._windows[model_ref.name] = deque(maxlen=self.window_size)
        self._schemas[model_ref.name] = schema
        self._refs[model_ref.name] = model_ref
        self._totals[model_ref.name] = 0

    @property
    def models(self) -> tuple[str, ...]:
        return tuple(self._windows)

    def schema_for(self, model: str) -> ModelSchema:
        return self._schemas[model]

    def total_ingested(self, model: str) -> int:
        return self._totals[model]

    def ingest_batch(self, batch: Sequence[Observation]) -> dict[str, int]:
        """Append a batch FIFO; oldest rows beyond W are evicted.

        The whole batch is validated before any row is applied, so a bad
        row rejects the batch atomically. Returns the new fill count per
        model touched by the batch.
        """
        for obs in batch:
            if obs.model not in self._windows:
                raise KeyError(f"unknown model {obs.model!r}")
            ref = self._refs[obs.model]
            if obs.version != ref.version:
                raise SchemaError(
                    f"observation for {obs.model} v{obs.version}, registered v{ref.version}"
                )
            _check_observation(obs, self._schemas[obs.model])
        touched: dict[str, int] = {}
        for obs in batch:
            self._windows[obs.model].append(obs)
            self._totals[obs.model] += 1
            touched[obs.model] = len(self._windows[obs.model])
        return touched

    def view(self, model: str) -> WindowView:
        if model not in self._windows:
            raise KeyError(f"unknown model {model!r}")
        return WindowView(
            model_ref=self._refs[model],
            schema=self._schemas[model],
            rows=tuple(self._windows[model]),
        )


# ---------------------------------------------------------------------------
# Training profile
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NumericFeatureStats:
    """Exact sample moments plus a seeded reservoir for KS baselines."""

    count: int
    mean: float
    variance: float
    reservoir: tuple[float, ...]

    def __post_init__(self):
        if self.variance < 0 or self.count < 0:
            raise ValueError("moments out of domain")
        if len(self.reservoir) > self.count:
            raise ValueError("reservoir larger than the dataset")

    def to_json(self) -> dict:
        return {"count": self.count, "mean": self.mean, "variance": self.variance,
                "reservoir": list(self.reservoir)}


@dataclass(frozen=True)
class CategoricalFeatureStats:
    counts: Mapping[str, int]

    def __post_init__(self):
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("negative category count")

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def proportions(self) -> dict[str, float]:
        total = self.total
        return {c: n / total for c, n in sorted(self.counts.items())}

    def to_json(self) -> dict:
        return {"counts": dict(sorted(self.counts.items()))}


@dataclass(frozen=True)
class TrainingProfile:
    """Per-feature summary of the monitored model's training data."""

    model_ref: ModelRef
    schema: ModelSchema
    n_rows: int
    numeric: Mapping[str, NumericFeatureStats] = field(default_factory=dict)
    categorical: Mapping[str, CategoricalFeatureStats] = field(default_factory=dict)

    def covers(self, feature: str) -> bool:
        return feature in self.numeric or feature in self.categorical

    def categories_for(self, feature: str) -> Optional[list[str]]:
        stats = self.categorical.get(feature)
        if stats is None:
            return None
        return sorted(stats.counts)

    def statistic_for(self, feature: str, parameter: Parameter):
        """Training statistic backing a relative estimate, or None."""
        if parameter in (Parameter.MEAN, Parameter.RATE, Parameter.STD_DEV):
            stats = self.numeric.get(feature)
            if stats is None:
                return None
            if parameter is Parameter.STD_DEV:
                return math.sqrt(stats.variance)
            return stats.mean
        if parameter is Parameter.PROPORTION:
            cat = self.categorical.get(feature)
            if cat is None or set(cat.counts) != {"0", "1"} or cat.total == 0:
                return None
            return cat.counts["1"] / cat.total
        if parameter is Parameter.CATEGORY_PROBS:
            cat = self.categorical.get(feature)
            if cat is None or cat.total == 0:
                return None
            return cat.proportions
        return None

    def to_json(self) -> dict:
        return {
            "model": self.model_ref.to_json(),
            "schema": self.schema.to_json(),
            "n_rows": self.n_rows,
            "numeric": {k: v.to_json() for k, v in sorted(self.numeric.items())},
            "categorical": {k: v.to_json() for k, v in sorted(self.categorical.items())},
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "TrainingProfile":
        return cls(
            model_ref=ModelRef.from_json(obj["model"]),
            schema=ModelSchema.from_json(obj["schema"]),
            n_rows=int(obj["n_rows"]),
            numeric={
                k: NumericFeatureStats(
                    count=int(v["count"]), mean=float(v["mean"]),
                    variance=float(v["variance"]),
                    reservoir=tuple(float(x) for x in v["reservoir"]),
                )
                for k, v in obj["numeric"].items()
            },
            categorical={
                k: CategoricalFeatureStats(counts={c: int(n) for c, n in v["counts"].items()})
                for k, v in obj["categorical"].items()
            },
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "TrainingProfile":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


class _Reservoir:
    """Algorithm R uniform reservoir sampler."""

    def __init__(self, capacity: int, rng: random.Random):
        self.capacity = capacity
        self.rng = rng
        self.seen = 0
        self.sample: list[float] = []

    def offer(self, value: float) -> None:
        self.seen += 1
        if len(self.sample) < self.capacity:
            self.sample.append(value)
        else:
            j = self.rng.randrange(self.seen)
            if j < self.capacity:
                self.sample[j] = value


def fit_training_profile(
    dataset: Sequence[Observation],
    schema: ModelSchema,
    model_ref: Optional[ModelRef] = None,
    reservoir_size: int = DEFAULT_RESERVOIR_SIZE,
    seed: int = 0,
) -> TrainingProfile:
    """Summarize a training dataset into a profile.

    Means and variances are exact two-pass sample moments; the reservoir
    is a uniform sample of min(reservoir_size, n) rows, reproducible
    from ``seed``.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("empty training dataset")
    if model_ref is None:
        model_ref = dataset[0].model_ref
    for obs in dataset:
        if obs.model_ref != model_ref:
            raise SchemaError(f"dataset mixes models: {obs.model_ref.key} vs {model_ref.key}")
        _check_observation(obs, schema)

    numeric: dict[str, NumericFeatureStats] = {}
    categorical: dict[str, CategoricalFeatureStats] = {}
    rng = random.Random(seed)
    monitored = schema.monitored_features
    for feature in monitored:
        kind = monitored[feature]
        values = [_feature_value(obs, feature) for obs in dataset]
        if kind is FeatureKind.CATEGORICAL:
            categorical[feature] = CategoricalFeatureStats(counts=dict(Counter(values)))
            continue
        if kind is FeatureKind.BINARY:
            ones = sum(int(v) for v in values)
            categorical[feature] = CategoricalFeatureStats(
                counts={"0": len(values) - ones, "1": ones}
            )
            continue
        n = len(values)
        mean = sum(values) / n
        variance = sum((v - mean) ** 2 for v in values) / (n - 1) if n > 1 else 0.0
        reservoir = _Reservoir(min(reservoir_size, n), rng)
        for v in values:
            reservoir.offer(float(v))
        numeric[feature] = NumericFeatureStats(
            count=n, mean=mean, variance=variance, reservoir=tuple(reservoir.sample)
        )
    return TrainingProfile(
        model_ref=model_ref, schema=schema, n_rows=len(dataset),
        numeric=numeric, categorical=categorical,
    )


# ---------------------------------------------------------------------------
# Stream and dataset readers
# ---------------------------------------------------------------------------

def parse_jsonl_stream(lines: Iterable[str]) -> list[Observation]:
    """One Observation per non-blank line; errors carry the line number."""
    out = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            out.append(Observation.from_json(obj))
        except (json.JSONDecodeError, SchemaError, TypeError, ValueError) as exc:
            raise SchemaError(f"line {lineno}: {exc}") from None
    return out


def read_jsonl_file(path) -> list[Observation]:
    with open(path, encoding="utf-8") as fh:
        return parse_jsonl_stream(fh)


def read_training_csv(path, schema: ModelSchema, model_ref: ModelRef) -> list[Observation]:
    """CSV with a header row; feature columns typed per the schema.

    An optional ``prediction`` column feeds the prediction pseudo-feature
    and an optional ``ts`` column overrides the row-index timestamp.
    """
    rows: list[Observation] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError("CSV file has no header row")
        for i, record in enumerate(reader):
            features: dict[str, Union[float, int, str]] = {}
            for name, kind in schema.features.items():
                if record.get(name) in (None, ""):
                    raise SchemaError(f"row {i + 1}: missing value for {name!r}")
                raw = record[name]
                if kind is FeatureKind.CATEGORICAL:
                    features[name] = raw
                elif kind is FeatureKind.NUMERIC:
                    features[name] = float(raw)
                else:
                    features[name] = int(float(raw))
            prediction = None
            if record.get("prediction") not in (None, ""):
                prediction = float(record["prediction"])
            ts = int(float(record["ts"])) if record.get("ts") not in (None, "") else i
            rows.append(Observation(
                model=model_ref.name, version=model_ref.version, ts=ts,
                features=features, prediction=prediction,
            ))
    return rows
