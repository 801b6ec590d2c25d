"""Expert scenario registry.

Scenarios encode an expert's prior beliefs about how a drift-inducing
event would move feature-distribution parameters, plus triage metadata
and an optional response. This module parses the registry JSON document,
validates entries against a training profile, resolves relative
estimates to absolute ones, and compiles each estimate into a concrete
prior distribution.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping, Optional, Sequence, Union

from .schema import FeatureKind, ModelRef, ModelSchema


class Parameter(str, Enum):
    """Which distribution parameter an estimate targets."""

    MEAN = "mean"
    STD_DEV = "std-dev"
    PROPORTION = "proportion"
    RATE = "rate"
    CATEGORY_PROBS = "category-probabilities"


class PriorFamily(str, Enum):
    """Distribution family of an expert estimate or compiled prior."""

    NORMAL = "normal"
    UNIFORM = "uniform"
    BETA = "beta"
    GAMMA = "gamma"
    DIRICHLET = "dirichlet"
    # Internal composite family for std-dev estimates; never named in
    # registry documents, only produced by the inference engine.
    NORMAL_INVERSE_GAMMA = "normal-inverse-gamma"


class EstimateMode(str, Enum):
    ABSOLUTE = "absolute"
    RELATIVE_DELTA = "relative-delta"
    RELATIVE_SCALE = "relative-scale"


class OrdinalLevel(str, Enum):
    LOW = "low"
    MODERATE = "moderate"
    HIGH = "high"


class ActionKind(str, Enum):
    NOTIFY_ONLY = "notify-only"
    WEBHOOK = "webhook"
    MODEL_SWAP = "model-swap-command"
    FALLBACK_MODEL = "fallback-model"


#: Ordinal scenario likelihood -> unnormalized prior weight.
PRIOR_WEIGHTS = {
    OrdinalLevel.LOW: 1.0,
    OrdinalLevel.MODERATE: 2.0,
    OrdinalLevel.HIGH: 3.0,
}

COMPARATORS = ("<", "<=", ">", ">=", "=", "in-set")
_ORDER_COMPARATORS = ("<", "<=", ">", ">=")

_URL_RE = re.compile(r"^https?://[^\s/$.?#].[^\s]*$", re.IGNORECASE)


class MalformedDocumentError(ValueError):
    """Registry document is not valid JSON."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"malformed registry document at line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class RegistrySchemaError(ValueError):
    """Registry document violates the schema; names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class MomentMatchingError(ValueError):
    """The (location, spread) pair admits no valid prior in the family."""


class MissingProfileStatisticError(KeyError):
    """A relative estimate has no backing training statistic."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

Location = Union[float, tuple, dict]


@dataclass(frozen=True)
class ParameterEstimate:
    """One expert estimate: parameter ~ family(location, spread).

    ``location`` is a float except for category-probabilities, where it
    is a probability vector (tuple aligned to sorted training categories,
    or a dict keyed by category). ``spread`` quantifies the expert's
    uncertainty; sharp means confident.
    """

    feature: str
    parameter: Parameter
    family: PriorFamily
    location: Location
    spread: float
    mode: EstimateMode = EstimateMode.ABSOLUTE

    def __post_init__(self):
        if not self.spread > 0:
            raise ValueError(f"estimate spread must be > 0, got {self.spread}")
        is_vector = self.parameter is Parameter.CATEGORY_PROBS
        if is_vector and isinstance(self.location, (int, float)):
            raise ValueError("category-probabilities estimates need a vector location")
        if not is_vector and not isinstance(self.location, (int, float)):
            raise ValueError(f"{self.parameter.value} estimates need a scalar location")

    @property
    def is_absolute(self) -> bool:
        return self.mode is EstimateMode.ABSOLUTE

    def to_json(self) -> dict:
        loc = self.location
        if isinstance(loc, tuple):
            loc = list(loc)
        return {
            "feature": self.feature,
            "parameter": self.parameter.value,
            "family": self.family.value,
            "location": loc,
            "spread": self.spread,
            "mode": self.mode.value,
        }


@dataclass(frozen=True)
class SubgroupClause:
    feature: str
    op: str
    value: Any

    def __post_init__(self):
        if self.op not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.op!r}")
        if self.op == "in-set" and not isinstance(self.value, (list, tuple, set, frozenset)):
            raise ValueError("in-set clauses need a list of values")

    def matches(self, value) -> bool:
        if self.op == "<":
            return value < self.value
        if self.op == "<=":
            return value <= self.value
        if self.op == ">":
            return value > self.value
        if self.op == ">=":
            return value >= self.value
        if self.op == "=":
            return value == self.value
        return value in self.value

    def to_json(self) -> dict:
        value = self.value
        if isinstance(value, (tuple, set, frozenset)):
            value = sorted(value)
        return {"feature": self.feature, "op": self.op, "value": value}


@dataclass(frozen=True)
class SubgroupPredicate:
    """Conjunction of atomic clauses selecting a subpopulation."""

    clauses: tuple[SubgroupClause, ...]

    def matches(self, row_features: Mapping[str, Any]) -> bool:
        return all(c.matches(row_features[c.feature]) for c in self.clauses)

    def to_json(self) -> dict:
        return {"all": [c.to_json() for c in self.clauses]}


@dataclass(frozen=True)
class ScenarioUnderstanding:
    """Expert's triage metadata on the drift the scenario would cause."""

    severity: OrdinalLevel
    transition_speed: OrdinalLevel
    duration: OrdinalLevel
    recurrence: OrdinalLevel
    likelihood: OrdinalLevel = OrdinalLevel.MODERATE
    note: str = ""

    @property
    def prior_weight(self) -> float:
        return PRIOR_WEIGHTS[self.likelihood]

    def to_json(self) -> dict:
        out = {
            "severity": self.severity.value,
            "transition_speed": self.transition_speed.value,
            "duration": self.duration.value,
            "recurrence": self.recurrence.value,
            "likelihood": self.likelihood.value,
        }
        if self.note:
            out["note"] = self.note
        return out


@dataclass(frozen=True)
class ResponseSpec:
    """What to do when the scenario is identified."""

    kind: ActionKind
    payload: Mapping[str, Any] = field(default_factory=dict)
    automated: bool = False

    def __post_init__(self):
        if self.kind is ActionKind.WEBHOOK:
            url = self.payload.get("url", "")
            if not isinstance(url, str) or not _URL_RE.match(url):
                raise ValueError(f"webhook response needs a valid url, got {url!r}")
        if self.automated and self.kind is ActionKind.NOTIFY_ONLY:
            raise ValueError("automated=true requires a non-notify action")

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "payload": dict(self.payload), "automated": self.automated}


@dataclass(frozen=True)
class ScenarioSpec:
    """One expert-authored drift scenario."""

    scenario_id: str
    model_ref: ModelRef
    description: str
    estimates: tuple[ParameterEstimate, ...]
    understanding: ScenarioUnderstanding
    subgroup: Optional[SubgroupPredicate] = None
    response: Optional[ResponseSpec] = None

    def __post_init__(self):
        if not self.estimates:
            raise ValueError(f"scenario {self.scenario_id!r} has no estimates")

    @property
    def affected_features(self) -> tuple[str, ...]:
        seen = []
        for est in self.estimates:
            if est.feature not in seen:
                seen.append(est.feature)
        return tuple(seen)

    @property
    def prior_weight(self) -> float:
        return self.understanding.prior_weight

    def to_json(self) -> dict:
        out = {
            "id": self.scenario_id,
            "model": self.model_ref.to_json(),
            "description": self.description,
            "estimates": [e.to_json() for e in self.estimates],
            "understanding": self.understanding.to_json(),
        }
        if self.subgroup is not None:
            out["subgroup"] = self.subgroup.to_json()
        if self.response is not None:
            out["response"] = self.response.to_json()
        return out


@dataclass(frozen=True)
class ParameterPrior:
    """A concrete prior distribution with family-specific hyperparameters.

    Hyperparameter keys per family:
      normal: mean, variance; uniform: lower, upper; beta: alpha, beta;
      gamma: shape, rate; dirichlet: concentration (tuple or dict);
      normal-inverse-gamma: mean, kappa, shape, scale.
    """

    family: PriorFamily
    params: Mapping[str, Any]

    def __post_init__(self):
        p = self.params
        f = self.family
        try:
            if f is PriorFamily.NORMAL:
                ok = p["variance"] > 0
            elif f is PriorFamily.UNIFORM:
                ok = p["lower"] < p["upper"]
            elif f is PriorFamily.BETA:
                ok = p["alpha"] > 0 and p["beta"] > 0
            elif f is PriorFamily.GAMMA:
                ok = p["shape"] > 0 and p["rate"] > 0
            elif f is PriorFamily.DIRICHLET:
                conc = p["concentration"]
                values = conc.values() if isinstance(conc, Mapping) else conc
                ok = len(values) >= 2 and all(a > 0 for a in values)
            elif f is PriorFamily.NORMAL_INVERSE_GAMMA:
                ok = p["kappa"] > 0 and p["shape"] > 0 and p["scale"] > 0
            else:  # pragma: no cover - enum is closed
                ok = False
        except KeyError as exc:
            raise ValueError(f"{f.value} prior missing hyperparameter {exc}") from None
        if not ok:
            raise ValueError(f"invalid hyperparameters for {f.value} prior: {dict(p)}")

    def concentration_items(self) -> list[tuple[Any, float]]:
        """Dirichlet concentrations as (category, value) pairs."""
        conc = self.params["concentration"]
        if isinstance(conc, Mapping):
            return sorted(conc.items())
        return list(enumerate(conc))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _require_keys(obj: Mapping, path: str, required: Sequence[str], optional: Sequence[str] = ()):
    for key in obj:
        if key not in required and key not in optional:
            raise RegistrySchemaError(f"{path}.{key}", "unknown key")
    for key in required:
        if key not in obj:
            raise RegistrySchemaError(f"{path}.{key}", "missing required key")


def _number(obj, path: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise RegistrySchemaError(path, f"expected a number, got {obj!r}")
    return float(obj)


def _string(obj, path: str) -> str:
    if not isinstance(obj, str):
        raise RegistrySchemaError(path, f"expected a string, got {obj!r}")
    return obj


def _enum(cls, obj, path: str):
    try:
        return cls(_string(obj, path))
    except ValueError:
        allowed = ", ".join(m.value for m in cls if m is not PriorFamily.NORMAL_INVERSE_GAMMA)
        raise RegistrySchemaError(path, f"expected one of [{allowed}], got {obj!r}") from None


def _parse_estimate(obj, path: str) -> ParameterEstimate:
    if not isinstance(obj, Mapping):
        raise RegistrySchemaError(path, "estimate must be an object")
    _require_keys(obj, path, ["feature", "parameter", "family", "location", "spread", "mode"])
    parameter = _enum(Parameter, obj["parameter"], f"{path}.parameter")
    family = _enum(PriorFamily, obj["family"], f"{path}.family")
    if family is PriorFamily.NORMAL_INVERSE_GAMMA:
        raise RegistrySchemaError(f"{path}.family", "normal-inverse-gamma is not a registry family")
    loc_raw = obj["location"]
    location: Location
    if parameter is Parameter.CATEGORY_PROBS:
        if isinstance(loc_raw, list):
            location = tuple(_number(v, f"{path}.location[{i}]") for i, v in enumerate(loc_raw))
        elif isinstance(loc_raw, Mapping):
            location = {
                _string(k, f"{path}.location"): _number(v, f"{path}.location.{k}")
                for k, v in loc_raw.items()
            }
        else:
            raise RegistrySchemaError(f"{path}.location", "expected a vector or category map")
        if len(location) < 2:
            raise RegistrySchemaError(f"{path}.location", "needs at least two categories")
    else:
        location = _number(loc_raw, f"{path}.location")
    spread = _number(obj["spread"], f"{path}.spread")
    if not spread > 0:
        raise RegistrySchemaError(f"{path}.spread", f"must be > 0, got {spread}")
    mode = _enum(EstimateMode, obj["mode"], f"{path}.mode")
    return ParameterEstimate(
        feature=_string(obj["feature"], f"{path}.feature"),
        parameter=parameter,
        family=family,
        location=location,
        spread=spread,
        mode=mode,
    )


def _parse_subgroup(obj, path: str) -> SubgroupPredicate:
    if not isinstance(obj, Mapping):
        raise RegistrySchemaError(path, "subgroup must be an object")
    _require_keys(obj, path, ["all"])
    clauses_raw = obj["all"]
    if not isinstance(clauses_raw, list) or not clauses_raw:
        raise RegistrySchemaError(f"{path}.all", "expected a non-empty clause list")
    clauses = []
    for i, c in enumerate(clauses_raw):
        cpath = f"{path}.all[{i}]"
        if not isinstance(c, Mapping):
            raise RegistrySchemaError(cpath, "clause must be an object")
        _require_keys(c, cpath, ["feature", "op", "value"])
        op = _string(c["op"], f"{cpath}.op")
        if op not in COMPARATORS:
            raise RegistrySchemaError(f"{cpath}.op", f"expected one of {list(COMPARATORS)}, got {op!r}")
        value = c["value"]
        if op == "in-set":
            if not isinstance(value, list) or not value:
                raise RegistrySchemaError(f"{cpath}.value", "in-set needs a non-empty list")
            value = tuple(value)
        elif op != "=" and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise RegistrySchemaError(f"{cpath}.value", f"ordering comparators need a number, got {value!r}")
        clauses.append(SubgroupClause(feature=_string(c["feature"], f"{cpath}.feature"), op=op, value=value))
    return SubgroupPredicate(clauses=tuple(clauses))


def _parse_understanding(obj, path: str) -> ScenarioUnderstanding:
    if not isinstance(obj, Mapping):
        raise RegistrySchemaError(path, "understanding must be an object")
    _require_keys(
        obj, path,
        ["severity", "transition_speed", "duration", "recurrence"],
        optional=["likelihood", "note"],
    )
    # Missing likelihood means the expert declined to weight the scenario;
    # it enters model comparison at the neutral level.
    likelihood = OrdinalLevel.MODERATE
    if "likelihood" in obj:
        likelihood = _enum(OrdinalLevel, obj["likelihood"], f"{path}.likelihood")
    return ScenarioUnderstanding(
        severity=_enum(OrdinalLevel, obj["severity"], f"{path}.severity"),
        transition_speed=_enum(OrdinalLevel, obj["transition_speed"], f"{path}.transition_speed"),
        duration=_enum(OrdinalLevel, obj["duration"], f"{path}.duration"),
        recurrence=_enum(OrdinalLevel, obj["recurrence"], f"{path}.recurrence"),
        likelihood=likelihood,
        note=_string(obj["note"], f"{path}.note") if "note" in obj else "",
    )


def _parse_response(obj, path: str) -> ResponseSpec:
    if not isinstance(obj, Mapping):
        raise RegistrySchemaError(path, "response must be an object")
    _require_keys(obj, path, ["kind", "payload", "automated"])
    kind = _enum(ActionKind, obj["kind"], f"{path}.kind")
    payload = obj["payload"]
    if not isinstance(payload, Mapping):
        raise RegistrySchemaError(f"{path}.payload", "payload must be an object")
    automated = obj["automated"]
    if not isinstance(automated, bool):
        raise RegistrySchemaError(f"{path}.automated", "expected a boolean")
    try:
        return ResponseSpec(kind=kind, payload=dict(payload), automated=automated)
    except ValueError as exc:
        raise RegistrySchemaError(path, str(exc)) from None


def _parse_scenario(obj, path: str) -> ScenarioSpec:
    if not isinstance(obj, Mapping):
        raise RegistrySchemaError(path, "scenario must be an object")
    _require_keys(
        obj, path,
        ["id", "model", "description", "estimates", "understanding"],
        optional=["subgroup", "response"],
    )
    model_obj = obj["model"]
    if not isinstance(model_obj, Mapping):
        raise RegistrySchemaError(f"{path}.model", "model must be an object")
    _require_keys(model_obj, f"{path}.model", ["name", "version"])
    estimates_raw = obj["estimates"]
    if not isinstance(estimates_raw, list) or not estimates_raw:
        raise RegistrySchemaError(f"{path}.estimates", "expected a non-empty estimate list")
    estimates = tuple(
        _parse_estimate(e, f"{path}.estimates[{i}]") for i, e in enumerate(estimates_raw)
    )
    return ScenarioSpec(
        scenario_id=_string(obj["id"], f"{path}.id"),
        model_ref=ModelRef(
            name=_string(model_obj["name"], f"{path}.model.name"),
            version=_string(model_obj["version"], f"{path}.model.version"),
        ),
        description=_string(obj["description"], f"{path}.description"),
        estimates=estimates,
        understanding=_parse_understanding(obj["understanding"], f"{path}.understanding"),
        subgroup=_parse_subgroup(obj["subgroup"], f"{path}.subgroup") if "subgroup" in obj else None,
        response=_parse_response(obj["response"], f"{path}.response") if "response" in obj else None,
    )


def parse_scenario_file(document: Union[bytes, str]) -> list[ScenarioSpec]:
    """Parse a registry document into scenario specs.

    Rejects malformed JSON with position information and any unknown or
    missing key with the offending field's path. Duplicate scenario ids
    are a schema violation.
    """
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        root = json.loads(document)
    except json.JSONDecodeError as exc:
        raise MalformedDocumentError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(root, Mapping):
        raise RegistrySchemaError("$", "document root must be an object")
    _require_keys(root, "$", ["scenarios"])
    scenarios_raw = root["scenarios"]
    if not isinstance(scenarios_raw, list):
        raise RegistrySchemaError("$.scenarios", "expected a list")
    specs = [
        _parse_scenario(s, f"$.scenarios[{i}]") for i, s in enumerate(scenarios_raw)
    ]
    seen: set[str] = set()
    for i, spec in enumerate(specs):
        if spec.scenario_id in seen:
            raise RegistrySchemaError(f"$.scenarios[{i}].id", f"duplicate id {spec.scenario_id!r}")
        seen.add(spec.scenario_id)
    return specs


def serialize_registry(specs: Sequence[ScenarioSpec]) -> dict:
    """Inverse of :func:`parse_scenario_file`, as a JSON-ready dict."""
    return {"scenarios": [s.to_json() for s in specs]}


# ---------------------------------------------------------------------------
# Validation against a training profile
# ---------------------------------------------------------------------------

#: (feature kind) -> admissible (parameter, family) combinations.
_COMPATIBLE = {
    FeatureKind.NUMERIC: {
        (Parameter.MEAN, PriorFamily.NORMAL),
        (Parameter.MEAN, PriorFamily.UNIFORM),
        (Parameter.STD_DEV, PriorFamily.NORMAL),
        (Parameter.STD_DEV, PriorFamily.GAMMA),
    },
    FeatureKind.COUNT: {
        (Parameter.RATE, PriorFamily.GAMMA),
        (Parameter.RATE, PriorFamily.UNIFORM),
    },
    FeatureKind.BINARY: {
        (Parameter.PROPORTION, PriorFamily.BETA),
        (Parameter.PROPORTION, PriorFamily.UNIFORM),
    },
    FeatureKind.CATEGORICAL: {
        (Parameter.CATEGORY_PROBS, PriorFamily.DIRICHLET),
    },
}


@dataclass(frozen=True)
class Violation:
    field: str
    message: str

    def to_json(self) -> dict:
        return {"field": self.field, "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    scenario_id: str
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "ok": self.ok,
            "violations": [v.to_json() for v in self.violations],
        }


def validate_scenario(spec: ScenarioSpec, profile) -> ValidationReport:
    """Check a scenario against the monitored model's training profile.

    Violations are data, not exceptions: an empty report means the
    scenario is accepted into the registry. ``profile`` is a
    :class:`driftwatch.ingest.TrainingProfile`.
    """
    schema: ModelSchema = profile.schema
    problems: list[Violation] = []

    if spec.model_ref != profile.model_ref:
        problems.append(Violation(
            "model",
            f"scenario targets {spec.model_ref.key}, profile covers {profile.model_ref.key}",
        ))

    seen_params: set[tuple[str, Parameter]] = set()
    for i, est in enumerate(spec.estimates):
        where = f"estimates[{i}]"
        if not schema.has(est.feature):
            problems.append(Violation(where, f"unknown feature {est.feature!r}"))
            continue
        kind = schema.kind_of(est.feature)
        if (est.parameter, est.family) not in _COMPATIBLE[kind]:
            problems.append(Violation(
                where,
                f"{est.parameter.value}/{est.family.value} estimate is not valid for "
                f"{kind.value} feature {est.feature!r}",
            ))
            continue
        if (est.feature, est.parameter) in seen_params:
            problems.append(Violation(where, f"duplicate estimate for ({est.feature}, {est.parameter.value})"))
            continue
        seen_params.add((est.feature, est.parameter))
        if not est.is_absolute and profile.statistic_for(est.feature, est.parameter) is None:
            problems.append(Violation(
                where,
                f"relative estimate needs a training statistic for "
                f"({est.feature}, {est.parameter.value})",
            ))
            continue
        if est.parameter is Parameter.CATEGORY_PROBS and isinstance(est.location, tuple):
            categories = profile.categories_for(est.feature)
            if categories is not None and len(est.location) != len(categories):
                problems.append(Violation(
                    where,
                    f"location vector has {len(est.location)} entries, "
                    f"training data has {len(categories)} categories",
                ))
                continue
        try:
            resolved = resolve_estimate(est, profile)
            if est.parameter is not Parameter.STD_DEV:
                build_prior(resolved)
        except (MomentMatchingError, ValueError) as exc:
            problems.append(Violation(where, str(exc)))

    if spec.subgroup is not None:
        for i, clause in enumerate(spec.subgroup.clauses):
            where = f"subgroup.all[{i}]"
            # subgroups select rows by input features; the prediction
            # pseudo-feature is not addressable here
            if clause.feature not in schema.features:
                problems.append(Violation(where, f"unknown feature {clause.feature!r}"))
            elif clause.op in _ORDER_COMPARATORS and not schema.kind_of(clause.feature).is_numeric:
                problems.append(Violation(
                    where,
                    f"numeric comparator {clause.op!r} on categorical feature {clause.feature!r}",
                ))

    return ValidationReport(scenario_id=spec.scenario_id, violations=tuple(problems))


# ---------------------------------------------------------------------------
# Estimate resolution and prior construction
# ---------------------------------------------------------------------------

def _as_profile_vector(stat, est_location) -> tuple:
    """Align a profile proportion dict with the estimate's location layout."""
    if isinstance(est_location, Mapping):
        missing = [c for c in est_location if c not in stat]
        if missing:
            raise ValueError(f"categories {missing} not present in training data")
        return tuple(stat[c] for c in sorted(est_location))
    return tuple(stat[c] for c in sorted(stat))


def resolve_estimate(est: ParameterEstimate, profile) -> ParameterEstimate:
    """Turn a relative estimate into an absolute one.

    relative-delta adds the training statistic, relative-scale multiplies
    it; absolute estimates pass through unchanged. Category-probability
    vectors are combined elementwise (scaled vectors are renormalized to
    sum to one).
    """
    if est.is_absolute:
        return est
    stat = profile.statistic_for(est.feature, est.parameter)
    if stat is None:
        raise MissingProfileStatisticError(
            f"no training statistic for ({est.feature}, {est.parameter.value})"
        )
    if est.parameter is Parameter.CATEGORY_PROBS:
        base = _as_profile_vector(stat, est.location)
        if isinstance(est.location, Mapping):
            offsets = tuple(est.location[c] for c in sorted(est.location))
            keys = sorted(est.location)
        else:
            offsets = est.location
            keys = None
        if est.mode is EstimateMode.RELATIVE_DELTA:
            combined = tuple(b + o for b, o in zip(base, offsets))
        else:
            combined = tuple(b * o for b, o in zip(base, offsets))
            total = sum(combined)
            if total <= 0:
                raise MomentMatchingError("scaled category probabilities sum to zero")
            combined = tuple(v / total for v in combined)
        location: Location = dict(zip(keys, combined)) if keys else combined
    elif est.mode is EstimateMode.RELATIVE_DELTA:
        location = stat + est.location
    else:
        location = stat * est.location
    return replace(est, location=location, mode=EstimateMode.ABSOLUTE)


def _simplex(location: Location) -> tuple[Optional[list], tuple]:
    """Validate and exactly normalize a probability vector location."""
    if isinstance(location, Mapping):
        keys = sorted(location)
        values = tuple(location[k] for k in keys)
    else:
        keys = None
        values = tuple(location)
    if any(v <= 0 or v >= 1 for v in values):
        raise MomentMatchingError(f"category probabilities must lie in (0, 1), got {values}")
    total = sum(values)
    if abs(total - 1.0) > 1e-6:
        raise MomentMatchingError(f"category probabilities sum to {total}, expected 1")
    return keys, tuple(v / total for v in values)


def build_prior(est: ParameterEstimate) -> ParameterPrior:
    """Compile an absolute estimate into a concrete prior.

    Normal and uniform translate directly; beta, gamma, and dirichlet are
    moment-matched so that experts keep a single location/spread
    vocabulary across families.
    """
    if not est.is_absolute:
        raise ValueError("build_prior needs an absolute estimate; resolve it first")
    m, s = est.location, est.spread
    if est.family is PriorFamily.NORMAL:
        return ParameterPrior(PriorFamily.NORMAL, {"mean": m, "variance": s * s})
    if est.family is PriorFamily.UNIFORM:
        lower, upper = m - s, m + s
        if est.parameter is Parameter.PROPORTION:
            lower, upper = max(lower, 1e-9), min(upper, 1.0 - 1e-9)
            if lower >= upper:
                raise MomentMatchingError(f"uniform proportion range [{m - s}, {m + s}] misses (0, 1)")
        elif est.parameter is Parameter.RATE and lower < 0:
            lower = 0.0
            if upper <= 0:
                raise MomentMatchingError(f"uniform rate range [{m - s}, {m + s}] is not positive")
        return ParameterPrior(PriorFamily.UNIFORM, {"lower": lower, "upper": upper})
    if est.family is PriorFamily.BETA:
        if not 0 < m < 1:
            raise MomentMatchingError(f"beta target mean must lie in (0, 1), got {m}")
        nu = m * (1 - m) / (s * s) - 1
        if nu <= 0:
            raise MomentMatchingError(
                f"spread {s} too wide for a beta prior with mean {m} (needs s^2 < m(1-m))"
            )
        return ParameterPrior(PriorFamily.BETA, {"alpha": m * nu, "beta": (1 - m) * nu})
    if est.family is PriorFamily.GAMMA:
        if m <= 0:
            raise MomentMatchingError(f"gamma target mean must be positive, got {m}")
        return ParameterPrior(PriorFamily.GAMMA, {"shape": (m / s) ** 2, "rate": m / (s * s)})
    if est.family is PriorFamily.DIRICHLET:
        keys, probs = _simplex(est.location)
        concentration = 1.0 / s
        values = tuple(concentration * p for p in probs)
        conc = dict(zip(keys, values)) if keys else values
        return ParameterPrior(PriorFamily.DIRICHLET, {"concentration": conc})
    raise ValueError(f"no prior construction for family {est.family.value}")


# ---------------------------------------------------------------------------
# Registry snapshots
# ---------------------------------------------------------------------------

class ScenarioRegistry:
    """Immutable snapshot of accepted scenarios.

    Updates produce a new registry (copy-on-update); readers holding a
    snapshot always see a consistent scenario set.
    """

    def __init__(self, specs: Sequence[ScenarioSpec] = ()):
        self._specs = tuple(specs)
        self._by_id = {s.scenario_id: s for s in self._specs}
        if len(self._by_id) != len(self._specs):
            raise ValueError("duplicate scenario ids in registry")

    @property
    def scenarios(self) -> tuple[ScenarioSpec, ...]:
        return self._specs

    def __len__(self) -> int:
        return len(self._specs)

    def get(self, scenario_id: str) -> Optional[ScenarioSpec]:
        return self._by_id.get(scenario_id)

    def for_model(self, model_name: str) -> tuple[ScenarioSpec, ...]:
        return tuple(s for s in self._specs if s.model_ref.name == model_name)

    def with_scenarios(self, specs: Sequence[ScenarioSpec]) -> "ScenarioRegistry":
        """Whole-registry replacement; last-write-wins."""
        return ScenarioRegistry(specs)

    def to_json(self) -> dict:
        return serialize_registry(self._specs)


def load_registry(document: Union[bytes, str], profile=None) -> tuple[ScenarioRegistry, list[ValidationReport]]:
    """Parse a registry document and, if a profile is given, validate it.

    Returns the registry of accepted scenarios plus one report per
    scenario; scenarios with violations are left out of the registry.
    """
    specs = parse_scenario_file(document)
    if profile is None:
        return ScenarioRegistry(specs), [ValidationReport(s.scenario_id) for s in specs]
    reports = [validate_scenario(s, profile) for s in specs]
    accepted = [s for s, r in zip(specs, reports) if r.ok]
    return ScenarioRegistry(accepted), reports
