"""Synthetic churn-style data, drift injection, and the accuracy grid.

Reproduces the estimate-error x estimate-uncertainty experiment: inject a
known drift scenario, register expert specs whose locations are
deliberately perturbed and whose spreads are set by an uncertainty level,
and measure how often the true scenario is identified (top-ranked with a
Bayes factor over the threshold).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .bayes import EngineConfig, build_reference_model, compile_scenario_model
from .drift import DriftConfig, detect_drift
from .ingest import Observation, TrainingProfile, WindowView, fit_training_profile
from .registry import (
    EstimateMode,
    OrdinalLevel,
    Parameter,
    ParameterEstimate,
    PriorFamily,
    ScenarioSpec,
    ScenarioUnderstanding,
)
from .respond import rank_assessments
from .bayes import evaluate_scenarios
from .schema import FeatureKind, ModelRef, ModelSchema

DEFAULT_ERROR_LEVELS = (0.0, 0.05, 0.1, 0.2, 0.3, 0.4)
DEFAULT_UNCERTAINTY_LEVELS = (0.25, 0.5, 1.0, 2.0, 4.0)
DEFAULT_TRIALS_PER_CELL = 200

_FAMILY_KINDS = {
    "normal": FeatureKind.NUMERIC,
    "poisson": FeatureKind.COUNT,
    "categorical": FeatureKind.CATEGORICAL,
    "bernoulli": FeatureKind.BINARY,
}


@dataclass(frozen=True)
class FeatureSpec:
    """Base sampling distribution of one synthetic feature."""

    family: str
    params: Mapping[str, Any]

    def __post_init__(self):
        if self.family not in _FAMILY_KINDS:
            raise ValueError(f"unknown generator family {self.family!r}")
        p = self.params
        if self.family == "normal" and not p.get("std", 0) > 0:
            raise ValueError("normal feature needs std > 0")
        if self.family == "poisson" and not p.get("rate", 0) > 0:
            raise ValueError("poisson feature needs rate > 0")
        if self.family == "categorical":
            probs = p.get("probs", {})
            if len(probs) < 2 or abs(sum(probs.values()) - 1.0) > 1e-9:
                raise ValueError("categorical feature needs probs summing to 1")
        if self.family == "bernoulli" and not 0 < p.get("p", -1) < 1:
            raise ValueError("bernoulli feature needs p in (0, 1)")

    @property
    def kind(self) -> FeatureKind:
        return _FAMILY_KINDS[self.family]


@dataclass(frozen=True)
class GeneratorConfig:
    model: ModelRef
    features: Mapping[str, FeatureSpec]
    training_size: int = 5000
    stream_length: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.training_size < 1 or self.stream_length < 1:
            raise ValueError("sizes must be >= 1")
        kinds = {spec.kind for spec in self.features.values()}
        required = {FeatureKind.NUMERIC, FeatureKind.COUNT, FeatureKind.CATEGORICAL}
        if not required <= kinds:
            missing = sorted(k.value for k in required - kinds)
            raise ValueError(f"generator needs numeric, count, and categorical features; missing {missing}")

    @property
    def schema(self) -> ModelSchema:
        return ModelSchema(features={n: s.kind for n, s in self.features.items()})


def default_churn_config(seed: int = 0) -> GeneratorConfig:
    """Desk-scale churn stand-in: age, recent page visits, plan mix."""
    return GeneratorConfig(
        model=ModelRef("churn", "1.0"),
        features={
            "customer_age": FeatureSpec("normal", {"mean": 40.0, "std": 12.0}),
            "recent_page_visits": FeatureSpec("poisson", {"rate": 8.0}),
            "plan_type": FeatureSpec("categorical", {"probs": {"basic": 0.7, "premium": 0.3}}),
        },
        training_size=5000,
        stream_length=1000,
        seed=seed,
    )


def _sample_column(spec: FeatureSpec, n: int, rng: np.random.Generator) -> list:
    p = spec.params
    if spec.family == "normal":
        return [float(v) for v in rng.normal(p["mean"], p["std"], size=n)]
    if spec.family == "poisson":
        return [int(v) for v in rng.poisson(p["rate"], size=n)]
    if spec.family == "bernoulli":
        return [int(v) for v in rng.random(size=n) < p["p"]]
    categories = sorted(p["probs"])
    probs = [p["probs"][c] for c in categories]
    draws = rng.choice(len(categories), size=n, p=probs)
    return [categories[int(i)] for i in draws]


def generate_rows(
    config: GeneratorConfig,
    n: int,
    rng: np.random.Generator,
    overrides: Optional[Mapping[str, Mapping[str, Any]]] = None,
    start_ts: int = 0,
) -> list[Observation]:
    """n i.i.d. observations; ``overrides`` swaps selected feature params."""
    columns = {}
    for name, spec in config.features.items():
        if overrides and name in overrides:
            spec = FeatureSpec(spec.family, overrides[name])
        columns[name] = _sample_column(spec, n, rng)
    return [
        Observation(
            model=config.model.name, version=config.model.version, ts=start_ts + i,
            features={name: columns[name][i] for name in config.features},
        )
        for i in range(n)
    ]


def generate_training_data(config: GeneratorConfig, seed: Optional[int] = None) -> list[Observation]:
    rng = np.random.default_rng(config.seed if seed is None else seed)
    return generate_rows(config, config.training_size, rng)


def generate_stream(config: GeneratorConfig, seed: Optional[int] = None,
                    start_ts: int = 0) -> list[Observation]:
    rng = np.random.default_rng((config.seed if seed is None else seed) + 1)
    return generate_rows(config, config.stream_length, rng, start_ts=start_ts)


# ---------------------------------------------------------------------------
# Drift injection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InjectedScenario:
    """Ground truth of an injected drift event."""

    scenario_id: str
    shifts: Mapping[str, Mapping[str, Any]]  # feature -> shifted generator params
    onset: int
    transition: str = "abrupt"  # "abrupt" | "gradual"
    ramp: int = 1

    def __post_init__(self):
        if self.transition not in ("abrupt", "gradual"):
            raise ValueError(f"unknown transition {self.transition!r}")
        if self.ramp < 1:
            raise ValueError("ramp must be >= 1")


def interpolate_params(family: str, base: Mapping, target: Mapping, t: float) -> dict:
    """Linear interpolation between parameter sets at fraction t in [0, 1]."""
    if family == "categorical":
        probs = {
            c: (1 - t) * base["probs"][c] + t * target["probs"][c]
            for c in base["probs"]
        }
        total = sum(probs.values())
        return {"probs": {c: v / total for c, v in probs.items()}}
    return {k: (1 - t) * base[k] + t * target[k] for k in base}


def inject_scenario(
    stream: Sequence[Observation],
    injected: InjectedScenario,
    config: GeneratorConfig,
    seed: int = 0,
) -> list[Observation]:
    """Redraw affected features from shifted parameters after the onset.

    Abrupt transitions use the shifted parameters from the onset row on;
    gradual transitions interpolate linearly over the ramp, reaching the
    shifted parameters ``ramp`` rows after onset. Rows before the onset
    and unaffected features are untouched.
    """
    if not 0 <= injected.onset < len(stream):
        raise ValueError("onset must fall inside the stream")
    rng = np.random.default_rng(seed)
    out = list(stream)
    for i in range(injected.onset, len(stream)):
        if injected.transition == "abrupt":
            t = 1.0
        else:
            t = min(1.0, (i - injected.onset) / injected.ramp)
        features = dict(out[i].features)
        for name, target in injected.shifts.items():
            spec = config.features[name]
            params = interpolate_params(spec.family, spec.params, target, t)
            features[name] = _sample_column(FeatureSpec(spec.family, params), 1, rng)[0]
        out[i] = Observation(
            model=out[i].model, version=out[i].version, ts=out[i].ts,
            features=features, prediction=out[i].prediction,
        )
    return out


# ---------------------------------------------------------------------------
# The accuracy grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioTruth:
    """One member of the trial scenario pool: what actually shifts."""

    scenario_id: str
    feature: str
    parameter: Parameter
    family: PriorFamily
    true_value: Any  # shifted parameter value (float or category->prob dict)
    shifted_params: Mapping[str, Any]  # generator params under this scenario


def default_grid_truths(config: GeneratorConfig) -> list[ScenarioTruth]:
    """Three competing churn scenarios, one per feature kind.

    Shift sizes target roughly half a training standard deviation: strong
    enough for reliable drift detection at the grid window size, small
    enough that badly-placed sharp priors can lose to the reference.
    """
    age = config.features["customer_age"].params
    visits = config.features["recent_page_visits"].params
    plans = config.features["plan_type"].params["probs"]
    shifted_age = age["mean"] - 0.6 * age["std"]
    shifted_rate = visits["rate"] - 1.2 * math.sqrt(visits["rate"])
    shifted_probs = _shift_probs(plans, 0.2)
    return [
        ScenarioTruth(
            scenario_id="marketing-campaign", feature="customer_age",
            parameter=Parameter.MEAN, family=PriorFamily.NORMAL,
            true_value=shifted_age,
            shifted_params={"mean": shifted_age, "std": age["std"]},
        ),
        ScenarioTruth(
            scenario_id="competitor-campaign", feature="recent_page_visits",
            parameter=Parameter.RATE, family=PriorFamily.GAMMA,
            true_value=shifted_rate,
            shifted_params={"rate": shifted_rate},
        ),
        ScenarioTruth(
            scenario_id="plan-mix-shift", feature="plan_type",
            parameter=Parameter.CATEGORY_PROBS, family=PriorFamily.DIRICHLET,
            true_value=shifted_probs,
            shifted_params={"probs": shifted_probs},
        ),
    ]


def _shift_probs(probs: Mapping[str, float], delta: float) -> dict[str, float]:
    """Move mass from the most to the least likely category."""
    ordered = sorted(probs, key=probs.get)
    out = dict(probs)
    out[ordered[-1]] -= delta
    out[ordered[0]] += delta
    if min(out.values()) <= 0:
        raise ValueError("probability shift went negative")
    return out


@dataclass
class GridCell:
    error: float
    uncertainty: float
    trials: int = 0
    successes: int = 0

    @property
    def accuracy(self) -> float:
        return self.successes / self.trials if self.trials else 0.0


@dataclass
class AccuracyGrid:
    error_levels: tuple[float, ...]
    uncertainty_levels: tuple[float, ...]
    cells: dict[tuple[int, int], GridCell] = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    def cell(self, e_idx: int, u_idx: int) -> GridCell:
        return self.cells[(e_idx, u_idx)]

    def accuracy(self, e_idx: int, u_idx: int) -> float:
        return self.cell(e_idx, u_idx).accuracy

    def rows(self) -> list[dict]:
        out = []
        for (e_idx, u_idx), cell in sorted(self.cells.items()):
            out.append({
                "error_level": cell.error, "uncertainty_level": cell.uncertainty,
                "trials": cell.trials, "successes": cell.successes,
                "accuracy": cell.accuracy,
            })
        return out

    def save(self, csv_path, manifest_path=None) -> None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=[
                "error_level", "uncertainty_level", "trials", "successes", "accuracy",
            ])
            writer.writeheader()
            writer.writerows(self.rows())
        if manifest_path is not None:
            with open(manifest_path, "w", encoding="utf-8") as fh:
                json.dump(self.manifest, fh, indent=2, sort_keys=True)


def _uncertainty_to_spread(
    level: float, truth: ScenarioTruth, profile: TrainingProfile, kappa: float
) -> float:
    """Translate an uncertainty level into a prior spread for the feature.

    Levels are multiples of the feature's training standard deviation
    (the natural scale of a location parameter); for probability vectors
    the level divides the reference pseudo-count, so level 1 matches the
    reference prior's concentration.
    """
    if truth.parameter is Parameter.CATEGORY_PROBS:
        return level / kappa
    stats = profile.numeric[truth.feature]
    return level * math.sqrt(stats.variance)


def _perturb_location(truth: ScenarioTruth, error: float, rng: np.random.Generator):
    """Move the spec location away from the true value by error * value.

    The miss direction is a seeded coin flip per trial. Probability
    vectors use one alternating sign pattern (not independent signs per
    category, which after renormalization would cancel half the time).
    """
    sign = 1.0 if rng.random() < 0.5 else -1.0
    if truth.parameter is Parameter.CATEGORY_PROBS:
        if error == 0.0:
            return dict(truth.true_value)
        raw = {}
        for i, cat in enumerate(sorted(truth.true_value)):
            component = sign if i % 2 == 0 else -sign
            raw[cat] = truth.true_value[cat] * (1.0 + error * component)
        total = sum(raw.values())
        return {c: v / total for c, v in raw.items()}
    return truth.true_value * (1.0 + error * sign)


def _spec_for_truth(
    truth: ScenarioTruth, location, spread: float, model: ModelRef
) -> ScenarioSpec:
    return ScenarioSpec(
        scenario_id=truth.scenario_id,
        model_ref=model,
        description=f"grid scenario for {truth.feature}",
        estimates=(ParameterEstimate(
            feature=truth.feature, parameter=truth.parameter, family=truth.family,
            location=location, spread=spread, mode=EstimateMode.ABSOLUTE,
        ),),
        understanding=ScenarioUnderstanding(
            severity=OrdinalLevel.MODERATE, transition_speed=OrdinalLevel.HIGH,
            duration=OrdinalLevel.MODERATE, recurrence=OrdinalLevel.MODERATE,
            likelihood=OrdinalLevel.MODERATE,
        ),
    )


@dataclass(frozen=True)
class GridSettings:
    """Knobs of the grid experiment besides the axes themselves."""

    window_size: int = 150
    min_window: int = 100
    alpha: float = 0.01
    threshold: float = 5.0
    reference_kappa: float = 100.0


def run_grid_experiment(
    error_levels: Sequence[float] = DEFAULT_ERROR_LEVELS,
    uncertainty_levels: Sequence[float] = DEFAULT_UNCERTAINTY_LEVELS,
    trials_per_cell: int = DEFAULT_TRIALS_PER_CELL,
    threshold: float = 5.0,
    seed: int = 0,
    config: Optional[GeneratorConfig] = None,
    settings: Optional[GridSettings] = None,
) -> AccuracyGrid:
    """Accuracy over the estimate-error x estimate-uncertainty grid.

    Per trial: pick a true scenario, draw a post-drift window, register
    all pool scenarios with locations perturbed by error * true value
    (sign seeded per trial) and spreads set by the uncertainty level,
    then run detect -> evaluate -> rank. Success means the true scenario
    is top-ranked with a Bayes factor at or above the threshold. Fully
    reproducible from ``seed``.
    """
    if not error_levels or not uncertainty_levels:
        raise ValueError("levels must be non-empty")
    if any(e < 0 for e in error_levels):
        raise ValueError("error levels must be >= 0")
    if any(u <= 0 for u in uncertainty_levels):
        raise ValueError("uncertainty levels must be > 0")
    if trials_per_cell < 50:
        raise ValueError("need at least 50 trials per cell")
    config = config or default_churn_config()
    settings = settings or GridSettings(threshold=threshold)
    engine = EngineConfig(reference_kappa=settings.reference_kappa)
    drift_config = DriftConfig(alpha=settings.alpha, min_window=settings.min_window)

    training = generate_training_data(config, seed=seed)
    profile = fit_training_profile(training, config.schema, config.model,
                                   reservoir_size=2000, seed=seed)
    reference = build_reference_model(profile, engine)
    truths = default_grid_truths(config)
    log_threshold = math.log(threshold)

    grid = AccuracyGrid(
        error_levels=tuple(error_levels),
        uncertainty_levels=tuple(uncertainty_levels),
        manifest={
            "seed": seed,
            "threshold": threshold,
            "trials_per_cell": trials_per_cell,
            "error_levels": list(error_levels),
            "uncertainty_levels": list(uncertainty_levels),
            "uncertainty_unit": "multiples of the feature's training standard deviation "
                                "(reference pseudo-count divisor for probability vectors)",
            "success": "true scenario top-ranked with Bayes factor >= threshold",
            "window_size": settings.window_size,
            "min_window": settings.min_window,
            "alpha": settings.alpha,
            "scenario_pool": [t.scenario_id for t in truths],
            "generator": {
                name: {"family": s.family, "params": dict(
                    (k, dict(v) if isinstance(v, dict) else v) for k, v in s.params.items()
                )}
                for name, s in config.features.items()
            },
            "training_size": config.training_size,
        },
    )

    for e_idx, error in enumerate(error_levels):
        for u_idx, uncertainty in enumerate(uncertainty_levels):
            cell = GridCell(error=error, uncertainty=uncertainty)
            for trial in range(trials_per_cell):
                rng = np.random.default_rng([seed, e_idx, u_idx, trial])
                truth = truths[int(rng.integers(len(truths)))]
                rows = generate_rows(
                    config, settings.window_size, rng,
                    overrides={truth.feature: truth.shifted_params},
                )
                view = WindowView(model_ref=config.model, schema=config.schema,
                                  rows=tuple(rows))
                scenarios = []
                for pool_truth in truths:
                    location = _perturb_location(pool_truth, error, rng)
                    spread = _uncertainty_to_spread(
                        uncertainty, pool_truth, profile, settings.reference_kappa
                    )
                    spec = _spec_for_truth(pool_truth, location, spread, config.model)
                    scenarios.append(compile_scenario_model(spec, profile, reference))
                cell.trials += 1
                check = detect_drift(view, profile, drift_config)
                if check.alert is None:
                    continue
                result = evaluate_scenarios(view, scenarios, reference, engine)
                ranked = rank_assessments(result.assessments)
                top = ranked[0]
                if top.scenario_id == truth.scenario_id and top.log_bf >= log_threshold:
                    cell.successes += 1
            grid.cells[(e_idx, u_idx)] = cell
    return grid
