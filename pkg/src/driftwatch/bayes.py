"""Marginal likelihoods, Bayes factors, and scenario posteriors.

Each scenario is a Bayesian model over the monitored features: expert
priors on the features the scenario affects, reference priors (fit from
training data) everywhere else. Evidence for a scenario is its marginal
likelihood on the current window, computed per feature in closed form
through conjugate pairs and multiplied across features (independence
assumption), then compared to the reference model's marginal likelihood
to yield a Bayes factor. Non-conjugate priors (uniform) fall back to a
seeded prior-predictive Monte-Carlo estimator.

All math stays in natural-log space; nothing is exponentiated before
comparison. Data constants (multinomial coefficients, sum of log x!)
are included everywhere, so reported values are true log probabilities.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import betaln, gammaln, logsumexp

from .ingest import TrainingProfile, WindowView, apply_subgroup_filter
from .registry import (
    EstimateMode,
    Parameter,
    ParameterEstimate,
    ParameterPrior,
    PriorFamily,
    ScenarioSpec,
    SubgroupPredicate,
    build_prior,
    resolve_estimate,
)
from .schema import FeatureKind, ModelSchema

logger = logging.getLogger(__name__)

#: Scenario id under which the reference (no-drift) model is reported.
REFERENCE_ID = "__reference__"

#: Prior weight of the reference model: the neutral middle of the
#: three-point scenario-likelihood scale.
REFERENCE_PRIOR_WEIGHT = 2.0

#: Concentration assigned to window categories never seen in training,
#: applied identically to scenario and reference so ratios stay fair.
NOVEL_CATEGORY_CONCENTRATION = 1e-6

LOG_TWO_PI = math.log(2.0 * math.pi)


class CategoryMismatchError(ValueError):
    """Observed categories do not match the prior's category set."""


class NoScenariosError(ValueError):
    """Scenario evaluation was invoked with an empty model set."""


class AllScoresInfiniteError(ValueError):
    """Posterior normalization got no finite score."""


# ---------------------------------------------------------------------------
# Closed-form log marginal likelihoods (conjugate pairs)
# ---------------------------------------------------------------------------

def log_marginal_normal_known_var(
    n: int, total: float, total_sq: float,
    known_var: float, prior_mean: float, prior_var: float,
) -> float:
    """log of the Gaussian-data marginal with a normal prior on the mean.

    Integrates prod_i N(x_i | mu, known_var) against N(mu | m0, tau^2)
    exactly. Empty data returns 0 (empty-product convention).
    """
    if n < 0 or known_var <= 0 or prior_var <= 0:
        raise ValueError("need n >= 0, known_var > 0, prior_var > 0")
    if n == 0:
        return 0.0
    a = n / known_var + 1.0 / prior_var
    b = total / known_var + prior_mean / prior_var
    c = -0.5 * (total_sq / known_var + prior_mean * prior_mean / prior_var)
    return (
        -0.5 * n * (LOG_TWO_PI + math.log(known_var))
        - 0.5 * math.log(prior_var)
        - 0.5 * math.log(a)
        + b * b / (2.0 * a)
        + c
    )


def log_marginal_normal_unknown_var(
    n: int, total: float, total_sq: float,
    prior_mean: float, kappa: float, shape: float, scale: float,
) -> float:
    """Gaussian-data marginal with a normal-inverse-gamma prior on (mu, s^2).

    Prior: s^2 ~ InvGamma(shape, scale), mu | s^2 ~ N(prior_mean, s^2/kappa).
    """
    if kappa <= 0 or shape <= 0 or scale <= 0:
        raise ValueError("need kappa, shape, scale > 0")
    if n == 0:
        return 0.0
    xbar = total / n
    ss = max(total_sq - n * xbar * xbar, 0.0)
    kappa_n = kappa + n
    shape_n = shape + n / 2.0
    scale_n = scale + 0.5 * ss + kappa * n * (xbar - prior_mean) ** 2 / (2.0 * kappa_n)
    return (
        -0.5 * n * LOG_TWO_PI
        + 0.5 * (math.log(kappa) - math.log(kappa_n))
        + gammaln(shape_n) - gammaln(shape)
        + shape * math.log(scale) - shape_n * math.log(scale_n)
    )


def log_marginal_beta_binomial(k: int, n: int, alpha: float, beta: float) -> float:
    """log [ C(n,k) * B(k+alpha, n-k+beta) / B(alpha, beta) ]."""
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if alpha <= 0 or beta <= 0:
        raise ValueError("need alpha, beta > 0")
    if n == 0:
        return 0.0
    log_choose = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    return float(log_choose + betaln(k + alpha, n - k + beta) - betaln(alpha, beta))


def log_marginal_dirichlet_multinomial(
    counts: Mapping[str, int], concentrations: Mapping[str, float]
) -> float:
    """Dirichlet-multinomial marginal, multinomial coefficient included."""
    if set(counts) - set(concentrations):
        raise CategoryMismatchError(
            f"counts name categories outside the prior: {sorted(set(counts) - set(concentrations))}"
        )
    if any(c < 0 for c in counts.values()):
        raise ValueError("negative category count")
    n = sum(counts.values())
    if n == 0:
        return 0.0
    total_conc = sum(concentrations.values())
    log_coeff = gammaln(n + 1) - sum(gammaln(counts.get(c, 0) + 1) for c in concentrations)
    tilt = sum(
        gammaln(counts.get(c, 0) + a) - gammaln(a) for c, a in concentrations.items()
    )
    return float(log_coeff + gammaln(total_conc) - gammaln(n + total_conc) + tilt)


def log_marginal_gamma_poisson(total: int, n: int, shape: float, rate: float) -> float:
    """Poisson-data marginal with a Gamma(shape, rate) prior on the rate.

    Covers the sum-statistic part only; the data constant sum(log x_i!)
    is added by the per-feature evaluator so it can be computed from the
    actual column (it cancels in every Bayes factor).
    """
    if total < 0 or n < 0 or shape <= 0 or rate <= 0:
        raise ValueError("need total, n >= 0 and shape, rate > 0")
    if n == 0:
        return 0.0
    return float(
        gammaln(shape + total) - gammaln(shape)
        + shape * math.log(rate) - (shape + total) * math.log(rate + n)
    )


def posterior_normalize(weighted_log_scores: Sequence[float]) -> np.ndarray:
    """Softmax in log space; probabilities sum to one."""
    scores = np.asarray(weighted_log_scores, dtype=float)
    if len(scores) == 0 or not np.any(np.isfinite(scores)):
        raise AllScoresInfiniteError("no finite score to normalize")
    shifted = scores - np.max(scores[np.isfinite(scores)])
    weights = np.exp(shifted)
    return weights / weights.sum()


# ---------------------------------------------------------------------------
# Data summaries and the Monte-Carlo fallback
# ---------------------------------------------------------------------------

class LikelihoodFamily(str, Enum):
    NORMAL_KNOWN_VAR = "normal-known-variance"
    NORMAL_UNKNOWN_VAR = "normal-unknown-variance"
    BERNOULLI = "bernoulli"
    CATEGORICAL = "categorical"
    POISSON = "poisson"


@dataclass(frozen=True)
class DataSummary:
    """Sufficient statistics of one feature column.

    ``extra`` holds family-specific pieces: successes for bernoulli,
    log_factorial_sum for poisson, category counts for categorical.
    """

    n: int
    total: float = 0.0
    total_sq: float = 0.0
    successes: int = 0
    log_factorial_sum: float = 0.0
    counts: Mapping[str, int] = field(default_factory=dict)

    @classmethod
    def from_column(cls, family: LikelihoodFamily, column) -> "DataSummary":
        if family is LikelihoodFamily.CATEGORICAL:
            counts: dict[str, int] = {}
            for token in column:
                counts[token] = counts.get(token, 0) + 1
            return cls(n=len(column), counts=counts)
        values = np.asarray(column, dtype=float)
        n = len(values)
        if family is LikelihoodFamily.BERNOULLI:
            return cls(n=n, successes=int(values.sum()))
        if family is LikelihoodFamily.POISSON:
            return cls(
                n=n, total=float(values.sum()),
                log_factorial_sum=float(gammaln(values + 1.0).sum()),
            )
        return cls(n=n, total=float(values.sum()), total_sq=float((values * values).sum()))


def _sample_prior(prior: ParameterPrior, n_samples: int, rng: np.random.Generator):
    p = prior.params
    if prior.family is PriorFamily.NORMAL:
        return rng.normal(p["mean"], math.sqrt(p["variance"]), size=n_samples)
    if prior.family is PriorFamily.UNIFORM:
        return rng.uniform(p["lower"], p["upper"], size=n_samples)
    if prior.family is PriorFamily.BETA:
        return rng.beta(p["alpha"], p["beta"], size=n_samples)
    if prior.family is PriorFamily.GAMMA:
        return rng.gamma(p["shape"], 1.0 / p["rate"], size=n_samples)
    if prior.family is PriorFamily.DIRICHLET:
        conc = np.array([v for _, v in prior.concentration_items()])
        return rng.dirichlet(conc, size=n_samples)
    if prior.family is PriorFamily.NORMAL_INVERSE_GAMMA:
        precision = rng.gamma(p["shape"], 1.0 / p["scale"], size=n_samples)
        variance = 1.0 / precision
        mean = rng.normal(p["mean"], np.sqrt(variance / p["kappa"]))
        return np.stack([mean, variance], axis=1)
    raise ValueError(f"cannot sample prior family {prior.family.value}")


def _log_likelihood_at(
    family: LikelihoodFamily, summary: DataSummary, theta, known_var: Optional[float]
) -> np.ndarray:
    """Vectorized log P(D | theta) over prior draws."""
    n = summary.n
    if family is LikelihoodFamily.NORMAL_KNOWN_VAR:
        mu = theta
        quad = summary.total_sq - 2.0 * mu * summary.total + n * mu * mu
        return -0.5 * n * (LOG_TWO_PI + math.log(known_var)) - quad / (2.0 * known_var)
    if family is LikelihoodFamily.NORMAL_UNKNOWN_VAR:
        mu, var = theta[:, 0], theta[:, 1]
        quad = summary.total_sq - 2.0 * mu * summary.total + n * mu * mu
        return -0.5 * n * (LOG_TWO_PI + np.log(var)) - quad / (2.0 * var)
    if family is LikelihoodFamily.BERNOULLI:
        theta = np.clip(theta, 1e-300, 1.0 - 1e-16)
        k = summary.successes
        log_choose = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
        return log_choose + k * np.log(theta) + (n - k) * np.log1p(-theta)
    if family is LikelihoodFamily.POISSON:
        rate = np.asarray(theta, dtype=float)
        out = np.full(rate.shape, -np.inf)
        positive = rate > 0
        out[positive] = (
            summary.total * np.log(rate[positive])
            - n * rate[positive]
            - summary.log_factorial_sum
        )
        if summary.total == 0:
            out[~positive] = -summary.log_factorial_sum
        return out
    if family is LikelihoodFamily.CATEGORICAL:
        raise ValueError("categorical likelihood is conjugate-only; no Monte-Carlo path")
    raise ValueError(f"unknown likelihood family {family}")


def log_marginal_monte_carlo(
    summary: DataSummary,
    family: LikelihoodFamily,
    prior: ParameterPrior,
    n_samples: int = 20000,
    seed: int = 0,
    known_var: Optional[float] = None,
) -> tuple[float, float]:
    """Prior-predictive marginal-likelihood estimate with jackknife SE.

    Draws parameters from the prior, averages exp(log P(D | theta)) in
    log-sum-exp form, and reports the delete-one jackknife standard
    error of the log estimate. Reproducible from ``seed``.
    """
    if n_samples < 1000:
        raise ValueError(f"need n_samples >= 1000, got {n_samples}")
    rng = np.random.default_rng(seed)
    theta = _sample_prior(prior, n_samples, rng)
    log_lik = _log_likelihood_at(family, summary, theta, known_var)
    finite = np.isfinite(log_lik)
    if not finite.any():
        logger.warning(
            "all %d prior-predictive samples underflowed for %s/%s",
            n_samples, family.value, prior.family.value,
        )
        return -math.inf, math.nan
    total = float(logsumexp(log_lik))
    estimate = total - math.log(n_samples)
    # Delete-one jackknife on the log estimate, kept in log space.
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.exp(log_lik - total)
        loo = total + np.log1p(-np.clip(rel, 0.0, 1.0)) - math.log(n_samples - 1)
    loo = loo[np.isfinite(loo)]
    if len(loo) < 2:
        return estimate, math.inf
    j = len(loo)
    se = math.sqrt((j - 1) / j * float(np.sum((loo - loo.mean()) ** 2)))
    return estimate, se


# ---------------------------------------------------------------------------
# Feature likelihood models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureLikelihoodModel:
    """Likelihood family plus prior for one monitored feature."""

    feature: str
    family: LikelihoodFamily
    prior: ParameterPrior
    known_var: Optional[float] = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        compatible = {
            LikelihoodFamily.NORMAL_KNOWN_VAR: (PriorFamily.NORMAL, PriorFamily.UNIFORM),
            LikelihoodFamily.NORMAL_UNKNOWN_VAR: (PriorFamily.NORMAL_INVERSE_GAMMA,),
            LikelihoodFamily.BERNOULLI: (PriorFamily.BETA, PriorFamily.UNIFORM),
            LikelihoodFamily.POISSON: (PriorFamily.GAMMA, PriorFamily.UNIFORM),
            LikelihoodFamily.CATEGORICAL: (PriorFamily.DIRICHLET,),
        }[self.family]
        if self.prior.family not in compatible:
            raise ValueError(
                f"{self.prior.family.value} prior is incompatible with "
                f"{self.family.value} likelihood"
            )
        if self.family is LikelihoodFamily.NORMAL_KNOWN_VAR and not (
            self.known_var and self.known_var > 0
        ):
            raise ValueError("normal-known-variance model needs known_var > 0")


@dataclass(frozen=True)
class EngineConfig:
    mc_samples: int = 20000
    seed: int = 0
    min_subgroup: int = 30
    reference_kappa: float = 100.0


def _aligned_concentrations(
    counts: Mapping[str, int], prior: ParameterPrior
) -> dict[str, float]:
    conc = dict(prior.concentration_items())
    if any(isinstance(k, int) for k in conc):
        raise CategoryMismatchError(
            "dirichlet prior has positional concentrations; category labels required"
        )
    for category in counts:
        if category not in conc:
            conc[category] = NOVEL_CATEGORY_CONCENTRATION
    return conc


def feature_log_marginal(
    model: FeatureLikelihoodModel,
    column,
    config: EngineConfig = EngineConfig(),
    seed: Optional[int] = None,
) -> tuple[float, Optional[float]]:
    """Log marginal likelihood of one feature column under one model.

    Conjugate (likelihood, prior) pairs use the closed forms above;
    uniform priors take the Monte-Carlo path and also return its
    standard error.
    """
    summary = DataSummary.from_column(model.family, column)
    prior = model.prior
    p = prior.params
    if model.family is LikelihoodFamily.CATEGORICAL:
        conc = _aligned_concentrations(summary.counts, prior)
        return log_marginal_dirichlet_multinomial(summary.counts, conc), None
    if prior.family is PriorFamily.UNIFORM:
        estimate, se = log_marginal_monte_carlo(
            summary, model.family, prior,
            n_samples=config.mc_samples,
            seed=config.seed if seed is None else seed,
            known_var=model.known_var,
        )
        return estimate, se
    if model.family is LikelihoodFamily.NORMAL_KNOWN_VAR:
        return log_marginal_normal_known_var(
            summary.n, summary.total, summary.total_sq,
            model.known_var, p["mean"], p["variance"],
        ), None
    if model.family is LikelihoodFamily.NORMAL_UNKNOWN_VAR:
        return log_marginal_normal_unknown_var(
            summary.n, summary.total, summary.total_sq,
            p["mean"], p["kappa"], p["shape"], p["scale"],
        ), None
    if model.family is LikelihoodFamily.BERNOULLI:
        return log_marginal_beta_binomial(
            summary.successes, summary.n, p["alpha"], p["beta"]
        ), None
    if model.family is LikelihoodFamily.POISSON:
        lm = log_marginal_gamma_poisson(
            int(summary.total), summary.n, p["shape"], p["rate"]
        )
        return lm - summary.log_factorial_sum, None
    raise ValueError(f"no evaluation path for {model.family}")


# ---------------------------------------------------------------------------
# Reference and scenario models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceModel:
    """Per-feature models with priors fit from the training profile."""

    feature_models: Mapping[str, FeatureLikelihoodModel]

    def model_for(self, feature: str) -> FeatureLikelihoodModel:
        return self.feature_models[feature]


@dataclass(frozen=True)
class ScenarioModel:
    """A scenario as a joint model over every monitored feature."""

    scenario_id: str
    feature_models: Mapping[str, FeatureLikelihoodModel]
    affected: tuple[str, ...]
    prior_weight: float
    subgroup: Optional[SubgroupPredicate] = None

    def __post_init__(self):
        if not 0 < self.prior_weight:
            raise ValueError("prior weight must be positive")


def _floored_variance(variance: float, mean: float) -> tuple[float, bool]:
    if variance > 0:
        return variance, False
    floor = 1e-9 * mean * mean
    return (floor if floor > 0 else 1e-12), True


def build_reference_model(
    profile: TrainingProfile, config: EngineConfig = EngineConfig()
) -> ReferenceModel:
    """The no-drift baseline: priors centred on training statistics.

    Numeric features get a standard-error-width normal prior on the mean
    with the training variance as known variance; count features get a
    gamma prior moment-matched to training mean and variance; binary and
    categorical features get beta/dirichlet priors with training-sized
    pseudo-counts.
    """
    models: dict[str, FeatureLikelihoodModel] = {}
    monitored = profile.schema.monitored_features
    for feature, kind in monitored.items():
        flags: tuple[str, ...] = ()
        if kind is FeatureKind.CATEGORICAL:
            stats = profile.categorical[feature]
            concentration = {
                c: config.reference_kappa * prop for c, prop in stats.proportions.items()
            }
            models[feature] = FeatureLikelihoodModel(
                feature=feature, family=LikelihoodFamily.CATEGORICAL,
                prior=ParameterPrior(PriorFamily.DIRICHLET, {"concentration": concentration}),
            )
            continue
        if kind is FeatureKind.BINARY:
            stats = profile.categorical[feature]
            total = stats.total
            ones = stats.counts.get("1", 0)
            alpha, beta = float(ones), float(total - ones)
            if alpha <= 0 or beta <= 0:
                alpha, beta = alpha + 0.5, beta + 0.5
                flags = ("degenerate-proportion",)
            models[feature] = FeatureLikelihoodModel(
                feature=feature, family=LikelihoodFamily.BERNOULLI,
                prior=ParameterPrior(PriorFamily.BETA, {"alpha": alpha, "beta": beta}),
                flags=flags,
            )
            continue
        stats = profile.numeric[feature]
        variance, floored = _floored_variance(stats.variance, stats.mean)
        if floored:
            flags = ("zero-variance-floored",)
        if kind is FeatureKind.COUNT:
            # standard-error-width prior on the rate, like the numeric path:
            # gamma moment-matched to (training mean, training variance / n)
            mean = max(stats.mean, 1e-9)
            prior_var = variance / stats.count
            models[feature] = FeatureLikelihoodModel(
                feature=feature, family=LikelihoodFamily.POISSON,
                prior=ParameterPrior(
                    PriorFamily.GAMMA,
                    {"shape": mean * mean / prior_var, "rate": mean / prior_var},
                ),
                flags=flags,
            )
        else:
            models[feature] = FeatureLikelihoodModel(
                feature=feature, family=LikelihoodFamily.NORMAL_KNOWN_VAR,
                prior=ParameterPrior(
                    PriorFamily.NORMAL,
                    {"mean": stats.mean, "variance": variance / stats.count},
                ),
                known_var=variance,
                flags=flags,
            )
    return ReferenceModel(feature_models=models)


def _inverse_gamma_from_sd_estimate(location: float, spread: float) -> tuple[float, float]:
    """Moment-match an inverse-gamma on the variance from (sd_loc, sd_spread).

    The expert describes the standard deviation as location +- spread;
    the implied variance has mean loc^2 + spread^2 and, by the delta
    method, standard deviation ~ 2 * loc * spread.
    """
    if location <= 0:
        raise ValueError(f"std-dev estimate location must be positive, got {location}")
    mean_var = location * location + spread * spread
    sd_var = 2.0 * location * spread
    shape = (mean_var / sd_var) ** 2 + 2.0
    scale = mean_var * (shape - 1.0)
    return shape, scale


def compile_scenario_model(
    spec: ScenarioSpec,
    profile: TrainingProfile,
    reference: ReferenceModel,
) -> ScenarioModel:
    """Compile a validated scenario spec into an evaluable joint model.

    Affected features replace the reference prior with the expert's;
    every other monitored feature inherits the reference model, so all
    scenarios are joint distributions over the same feature set.
    """
    models = dict(reference.feature_models)
    by_feature: dict[str, dict[Parameter, ParameterEstimate]] = {}
    for est in spec.estimates:
        by_feature.setdefault(est.feature, {})[est.parameter] = resolve_estimate(est, profile)

    for feature, estimates in by_feature.items():
        kind = profile.schema.kind_of(feature)
        ref_model = reference.model_for(feature)
        if kind is FeatureKind.NUMERIC and Parameter.STD_DEV in estimates:
            sd_est = estimates[Parameter.STD_DEV]
            shape, scale = _inverse_gamma_from_sd_estimate(sd_est.location, sd_est.spread)
            expected_var = scale / (shape - 1.0)
            if Parameter.MEAN in estimates:
                mean_est = estimates[Parameter.MEAN]
                if mean_est.family is not PriorFamily.NORMAL:
                    raise ValueError(
                        "a mean estimate paired with a std-dev estimate must be normal-family"
                    )
                m0 = mean_est.location
                kappa = expected_var / (mean_est.spread ** 2)
            else:
                m0 = ref_model.prior.params["mean"]
                kappa = expected_var / ref_model.prior.params["variance"]
            models[feature] = FeatureLikelihoodModel(
                feature=feature, family=LikelihoodFamily.NORMAL_UNKNOWN_VAR,
                prior=ParameterPrior(
                    PriorFamily.NORMAL_INVERSE_GAMMA,
                    {"mean": m0, "kappa": kappa, "shape": shape, "scale": scale},
                ),
            )
            continue
        (est,) = estimates.values()
        prior = build_prior(est)
        if kind is FeatureKind.NUMERIC:
            models[feature] = FeatureLikelihoodModel(
                feature=feature, family=LikelihoodFamily.NORMAL_KNOWN_VAR,
                prior=prior, known_var=ref_model.known_var,
            )
        elif kind is FeatureKind.COUNT:
            models[feature] = FeatureLikelihoodModel(
                feature=feature, family=LikelihoodFamily.POISSON, prior=prior,
            )
        elif kind is FeatureKind.BINARY:
            models[feature] = FeatureLikelihoodModel(
                feature=feature, family=LikelihoodFamily.BERNOULLI, prior=prior,
            )
        else:
            models[feature] = FeatureLikelihoodModel(
                feature=feature, family=LikelihoodFamily.CATEGORICAL,
                prior=_dirichlet_with_labels(prior, profile, feature),
            )
    return ScenarioModel(
        scenario_id=spec.scenario_id,
        feature_models=models,
        affected=tuple(by_feature),
        prior_weight=spec.prior_weight,
        subgroup=spec.subgroup,
    )


def _dirichlet_with_labels(
    prior: ParameterPrior, profile: TrainingProfile, feature: str
) -> ParameterPrior:
    """Attach training category labels to a positional dirichlet prior."""
    conc = prior.params["concentration"]
    if isinstance(conc, Mapping):
        return prior
    categories = profile.categories_for(feature)
    if categories is None or len(categories) != len(conc):
        raise CategoryMismatchError(
            f"cannot align {len(conc)} concentrations with training categories of {feature!r}"
        )
    return ParameterPrior(
        PriorFamily.DIRICHLET, {"concentration": dict(zip(categories, conc))}
    )


# ---------------------------------------------------------------------------
# Scenario evaluation
# ---------------------------------------------------------------------------

class AssessmentStatus(str, Enum):
    OK = "ok"
    INSUFFICIENT_DATA = "insufficient-data"


@dataclass(frozen=True)
class FeatureContribution:
    feature: str
    log_ml: float
    log_bf: float

    def to_json(self) -> dict:
        return {"feature": self.feature, "log_ml": self.log_ml, "log_bf": self.log_bf}


@dataclass(frozen=True)
class ScenarioAssessment:
    scenario_id: str
    log_ml: float
    log_bf: float
    posterior: float
    prior_weight: float
    status: AssessmentStatus
    per_feature: tuple[FeatureContribution, ...] = ()
    mc_se: Optional[float] = None

    @property
    def bayes_factor(self) -> float:
        try:
            return math.exp(self.log_bf)
        except OverflowError:
            return math.inf

    def to_json(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "log_ml": self.log_ml,
            "log_bf": self.log_bf,
            "posterior": self.posterior,
            "status": self.status.value,
            "per_feature": [c.to_json() for c in self.per_feature],
            "mc_se": self.mc_se,
        }


@dataclass(frozen=True)
class EvaluationResult:
    """All scenario assessments for one window, reference row included."""

    assessments: tuple[ScenarioAssessment, ...]
    reference_log_ml: float

    @property
    def scenario_assessments(self) -> tuple[ScenarioAssessment, ...]:
        return tuple(a for a in self.assessments if a.scenario_id != REFERENCE_ID)

    def to_json(self, model: str, window_id: str, ts: int) -> dict:
        return {
            "model": model,
            "window_id": window_id,
            "ts": ts,
            "assessments": [a.to_json() for a in self.assessments],
            "reference_log_ml": self.reference_log_ml,
        }


def evaluate_scenarios(
    view: WindowView,
    scenarios: Sequence[ScenarioModel],
    reference: ReferenceModel,
    config: EngineConfig = EngineConfig(),
) -> EvaluationResult:
    """Score every scenario model against the reference on one window.

    Affected features are evaluated on the scenario's subgroup rows with
    the reference evaluated on the same rows, so each Bayes factor
    compares like with like; unaffected features inherit the reference
    prior and cancel. Posteriors are proportional to prior weight times
    the evidence ratio over {scenarios + reference}; when no subgroups
    are in play this is exactly prior * marginal likelihood, normalized.
    """
    if not scenarios:
        raise NoScenariosError("no scenarios registered for evaluation")

    full_cache: dict[str, tuple[float, Optional[float]]] = {}

    def reference_on_full(feature: str) -> tuple[float, Optional[float]]:
        if feature not in full_cache:
            full_cache[feature] = feature_log_marginal(
                reference.model_for(feature), view.column(feature), config,
                seed=config.seed,
            )
        return full_cache[feature]

    monitored = tuple(view.schema.monitored_features)
    reference_log_ml = sum(reference_on_full(f)[0] for f in monitored)

    assessments: list[ScenarioAssessment] = []
    for index, scenario in enumerate(scenarios):
        rows = apply_subgroup_filter(view, scenario.subgroup)
        if scenario.subgroup is not None and rows.fill < config.min_subgroup:
            assessments.append(ScenarioAssessment(
                scenario_id=scenario.scenario_id,
                log_ml=math.nan, log_bf=math.nan, posterior=0.0,
                prior_weight=scenario.prior_weight,
                status=AssessmentStatus.INSUFFICIENT_DATA,
            ))
            continue
        log_ml = 0.0
        log_ml_ref_partition = 0.0
        se_squares = 0.0
        contributions: list[FeatureContribution] = []
        for findex, feature in enumerate(monitored):
            seed = config.seed + 1000003 * (index + 1) + findex
            if feature in scenario.affected:
                column = rows.column(feature)
                lm, se = feature_log_marginal(
                    scenario.feature_models[feature], column, config, seed=seed
                )
                ref_lm, ref_se = feature_log_marginal(
                    reference.model_for(feature), column, config, seed=seed
                )
                contributions.append(FeatureContribution(feature, lm, lm - ref_lm))
                if se is not None:
                    se_squares += se * se
                if ref_se is not None:
                    se_squares += ref_se * ref_se
            else:
                lm, se = reference_on_full(feature)
                ref_lm = lm
                contributions.append(FeatureContribution(feature, lm, 0.0))
            log_ml += lm
            log_ml_ref_partition += ref_lm
        assessments.append(ScenarioAssessment(
            scenario_id=scenario.scenario_id,
            log_ml=log_ml,
            log_bf=log_ml - log_ml_ref_partition,
            posterior=0.0,
            prior_weight=scenario.prior_weight,
            status=AssessmentStatus.OK,
            per_feature=tuple(contributions),
            mc_se=math.sqrt(se_squares) if se_squares > 0 else None,
        ))

    reference_assessment = ScenarioAssessment(
        scenario_id=REFERENCE_ID,
        log_ml=reference_log_ml,
        log_bf=0.0,
        posterior=0.0,
        prior_weight=REFERENCE_PRIOR_WEIGHT,
        status=AssessmentStatus.OK,
        per_feature=tuple(
            FeatureContribution(f, full_cache[f][0], 0.0) for f in monitored
        ),
    )
    assessments.append(reference_assessment)

    scored = [a for a in assessments if a.status is AssessmentStatus.OK]
    posteriors = posterior_normalize(
        [math.log(a.prior_weight) + a.log_bf for a in scored]
    )
    posterior_by_id = {a.scenario_id: float(p) for a, p in zip(scored, posteriors)}
    final = tuple(
        ScenarioAssessment(
            scenario_id=a.scenario_id, log_ml=a.log_ml, log_bf=a.log_bf,
            posterior=posterior_by_id.get(a.scenario_id, 0.0),
            prior_weight=a.prior_weight, status=a.status,
            per_feature=a.per_feature, mc_se=a.mc_se,
        )
        for a in assessments
    )
    return EvaluationResult(assessments=final, reference_log_ml=reference_log_ml)
