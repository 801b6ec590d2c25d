"""driftwatch: feature-drift monitoring with Bayesian scenario identification."""

__version__ = "0.1.0"

from .schema import FeatureKind, ModelRef, ModelSchema, PREDICTION_FEATURE, SchemaError
from .registry import (
    ActionKind,
    EstimateMode,
    MalformedDocumentError,
    MomentMatchingError,
    OrdinalLevel,
    Parameter,
    ParameterEstimate,
    ParameterPrior,
    PriorFamily,
    RegistrySchemaError,
    ResponseSpec,
    ScenarioRegistry,
    ScenarioSpec,
    ScenarioUnderstanding,
    SubgroupClause,
    SubgroupPredicate,
    ValidationReport,
    build_prior,
    load_registry,
    parse_scenario_file,
    resolve_estimate,
    serialize_registry,
    validate_scenario,
)
from .ingest import (
    Observation,
    TrainingProfile,
    WindowStore,
    WindowView,
    apply_subgroup_filter,
    fit_training_profile,
)
from .drift import (
    DriftAlert,
    DriftCheck,
    DriftConfig,
    DriftStatus,
    FeatureTestResult,
    benjamini_hochberg,
    chi_square_categorical,
    detect_drift,
    ks_two_sample,
)
from .bayes import (
    REFERENCE_ID,
    EngineConfig,
    EvaluationResult,
    FeatureLikelihoodModel,
    LikelihoodFamily,
    ReferenceModel,
    ScenarioAssessment,
    ScenarioModel,
    build_reference_model,
    compile_scenario_model,
    evaluate_scenarios,
    log_marginal_beta_binomial,
    log_marginal_dirichlet_multinomial,
    log_marginal_gamma_poisson,
    log_marginal_monte_carlo,
    log_marginal_normal_known_var,
    log_marginal_normal_unknown_var,
    posterior_normalize,
)
from .respond import (
    ApprovalStore,
    CooldownLedger,
    Decision,
    DecisionKind,
    decide_action,
    execute_response,
    rank_assessments,
)
from .eventlog import EventKind, EventLog, EventRecord
from .pipeline import Monitor, PipelineConfig
from .config import ServiceConfig, load_config
from .simulate import (
    GeneratorConfig,
    InjectedScenario,
    default_churn_config,
    generate_training_data,
    inject_scenario,
    run_grid_experiment,
)
