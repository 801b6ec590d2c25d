"""Acceptance suite: every exit criterion at its stated tolerance.

Each test prints one PASS line on success (run with -s to see them);
a failure is reported by pytest as usual. Criteria:

  1 conjugate-correctness   closed forms vs adaptive quadrature, 1e-6 rel,
                            >= 1000 cases per family, under a minute
  2 monte-carlo-soundness   |log error| <= 3 reported SE in >= 99/100 cases
  3 ks-correctness          exact statistic vs brute force (1000 cases);
                            null false-alert rate <= alpha (95% binomial)
  4 reference-sanity        reference top on training-like windows >= 95%;
                            identical scenario has log BF exactly 0
  5 fig4-trends             accuracy grid: high at origin, non-increasing
                            in error, high uncertainty rescues high error
  6 churn-replay            injected age shift identified with BF >= 5 in
                            >= 90/100 replays; null stream stays silent
  7 responder-safety        decisions reproducible from the log, single
                            execution per approval, cooldown suppression
  8 primary-standalone      the primary package runs with no frontend
"""

import json
import math
import time

import numpy as np
import pytest

from driftwatch.bayes import (
    REFERENCE_ID,
    AssessmentStatus,
    DataSummary,
    EngineConfig,
    LikelihoodFamily,
    ScenarioModel,
    build_reference_model,
    evaluate_scenarios,
    log_marginal_beta_binomial,
    log_marginal_dirichlet_multinomial,
    log_marginal_gamma_poisson,
    log_marginal_monte_carlo,
    log_marginal_normal_known_var,
    log_marginal_normal_unknown_var,
)
from driftwatch.drift import DriftConfig, detect_drift, ks_two_sample
from driftwatch.eventlog import EventKind, EventLog
from driftwatch.ingest import WindowView, fit_training_profile
from driftwatch.pipeline import Monitor, PipelineConfig
from driftwatch.registry import ParameterPrior, PriorFamily, load_registry
from driftwatch.respond import ApprovalState
from driftwatch.simulate import (
    DEFAULT_ERROR_LEVELS,
    DEFAULT_UNCERTAINTY_LEVELS,
    InjectedScenario,
    default_churn_config,
    generate_rows,
    generate_stream,
    generate_training_data,
    inject_scenario,
    run_grid_experiment,
)

import oracles

CONFIG = default_churn_config()


def ok(name):
    print(f"PASS {name}")


def rel_log_err(a, b):
    return abs(a - b) / max(1.0, abs(a))


@pytest.fixture(scope="module")
def training_profile():
    rows = generate_training_data(CONFIG, seed=0)
    return fit_training_profile(rows, CONFIG.schema, CONFIG.model,
                                reservoir_size=2000, seed=0)


# -------------------------------------------------------------------------
# 1. Conjugate correctness
# -------------------------------------------------------------------------

class TestConjugateCorrectness:
    TOL = 1e-6

    def test_closed_forms_match_quadrature(self):
        start = time.monotonic()
        rng = np.random.default_rng(2024)
        worst = 0.0

        for _ in range(1000):  # normal, known variance
            n = int(rng.integers(1, 12))
            known_var = float(rng.uniform(0.2, 20.0))
            xs = rng.normal(rng.uniform(-6, 6), math.sqrt(known_var), size=n)
            pm, pv = float(rng.uniform(-8, 8)), float(rng.uniform(0.05, 25.0))
            got = log_marginal_normal_known_var(
                n, float(xs.sum()), float((xs * xs).sum()), known_var, pm, pv)
            worst = max(worst, rel_log_err(got, oracles.quad_normal_known_var(xs, known_var, pm, pv)))
        assert worst < self.TOL, f"normal-known-variance worst {worst}"

        for _ in range(1000):  # normal, unknown variance (NIG prior)
            n = int(rng.integers(1, 7))
            xs = rng.normal(rng.uniform(-4, 4), rng.uniform(0.5, 3.0), size=n)
            m0 = float(rng.uniform(-4, 4))
            kappa = float(rng.uniform(0.2, 20.0))
            shape = float(rng.uniform(1.2, 8.0))
            scale = float(rng.uniform(0.5, 10.0))
            got = log_marginal_normal_unknown_var(
                n, float(xs.sum()), float((xs * xs).sum()), m0, kappa, shape, scale)
            worst = max(worst, rel_log_err(got, oracles.quad_normal_unknown_var(xs, m0, kappa, shape, scale)))
        assert worst < self.TOL, f"normal-unknown-variance worst {worst}"

        for _ in range(1000):  # beta-binomial
            n = int(rng.integers(1, 80))
            k = int(rng.integers(0, n + 1))
            a, b = float(rng.uniform(0.2, 30.0)), float(rng.uniform(0.2, 30.0))
            got = log_marginal_beta_binomial(k, n, a, b)
            worst = max(worst, rel_log_err(got, oracles.quad_beta_binomial(k, n, a, b)))
        assert worst < self.TOL, f"beta-binomial worst {worst}"

        for _ in range(1000):  # gamma-poisson
            n = int(rng.integers(1, 40))
            total = int(rng.poisson(rng.uniform(0.5, 12.0) * n))
            shape, rate = float(rng.uniform(0.3, 25.0)), float(rng.uniform(0.05, 8.0))
            got = log_marginal_gamma_poisson(total, n, shape, rate)
            worst = max(worst, rel_log_err(got, oracles.quad_gamma_poisson(total, n, shape, rate)))
        assert worst < self.TOL, f"gamma-poisson worst {worst}"

        for case in range(1000):  # dirichlet-multinomial
            if case < 970:
                n = int(rng.integers(1, 50))
                x1 = int(rng.integers(0, n + 1))
                a1, a2 = float(rng.uniform(0.3, 20.0)), float(rng.uniform(0.3, 20.0))
                got = log_marginal_dirichlet_multinomial(
                    {"a": x1, "b": n - x1}, {"a": a1, "b": a2})
                oracle = oracles.quad_dirichlet_multinomial_2((x1, n - x1), (a1, a2))
            else:
                counts = rng.multinomial(int(rng.integers(3, 20)), rng.dirichlet([3, 3, 3]))
                conc = rng.uniform(0.5, 6.0, size=3)
                got = log_marginal_dirichlet_multinomial(
                    dict(zip("abc", (int(c) for c in counts))),
                    dict(zip("abc", (float(v) for v in conc))))
                oracle = oracles.quad_dirichlet_multinomial_3(counts, conc)
            worst = max(worst, rel_log_err(got, oracle))
        assert worst < 1e-5, f"dirichlet-multinomial worst {worst}"

        elapsed = time.monotonic() - start
        assert elapsed < 60.0, f"conjugate sweep took {elapsed:.1f}s"
        ok(f"conjugate-correctness (5 families x 1000 cases, worst rel err "
           f"{worst:.2e}, {elapsed:.1f}s)")


# -------------------------------------------------------------------------
# 2. Monte-Carlo soundness
# -------------------------------------------------------------------------

class TestMonteCarloSoundness:
    def test_within_three_standard_errors(self):
        rng = np.random.default_rng(77)
        hits = 0
        for case in range(100):
            family = case % 3
            if family == 0:  # bernoulli with beta prior
                n = int(rng.integers(5, 40))
                k = int(rng.integers(0, n + 1))
                a, b = float(rng.uniform(0.5, 8.0)), float(rng.uniform(0.5, 8.0))
                truth = log_marginal_beta_binomial(k, n, a, b)
                est, se = log_marginal_monte_carlo(
                    DataSummary(n=n, successes=k), LikelihoodFamily.BERNOULLI,
                    ParameterPrior(PriorFamily.BETA, {"alpha": a, "beta": b}),
                    n_samples=20000, seed=1000 + case)
            elif family == 1:  # normal with known variance
                n = int(rng.integers(2, 25))
                kv = float(rng.uniform(0.5, 9.0))
                xs = rng.normal(rng.uniform(-3, 3), math.sqrt(kv), size=n)
                pm, pv = float(rng.uniform(-4, 4)), float(rng.uniform(0.2, 9.0))
                truth = log_marginal_normal_known_var(
                    n, float(xs.sum()), float((xs * xs).sum()), kv, pm, pv)
                est, se = log_marginal_monte_carlo(
                    DataSummary(n=n, total=float(xs.sum()), total_sq=float((xs * xs).sum())),
                    LikelihoodFamily.NORMAL_KNOWN_VAR,
                    ParameterPrior(PriorFamily.NORMAL, {"mean": pm, "variance": pv}),
                    n_samples=20000, seed=1000 + case, known_var=kv)
            else:  # poisson with gamma prior
                n = int(rng.integers(3, 25))
                rate_true = float(rng.uniform(1.0, 9.0))
                xs = rng.poisson(rate_true, size=n)
                shape, rate = float(rng.uniform(1.0, 12.0)), float(rng.uniform(0.2, 3.0))
                from scipy.special import gammaln

                log_fact = float(gammaln(xs + 1.0).sum())
                truth = log_marginal_gamma_poisson(int(xs.sum()), n, shape, rate) - log_fact
                est, se = log_marginal_monte_carlo(
                    DataSummary(n=n, total=float(xs.sum()), log_factorial_sum=log_fact),
                    LikelihoodFamily.POISSON,
                    ParameterPrior(PriorFamily.GAMMA, {"shape": shape, "rate": rate}),
                    n_samples=20000, seed=1000 + case)
            if abs(est - truth) <= 3 * se:
                hits += 1
        assert hits >= 99, f"only {hits}/100 within 3 SE"
        ok(f"monte-carlo-soundness ({hits}/100 within 3 reported SE)")


# -------------------------------------------------------------------------
# 3. KS correctness and null calibration
# -------------------------------------------------------------------------

class TestKsCorrectness:
    def test_statistic_exact_vs_brute_force(self):
        rng = np.random.default_rng(5150)
        for _ in range(1000):
            n = int(rng.integers(2, 51))
            m = int(rng.integers(2, 51))
            if rng.random() < 0.5:
                a = rng.integers(0, 10, size=n).astype(float)
                b = rng.integers(0, 10, size=m).astype(float)
            else:
                a = rng.normal(size=n)
                b = rng.normal(rng.uniform(-1.5, 1.5), rng.uniform(0.5, 2.0), size=m)
            assert ks_two_sample(a, b)[0] == oracles.brute_force_ks(a, b)
        ok("ks-correctness: statistic exact vs brute force (1000 cases <= size 50)")

    def test_null_calibration(self, training_profile):
        trials = 1000
        alpha = 0.01
        alerts = 0
        for seed in range(trials):
            rows = generate_rows(CONFIG, 200, np.random.default_rng([314, seed]))
            view = WindowView(model_ref=CONFIG.model, schema=CONFIG.schema,
                              rows=tuple(rows))
            check = detect_drift(view, training_profile,
                                 DriftConfig(alpha=alpha, min_window=100))
            if check.alert is not None:
                alerts += 1
        upper = alpha + 1.96 * math.sqrt(alpha * (1 - alpha) / trials)
        rate = alerts / trials
        assert rate <= upper, f"false-alert rate {rate} above {upper}"
        ok(f"ks-correctness: null false-alert rate {rate:.4f} <= {upper:.4f} "
           f"(alpha={alpha}, {trials} windows)")


# -------------------------------------------------------------------------
# 4. Reference sanity
# -------------------------------------------------------------------------

class TestReferenceSanity:
    def test_reference_tops_training_like_windows(self, training_profile):
        reference = build_reference_model(training_profile)
        training_rows = generate_training_data(CONFIG, seed=0)
        shifted = [
            ScenarioModel(
                scenario_id=f"shift-{delta}",
                feature_models={
                    **reference.feature_models,
                    "customer_age": reference.feature_models["customer_age"].__class__(
                        feature="customer_age",
                        family=reference.feature_models["customer_age"].family,
                        prior=ParameterPrior(PriorFamily.NORMAL,
                                             {"mean": 40.0 + delta, "variance": 4.0}),
                        known_var=reference.feature_models["customer_age"].known_var,
                    ),
                },
                affected=("customer_age",), prior_weight=2.0,
            )
            for delta in (-12.0, -6.0, 6.0, 12.0)
        ]
        wins = 0
        trials = 500
        for seed in range(trials):
            rng = np.random.default_rng([271, seed])
            rows = tuple(training_rows[i] for i in rng.integers(0, len(training_rows), size=200))
            view = WindowView(model_ref=CONFIG.model, schema=CONFIG.schema, rows=rows)
            result = evaluate_scenarios(view, shifted, reference)
            by_id = {a.scenario_id: a.log_ml for a in result.assessments}
            if by_id[REFERENCE_ID] >= max(v for k, v in by_id.items() if k != REFERENCE_ID):
                wins += 1
        assert wins >= 0.95 * trials, f"reference top in only {wins}/{trials}"
        ok(f"reference-sanity: reference top marginal likelihood in {wins}/{trials}")

    def test_identical_scenario_has_exactly_zero_log_bf(self, training_profile):
        reference = build_reference_model(training_profile)
        clone = ScenarioModel(
            scenario_id="clone", feature_models=dict(reference.feature_models),
            affected=tuple(CONFIG.schema.features), prior_weight=2.0,
        )
        rows = generate_rows(CONFIG, 300, np.random.default_rng(9))
        view = WindowView(model_ref=CONFIG.model, schema=CONFIG.schema, rows=tuple(rows))
        result = evaluate_scenarios(view, [clone], reference)
        assessment = result.scenario_assessments[0]
        assert assessment.log_bf == 0.0
        ok("reference-sanity: scenario identical to reference has log BF == 0.0 exactly")


# -------------------------------------------------------------------------
# 5. Fig.-4-style accuracy trends
# -------------------------------------------------------------------------

class TestAccuracyGridTrends:
    def test_grid_trends(self):
        start = time.monotonic()
        trials = 200
        grid = run_grid_experiment(
            error_levels=DEFAULT_ERROR_LEVELS,
            uncertainty_levels=DEFAULT_UNCERTAINTY_LEVELS,
            trials_per_cell=trials, threshold=5.0, seed=0,
        )
        elapsed = time.monotonic() - start
        assert elapsed < 600.0, f"grid took {elapsed:.0f}s"

        # (a) high accuracy with error-free, sharp estimates
        origin = grid.accuracy(0, 0)
        assert origin >= 0.9, f"accuracy at (error 0, sharpest) is {origin}"

        # (b) non-increasing in error at the sharpest uncertainty,
        #     within 2 binomial standard errors per adjacent pair
        column = [grid.accuracy(i, 0) for i in range(len(DEFAULT_ERROR_LEVELS))]
        for i in range(len(column) - 1):
            lo, hi = column[i + 1], column[i]
            se = math.sqrt(
                (hi * (1 - hi) + lo * (1 - lo)) / trials
            )
            assert lo <= hi + 2 * se, (
                f"accuracy rose from {hi} to {lo} between error levels "
                f"{DEFAULT_ERROR_LEVELS[i]} and {DEFAULT_ERROR_LEVELS[i + 1]}"
            )

        # (c) at the largest error, high uncertainty strictly beats the sharpest
        sharp = grid.accuracy(len(DEFAULT_ERROR_LEVELS) - 1, 0)
        wide = grid.accuracy(len(DEFAULT_ERROR_LEVELS) - 1,
                             len(DEFAULT_UNCERTAINTY_LEVELS) - 1)
        assert wide > sharp, f"high uncertainty {wide} not above sharp {sharp} at max error"

        ok(f"fig4-trends: origin {origin:.2f}, error column {['%.2f' % c for c in column]}, "
           f"max-error sharp {sharp:.2f} < wide {wide:.2f} ({elapsed:.0f}s)")


# -------------------------------------------------------------------------
# 6. End-to-end churn replay
# -------------------------------------------------------------------------

def replay_registry_doc(automated=True):
    """Marketing-campaign scenario (age prior at the shifted mean) plus a
    competitor-campaign distractor on another feature."""
    return json.dumps({"scenarios": [
        {
            "id": "marketing-campaign",
            "model": {"name": "churn", "version": "1.0"},
            "description": "campaign targets young people; mean age drops",
            "estimates": [{"feature": "customer_age", "parameter": "mean",
                           "family": "normal", "location": 18.0, "spread": 2.0,
                           "mode": "absolute"}],
            "understanding": {"severity": "low", "transition_speed": "high",
                              "duration": "moderate", "recurrence": "moderate",
                              "likelihood": "high"},
            "response": {"kind": "model-swap-command", "payload": {"target": "churn-young"},
                         "automated": automated},
        },
        {
            "id": "competitor-campaign",
            "model": {"name": "churn", "version": "1.0"},
            "description": "competitor lures young users; page visits collapse",
            "estimates": [{"feature": "recent_page_visits", "parameter": "rate",
                           "family": "gamma", "location": 4.0, "spread": 1.0,
                           "mode": "absolute"}],
            "understanding": {"severity": "high", "transition_speed": "high",
                              "duration": "high", "recurrence": "low",
                              "likelihood": "moderate"},
        },
    ]}).encode()


class TestChurnReplay:
    def run_replay(self, training_profile, tmp_path, seed, drifted=True):
        registry, reports = load_registry(replay_registry_doc(), training_profile)
        assert all(r.ok for r in reports)
        stream = generate_stream(CONFIG, seed=seed)
        if drifted:
            stream = inject_scenario(
                stream,
                InjectedScenario("marketing-campaign",
                                 {"customer_age": {"mean": 18.0, "std": 12.0}},
                                 onset=0),
                CONFIG, seed=seed + 1,
            )
        stream = stream[:400]
        monitor = Monitor(
            profile=training_profile, registry=registry,
            event_log=EventLog(tmp_path / f"events-{seed}-{drifted}.jsonl",
                               clock=lambda: 0),
            config=PipelineConfig(window_size=200, stride=100, min_window=100),
            command_log_path=tmp_path / f"commands-{seed}.jsonl",
            clock=lambda: 0, http_post=lambda u, p, t: 200,
        )
        monitor.ingest(stream)
        monitor.event_log.close()
        return monitor

    def test_injected_shift_identified_in_at_least_90_of_100_replays(
            self, training_profile, tmp_path):
        hits = 0
        for seed in range(100):
            monitor = self.run_replay(training_profile, tmp_path, seed=3000 + seed)
            assessment = monitor.latest_assessment()
            if assessment is None:
                continue
            scenario_rows = [a for a in assessment["assessments"]
                             if a["scenario_id"] != REFERENCE_ID
                             and a["status"] == "ok"]
            top = max(scenario_rows, key=lambda a: a["log_bf"])
            if top["scenario_id"] == "marketing-campaign" and top["log_bf"] >= math.log(5.0):
                hits += 1
        assert hits >= 90, f"identified in only {hits}/100 replays"
        ok(f"churn-replay: marketing campaign top-ranked with BF >= 5 in {hits}/100 replays")

    def test_feature_only_shift_triggers_and_null_stream_does_not(
            self, training_profile, tmp_path):
        drifted = self.run_replay(training_profile, tmp_path, seed=9100, drifted=True)
        decisions = drifted.decisions(limit=100)
        assert any(d["decision"] == "auto-trigger"
                   and d["scenario_id"] == "marketing-campaign" for d in decisions)
        null = self.run_replay(training_profile, tmp_path, seed=9101, drifted=False)
        assert null.alerts() == []
        assert null.decisions() == []
        assert null.latest_assessment() is None
        ok("churn-replay: P(X)-only shift triggers the scenario; "
           "training-matched stream triggers nothing")


# -------------------------------------------------------------------------
# 7. Responder determinism and safety
# -------------------------------------------------------------------------

class TestResponderSafety:
    def test_decisions_reproducible_and_no_double_execution(
            self, training_profile, tmp_path):
        from driftwatch.bayes import ScenarioAssessment
        from driftwatch.respond import decide_action, rank_assessments

        registry, _ = load_registry(replay_registry_doc(), training_profile)
        stream = inject_scenario(
            generate_stream(CONFIG, seed=515),
            InjectedScenario("marketing-campaign",
                             {"customer_age": {"mean": 18.0, "std": 12.0}}, onset=0),
            CONFIG, seed=516,
        )[:500]
        posts = []
        monitor = Monitor(
            profile=training_profile, registry=registry,
            event_log=EventLog(tmp_path / "safety-events.jsonl", clock=lambda: 0),
            config=PipelineConfig(window_size=200, stride=50, min_window=100,
                                  cooldown_windows=10),
            command_log_path=tmp_path / "safety-commands.jsonl",
            clock=lambda: 0, http_post=lambda u, p, t: posts.append(u) or 200,
        )
        monitor.ingest(stream)
        monitor.event_log.close()

        records = list(monitor.event_log.records())
        decisions = [r.payload for r in records if r.kind is EventKind.DECISION]
        assessments = {r.payload["window_id"]: r.payload for r in records
                       if r.kind is EventKind.ASSESSMENT}
        assert len(decisions) >= 3

        # replaying the log reproduces every decision
        cooldown: set[str] = set()
        triggers = 0
        for logged in decisions:
            payload = assessments[logged["window_id"]]
            rebuilt = [
                ScenarioAssessment(
                    scenario_id=a["scenario_id"], log_ml=a["log_ml"], log_bf=a["log_bf"],
                    posterior=a["posterior"],
                    prior_weight=registry.get(a["scenario_id"]).prior_weight,
                    status=AssessmentStatus(a["status"]),
                )
                for a in payload["assessments"] if a["scenario_id"] != REFERENCE_ID
            ]
            decision = decide_action(rank_assessments(rebuilt), registry,
                                     threshold=5.0, cooldown_active=frozenset(cooldown))
            assert decision.kind.value == logged["decision"], logged
            assert decision.scenario_id == logged["scenario_id"]
            if decision.kind.value == "auto-trigger":
                cooldown.add(decision.scenario_id)
                triggers += 1

        # cooldown suppressed all repeat triggers within the run
        assert triggers == 1
        assert sum(1 for d in decisions if d["decision"] == "auto-trigger") == 1

        # no response executed more than once per approval/trigger
        action_results = [r for r in records if r.kind is EventKind.ACTION_RESULT]
        commands = (tmp_path / "safety-commands.jsonl").read_text().strip().splitlines()
        assert len(action_results) == 1
        assert len(commands) == 1

        ok("responder-safety: decisions replayed exactly, single execution, "
           "cooldown suppression")

    def test_approval_single_execution(self, training_profile, tmp_path):
        registry, _ = load_registry(replay_registry_doc(automated=False),
                                    training_profile)
        stream = inject_scenario(
            generate_stream(CONFIG, seed=717),
            InjectedScenario("marketing-campaign",
                             {"customer_age": {"mean": 18.0, "std": 12.0}}, onset=0),
            CONFIG, seed=718,
        )[:250]
        monitor = Monitor(
            profile=training_profile, registry=registry,
            event_log=EventLog(tmp_path / "approval-events.jsonl", clock=lambda: 0),
            config=PipelineConfig(window_size=200, stride=50, min_window=100),
            command_log_path=tmp_path / "approval-commands.jsonl",
            clock=lambda: 0,
        )
        monitor.ingest(stream)
        pending = monitor.approvals.list(ApprovalState.PENDING)
        assert pending
        first = pending[0].approval_id
        monitor.resolve_approval(first, "approve", "oncall")
        monitor.resolve_approval(first, "approve", "oncall")
        commands = (tmp_path / "approval-commands.jsonl").read_text().strip().splitlines()
        executed_for_first = [
            r for r in monitor.event_log.records()
            if r.kind is EventKind.ACTION_RESULT
        ]
        assert len(commands) == 1
        assert len(executed_for_first) == 1
        monitor.event_log.close()
        ok("responder-safety: approval executes exactly once under repeat verdicts")


# -------------------------------------------------------------------------
# 8. Primary component stands alone
# -------------------------------------------------------------------------

class TestPrimaryStandalone:
    def test_primary_suite_needs_no_frontend(self):
        """The package and its whole pipeline import and run with no
        secondary component present."""
        import driftwatch

        assert driftwatch.__version__
        for name in ("parse_scenario_file", "fit_training_profile", "detect_drift",
                     "evaluate_scenarios", "build_reference_model"):
            assert hasattr(driftwatch, name)
        ok("primary-standalone: full primary suite runs with no secondary component")
