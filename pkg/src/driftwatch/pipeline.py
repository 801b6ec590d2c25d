"""End-to-end monitor: ingest, detect, evaluate, decide, act, persist.

One Monitor instance owns a monitored model's windows, its compiled
scenario models, the approval queue, and the cooldown ledger. Every
outcome is appended to the event log, and all in-memory state can be
rebuilt from that log after a restart.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

from .bayes import (
    EngineConfig,
    EvaluationResult,
    ReferenceModel,
    ScenarioModel,
    build_reference_model,
    compile_scenario_model,
    evaluate_scenarios,
)
from .drift import DriftConfig, DriftStatus, detect_drift
from .eventlog import EventKind, EventLog, EventRecord
from .ingest import Observation, TrainingProfile, WindowStore
from .registry import ScenarioRegistry, ValidationReport, load_registry
from .respond import (
    AllInsufficientDataError,
    ApprovalStore,
    CooldownLedger,
    Decision,
    DecisionKind,
    PendingApproval,
    ResponseContext,
    _default_http_post,
    decide_action,
    execute_response,
    rank_assessments,
)


@dataclass(frozen=True)
class PipelineConfig:
    """Tuning knobs of the evaluation loop."""

    window_size: int = 500
    stride: int = 0  # 0 means window_size // 5
    min_window: int = 100
    alpha: float = 0.01
    bf_threshold: float = 5.0
    cooldown_windows: int = 10
    approval_ttl_ms: int = 24 * 3600 * 1000
    mc_samples: int = 20000
    seed: int = 0
    min_subgroup: int = 30
    reference_kappa: float = 100.0
    webhook_retries: int = 3

    @property
    def effective_stride(self) -> int:
        return self.stride if self.stride > 0 else max(1, self.window_size // 5)

    @property
    def drift(self) -> DriftConfig:
        return DriftConfig(alpha=self.alpha, min_window=self.min_window)

    @property
    def engine(self) -> EngineConfig:
        return EngineConfig(
            mc_samples=self.mc_samples, seed=self.seed,
            min_subgroup=self.min_subgroup, reference_kappa=self.reference_kappa,
        )


class Monitor:
    """Single-node monitoring pipeline over one model's observation stream."""

    def __init__(
        self,
        profile: TrainingProfile,
        registry: Optional[ScenarioRegistry],
        event_log: EventLog,
        config: PipelineConfig = PipelineConfig(),
        command_log_path=None,
        clock: Callable[[], int] = lambda: int(time.time() * 1000),
        http_post: Callable = _default_http_post,
    ):
        self.profile = profile
        self.config = config
        self.event_log = event_log
        self.command_log_path = command_log_path
        self.clock = clock
        self.http_post = http_post
        self.model = profile.model_ref.name

        self.store = WindowStore(window_size=config.window_size)
        self.store.register(profile.model_ref, profile.schema)
        self.reference: ReferenceModel = build_reference_model(profile, config.engine)
        self.approvals = ApprovalStore(ttl_ms=config.approval_ttl_ms, clock=clock)
        self.cooldown = CooldownLedger(cooldown_windows=config.cooldown_windows)

        self._registry_lock = threading.Lock()
        self._eval_lock = threading.Lock()
        self._registry = registry if registry is not None else ScenarioRegistry()
        self._scenario_models: tuple[ScenarioModel, ...] = ()
        self._compile_registry(self._registry)

        self._since_last_eval = 0
        self._eval_count = 0
        self._alerts: list[dict] = []
        self._assessments: dict[str, dict] = {}
        self._latest_assessment: Optional[dict] = None
        self._decisions: list[dict] = []

        self._recover()

    # -- registry -----------------------------------------------------------

    @property
    def registry(self) -> ScenarioRegistry:
        return self._registry

    def _compile_registry(self, registry: ScenarioRegistry) -> None:
        models = []
        for spec in registry.for_model(self.model):
            models.append(compile_scenario_model(spec, self.profile, self.reference))
        self._scenario_models = tuple(models)

    def replace_registry(self, document: Union[bytes, str]) -> list[ValidationReport]:
        """Atomically swap the whole scenario registry (last write wins).

        The document is rejected outright if any scenario fails
        validation, so readers only ever see fully valid registries.
        """
        registry, reports = load_registry(document, self.profile)
        if any(not r.ok for r in reports):
            return reports
        with self._registry_lock:
            self._registry = registry
            self._compile_registry(registry)
        return reports

    # -- ingestion and evaluation -------------------------------------------

    def ingest(self, batch: Sequence[Observation]) -> dict[str, int]:
        """Feed observations; runs the evaluation loop at every stride."""
        fills = self.store.ingest_batch(batch)
        if not batch:
            return fills
        self.event_log.append(EventKind.INGEST_SUMMARY, {
            "model": self.model, "rows": len(batch), "fills": fills,
        }, ts=self.clock())
        self._since_last_eval += len(batch)
        while self._since_last_eval >= self.config.effective_stride:
            self._since_last_eval -= self.config.effective_stride
            self.evaluate_window()
        return fills

    def evaluate_window(self) -> Optional[Decision]:
        """One detect -> evaluate -> decide pass over the current window.

        No assessment happens without a drift alert; every evaluation that
        produces an alert also produces exactly one decision.
        """
        with self._eval_lock:
            view = self.store.view(self.model)
            window_id = f"w-{self.model}-{self.store.total_ingested(self.model):08d}"
            ts = self.clock()
            check = detect_drift(view, self.profile, self.config.drift,
                                 window_id=window_id, ts=ts)
            if check.status is DriftStatus.INSUFFICIENT_WINDOW or check.alert is None:
                return None

            alert_payload = check.alert.to_json()
            self.event_log.append(EventKind.ALERT, alert_payload, ts=ts)
            self._alerts.append(alert_payload)

            eval_index = self._eval_count
            self._eval_count += 1

            with self._registry_lock:
                registry = self._registry
                scenario_models = self._scenario_models

            if not scenario_models:
                decision = Decision(DecisionKind.NONE, None, math.nan,
                                    self.config.bf_threshold, "no-scenarios-registered")
                self._record_decision(decision, window_id, eval_index, ts)
                return decision

            result = evaluate_scenarios(view, scenario_models, self.reference,
                                        self.config.engine)
            try:
                ranked = rank_assessments(result.assessments)
            except AllInsufficientDataError:
                ranked = []
            # persist in responder order so consumers never need to re-rank:
            # rankable scenarios, then insufficient-data rows, reference last
            ranked_ids = {a.scenario_id for a in ranked}
            leftovers = sorted(
                (a for a in result.scenario_assessments
                 if a.scenario_id not in ranked_ids),
                key=lambda a: a.scenario_id,
            )
            reference_row = result.assessments[-1]
            ordered = EvaluationResult(
                assessments=tuple(ranked + leftovers + [reference_row]),
                reference_log_ml=result.reference_log_ml,
            )
            assessment_record = ordered.to_json(self.model, window_id, ts)
            self.event_log.append(EventKind.ASSESSMENT, assessment_record, ts=ts)
            self._assessments[window_id] = assessment_record
            self._latest_assessment = assessment_record

            if not ranked:
                decision = Decision(DecisionKind.NONE, None, math.nan,
                                    self.config.bf_threshold, "all-insufficient-data")
                self._record_decision(decision, window_id, eval_index, ts)
                return decision

            decision = decide_action(
                ranked, registry, threshold=self.config.bf_threshold,
                cooldown_active=self.cooldown.active(self.model, eval_index),
            )
            self._record_decision(decision, window_id, eval_index, ts)

            spec = registry.get(decision.scenario_id) if decision.scenario_id else None
            if decision.kind is DecisionKind.AUTO_TRIGGER and spec is not None:
                self.cooldown.record(self.model, decision.scenario_id, eval_index)
                execute_response(spec.response, self._context(decision, window_id,
                                                              assessment_record))
            elif decision.needs_approval and spec is not None and spec.response is not None:
                item = self.approvals.create(self.model, window_id,
                                             decision.scenario_id, decision)
                self.event_log.append(EventKind.APPROVAL, item.to_json(), ts=ts)
            return decision

    def _record_decision(self, decision: Decision, window_id: str,
                         eval_index: int, ts: int) -> None:
        payload = {"model": self.model, "window_id": window_id,
                   "eval_index": eval_index}
        payload.update(decision.to_json())
        self.event_log.append(EventKind.DECISION, payload, ts=ts)
        self._decisions.append(payload)

    def _context(self, decision: Decision, window_id: str,
                 assessment_record: dict) -> ResponseContext:
        return ResponseContext(
            model=self.model, window_id=window_id,
            scenario_id=decision.scenario_id or "",
            assessment_record=assessment_record, decision=decision,
            event_log=self.event_log, command_log_path=self.command_log_path,
            http_post=self.http_post, webhook_retries=self.config.webhook_retries,
        )

    # -- approvals ------------------------------------------------------------

    def resolve_approval(self, approval_id: str, verdict: str,
                         resolver: str = "api") -> PendingApproval:
        def executor(item: PendingApproval):
            spec = self._registry.get(item.scenario_id)
            if spec is None or spec.response is None:
                return
            record = self._assessments.get(item.window_id, {
                "model": self.model, "window_id": item.window_id,
            })
            execute_response(spec.response, self._context(item.decision,
                                                          item.window_id, record))

        item = self.approvals.resolve(approval_id, verdict, resolver, executor=executor)
        self.event_log.append(EventKind.APPROVAL, item.to_json(), ts=self.clock())
        return item

    # -- queries --------------------------------------------------------------

    def latest_assessment(self) -> Optional[dict]:
        return self._latest_assessment

    def assessment_for(self, window_id: str) -> Optional[dict]:
        return self._assessments.get(window_id)

    def alerts(self, limit: int = 50) -> list[dict]:
        return self._alerts[-limit:][::-1]

    def decisions(self, limit: int = 50) -> list[dict]:
        return self._decisions[-limit:][::-1]

    # -- crash recovery ---------------------------------------------------------

    def _recover(self) -> None:
        """Rebuild approvals, cooldown state, and indexes from the event log."""
        for record in self.event_log.records():
            payload = record.payload
            if payload.get("model", self.model) != self.model and "approval_id" not in payload:
                continue
            if record.kind is EventKind.ALERT:
                self._alerts.append(payload)
            elif record.kind is EventKind.ASSESSMENT:
                self._assessments[payload["window_id"]] = payload
                self._latest_assessment = payload
            elif record.kind is EventKind.DECISION:
                self._decisions.append(payload)
                self._eval_count = max(self._eval_count, payload["eval_index"] + 1)
                if payload["decision"] == DecisionKind.AUTO_TRIGGER.value:
                    self.cooldown.record(payload["model"], payload["scenario_id"],
                                         payload["eval_index"])
            elif record.kind is EventKind.APPROVAL:
                self.approvals.restore(PendingApproval.from_json(payload))
