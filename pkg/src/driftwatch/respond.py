"""Ranking, thresholding, response execution, and the approval queue.

Once scenarios are scored, this layer turns the ranking into exactly one
decision: trigger the top scenario's automated response when its Bayes
factor clears the threshold, or notify the on-call engineer (creating an
approval item when a non-automated response is available). A cooldown
suppresses repeated auto-triggers of the same scenario so a persistent
drift does not re-fire every stride.
"""

from __future__ import annotations

import json
import logging
import math
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import httpx

from .bayes import REFERENCE_ID, AssessmentStatus, ScenarioAssessment
from .eventlog import EventKind, EventLog
from .registry import ActionKind, ResponseSpec, ScenarioRegistry

logger = logging.getLogger(__name__)

DEFAULT_BF_THRESHOLD = 5.0
DEFAULT_COOLDOWN_WINDOWS = 10
DEFAULT_APPROVAL_TTL_MS = 24 * 3600 * 1000
DEFAULT_WEBHOOK_RETRIES = 3


class AllInsufficientDataError(ValueError):
    """Every assessment lacked data; nothing can be ranked."""


class UnknownApprovalError(KeyError):
    pass


class ApprovalConflictError(ValueError):
    """The item is already resolved (or expired) with a different outcome."""

    def __init__(self, message: str, state: str):
        super().__init__(message)
        self.state = state


class DecisionKind(str, Enum):
    AUTO_TRIGGER = "auto-trigger"
    NOTIFY = "notify"
    NONE = "none"


class ApprovalState(str, Enum):
    PENDING = "pending"
    APPROVED = "approved"
    REJECTED = "rejected"
    EXPIRED = "expired"


@dataclass(frozen=True)
class Decision:
    kind: DecisionKind
    scenario_id: Optional[str]
    bayes_factor: float
    threshold: float
    rationale: str

    @property
    def needs_approval(self) -> bool:
        """True when a human must sign off before the response can run."""
        return self.kind is DecisionKind.NOTIFY and self.rationale.startswith("awaiting-approval")

    def to_json(self) -> dict:
        return {
            "decision": self.kind.value, "scenario_id": self.scenario_id,
            "bf": self.bayes_factor, "threshold": self.threshold,
            "rationale": self.rationale,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Decision":
        return cls(
            kind=DecisionKind(obj["decision"]), scenario_id=obj["scenario_id"],
            bayes_factor=float(obj["bf"]), threshold=float(obj["threshold"]),
            rationale=obj["rationale"],
        )


def rank_assessments(assessments: Sequence[ScenarioAssessment]) -> list[ScenarioAssessment]:
    """Scenario assessments in decision order.

    Descending log Bayes factor; ties broken by higher prior weight, then
    lexicographic scenario id, making the order a deterministic total
    order. Insufficient-data rows and the reference row are excluded.
    """
    ranked = [
        a for a in assessments
        if a.status is AssessmentStatus.OK and a.scenario_id != REFERENCE_ID
    ]
    if not ranked:
        raise AllInsufficientDataError("no rankable assessment")
    ranked.sort(key=lambda a: (-a.log_bf, -a.prior_weight, a.scenario_id))
    return ranked


def decide_action(
    ranked: Sequence[ScenarioAssessment],
    registry: ScenarioRegistry,
    threshold: float = DEFAULT_BF_THRESHOLD,
    cooldown_active: frozenset[str] = frozenset(),
) -> Decision:
    """One decision for the top-ranked scenario.

    Above the threshold an automated response auto-triggers (unless in
    cooldown) and anything else notifies; below the threshold the drift
    alert still surfaces as a notify, since the drift itself is real even
    when no scenario explains it.
    """
    if not ranked:
        raise ValueError("decide_action needs a non-empty ranking")
    top = ranked[0]
    bf = top.bayes_factor
    spec = registry.get(top.scenario_id)
    # compare in log space: exp(log x) round-trips below x for many x
    if top.log_bf < math.log(threshold):
        return Decision(DecisionKind.NOTIFY, top.scenario_id, bf, threshold,
                        "below-threshold: drift detected but no scenario is decisive")
    if spec is not None and spec.response is not None and spec.response.automated:
        if top.scenario_id in cooldown_active:
            return Decision(DecisionKind.NOTIFY, top.scenario_id, bf, threshold,
                            "cooldown-active: auto-trigger suppressed")
        return Decision(DecisionKind.AUTO_TRIGGER, top.scenario_id, bf, threshold,
                        "top scenario decisive with automated response")
    if spec is not None and spec.response is not None:
        return Decision(DecisionKind.NOTIFY, top.scenario_id, bf, threshold,
                        "awaiting-approval: response requires sign-off")
    return Decision(DecisionKind.NOTIFY, top.scenario_id, bf, threshold,
                    "no response specified for the top scenario")


class CooldownLedger:
    """Tracks the last auto-trigger per (model, scenario) in window strides."""

    def __init__(self, cooldown_windows: int = DEFAULT_COOLDOWN_WINDOWS):
        self.cooldown_windows = cooldown_windows
        self._last: dict[tuple[str, str], int] = {}

    def active(self, model: str, eval_index: int) -> frozenset[str]:
        """Scenario ids still cooling down at this evaluation index."""
        return frozenset(
            scenario for (m, scenario), last in self._last.items()
            if m == model and eval_index - last < self.cooldown_windows
        )

    def record(self, model: str, scenario_id: str, eval_index: int) -> None:
        self._last[(model, scenario_id)] = eval_index

    def snapshot(self) -> dict[str, int]:
        return {f"{m}/{s}": idx for (m, s), idx in sorted(self._last.items())}


# ---------------------------------------------------------------------------
# Response execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActionResult:
    ok: bool
    kind: ActionKind
    detail: str
    attempts: int = 1

    def to_json(self) -> dict:
        return {"ok": self.ok, "kind": self.kind.value, "detail": self.detail,
                "attempts": self.attempts}


def _default_http_post(url: str, payload: dict, timeout: float) -> int:
    response = httpx.post(url, json=payload, timeout=timeout)
    return response.status_code


@dataclass
class ResponseContext:
    """Everything execute_response needs besides the response spec itself."""

    model: str
    window_id: str
    scenario_id: str
    assessment_record: dict
    decision: Decision
    event_log: Optional[EventLog] = None
    command_log_path: Optional[Path] = None
    http_post: Callable[[str, dict, float], int] = _default_http_post
    webhook_retries: int = DEFAULT_WEBHOOK_RETRIES
    webhook_timeout: float = 5.0


def execute_response(spec: ResponseSpec, context: ResponseContext) -> ActionResult:
    """Carry out a response and record the outcome on the event log.

    notify-only just logs; webhooks POST the assessment record with
    bounded retries (failure is recorded, never raised); model-swap and
    fallback commands are appended to the outbound command log for
    external systems to execute.
    """
    if spec.kind is ActionKind.NOTIFY_ONLY:
        result = ActionResult(ok=True, kind=spec.kind, detail="notification recorded")
    elif spec.kind is ActionKind.WEBHOOK:
        url = spec.payload["url"]
        payload = dict(context.assessment_record)
        payload.update(context.decision.to_json())
        attempts = 0
        ok = False
        detail = ""
        while attempts < context.webhook_retries and not ok:
            attempts += 1
            try:
                status = context.http_post(url, payload, context.webhook_timeout)
                ok = 200 <= status < 300
                detail = f"HTTP {status}"
            except Exception as exc:  # noqa: BLE001 - network failures are data here
                detail = f"{type(exc).__name__}: {exc}"
        if not ok:
            logger.warning("webhook %s unreachable after %d attempts: %s",
                           url, attempts, detail)
        result = ActionResult(ok=ok, kind=spec.kind, detail=detail, attempts=attempts)
    else:
        command = {
            "ts": int(time.time() * 1000),
            "model": context.model,
            "window_id": context.window_id,
            "scenario_id": context.scenario_id,
            "command_kind": spec.kind.value,
            "payload": dict(spec.payload),
        }
        if context.command_log_path is not None:
            path = Path(context.command_log_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(command, sort_keys=True) + "\n")
            detail = f"command appended to {path.name}"
        else:
            detail = "command emitted (no command log configured)"
        result = ActionResult(ok=True, kind=spec.kind, detail=detail)

    if context.event_log is not None:
        context.event_log.append(EventKind.ACTION_RESULT, {
            "model": context.model, "window_id": context.window_id,
            "scenario_id": context.scenario_id, "result": result.to_json(),
        })
    return result


# ---------------------------------------------------------------------------
# Approvals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PendingApproval:
    approval_id: str
    model: str
    window_id: str
    scenario_id: str
    decision: Decision
    created_ts: int
    expires_ts: int
    state: ApprovalState = ApprovalState.PENDING
    resolver: Optional[str] = None
    resolved_ts: Optional[int] = None

    def to_json(self) -> dict:
        return {
            "approval_id": self.approval_id, "model": self.model,
            "window_id": self.window_id, "scenario_id": self.scenario_id,
            "decision": self.decision.to_json(),
            "created_ts": self.created_ts, "expires_ts": self.expires_ts,
            "state": self.state.value, "resolver": self.resolver,
            "resolved_ts": self.resolved_ts,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "PendingApproval":
        return cls(
            approval_id=obj["approval_id"], model=obj["model"],
            window_id=obj["window_id"], scenario_id=obj["scenario_id"],
            decision=Decision.from_json(obj["decision"]),
            created_ts=int(obj["created_ts"]), expires_ts=int(obj["expires_ts"]),
            state=ApprovalState(obj["state"]), resolver=obj.get("resolver"),
            resolved_ts=obj.get("resolved_ts"),
        )


class ApprovalStore:
    """Human-in-the-loop queue with idempotent, single-execution resolution.

    A single lock serializes writers; reads hand out immutable snapshots.
    State only moves pending -> approved | rejected | expired, and the
    executor runs at most once per item, on the pending -> approved edge.
    """

    def __init__(self, ttl_ms: int = DEFAULT_APPROVAL_TTL_MS,
                 clock: Callable[[], int] = lambda: int(time.time() * 1000)):
        self.ttl_ms = ttl_ms
        self._clock = clock
        self._lock = threading.Lock()
        self._items: dict[str, PendingApproval] = {}
        self._counter = 0

    def create(self, model: str, window_id: str, scenario_id: str,
               decision: Decision) -> PendingApproval:
        with self._lock:
            self._counter += 1
            now = self._clock()
            item = PendingApproval(
                approval_id=f"ap-{self._counter:06d}", model=model,
                window_id=window_id, scenario_id=scenario_id, decision=decision,
                created_ts=now, expires_ts=now + self.ttl_ms,
            )
            self._items[item.approval_id] = item
            return item

    def get(self, approval_id: str) -> PendingApproval:
        with self._lock:
            item = self._expire_if_stale(approval_id)
            if item is None:
                raise UnknownApprovalError(approval_id)
            return item

    def list(self, state: Optional[ApprovalState] = None) -> list[PendingApproval]:
        with self._lock:
            for approval_id in list(self._items):
                self._expire_if_stale(approval_id)
            items = sorted(self._items.values(), key=lambda i: i.approval_id)
        if state is None:
            return items
        return [i for i in items if i.state is state]

    def _expire_if_stale(self, approval_id: str) -> Optional[PendingApproval]:
        item = self._items.get(approval_id)
        if item is None:
            return None
        if item.state is ApprovalState.PENDING and self._clock() >= item.expires_ts:
            item = replace(item, state=ApprovalState.EXPIRED, resolved_ts=self._clock())
            self._items[approval_id] = item
        return item

    def resolve(
        self,
        approval_id: str,
        verdict: str,
        resolver: str,
        executor: Optional[Callable[[PendingApproval], ActionResult]] = None,
    ) -> PendingApproval:
        """Approve or reject a pending item.

        Approving runs the executor exactly once, then marks the item
        approved. Repeating an identical verdict is a no-op success;
        a conflicting verdict or an expired item raises
        ApprovalConflictError.
        """
        if verdict not in ("approve", "reject"):
            raise ValueError(f"verdict must be approve or reject, got {verdict!r}")
        target = ApprovalState.APPROVED if verdict == "approve" else ApprovalState.REJECTED
        with self._lock:
            item = self._expire_if_stale(approval_id)
            if item is None:
                raise UnknownApprovalError(approval_id)
            if item.state is target:
                return item
            if item.state is not ApprovalState.PENDING:
                raise ApprovalConflictError(
                    f"approval {approval_id} already {item.state.value}", item.state.value
                )
            if target is ApprovalState.APPROVED and executor is not None:
                executor(item)
            item = replace(item, state=target, resolver=resolver,
                           resolved_ts=self._clock())
            self._items[approval_id] = item
            return item

    def restore(self, item: PendingApproval) -> None:
        """Reinsert an item rebuilt from the event log (startup recovery)."""
        with self._lock:
            self._items[item.approval_id] = item
            try:
                number = int(item.approval_id.rsplit("-", 1)[1])
            except (IndexError, ValueError):
                number = 0
            self._counter = max(self._counter, number)
