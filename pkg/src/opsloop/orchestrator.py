"""Finite-state incident loop with a compute budget ledger.

A closed transition table drives each incident through detection,
enrichment, diagnosis, action selection, execution, verification, logging,
and periodic learning. Every component call is metered in compute units;
once the ledger is exhausted, the very next transition must be
budget_exceeded into the terminal Escalated state. The full transition
history is kept as an audit log.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .cluster import ActionResult, SimError
from .config import (
    ActionKind,
    BUFFER_CAPACITY,
    COMPUTE_LIMIT,
    DETECT_WINDOW,
    EPISODIC_K,
    ESCALATION_AFTER,
    EVENT_KINDS,
    ATTR_SOURCE,
    BASELINES,
    LEARNING_CADENCE,
    MIN_CONFIDENCE,
    MIN_SUPPORT,
    NOISE_PCT,
    PACK_BUDGET,
    RETIRE_AGE_EPISODES,
    RETIRE_CONFIDENCE_FLOOR,
    SECTION_ORDER,
    SUBGRAPH_RADIUS,
    SYMPTOM_VOCAB,
    TARIFF_ACE_ASSEMBLY,
    TARIFF_ACE_ITEM,
    TARIFF_DETECTOR_WINDOW,
    TARIFF_ILL_CLOSURE,
    TARIFF_MEMORY_ITEM,
    TARIFF_REASONER_UNIT,
    TOOL_CALL_LIMIT,
    VERIFY_EPS,
    VERIFY_TICKS,
    cause_label,
    noise_band,
)
from .contextpack import BudgetPolicy, IncidentDescriptor, assemble, update_weights
from .ingest import Alert, TelemetryFeed, detect_anomalies
from .lattice import DistillReport, RetireCriteria, distill, retire_rules, validated_rules
from .memory import Episode, ForgetCriteria, Memories
from .reasoner import ActionPlan, Diagnosis, diagnose, make_plan


class Phase(str, Enum):
    IDLE = "Idle"
    DETECTING = "Detecting"
    ENRICHING = "Enriching"
    DIAGNOSING = "Diagnosing"
    SELECTING = "Selecting"
    EXECUTING = "Executing"
    VERIFYING = "Verifying"
    LOGGING = "Logging"
    LEARNING = "Learning"
    ESCALATED = "Escalated"


class Event(str, Enum):
    ALERT_RAISED = "alert_raised"
    PACK_READY = "pack_ready"
    HYPOTHESES_READY = "hypotheses_ready"
    ABSTAIN = "abstain"
    PLAN_READY = "plan_ready"
    ACTION_DONE = "action_done"
    SYMPTOMS_CLEAR = "symptoms_clear"
    SYMPTOMS_PERSIST = "symptoms_persist"
    EPISODE_LOGGED = "episode_logged"
    LEARNING_DONE = "learning_done"
    BUDGET_EXCEEDED = "budget_exceeded"


class TransitionError(Exception):
    pass


class LoopError(Exception):
    pass


_TABLE: dict[tuple[Phase, Event], Phase] = {
    (Phase.IDLE, Event.ALERT_RAISED): Phase.DETECTING,
    (Phase.DETECTING, Event.ALERT_RAISED): Phase.ENRICHING,
    (Phase.ENRICHING, Event.PACK_READY): Phase.DIAGNOSING,
    (Phase.DIAGNOSING, Event.HYPOTHESES_READY): Phase.SELECTING,
    (Phase.DIAGNOSING, Event.ABSTAIN): Phase.ESCALATED,
    (Phase.SELECTING, Event.PLAN_READY): Phase.EXECUTING,
    (Phase.EXECUTING, Event.ACTION_DONE): Phase.VERIFYING,
    (Phase.VERIFYING, Event.SYMPTOMS_CLEAR): Phase.LOGGING,
    (Phase.LEARNING, Event.LEARNING_DONE): Phase.IDLE,
}


@dataclass(frozen=True)
class OrchestratorState:
    phase: Phase = Phase.IDLE
    attempt: int = 1
    escalation_after: int = ESCALATION_AFTER
    learning_due: bool = False


def transition(state: OrchestratorState, event: Event) -> OrchestratorState:
    """Pure transition step; raises TransitionError on any pair not in the
    table. Retry and cadence branches depend only on the carried state."""
    phase = state.phase
    if event is Event.BUDGET_EXCEEDED:
        if phase is Phase.ESCALATED:
            raise TransitionError("budget_exceeded in terminal state Escalated")
        return replace(state, phase=Phase.ESCALATED)
    if phase is Phase.VERIFYING and event is Event.SYMPTOMS_PERSIST:
        if state.attempt >= state.escalation_after:
            return replace(state, phase=Phase.ESCALATED)
        return replace(state, phase=Phase.SELECTING, attempt=state.attempt + 1)
    if phase is Phase.LOGGING and event is Event.EPISODE_LOGGED:
        return replace(state, phase=Phase.LEARNING if state.learning_due else Phase.IDLE)
    target = _TABLE.get((phase, event))
    if target is None:
        raise TransitionError(
            f"illegal transition: {phase.value} + {event.value} "
            f"(attempt {state.attempt})"
        )
    return replace(state, phase=target)


def legal_transition_triples() -> frozenset[tuple[str, str, str]]:
    """Every (from, event, to) the machine may emit; used by audits."""
    triples = {(p.value, e.value, t.value) for (p, e), t in _TABLE.items()}
    triples.add((Phase.VERIFYING.value, Event.SYMPTOMS_PERSIST.value, Phase.SELECTING.value))
    triples.add((Phase.VERIFYING.value, Event.SYMPTOMS_PERSIST.value, Phase.ESCALATED.value))
    triples.add((Phase.LOGGING.value, Event.EPISODE_LOGGED.value, Phase.LEARNING.value))
    triples.add((Phase.LOGGING.value, Event.EPISODE_LOGGED.value, Phase.IDLE.value))
    for phase in Phase:
        if phase is not Phase.ESCALATED:
            triples.add((phase.value, Event.BUDGET_EXCEEDED.value, Phase.ESCALATED.value))
    return frozenset(triples)


@dataclass
class BudgetLedger:
    compute_limit: float = COMPUTE_LIMIT
    tool_call_limit: int = TOOL_CALL_LIMIT
    units: dict[str, float] = field(default_factory=dict)
    tool_calls: int = 0

    def charge(self, component: str, amount: float) -> None:
        if amount < 0:
            raise ValueError("charges are non-negative")
        self.units[component] = self.units.get(component, 0.0) + amount

    def call_tool(self) -> None:
        self.tool_calls += 1

    @property
    def total(self) -> float:
        return sum(self.units.values())

    @property
    def exhausted(self) -> bool:
        return self.total > self.compute_limit or self.tool_calls > self.tool_call_limit

    def snapshot(self) -> dict:
        return {
            "units": {k: self.units[k] for k in sorted(self.units)},
            "total": self.total,
            "tool_calls": self.tool_calls,
            "compute_limit": self.compute_limit,
            "tool_call_limit": self.tool_call_limit,
            "exhausted": self.exhausted,
        }


@dataclass(frozen=True)
class TransitionRecord:
    tick: int
    phase_from: str
    event: str
    phase_to: str
    budget_total: float

    def to_row(self) -> list:
        return [self.tick, self.phase_from, self.event, self.phase_to, self.budget_total]


@dataclass
class LoopParams:
    vocab: tuple[str, ...] = SYMPTOM_VOCAB
    detect_window: int = DETECT_WINDOW
    noise_pct: float = NOISE_PCT
    escalation_after: int = ESCALATION_AFTER
    compute_limit: float = COMPUTE_LIMIT
    tool_call_limit: int = TOOL_CALL_LIMIT
    learning_cadence: int = LEARNING_CADENCE
    min_support: float = MIN_SUPPORT
    min_confidence: float = MIN_CONFIDENCE
    retire_confidence_floor: float = RETIRE_CONFIDENCE_FLOOR
    retire_age_episodes: int = RETIRE_AGE_EPISODES
    pack_budget: int = PACK_BUDGET
    section_caps: dict[str, int] | None = None
    episodic_k: int = EPISODIC_K
    subgraph_radius: int = SUBGRAPH_RADIUS
    verify_ticks: int = VERIFY_TICKS
    max_wait_ticks: int = 80
    buffer_capacity: int = BUFFER_CAPACITY


@dataclass
class EpisodeRun:
    episode_id: str
    episode: Episode | None
    transitions: list[TransitionRecord]
    ledger: BudgetLedger
    pack_traces: list[list[dict]]
    diagnosis: Diagnosis | None
    plan: ActionPlan | None
    action_results: list[tuple[str, ActionResult]]
    escalation_reason: str | None
    learning: DistillReport | None
    deferred_subtasks: list[IncidentDescriptor]
    final_phase: str


class _BudgetStop(Exception):
    """Internal signal: the ledger ran dry and the machine escalated."""


def decompose(descriptor: IncidentDescriptor, kg) -> list[IncidentDescriptor]:
    """Split a multi-service incident into per-service subtasks, ordered by
    dependency blast size (the service plus its transitive callers),
    largest first; ties break on service id."""
    services = list(dict.fromkeys(descriptor.affected_services or (descriptor.affected_service,)))
    if len(services) <= 1:
        return [replace(descriptor, affected_services=tuple(services) or (descriptor.affected_service,))]
    callers: dict[str, set[str]] = {}
    for t in kg.query(None, "depends_on", None):
        callers.setdefault(t.object, set()).add(t.subject)

    def blast(service: str) -> int:
        seen: set[str] = set()
        frontier = [service]
        while frontier:
            nxt = []
            for svc in frontier:
                for caller in callers.get(svc, ()):
                    if caller not in seen and caller != service:
                        seen.add(caller)
                        nxt.append(caller)
            frontier = nxt
        return 1 + len(seen)

    ordered = sorted(services, key=lambda s: (-blast(s), s))
    return [
        replace(descriptor, affected_service=s, affected_services=(s,))
        for s in ordered
    ]


class AgentLoop:
    """Drives the full closed loop against a telemetry feed and memories."""

    def __init__(self, feed: TelemetryFeed, memories: Memories, params: LoopParams):
        self.feed = feed
        self.memories = memories
        self.params = params
        self.weights: dict[str, float] = {s: 1.0 for s in SECTION_ORDER}
        self.episode_count = 0
        self.episodes_since_learning = 0
        self.learning_reports: list[DistillReport] = []

    # -- helpers ---------------------------------------------------------------

    def _to_service(self, entity: str, ledger: BudgetLedger) -> str:
        """Map an alerting entity to the service it affects, via the graph."""
        kg = self.memories.kg
        cls = kg.class_of(entity)

        def charged_query(s, p, o):
            res = kg.query(s, p, o)
            ledger.charge("memory", TARIFF_MEMORY_ITEM * max(len(res), 1))
            return res

        if cls == "Pod":
            serves = charged_query(entity, "serves", None)
            return serves[0].object if serves else entity
        if cls == "Node":
            pods = charged_query(None, "runs_on", entity)
            for t in pods:
                serves = charged_query(t.subject, "serves", None)
                if serves:
                    return serves[0].object
            return entity
        if cls == "ToRSwitch":
            racks = charged_query(None, "uplink", entity)
            for rack_t in racks:
                nodes = charged_query(None, "member_of", rack_t.subject)
                for node_t in nodes:
                    pods = charged_query(None, "runs_on", node_t.subject)
                    for pod_t in pods:
                        serves = charged_query(pod_t.subject, "serves", None)
                        if serves:
                            return serves[0].object
            return entity
        return entity

    def _stop_met(self, batch, stop) -> bool:
        attr = stop.attribute
        if not attr:
            return False
        if attr in EVENT_KINDS:
            return not any(
                rec.source == "event" and rec.attribute == attr and rec.entity in stop.entities
                for rec in batch
            )
        metric = ATTR_SOURCE[attr][1]
        band = noise_band(metric, self.params.noise_pct) + VERIFY_EPS
        baseline = BASELINES[metric]
        samples = [
            rec for rec in batch
            if rec.source == "telemetry" and rec.attribute == metric and rec.entity in stop.entities
        ]
        if not samples:
            return True  # emitters gone (e.g. decommissioned): nothing violating
        return all(abs(rec.value - baseline) <= band for rec in samples)

    # -- the loop ------------------------------------------------------------------

    def run_episode(self, episode_id: str) -> EpisodeRun:
        """Wait for the next incident, drive it to Logging or Escalated, and
        run the learning pass when the cadence is due."""
        params = self.params
        memories = self.memories
        ledger = BudgetLedger(params.compute_limit, params.tool_call_limit)
        state = OrchestratorState(
            phase=Phase.IDLE, attempt=1,
            escalation_after=params.escalation_after, learning_due=False,
        )
        transitions: list[TransitionRecord] = []

        def fire(event: Event) -> None:
            nonlocal state
            new_state = transition(state, event)
            transitions.append(TransitionRecord(
                tick=self.feed.sim.tick,
                phase_from=state.phase.value,
                event=event.value,
                phase_to=new_state.phase.value,
                budget_total=ledger.total,
            ))
            state = new_state

        def advance(event: Event) -> None:
            if ledger.exhausted:
                fire(Event.BUDGET_EXCEEDED)
                raise _BudgetStop()
            fire(event)

        run = EpisodeRun(
            episode_id=episode_id,
            episode=None,
            transitions=transitions,
            ledger=ledger,
            pack_traces=[],
            diagnosis=None,
            plan=None,
            action_results=[],
            escalation_reason=None,
            learning=None,
            deferred_subtasks=[],
            final_phase=Phase.IDLE.value,
        )

        alerts: list[Alert] = []
        resolved = False
        descriptor: IncidentDescriptor | None = None

        try:
            # Idle: watch the feed until the detector raises.
            waited = 0
            while not alerts:
                if waited >= params.max_wait_ticks:
                    raise LoopError(
                        f"no alerts within {params.max_wait_ticks} ticks; nothing to do"
                    )
                self.feed.step()
                waited += 1
                found = detect_anomalies(
                    self.feed.window(), noise_pct=params.noise_pct,
                    min_ticks=params.detect_window,
                )
                if found:
                    ledger.charge("detector", TARIFF_DETECTOR_WINDOW)
                    alerts = found
            advance(Event.ALERT_RAISED)  # Idle -> Detecting

            # Detecting: record alerts, pin down the incident descriptor.
            for alert in alerts:
                memories.buffer.push(alert, priority=alert.severity, incident=episode_id)
                ledger.charge("memory", TARIFF_MEMORY_ITEM)
            for alert in alerts:
                if alert.attribute == "node_decommissioned":
                    memories.kg.register_entity(alert.entity, "Node")
                    memories.kg.assert_triple(
                        alert.entity, "decommissioned", str(alert.tick),
                        provenance="event", tick=alert.tick,
                    )
            ordered = sorted(
                alerts,
                key=lambda a: (
                    0 if a.attribute in EVENT_KINDS else 1,
                    -a.severity, a.tick, a.entity, a.attribute,
                ),
            )
            top_alert = ordered[0]
            top_entities = sorted({a.entity for a in alerts if a.attribute == top_alert.attribute})
            services = list(dict.fromkeys(
                self._to_service(e, ledger) for e in top_entities
            ))
            descriptor = IncidentDescriptor(
                incident_id=episode_id,
                affected_service=services[0],
                affected_entity=top_alert.entity,
                symptom_attributes=frozenset(a.attribute for a in alerts),
                max_severity=max(a.severity for a in alerts),
                start_tick=min(a.tick for a in alerts),
                affected_services=tuple(services),
            )
            subtasks = decompose(descriptor, memories.kg)
            descriptor = subtasks[0]
            run.deferred_subtasks = subtasks[1:]
            advance(Event.ALERT_RAISED)  # Detecting -> Enriching

            # Enriching: assemble the pack.
            policy = BudgetPolicy(
                pack_budget=params.pack_budget,
                section_caps=dict(params.section_caps or {})
                or BudgetPolicy().section_caps,
                weights=dict(self.weights),
            )
            pack = assemble(
                descriptor, memories, policy,
                episodic_k=params.episodic_k,
                subgraph_radius=params.subgraph_radius,
                vocab=params.vocab,
            )
            run.pack_traces.append(pack.trace_dict())
            ledger.charge("ace", TARIFF_ACE_ASSEMBLY + TARIFF_ACE_ITEM * pack.included_count)
            ledger.charge("memory", TARIFF_MEMORY_ITEM * pack.memory_touched)
            advance(Event.PACK_READY)  # Enriching -> Diagnosing

            # Diagnosing.
            diag = diagnose(pack)
            run.diagnosis = diag
            ledger.charge("reasoner", TARIFF_REASONER_UNIT * diag.compute_units)
            if not diag.hypotheses:
                run.escalation_reason = "diagnosis abstained"
                advance(Event.ABSTAIN)  # Diagnosing -> Escalated
                raise _BudgetStop()  # reuse the finalize path; not a budget stop
            advance(Event.HYPOTHESES_READY)  # Diagnosing -> Selecting

            suggestions = [item.payload for item in pack.section("runbooks")]
            plan = make_plan(
                diag.hypotheses, suggestions, alerts,
                escalation_after=params.escalation_after,
            )
            run.plan = plan

            # Selecting / Executing / Verifying retry loop.
            while True:
                advance(Event.PLAN_READY)  # Selecting -> Executing
                entry = plan.entry_for_attempt(state.attempt)
                if entry is not None:
                    for action_kind, target in entry.actions:
                        result = self._execute_action(action_kind, target, ledger)
                        run.action_results.append((entry.runbook_id, result))
                advance(Event.ACTION_DONE)  # Executing -> Verifying

                cleared = False
                for _ in range(params.verify_ticks):
                    batch = self.feed.step()
                    if self._stop_met(batch, plan.stop):
                        cleared = True
                        break
                if cleared:
                    advance(Event.SYMPTOMS_CLEAR)  # Verifying -> Logging
                    resolved = True
                    break
                at_limit = state.attempt >= params.escalation_after
                advance(Event.SYMPTOMS_PERSIST)
                if at_limit:
                    run.escalation_reason = (
                        f"retries exhausted after {params.escalation_after} attempts"
                    )
                    break

        except _BudgetStop:
            if run.escalation_reason is None:
                run.escalation_reason = "budget exhausted"
        # Logging happens for every closed incident; the machine only visits
        # the Logging phase on the resolved path.
        episode = None
        if descriptor is not None:
            episode = self._log_episode(
                run, descriptor, alerts, resolved, ledger,
            )
        run.episode = episode

        if state.phase is Phase.LOGGING:
            learning_due = self.episodes_since_learning >= params.learning_cadence
            state = replace(state, learning_due=learning_due)
            try:
                advance(Event.EPISODE_LOGGED)
                if state.phase is Phase.LEARNING:
                    report = self._learn(ledger)
                    run.learning = report
                    advance(Event.LEARNING_DONE)
            except _BudgetStop:
                if run.escalation_reason is None:
                    run.escalation_reason = "budget exhausted"
        run.final_phase = state.phase.value
        return run

    # -- phase bodies -------------------------------------------------------------

    def _execute_action(self, action_kind: str, target: str, ledger: BudgetLedger) -> ActionResult:
        sim = self.feed.sim
        kg = self.memories.kg
        if (
            action_kind == ActionKind.DRAIN_NODE.value
            and target in kg.decommissioned_entities()
        ):
            # the node is already gone; draining is a bookkeeping acknowledgment
            return ActionResult(action_kind, target, sim.tick, True, "acknowledged decommission")
        ledger.call_tool()
        try:
            return sim.apply_action(action_kind, target)
        except SimError as exc:
            return ActionResult(action_kind, target, sim.tick, False, str(exc))

    def _log_episode(
        self,
        run: EpisodeRun,
        descriptor: IncidentDescriptor,
        alerts: list[Alert],
        resolved: bool,
        ledger: BudgetLedger,
    ) -> Episode:
        memories = self.memories
        params = self.params
        top = run.diagnosis.hypotheses[0] if run.diagnosis and run.diagnosis.hypotheses else None
        entities = {a.entity for a in alerts} | {descriptor.affected_service}
        if top is not None:
            entities.add(top.suspect_entity)
        end_tick = self.feed.sim.tick
        actions = tuple(
            (res.action, res.target, res.success) for _, res in run.action_results
        )
        episode = Episode(
            episode_id=run.episode_id,
            start_tick=descriptor.start_tick,
            end_tick=end_tick,
            affected_service=descriptor.affected_service,
            symptom_attributes=descriptor.symptom_attributes,
            entities=frozenset(entities),
            max_severity=descriptor.max_severity,
            root_cause_label=cause_label(top.fault_kind) if (resolved and top) else None,
            actions=actions,
            resolved=resolved,
            ticks_to_resolve=(end_tick - descriptor.start_tick) if resolved else None,
        )
        memories.episodic.insert(episode)
        ledger.charge("memory", TARIFF_MEMORY_ITEM)

        # Runbook feedback: the final attempted runbook carries the outcome,
        # earlier attempts count as failures.
        attempted = [rb_id for rb_id, _ in run.action_results]
        seen: list[str] = []
        for rb_id in attempted:
            if rb_id not in seen:
                seen.append(rb_id)
        for rb_id in seen[:-1]:
            memories.runbooks.record_outcome(rb_id, False)
        if seen:
            memories.runbooks.record_outcome(seen[-1], resolved)

        if top is not None:
            cited = {key.split(":", 1)[0] for key in top.evidence}
            self.weights = update_weights(self.weights, cited, resolved)

        memories.buffer.evict_incident(run.episode_id)

        # Conditional forgetting for decommissioned hardware.
        dead_nodes = sorted({
            a.entity for a in alerts if a.attribute == "node_decommissioned"
        })
        if dead_nodes:
            removed = memories.episodic.forget(
                ForgetCriteria(entities=frozenset(dead_nodes)), now_tick=end_tick
            )
            ledger.charge("memory", TARIFF_MEMORY_ITEM * max(removed, 1))
            lookup = {ep.episode_id: ep for ep in memories.episodic.all_episodes()}
            retire_rules(
                memories.kg,
                RetireCriteria(decommissioned_entities=frozenset(dead_nodes)),
                lookup,
                episode_count=self.episode_count + 1,
            )

        self.episode_count += 1
        self.episodes_since_learning += 1
        return episode

    def _learn(self, ledger: BudgetLedger) -> DistillReport:
        params = self.params
        memories = self.memories
        live = memories.episodic.live_episodes()
        report = distill(
            live,
            memories.kg,
            params.vocab,
            min_support=params.min_support,
            min_confidence=params.min_confidence,
            confidence_floor=params.retire_confidence_floor,
            max_age_episodes=params.retire_age_episodes,
            tick=self.feed.sim.tick,
            episode_count=self.episode_count,
        )
        ledger.charge("ill", TARIFF_ILL_CLOSURE * report.closure_calls)
        ledger.charge("memory", TARIFF_MEMORY_ITEM * len(live))
        self.learning_reports.append(report)
        self.episodes_since_learning = 0
        return report

    def active_rule_count(self) -> int:
        return len(validated_rules(self.memories.kg))
