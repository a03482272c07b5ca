"""Deterministic tick-based cluster simulator with fault injection.

The simulated fleet is a small rack/node/pod/service topology. Each tick
every live node, pod, and service emits the six standard metrics at its
baseline plus uniform +/-2% sampling noise; active faults add deterministic
offsets to the entities in their blast set and may emit discrete events.
All randomness comes from numpy Generators keyed on (seed, stream, tick),
so two simulators built from the same topology and seed produce identical
streams sample for sample.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .config import BASELINES, HEADROOM, METRICS, NOISE_PCT, REMEDY, ActionKind, FaultKind

SIM_STREAM = 0


class SimError(Exception):
    """Base class for simulator errors."""


class TopologyError(SimError):
    pass


class UnknownEntityError(SimError):
    pass


class DecommissionedEntityError(SimError):
    pass


class ScenarioError(SimError):
    pass


@dataclass(frozen=True)
class TelemetrySample:
    tick: int
    entity: str
    metric: str
    value: float


@dataclass(frozen=True)
class RawEvent:
    tick: int
    entity: str
    kind: str
    attributes: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class ActionResult:
    action: str
    target: str
    tick: int
    success: bool
    detail: str


@dataclass(frozen=True)
class FaultScenario:
    """A scripted fault: what, where, when, how hard.

    duration=None means persistent (node_decommission is always persistent).
    magnitude in (0, 1] scales the per-metric headroom offsets.
    """

    kind: FaultKind
    target: str
    start_tick: int
    duration: int | None = None
    magnitude: float = 0.5


@dataclass
class ClusterTopology:
    """Static shape of the fleet plus service dependency edges."""

    racks: tuple[str, ...]
    switch_of_rack: dict[str, str]
    rack_of_node: dict[str, str]
    generation_of_node: dict[str, str]
    node_of_pod: dict[str, str]
    service_of_pod: dict[str, str]
    dependencies: tuple[tuple[str, str], ...]  # (caller, callee)

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(sorted(self.rack_of_node))

    @property
    def pods(self) -> tuple[str, ...]:
        return tuple(sorted(self.node_of_pod))

    @property
    def services(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.service_of_pod.values())))

    @property
    def switches(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.switch_of_rack.values())))

    def pods_of_service(self, service: str) -> tuple[str, ...]:
        return tuple(sorted(p for p, s in self.service_of_pod.items() if s == service))

    def pods_on_node(self, node: str) -> tuple[str, ...]:
        return tuple(sorted(p for p, n in self.node_of_pod.items() if n == node))

    def pods_behind_switch(self, switch: str) -> tuple[str, ...]:
        racks = {r for r, s in self.switch_of_rack.items() if s == switch}
        nodes = {n for n, r in self.rack_of_node.items() if r in racks}
        return tuple(sorted(p for p, n in self.node_of_pod.items() if n in nodes))

    def callers_of(self, service: str) -> tuple[str, ...]:
        """Transitive callers: services whose traffic flows into `service`."""
        reverse: dict[str, set[str]] = {}
        for caller, callee in self.dependencies:
            reverse.setdefault(callee, set()).add(caller)
        seen: set[str] = set()
        frontier = [service]
        while frontier:
            nxt: list[str] = []
            for svc in frontier:
                for caller in reverse.get(svc, ()):
                    if caller not in seen and caller != service:
                        seen.add(caller)
                        nxt.append(caller)
            frontier = nxt
        return tuple(sorted(seen))

    def entity_class(self, entity: str) -> str | None:
        if entity in self.rack_of_node:
            return "Node"
        if entity in self.node_of_pod:
            return "Pod"
        if entity in set(self.service_of_pod.values()):
            return "Service"
        if entity in self.switch_of_rack.values():
            return "ToRSwitch"
        if entity in self.racks:
            return "Rack"
        return None

    def emitting_entities(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.nodes) | set(self.pods) | set(self.services)))


def build_topology(spec: dict) -> ClusterTopology:
    """Construct and validate a topology from its dict description.

    Expected shape::

        {"racks": [{"id", "switch", "nodes": [{"id", "generation",
                    "pods": [{"id", "service"}, ...]}, ...]}, ...],
         "dependencies": [["caller_svc", "callee_svc"], ...]}
    """
    if not isinstance(spec, dict) or "racks" not in spec:
        raise TopologyError("topology spec must be a dict with a 'racks' list")
    racks: list[str] = []
    switch_of_rack: dict[str, str] = {}
    rack_of_node: dict[str, str] = {}
    generation: dict[str, str] = {}
    node_of_pod: dict[str, str] = {}
    service_of_pod: dict[str, str] = {}
    seen_ids: set[str] = set()

    def claim(entity_id: str, what: str) -> str:
        if not entity_id or not isinstance(entity_id, str):
            raise TopologyError(f"{what} id must be a non-empty string")
        if entity_id in seen_ids:
            raise TopologyError(f"duplicate entity id: {entity_id!r}")
        seen_ids.add(entity_id)
        return entity_id

    for rack in spec["racks"]:
        rack_id = claim(rack["id"], "rack")
        racks.append(rack_id)
        switch_of_rack[rack_id] = rack["switch"]
        for node in rack.get("nodes", ()):
            node_id = claim(node["id"], "node")
            rack_of_node[node_id] = rack_id
            generation[node_id] = str(node.get("generation", "gen-unknown"))
            for pod in node.get("pods", ()):
                pod_id = claim(pod["id"], "pod")
                node_of_pod[pod_id] = node_id
                service_of_pod[pod_id] = pod["service"]
    for switch in set(switch_of_rack.values()):
        if switch in seen_ids:
            raise TopologyError(f"switch id collides with another entity: {switch!r}")
    services = set(service_of_pod.values())
    if services & seen_ids:
        raise TopologyError("service ids must not collide with infrastructure ids")
    deps: list[tuple[str, str]] = []
    for edge in spec.get("dependencies", ()):
        caller, callee = edge
        if caller not in services or callee not in services:
            raise TopologyError(f"dependency references unknown service: {edge!r}")
        if caller == callee:
            raise TopologyError(f"self-dependency not allowed: {edge!r}")
        deps.append((caller, callee))
    if not rack_of_node or not node_of_pod:
        raise TopologyError("topology needs at least one node and one pod")
    return ClusterTopology(
        racks=tuple(racks),
        switch_of_rack=switch_of_rack,
        rack_of_node=rack_of_node,
        generation_of_node=generation,
        node_of_pod=node_of_pod,
        service_of_pod=service_of_pod,
        dependencies=tuple(deps),
    )


_FAULT_TARGET_CLASS = {
    FaultKind.DNS_ERROR_BURST: "Service",
    FaultKind.TOR_PACKET_LOSS: "ToRSwitch",
    FaultKind.INGRESS_THROTTLE: "Service",
    FaultKind.NOISY_NEIGHBOR: "Node",
    FaultKind.NODE_DECOMMISSION: "Node",
}


@dataclass
class _ActiveFault:
    scenario: FaultScenario
    cleared_at: int | None = None
    decommission_done: bool = False
    # entity -> metric -> offset, fixed at injection time
    offsets: dict[str, dict[str, float]] = field(default_factory=dict)
    event_emitters: tuple[str, ...] = ()

    def contributes_at(self, tick: int) -> bool:
        scen = self.scenario
        if tick < scen.start_tick:
            return False
        if self.cleared_at is not None and tick >= self.cleared_at:
            return False
        if scen.duration is not None and tick >= scen.start_tick + scen.duration:
            return False
        return True


class ClusterSim:
    """Discrete-tick simulator. step() emits one tick of telemetry + events."""

    def __init__(self, topology: ClusterTopology, seed: int, noise_pct: float = NOISE_PCT):
        self.topology = topology
        self._seed = int(seed)
        self._noise_pct = float(noise_pct)
        self._tick = 0
        self._faults: list[_ActiveFault] = []
        self._removed: set[str] = set()
        # Noise is drawn over the full static entity list every tick so that
        # removing an entity never shifts another entity's stream.
        self._noise_order = topology.emitting_entities()
        self._all_entities = set(self._noise_order) | set(topology.switches) | set(topology.racks)

    @property
    def tick(self) -> int:
        return self._tick

    def live_entities(self) -> tuple[str, ...]:
        return tuple(e for e in self._noise_order if e not in self._removed)

    def is_removed(self, entity: str) -> bool:
        return entity in self._removed

    def clone(self) -> "ClusterSim":
        return copy.deepcopy(self)

    # -- fault scripting ----------------------------------------------------

    def inject(self, scenario: FaultScenario) -> None:
        kind = FaultKind(scenario.kind)
        want = _FAULT_TARGET_CLASS[kind]
        have = self.topology.entity_class(scenario.target)
        if have is None:
            raise UnknownEntityError(f"fault target does not exist: {scenario.target!r}")
        if have != want:
            raise ScenarioError(
                f"{kind.value} targets a {want}, got {have} {scenario.target!r}"
            )
        if scenario.start_tick < self._tick:
            raise ScenarioError(
                f"fault start {scenario.start_tick} is in the past (tick {self._tick})"
            )
        if kind is not FaultKind.NODE_DECOMMISSION:
            if scenario.duration is None or scenario.duration <= 0:
                raise ScenarioError(f"{kind.value} needs a positive duration")
            if not 0.0 < scenario.magnitude <= 1.0:
                raise ScenarioError("fault magnitude must be in (0, 1]")
        fault = _ActiveFault(scenario=scenario)
        fault.offsets, fault.event_emitters = self._blast(scenario)
        self._faults.append(fault)

    def _blast(self, scen: FaultScenario) -> tuple[dict[str, dict[str, float]], tuple[str, ...]]:
        """Resolve the scenario's blast set into per-entity metric offsets."""
        kind = FaultKind(scen.kind)
        mag = scen.magnitude
        offsets: dict[str, dict[str, float]] = {}

        def add(entity: str, metric: str) -> None:
            offsets.setdefault(entity, {})[metric] = (
                offsets.get(entity, {}).get(metric, 0.0) + mag * HEADROOM[metric]
            )

        if kind is FaultKind.DNS_ERROR_BURST:
            for svc in self.topology.callers_of(scen.target):
                add(svc, "net_latency_ms")
            return offsets, (scen.target,)
        if kind is FaultKind.TOR_PACKET_LOSS:
            for pod in self.topology.pods_behind_switch(scen.target):
                add(pod, "packet_loss_rate")
                add(pod, "net_latency_ms")
            return offsets, ()
        if kind is FaultKind.INGRESS_THROTTLE:
            add(scen.target, "net_latency_ms")
            return offsets, ()
        if kind is FaultKind.NOISY_NEIGHBOR:
            for pod in self.topology.pods_on_node(scen.target):
                add(pod, "cpu_util")
                add(pod, "disk_io")
            return offsets, ()
        return {}, ()  # node_decommission: events only

    # -- time ----------------------------------------------------------------

    def step(self) -> tuple[list[TelemetrySample], list[RawEvent]]:
        tick = self._tick
        events: list[RawEvent] = []

        for fault in self._faults:
            scen = fault.scenario
            if (
                FaultKind(scen.kind) is FaultKind.NODE_DECOMMISSION
                and not fault.decommission_done
                and tick >= scen.start_tick
            ):
                fault.decommission_done = True
                if scen.target not in self._removed:
                    gen = self.topology.generation_of_node.get(scen.target, "gen-unknown")
                    events.append(
                        RawEvent(tick, scen.target, "node_decommissioned", (("generation", gen),))
                    )
                    self._removed.add(scen.target)
                    self._removed.update(self.topology.pods_on_node(scen.target))

        offsets: dict[tuple[str, str], float] = {}
        for fault in self._faults:
            if not fault.contributes_at(tick):
                continue
            for entity, per_metric in fault.offsets.items():
                if entity in self._removed:
                    continue
                for metric, off in per_metric.items():
                    offsets[(entity, metric)] = offsets.get((entity, metric), 0.0) + off
            for emitter in fault.event_emitters:
                if emitter not in self._removed:
                    events.append(RawEvent(tick, emitter, "dns_error", (("scope", emitter),)))

        rng = np.random.default_rng((self._seed, SIM_STREAM, tick))
        noise = rng.uniform(-1.0, 1.0, size=(len(self._noise_order), len(METRICS)))
        samples: list[TelemetrySample] = []
        for i, entity in enumerate(self._noise_order):
            if entity in self._removed:
                continue
            for j, metric in enumerate(METRICS):
                base = BASELINES[metric]
                value = base + offsets.get((entity, metric), 0.0) + noise[i, j] * self._noise_pct * base
                samples.append(TelemetrySample(tick, entity, metric, _clamp(metric, value)))
        self._tick = tick + 1
        return samples, events

    # -- actions ---------------------------------------------------------------

    def apply_action(self, kind: ActionKind | str, target: str) -> ActionResult:
        action = ActionKind(kind)
        if target not in self._all_entities:
            raise UnknownEntityError(f"action target does not exist: {target!r}")
        if target in self._removed:
            raise DecommissionedEntityError(
                f"action {action.value} targets decommissioned entity {target!r}"
            )
        cleared = []
        for fault in self._faults:
            scen = fault.scenario
            if fault.cleared_at is not None:
                continue
            if scen.start_tick > self._tick:
                continue  # not started yet
            if scen.duration is not None and self._tick >= scen.start_tick + scen.duration:
                continue  # already expired on its own
            if REMEDY[FaultKind(scen.kind)] is action and scen.target == target:
                fault.cleared_at = self._tick
                cleared.append(FaultKind(scen.kind).value)
        if cleared:
            return ActionResult(action.value, target, self._tick, True, "cleared " + ", ".join(cleared))
        return ActionResult(action.value, target, self._tick, False, "no matching active fault")

    def fault_cleared(self, scenario: FaultScenario) -> bool:
        for fault in self._faults:
            if fault.scenario == scenario:
                return fault.cleared_at is not None
        return False


def _clamp(metric: str, value: float) -> float:
    if metric in ("cpu_util", "mem_util", "disk_io", "packet_loss_rate"):
        return min(1.0, max(0.0, value))
    return max(0.0, value)


# -- stream serialization -----------------------------------------------------


def stream_lines(samples: list[TelemetrySample], events: list[RawEvent]) -> list[str]:
    """Serialize one tick of output as JSONL (telemetry rows, then events)."""
    lines = []
    for s in samples:
        lines.append(json.dumps(
            {"tick": s.tick, "entity": s.entity, "metric": s.metric, "value": s.value},
            sort_keys=True, separators=(",", ":"),
        ))
    for e in events:
        lines.append(json.dumps(
            {"tick": e.tick, "entity": e.entity, "event": e.kind, "attributes": dict(e.attributes)},
            sort_keys=True, separators=(",", ":"),
        ))
    return lines


def parse_stream_line(line: str) -> TelemetrySample | RawEvent:
    row = json.loads(line)
    if "metric" in row:
        return TelemetrySample(row["tick"], row["entity"], row["metric"], row["value"])
    if "event" in row:
        attrs = tuple(sorted((str(k), str(v)) for k, v in row.get("attributes", {}).items()))
        return RawEvent(row["tick"], row["entity"], row["event"], attrs)
    raise ValueError(f"not a stream row: {line!r}")
