"""In-memory knowledge graph: typed triples under a fixed ontology.

Assertions are validated against relation signatures (domain and range
classes) before being stored; rejected triples never enter the graph, so
the store is sound by construction and `validate_all` re-proves it on
demand. Subgraph extraction treats triples as undirected edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field

KG_FORMAT = "opsloop-kg"
KG_VERSION = 1

LITERAL = "literal"


class OntologyError(Exception):
    pass


@dataclass(frozen=True)
class Ontology:
    classes: frozenset[str]
    relations: dict[str, tuple[str, str]]  # name -> (domain class, range class)

    def __post_init__(self):
        for name, (domain, rng) in self.relations.items():
            if domain not in self.classes:
                raise OntologyError(f"relation {name!r} names undeclared domain {domain!r}")
            if rng != LITERAL and rng not in self.classes:
                raise OntologyError(f"relation {name!r} names undeclared range {rng!r}")


def default_ontology() -> Ontology:
    return Ontology(
        classes=frozenset(
            {
                "Rack",
                "ToRSwitch",
                "Node",
                "Pod",
                "Service",
                "FaultKind",
                "Action",
                "Rule",
                "Policy",
                "AttributeSet",
            }
        ),
        relations={
            "runs_on": ("Pod", "Node"),
            "member_of": ("Node", "Rack"),
            "uplink": ("Rack", "ToRSwitch"),
            "serves": ("Pod", "Service"),
            "depends_on": ("Service", "Service"),
            "indicates": ("AttributeSet", "FaultKind"),
            "remedied_by": ("FaultKind", "Action"),
            "constrained_by": ("Service", "Policy"),
            "decommissioned": ("Node", LITERAL),
        },
    )


@dataclass(frozen=True)
class Triple:
    subject: str
    predicate: str
    object: str
    provenance: str = "manual"
    tick: int = 0

    def key(self) -> tuple[str, str, str]:
        return (self.subject, self.predicate, self.object)


@dataclass(frozen=True)
class AssertResult:
    accepted: bool
    added: bool
    reason: str | None = None


@dataclass
class KnowledgeGraph:
    ontology: Ontology
    _entities: dict[str, str] = field(default_factory=dict)
    _triples: dict[tuple[str, str, str], Triple] = field(default_factory=dict)
    rules: dict = field(default_factory=dict)  # rule_id -> lattice.Rule

    # -- entities -------------------------------------------------------------

    def register_entity(self, entity_id: str, cls: str) -> None:
        if cls not in self.ontology.classes:
            raise OntologyError(f"undeclared class {cls!r} for entity {entity_id!r}")
        existing = self._entities.get(entity_id)
        if existing is not None and existing != cls:
            raise OntologyError(
                f"entity {entity_id!r} already registered as {existing!r}, not {cls!r}"
            )
        self._entities[entity_id] = cls

    def class_of(self, entity_id: str) -> str | None:
        return self._entities.get(entity_id)

    def entities_of_class(self, cls: str) -> tuple[str, ...]:
        return tuple(sorted(e for e, c in self._entities.items() if c == cls))

    # -- triples ---------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._triples)

    def _check_signature(self, subject: str, predicate: str, obj: str) -> str | None:
        sig = self.ontology.relations.get(predicate)
        if sig is None:
            return f"unknown relation {predicate!r}"
        domain, rng = sig
        subject_cls = self._entities.get(subject)
        if subject_cls != domain:
            return (
                f"subject {subject!r} has class {subject_cls!r}, "
                f"relation {predicate!r} needs {domain!r}"
            )
        if rng == LITERAL:
            return None
        obj_cls = self._entities.get(obj)
        if obj_cls != rng:
            return (
                f"object {obj!r} has class {obj_cls!r}, "
                f"relation {predicate!r} needs {rng!r}"
            )
        return None

    def assert_triple(
        self, subject: str, predicate: str, obj: str,
        provenance: str = "manual", tick: int = 0,
    ) -> AssertResult:
        reason = self._check_signature(subject, predicate, obj)
        if reason is not None:
            return AssertResult(accepted=False, added=False, reason=reason)
        key = (subject, predicate, obj)
        if key in self._triples:
            return AssertResult(accepted=True, added=False, reason="duplicate")
        self._triples[key] = Triple(subject, predicate, obj, provenance, tick)
        return AssertResult(accepted=True, added=True)

    def query(
        self, subject: str | None, predicate: str | None, obj: str | None
    ) -> list[Triple]:
        if subject is None and predicate is None and obj is None:
            raise ValueError("query needs at least one bound position")
        out = [
            t
            for t in self._triples.values()
            if (subject is None or t.subject == subject)
            and (predicate is None or t.predicate == predicate)
            and (obj is None or t.object == obj)
        ]
        out.sort(key=lambda t: t.key())
        return out

    def subgraph(self, entity: str, radius: int) -> list[Triple]:
        """Triples incident to any entity within max(radius-1, 0) hops,
        ordered nearest-first.

        Hops count graph distance over triples read as undirected edges, so
        radius 0 returns exactly the triples touching `entity` and growing
        the radius admits the incident triples of each newly interior hop.
        Triples are ranked by the smaller hop distance of their endpoints
        (ties on the triple key), so a downstream consumer that truncates
        the list keeps the neighborhood closest to the center.
        """
        if radius < 0:
            raise ValueError("radius must be >= 0")
        adjacency: dict[str, set[str]] = {}
        incident: dict[str, list[Triple]] = {}
        for t in self._triples.values():
            adjacency.setdefault(t.subject, set()).add(t.object)
            adjacency.setdefault(t.object, set()).add(t.subject)
            incident.setdefault(t.subject, []).append(t)
            incident.setdefault(t.object, []).append(t)
        if entity not in adjacency:
            return []
        limit = max(radius - 1, 0)
        dist = {entity: 0}
        frontier = [entity]
        for depth in range(1, limit + 1):
            nxt = []
            for v in frontier:
                for w in adjacency[v]:
                    if w not in dist:
                        dist[w] = depth
                        nxt.append(w)
            frontier = nxt
        seen: dict[tuple[str, str, str], Triple] = {}
        for v in dist:
            for t in incident.get(v, ()):
                seen[t.key()] = t
        far = limit + 1

        def rank(t: Triple) -> tuple[int, tuple[str, str, str]]:
            return (min(dist.get(t.subject, far), dist.get(t.object, far)), t.key())

        return sorted(seen.values(), key=rank)

    def distances_from(self, entity: str, max_hops: int) -> dict[str, int]:
        """Undirected BFS distances over the stored triples, cut at max_hops."""
        adjacency: dict[str, set[str]] = {}
        for t in self._triples.values():
            adjacency.setdefault(t.subject, set()).add(t.object)
            adjacency.setdefault(t.object, set()).add(t.subject)
        dist = {entity: 0}
        frontier = [entity]
        depth = 0
        while frontier and depth < max_hops:
            depth += 1
            nxt = []
            for v in frontier:
                for w in adjacency.get(v, ()):
                    if w not in dist:
                        dist[w] = depth
                        nxt.append(w)
            frontier = nxt
        return dist

    # -- decommissioning -------------------------------------------------------

    def decommissioned_entities(self) -> frozenset[str]:
        return frozenset(t.subject for t in self.query(None, "decommissioned", None))

    # -- audit -------------------------------------------------------------------

    def validate_all(self) -> list[str]:
        violations = []
        for t in self._triples.values():
            reason = self._check_signature(t.subject, t.predicate, t.object)
            if reason is not None:
                violations.append(f"{t.key()}: {reason}")
        return sorted(violations)

    def export_tsv(self) -> list[str]:
        lines = [f"# {KG_FORMAT} v{KG_VERSION}"]
        for key in sorted(self._triples):
            t = self._triples[key]
            lines.append(f"{t.subject}\t{t.predicate}\t{t.object}\t{t.provenance}")
        return lines


def bootstrap_from_topology(kg: KnowledgeGraph, topology, tick: int = 0) -> None:
    """Seed the graph with the static fleet layout and the closed enums.

    Fault-to-remedy links are deliberately absent: those are learned."""
    from ..config import ActionKind, FaultKind

    for rack in topology.racks:
        kg.register_entity(rack, "Rack")
    for switch in topology.switches:
        kg.register_entity(switch, "ToRSwitch")
    for node in topology.nodes:
        kg.register_entity(node, "Node")
    for pod in topology.pods:
        kg.register_entity(pod, "Pod")
    for service in topology.services:
        kg.register_entity(service, "Service")
    for kind in FaultKind:
        kg.register_entity(kind.value, "FaultKind")
    for action in ActionKind:
        kg.register_entity(action.value, "Action")
    for rack, switch in sorted(topology.switch_of_rack.items()):
        kg.assert_triple(rack, "uplink", switch, provenance="bootstrap", tick=tick)
    for node, rack in sorted(topology.rack_of_node.items()):
        kg.assert_triple(node, "member_of", rack, provenance="bootstrap", tick=tick)
    for pod, node in sorted(topology.node_of_pod.items()):
        kg.assert_triple(pod, "runs_on", node, provenance="bootstrap", tick=tick)
    for pod, service in sorted(topology.service_of_pod.items()):
        kg.assert_triple(pod, "serves", service, provenance="bootstrap", tick=tick)
    for caller, callee in sorted(topology.dependencies):
        kg.assert_triple(caller, "depends_on", callee, provenance="bootstrap", tick=tick)
