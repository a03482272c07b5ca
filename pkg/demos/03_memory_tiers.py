"""The four memory tiers: working buffer, episodic store, knowledge graph,
and runbook library — each with its own retention and retrieval policy.

Run from the repository root:  python3 demos/03_memory_tiers.py
"""
from opsloop.cluster import build_topology
from opsloop.memory import (
    Episode,
    EpisodicStore,
    ForgetCriteria,
    KnowledgeGraph,
    Runbook,
    RunbookStore,
    ShortTermBuffer,
    bootstrap_from_topology,
    default_ontology,
)
from opsloop.memory.episodic import embed_features

TOPOLOGY = {
    "racks": [
        {
            "id": "r1",
            "switch": "sw1",
            "nodes": [
                {"id": "n1", "generation": "gen-7",
                 "pods": [{"id": "p1", "service": "svc-a"}]},
                {"id": "n2", "generation": "gen-8",
                 "pods": [{"id": "p2", "service": "svc-b"}]},
            ],
        }
    ],
    "dependencies": [["svc-a", "svc-b"]],
}


def banner(text: str) -> None:
    print(f"\n=== {text} " + "=" * max(0, 70 - len(text)))


def episode(eid, symptoms, start, end, severity, cause=None):
    return Episode(
        episode_id=eid, start_tick=start, end_tick=end,
        affected_service="svc-a", symptom_attributes=frozenset(symptoms),
        entities=frozenset({"p1", "n1"}), max_severity=severity,
        root_cause_label=cause, actions=(), resolved=True,
        ticks_to_resolve=end - start, feature_vector=None,
    )


def main() -> None:
    banner("tier 1: bounded working buffer (evicts lowest priority first)")
    buffer = ShortTermBuffer(capacity=4)
    for text, prio in [("baseline ok", 1), ("cpu alert p1", 3),
                       ("disk alert p1", 3), ("retry scheduled", 2),
                       ("cpu alert confirmed", 3), ("plan chosen", 2)]:
        buffer.push(text, priority=prio, incident="inc-7")
    print("pushed 6 items into capacity 4; kept (oldest evicted on ties):")
    for item in buffer.snapshot("inc-7"):
        print(f"  prio {item.priority}: {item.payload}")

    banner("tier 2: episodic store (exact cosine ranking, newest wins ties)")
    store = EpisodicStore()
    store.insert(episode("ep-001", {"cpu_high", "disk_high"}, 10, 40, 2,
                         "cause_noisy_neighbor"))
    store.insert(episode("ep-002", {"dns_error", "latency_high"}, 50, 70, 3,
                         "cause_dns_error_burst"))
    store.insert(episode("ep-003", {"cpu_high", "disk_high"}, 80, 110, 2,
                         "cause_noisy_neighbor"))
    store.insert(episode("ep-004", {"latency_high"}, 120, 130, 1))
    query = embed_features({"cpu_high", "disk_high"}, duration=30, max_severity=2)
    print("query: cpu_high+disk_high, 30 ticks, severity 2")
    for ep, score in store.search(query, k=4):
        print(f"  {ep.episode_id}  score {score:.3f}  cause={ep.root_cause_label}")
    print("ep-003 outranks its twin ep-001 on recency alone")

    hit = store.forget(ForgetCriteria(ttl_ticks=60), now_tick=130)
    print(f"forget(ttl 60 @ tick 130) tombstoned {hit} episode(s); "
          f"{store.live_count()} live of {len(store)} (tombstones stay auditable)")

    banner("tier 3: knowledge graph (ontology rejects malformed facts)")
    kg = KnowledgeGraph(ontology=default_ontology())
    bootstrap_from_topology(kg, build_topology(TOPOLOGY))
    print(f"bootstrapped {len(kg)} triples from the topology")
    for s, p, o in [("p1", "runs_on", "n1"),       # duplicate of bootstrap
                    ("n1", "runs_on", "p1"),       # wrong direction
                    ("p1", "serves", "n2"),        # object is not a Service
                    ("p1", "parent_of", "n1")]:    # unknown relation
        res = kg.assert_triple(s, p, o)
        verdict = "accepted" if res.accepted else "rejected"
        print(f"  ({s}, {p}, {o}) -> {verdict}: {res.reason}")
    print("neighborhood of p1 (radius 2, nearest first):")
    for t in kg.subgraph("p1", radius=2):
        print(f"  {t.subject} -{t.predicate}-> {t.object}")
    print(f"validate_all() -> {kg.validate_all()} (no orphan endpoints)")

    banner("tier 4: runbooks (ranked by smoothed success rate)")
    books = RunbookStore()
    books.add(Runbook("rb-throttle", frozenset({"cpu_high", "disk_high"}),
                      ("throttle_tenant",)))
    books.add(Runbook("rb-restart", frozenset({"cpu_high"}), ("restart_pod",)))
    for _ in range(3):
        books.record_outcome("rb-restart", success=False)
    books.record_outcome("rb-throttle", success=True)
    print("after rb-restart fails 3x and rb-throttle succeeds once:")
    for rb in books.suggest(frozenset({"cpu_high", "disk_high"})):
        print(f"  {rb.runbook_id}: smoothed rate {rb.smoothed_rate:.2f} "
              f"({rb.success_count}/{rb.attempt_count})")
    print("both still match the symptoms; the evidence reordered them")


if __name__ == "__main__":
    main()
