"""Budgeted context assembly: packing the four memory tiers into a bounded
briefing for the diagnoser, with a full audit trail of what was left out.

Run from the repository root:  python3 demos/04_context_assembly.py
"""
from opsloop.cluster import build_topology
from opsloop.contextpack import (
    BudgetPolicy,
    IncidentDescriptor,
    assemble,
    update_weights,
)
from opsloop.lattice import Rule, inject_rules
from opsloop.memory import (
    Episode,
    EpisodicStore,
    KnowledgeGraph,
    Memories,
    Runbook,
    RunbookStore,
    ShortTermBuffer,
    bootstrap_from_topology,
    default_ontology,
)

TOPOLOGY = {
    "racks": [
        {
            "id": "r1",
            "switch": "sw1",
            "nodes": [
                {"id": "n1", "generation": "gen-7",
                 "pods": [{"id": "p1", "service": "svc-a"},
                          {"id": "p2", "service": "svc-b"}]},
            ],
        }
    ],
    "dependencies": [["svc-a", "svc-b"]],
}


def banner(text: str) -> None:
    print(f"\n=== {text} " + "=" * max(0, 70 - len(text)))


def build_memories() -> Memories:
    kg = KnowledgeGraph(ontology=default_ontology())
    bootstrap_from_topology(kg, build_topology(TOPOLOGY))
    inject_rules(
        [Rule(antecedent=frozenset({"cpu_high", "disk_high"}),
              consequent=frozenset({"cause_noisy_neighbor",
                                    "resolved_by_throttle_tenant"}),
              support=0.6, confidence=1.0, checked=True)],
        kg, tick=90, episode_count=6,
    )
    episodic = EpisodicStore()
    for eid, symptoms, start, end in [
        ("ep-010", {"cpu_high", "disk_high"}, 10, 40),
        ("ep-011", {"cpu_high", "disk_high"}, 50, 80),
        ("ep-012", {"latency_high"}, 60, 70),
    ]:
        episodic.insert(Episode(
            episode_id=eid, start_tick=start, end_tick=end,
            affected_service="svc-a", symptom_attributes=frozenset(symptoms),
            entities=frozenset({"p1"}), max_severity=2,
            root_cause_label=None, actions=(), resolved=True,
            ticks_to_resolve=end - start, feature_vector=None))
    runbooks = RunbookStore()
    runbooks.add(Runbook("rb-throttle", frozenset({"cpu_high"}),
                         ("throttle_tenant",)))
    runbooks.add(Runbook("rb-evict", frozenset({"cpu_high"}),
                         ("cordon_node",), policy_tags=frozenset({"disruptive"})))
    buffer = ShortTermBuffer(capacity=8)
    buffer.push("cpu alert on p1", priority=3, incident="inc-42")
    buffer.push("disk alert on p1", priority=3, incident="inc-42")
    return Memories(buffer=buffer, episodic=episodic, kg=kg, runbooks=runbooks,
                    blocked_policy_tags=frozenset({"disruptive"}))


def show(pack) -> None:
    print(f"total cost {pack.total_cost} / budget {pack.budget}")
    for entry in pack.trace:
        mark = "+" if entry.included else "-"
        why = "" if entry.included else f"  ({entry.reason})"
        print(f" {mark} [{entry.section:<11}] cost {entry.cost:>2}  "
              f"{entry.key}{why}")


def main() -> None:
    memories = build_memories()
    query = IncidentDescriptor(
        incident_id="inc-42", affected_service="svc-a", affected_entity="p1",
        symptom_attributes=frozenset({"cpu_high", "disk_high"}),
        max_severity=2, start_tick=100,
    )

    banner("a comfortable budget includes every relevant candidate")
    pack = assemble(query, memories, BudgetPolicy(pack_budget=40))
    show(pack)
    print("note: rb-evict never appears — its policy tag is blocked")

    banner("a tight budget keeps the earlier sections and truncates the rest")
    tight = assemble(query, memories, BudgetPolicy(pack_budget=9))
    show(tight)
    small = [t.key for t in tight.trace if t.included]
    big = [t.key for t in pack.trace if t.included]
    print(f"included keys form a prefix of the bigger pack: "
          f"{small == big[:len(small)]}")

    banner("feedback shifts section weights for the next assembly")
    weights = dict(BudgetPolicy().weights)
    after_win = update_weights(weights, cited_sections={"rules"}, success=True)
    after_loss = update_weights(after_win, cited_sections={"kg_subgraph"},
                                success=False)
    for section in ("rules", "kg_subgraph", "episodic"):
        print(f"  {section}: {weights[section]} -> {after_loss[section]}")
    print("cited sections move by 0.1 per outcome, clamped to [0.5, 2.0];")
    print("the weight scales that section's item cap on the next assembly")


if __name__ == "__main__":
    main()
