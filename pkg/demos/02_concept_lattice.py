"""Concept lattice over incident history, and rule mining from its intents.

Starts from a small incident-by-symptom table, enumerates every formal
concept in lectic order, walks through the closure operator and the
derivation (prime) maps, takes a meet and a join, and finally mines
implication rules with support and confidence read off the concept extents.

Run from the repository root:  python3 demos/02_concept_lattice.py
"""
from opsloop.lattice import FormalContext, lattice_leq, mine_rules

INCIDENTS = ["inc-1", "inc-2", "inc-3", "inc-4", "inc-5"]
ATTRIBUTES = [
    "cpu_high",
    "disk_high",
    "latency_high",
    "cause_noisy_neighbor",
    "resolved_by_throttle_tenant",
]
ROWS = {
    "inc-1": {"cpu_high", "disk_high", "cause_noisy_neighbor",
              "resolved_by_throttle_tenant"},
    "inc-2": {"cpu_high", "disk_high", "cause_noisy_neighbor",
              "resolved_by_throttle_tenant"},
    "inc-3": {"cpu_high", "latency_high"},
    "inc-4": {"cpu_high", "disk_high", "cause_noisy_neighbor",
              "resolved_by_throttle_tenant"},
    "inc-5": {"latency_high"},
}


def fmt(s) -> str:
    return "{" + ", ".join(sorted(s)) + "}" if s else "{}"


def banner(text: str) -> None:
    print(f"\n=== {text} " + "=" * max(0, 70 - len(text)))


def main() -> None:
    incidence = [(o, a) for o in INCIDENTS for a in ROWS[o] if a in ATTRIBUTES]
    ctx = FormalContext(INCIDENTS, ATTRIBUTES, incidence)

    banner("the incident/symptom table")
    header = " " * 8 + "".join(f"{a[:12]:>14}" for a in ATTRIBUTES)
    print(header)
    for o in INCIDENTS:
        print(f"{o:<8}" + "".join(f"{'x' if a in ROWS[o] else '.':>14}"
                                  for a in ATTRIBUTES))

    banner("derivation maps are a Galois connection")
    a_set = frozenset({"cpu_high", "disk_high"})
    shared_by = ctx.extent_of(a_set)
    print(f"incidents showing {fmt(a_set)}: {fmt(shared_by)}")
    print(f"everything those incidents share: {fmt(ctx.intent_of(shared_by))}")
    print(f"closure({fmt(a_set)}) = {fmt(ctx.closure(a_set))}")
    print("-> closing the pair pulled in the cause and the fix: within this")
    print("   history, cpu+disk never occur without them")

    banner("every concept, in lectic order")
    concepts = ctx.concepts()
    for i, c in enumerate(concepts):
        print(f"{i:>2}: extent={fmt(c.extent):<34} intent={fmt(c.intent)}")

    banner("meet and join of two concepts")
    cpu = next(c for c in concepts if c.intent == frozenset({"cpu_high"}))
    lat = next(c for c in concepts if c.intent == frozenset({"latency_high"}))
    meet = ctx.meet(cpu, lat)
    join = ctx.join(cpu, lat)
    print(f"a = {fmt(cpu.extent)} (cpu_high incidents)")
    print(f"b = {fmt(lat.extent)} (latency_high incidents)")
    print(f"a meet b: extent={fmt(meet.extent)} intent={fmt(meet.intent)}")
    print(f"a join b: extent={fmt(join.extent)} intent={fmt(join.intent)}")
    print(f"meet <= a <= join: "
          f"{lattice_leq(meet, cpu) and lattice_leq(cpu, join)}")

    banner("rules mined from the closed intents")
    for rule in mine_rules(ctx, min_support=0.2, min_confidence=0.7):
        print(f"{fmt(rule.antecedent)} => {fmt(rule.consequent)}")
        print(f"    support {rule.support:.2f} confidence {rule.confidence:.2f} "
              f"evidence {list(rule.provenance)}")
    print("\nthe cpu+disk pattern is supported by 3 of 5 incidents and never")
    print("contradicted, so it mines at confidence 1.0; latency alone never")
    print("co-occurs with a recorded cause, so no rule claims one for it")


if __name__ == "__main__":
    main()
