"""Simulated cluster with fault injection, plus the anomaly-detection front end.

Builds a two-node topology, lets it run quietly, injects a noisy-neighbor
fault, and shows the EWMA detector turning raw telemetry into alerts. Ends
with an event-driven fault (DNS errors alert immediately) and a node
decommission (the entity disappears from the stream and refuses actions).

Run from the repository root:  python3 demos/01_cluster_and_detection.py
"""
from opsloop.cluster import (
    ClusterSim,
    DecommissionedEntityError,
    FaultScenario,
    build_topology,
    stream_lines,
)
from opsloop.ingest import TelemetryFeed, detect_anomalies

TOPOLOGY = {
    "racks": [
        {
            "id": "r1",
            "switch": "sw1",
            "nodes": [
                {
                    "id": "n1",
                    "generation": "gen-7",
                    "pods": [
                        {"id": "p-front-1", "service": "svc-front"},
                        {"id": "p-back-1", "service": "svc-back"},
                    ],
                },
                {
                    "id": "n2",
                    "generation": "gen-8",
                    "pods": [{"id": "p-back-2", "service": "svc-back"}],
                },
            ],
        }
    ],
    "dependencies": [["svc-front", "svc-back"]],
}


def banner(text: str) -> None:
    print(f"\n=== {text} " + "=" * max(0, 70 - len(text)))


def main() -> None:
    topology = build_topology(TOPOLOGY)
    banner("topology")
    print(f"pods:     {', '.join(sorted(topology.pods))}")
    print(f"nodes:    {', '.join(sorted(topology.nodes))}")
    print(f"racks:    {', '.join(sorted(topology.racks))}  "
          f"switches: {', '.join(sorted(topology.switches))}")
    print(f"services: {', '.join(sorted(topology.services))}")

    sim = ClusterSim(topology, seed=42)
    feed = TelemetryFeed(sim)

    banner("quiet baseline (5 ticks, then a noisy neighbor lands on n1)")
    sim.inject(FaultScenario(kind="noisy_neighbor", target="n1",
                             start_tick=6, duration=20, magnitude=0.7))
    seen_alerts: set[tuple[str, str]] = set()
    for _ in range(14):
        batch = feed.step()
        cpu = next(r for r in batch
                   if r.entity == "p-front-1" and r.attribute == "cpu_util")
        marker = " <- fault active" if cpu.tick >= 6 else ""
        print(f"tick {cpu.tick:>2}  p-front-1 cpu_util = {cpu.value:.3f}{marker}")
        for alert in detect_anomalies(feed.window()):
            key = (alert.entity, alert.attribute)
            if key not in seen_alerts:
                seen_alerts.add(key)
                print(f"         ALERT {alert.entity} symptom={alert.attribute} "
                      f"severity {alert.severity}")
    symptoms = sorted({attr for _, attr in seen_alerts})
    print(f"\nalerts raised: {len(seen_alerts)} across both pods of n1 "
          f"(symptoms: {', '.join(symptoms)})")

    banner("event faults alert on the very next tick")
    sim.inject(FaultScenario(kind="dns_error_burst", target="svc-back",
                             start_tick=sim.tick, duration=5, magnitude=0.8))
    feed.step()
    for alert in detect_anomalies(feed.window()):
        if alert.attribute == "dns_error":
            print(f"ALERT {alert.entity} symptom={alert.attribute} "
                  f"severity {alert.severity} (no smoothing window needed)")

    banner("decommissioning n2 removes it from the stream")
    print(f"live before: {', '.join(sim.live_entities())}")
    sim.inject(FaultScenario(kind="node_decommission", target="n2",
                             start_tick=sim.tick))
    feed.step()
    print(f"live after:  {', '.join(sim.live_entities())}")
    try:
        sim.apply_action("restart_pod", "p-back-2")
    except DecommissionedEntityError as exc:
        print(f"acting on its pod now fails: {exc}")

    banner("the wire format round-trips")
    samples, events = sim.step()
    for line in stream_lines(samples, events)[:3]:
        print(line)


if __name__ == "__main__":
    main()
