"""Scripted end-to-end runs: config in, deterministic artifact files out.

A run config pins the topology, the fault script, seed runbooks, policies,
and loop parameters. `run` drives the agent loop over the scripted
episodes and writes report.jsonl, episodes.jsonl, transitions.log, kg.tsv,
episodic.jsonl, rules.jsonl, and one mining-context CSV per learning pass.
Identical configs produce byte-identical files.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .cluster import ClusterSim, ClusterTopology, FaultScenario, build_topology
from .config import BUFFER_CAPACITY, FaultKind
from .ingest import TelemetryFeed
from .lattice import rules_jsonl
from .memory import (
    EpisodicStore,
    KnowledgeGraph,
    Memories,
    Runbook,
    RunbookStore,
    ShortTermBuffer,
    bootstrap_from_topology,
    default_ontology,
)
from .orchestrator import AgentLoop, EpisodeRun, LoopParams

EPISODES_FORMAT = "opsloop-episodes"
EPISODES_VERSION = 1


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ScenarioTemplate:
    kind: FaultKind
    target: str
    magnitude: float = 0.5
    duration: int = 12
    lead: int = 2


@dataclass
class RunConfig:
    seed: int
    episodes: int
    topology: dict
    scenario: list[ScenarioTemplate] = field(default_factory=list)
    seed_runbooks: list[dict] = field(default_factory=list)
    policies: list[dict] = field(default_factory=list)
    blocked_policy_tags: frozenset[str] = frozenset()
    params: LoopParams = field(default_factory=LoopParams)


_PARAM_FIELDS = {f.name for f in dataclasses.fields(LoopParams)}


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("run config must be a JSON object")
    try:
        seed = int(raw["seed"])
        episodes = int(raw.get("episodes", 0))
        topology_spec = raw["topology"]
    except KeyError as exc:
        raise ConfigError(f"missing required config key: {exc}") from None
    if episodes < 0:
        raise ConfigError("episodes must be >= 0")
    try:
        topology = build_topology(topology_spec)
    except Exception as exc:
        raise ConfigError(f"bad topology: {exc}") from None

    scenario: list[ScenarioTemplate] = []
    for i, row in enumerate(raw.get("scenario", [])):
        try:
            tmpl = ScenarioTemplate(
                kind=FaultKind(row["kind"]),
                target=row["target"],
                magnitude=float(row.get("magnitude", 0.5)),
                duration=int(row.get("duration", 12)),
                lead=int(row.get("lead", 2)),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"scenario[{i}] invalid: {exc}") from None
        if topology.entity_class(tmpl.target) is None:
            raise ConfigError(f"scenario[{i}] targets unknown entity {tmpl.target!r}")
        if tmpl.lead < 1:
            raise ConfigError(f"scenario[{i}] lead must be >= 1")
        scenario.append(tmpl)
    if episodes > 0 and not scenario:
        raise ConfigError("episodes > 0 needs a non-empty scenario")

    params_raw = raw.get("params", {})
    unknown = set(params_raw) - _PARAM_FIELDS
    if unknown:
        raise ConfigError(f"unknown params keys: {sorted(unknown)}")
    params = LoopParams(**params_raw)

    for i, rb in enumerate(raw.get("seed_runbooks", [])):
        for key in ("id", "trigger", "steps"):
            if key not in rb:
                raise ConfigError(f"seed_runbooks[{i}] missing {key!r}")
    return RunConfig(
        seed=seed,
        episodes=episodes,
        topology=topology_spec,
        scenario=scenario,
        seed_runbooks=list(raw.get("seed_runbooks", [])),
        policies=list(raw.get("policies", [])),
        blocked_policy_tags=frozenset(raw.get("blocked_policy_tags", [])),
        params=params,
    )


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(raw)


@dataclass
class RunReport:
    rows: list[dict]
    aggregates: dict
    out_dir: Path
    episode_runs: list[EpisodeRun]
    kg_lines: list[str]


def _build_memories(config: RunConfig, topology: ClusterTopology) -> Memories:
    kg = KnowledgeGraph(ontology=default_ontology())
    bootstrap_from_topology(kg, topology)
    runbooks = RunbookStore()
    for rb in config.seed_runbooks:
        runbooks.add(Runbook(
            runbook_id=rb["id"],
            trigger=frozenset(rb["trigger"]),
            steps=tuple(rb["steps"]),
            policy_tags=frozenset(rb.get("policy_tags", [])),
        ))
    for pol in config.policies:
        kg.register_entity(pol["id"], "Policy")
        for svc in pol.get("applies_to", []):
            result = kg.assert_triple(svc, "constrained_by", pol["id"], provenance="config")
            if not result.accepted:
                raise ConfigError(f"policy {pol['id']!r}: {result.reason}")
    return Memories(
        buffer=ShortTermBuffer(config.params.buffer_capacity or BUFFER_CAPACITY),
        episodic=EpisodicStore(),
        kg=kg,
        runbooks=runbooks,
        blocked_policy_tags=config.blocked_policy_tags,
    )


def _drain(feed: TelemetryFeed, scenario: FaultScenario | None, window: int) -> None:
    """Step past any remaining fault activity, then flush the window clean."""
    sim = feed.sim
    if scenario is not None and scenario.duration is not None:
        end = scenario.start_tick + scenario.duration
        if not sim.fault_cleared(scenario):
            while sim.tick < end:
                feed.step()
    for _ in range(window + 1):
        feed.step()


def _row_for(run: EpisodeRun, scenario: FaultScenario | None, rules_active: int) -> dict:
    top_kind = None
    top_entity = None
    path = "abstain"
    if run.diagnosis is not None:
        path = run.diagnosis.path
        if run.diagnosis.hypotheses:
            top_kind = run.diagnosis.hypotheses[0].fault_kind.value
            top_entity = run.diagnosis.hypotheses[0].suspect_entity
    correct = (
        scenario is not None
        and top_kind == FaultKind(scenario.kind).value
        and top_entity == scenario.target
    )
    episode = run.episode
    attempts = sum(1 for t in run.transitions if t.event == "plan_ready")
    compute = run.ledger.snapshot()
    return {
        "episode_id": run.episode_id,
        "fault_kind": FaultKind(scenario.kind).value if scenario else None,
        "fault_target": scenario.target if scenario else None,
        "top1_kind": top_kind,
        "top1_entity": top_entity,
        "correct": bool(correct),
        "resolved": bool(episode.resolved) if episode else False,
        "ticks_to_resolve": episode.ticks_to_resolve if episode else None,
        "start_tick": episode.start_tick if episode else None,
        "end_tick": episode.end_tick if episode else None,
        "attempts": attempts,
        "path": path,
        "escalation_reason": run.escalation_reason,
        "compute": compute["units"],
        "compute_total": compute["total"],
        "tool_calls": compute["tool_calls"],
        "rules_active": rules_active,
        "final_phase": run.final_phase,
    }


def compute_aggregates(rows: list[dict]) -> dict:
    """Run-level summary, derivable from the rows alone."""
    n = len(rows)
    if n == 0:
        return {
            "episodes": 0,
            "resolved": 0,
            "escalated": 0,
            "top1_accuracy": None,
            "compute_total": {},
            "segments": {},
        }
    resolved = sum(1 for r in rows if r["resolved"])
    with_fault = [r for r in rows if r["fault_kind"] is not None]
    accuracy = (
        sum(1 for r in with_fault if r["correct"]) / len(with_fault) if with_fault else None
    )
    totals: dict[str, float] = {}
    for r in rows:
        for component, units in r["compute"].items():
            totals[component] = totals.get(component, 0.0) + units

    def segment(rows_part: list[dict]) -> dict:
        ticks = [r["ticks_to_resolve"] for r in rows_part if r["ticks_to_resolve"] is not None]
        part_fault = [r for r in rows_part if r["fault_kind"] is not None]
        return {
            "episodes": [r["episode_id"] for r in rows_part],
            "mean_ticks_to_resolve": (sum(ticks) / len(ticks)) if ticks else None,
            "top1_accuracy": (
                sum(1 for r in part_fault if r["correct"]) / len(part_fault)
                if part_fault else None
            ),
            "reasoner_units": sum(r["compute"].get("reasoner", 0.0) for r in rows_part),
        }

    third = max(n // 3, 1)
    return {
        "episodes": n,
        "resolved": resolved,
        "escalated": n - resolved,
        "top1_accuracy": accuracy,
        "compute_total": {k: totals[k] for k in sorted(totals)},
        "segments": {
            "first": segment(rows[:third]),
            "middle": segment(rows[third:n - third] if n > 2 * third else []),
            "last": segment(rows[n - third:] if n > third else []),
        },
    }


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _episode_record(run: EpisodeRun, scenario: FaultScenario | None, row: dict) -> dict:
    return {
        "row": row,
        "scenario": (
            {
                "kind": FaultKind(scenario.kind).value,
                "target": scenario.target,
                "start_tick": scenario.start_tick,
                "duration": scenario.duration,
                "magnitude": scenario.magnitude,
            }
            if scenario else None
        ),
        "episode": run.episode.to_dict() if run.episode else None,
        "transitions": [t.to_row() for t in run.transitions],
        "hypotheses": (
            [h.to_dict() for h in run.diagnosis.hypotheses] if run.diagnosis else []
        ),
        "diagnosis_path": run.diagnosis.path if run.diagnosis else None,
        "plan": run.plan.to_dict() if run.plan else None,
        "action_results": [
            {
                "runbook_id": rb_id,
                "action": res.action,
                "target": res.target,
                "tick": res.tick,
                "success": res.success,
                "detail": res.detail,
            }
            for rb_id, res in run.action_results
        ],
        "pack_traces": run.pack_traces,
        "ledger": run.ledger.snapshot(),
        "deferred_subtasks": [d.to_dict() for d in run.deferred_subtasks],
    }


def run(config: RunConfig, out_dir: str | Path) -> RunReport:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    topology = build_topology(config.topology)
    sim = ClusterSim(topology, seed=config.seed, noise_pct=config.params.noise_pct)
    memories = _build_memories(config, topology)
    feed = TelemetryFeed(sim, window_ticks=config.params.detect_window)
    loop = AgentLoop(feed, memories, config.params)

    for _ in range(config.params.detect_window + 1):
        feed.step()

    rows: list[dict] = []
    runs: list[EpisodeRun] = []
    records: list[dict] = []
    for i in range(config.episodes):
        episode_id = f"ep-{i + 1:04d}"
        scenario = None
        if config.scenario:
            tmpl = config.scenario[i % len(config.scenario)]
            scenario = FaultScenario(
                kind=tmpl.kind,
                target=tmpl.target,
                start_tick=sim.tick + tmpl.lead,
                duration=None if tmpl.kind is FaultKind.NODE_DECOMMISSION else tmpl.duration,
                magnitude=tmpl.magnitude,
            )
            sim.inject(scenario)
        episode_run = loop.run_episode(episode_id)
        runs.append(episode_run)
        row = _row_for(episode_run, scenario, loop.active_rule_count())
        rows.append(row)
        records.append(_episode_record(episode_run, scenario, row))
        _drain(feed, scenario, config.params.detect_window)

    aggregates = compute_aggregates(rows)
    aggregates["rules_validated"] = loop.active_rule_count()
    aggregates["rules_retired"] = sum(
        1 for r in memories.kg.rules.values() if r.status == "retired"
    )
    aggregates["rules_mined_total"] = sum(
        len(rep.mined) for rep in loop.learning_reports
    )

    report_lines = [_dump(r) for r in rows] + [_dump({"aggregates": aggregates})]
    (out / "report.jsonl").write_text("\n".join(report_lines) + "\n")

    episode_lines = [_dump({"format": EPISODES_FORMAT, "version": EPISODES_VERSION})]
    episode_lines += [_dump(rec) for rec in records]
    (out / "episodes.jsonl").write_text("\n".join(episode_lines) + "\n")

    transition_lines = []
    for episode_run in runs:
        for t in episode_run.transitions:
            transition_lines.append(
                f"{episode_run.episode_id}\t{t.tick}\t{t.phase_from}\t{t.event}"
                f"\t{t.phase_to}\t{t.budget_total:.4f}"
            )
    (out / "transitions.log").write_text("\n".join(transition_lines) + "\n")

    kg_lines = memories.kg.export_tsv()
    (out / "kg.tsv").write_text("\n".join(kg_lines) + "\n")
    (out / "episodic.jsonl").write_text("\n".join(memories.episodic.export_jsonl()) + "\n")
    (out / "rules.jsonl").write_text("\n".join(rules_jsonl(memories.kg)) + "\n")
    for i, report in enumerate(loop.learning_reports):
        (out / f"context_{i + 1:03d}.csv").write_text(report.context.to_csv())

    return RunReport(
        rows=rows, aggregates=aggregates, out_dir=out, episode_runs=runs, kg_lines=kg_lines,
    )


def export_kg(config: RunConfig, out_path: str | Path) -> Path:
    """Re-run the config deterministically and write only the final graph."""
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        report = run(config, tmp)
        target = Path(out_path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text("\n".join(report.kg_lines) + "\n")
    return Path(out_path)


def replay(episodes_path: str | Path, episode_id: str) -> str:
    """Reconstruct a human-readable transcript for one recorded episode."""
    p = Path(episodes_path)
    if not p.is_file():
        raise ConfigError(f"episodes file not found: {p}")
    lines = p.read_text().splitlines()
    if not lines:
        raise ConfigError(f"episodes file is empty: {p}")
    header = json.loads(lines[0])
    if header.get("format") != EPISODES_FORMAT:
        raise ConfigError(f"not an episodes file: {p}")
    record = None
    for line in lines[1:]:
        rec = json.loads(line)
        if rec["row"]["episode_id"] == episode_id:
            record = rec
            break
    if record is None:
        raise KeyError(f"episode {episode_id!r} not found in {p}")

    row = record["row"]
    out = [f"episode {episode_id}"]
    scen = record.get("scenario")
    if scen:
        dur = scen["duration"] if scen["duration"] is not None else "persistent"
        out.append(
            f"fault: {scen['kind']} @ {scen['target']} "
            f"(magnitude {scen['magnitude']}, start {scen['start_tick']}, duration {dur})"
        )
    out.append("transitions:")
    for tick, frm, event, to, total in record["transitions"]:
        out.append(f"  tick {tick:>5}  {frm:<10} --{event}--> {to}  (budget {total:.2f})")
    out.append(f"diagnosis ({record['diagnosis_path']}):")
    for i, h in enumerate(record["hypotheses"], 1):
        via = f" via {h['via_rule']}" if h["via_rule"] else ""
        out.append(
            f"  {i}. {h['fault_kind']} @ {h['suspect_entity']} "
            f"score={h['score']:.3f}{via}"
        )
        out.append(f"     evidence: {', '.join(h['evidence'])}")
    plan = record.get("plan")
    if plan:
        for entry in plan["entries"]:
            steps = "; ".join(f"{a} @ {t}" for a, t in entry["actions"])
            out.append(f"plan [{entry['runbook_id']}]: {steps}")
        out.append(
            f"stop condition: {plan['stop_attribute']} clear on "
            f"{', '.join(plan['stop_entities'])}"
        )
    if record["action_results"]:
        out.append("actions:")
        for res in record["action_results"]:
            status = "success" if res["success"] else "failed"
            out.append(
                f"  [{res['runbook_id']}] {res['action']} @ {res['target']} "
                f"tick {res['tick']} -> {status} ({res['detail']})"
            )
    if row["resolved"]:
        out.append(
            f"outcome: resolved in {row['ticks_to_resolve']} ticks; "
            f"compute {row['compute_total']:.2f} units, {row['tool_calls']} tool calls"
        )
    else:
        out.append(
            f"outcome: escalated ({row['escalation_reason']}); "
            f"compute {row['compute_total']:.2f} units, {row['tool_calls']} tool calls"
        )
    return "\n".join(out) + "\n"
