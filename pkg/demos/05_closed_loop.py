"""The full loop on a recurring fault: the same DNS burst hits twenty times,
the learner distills a rule after the fifth episode, and later diagnoses
take the cheap rule path instead of walking the topology graph.

Run from the repository root:  python3 demos/05_closed_loop.py
"""
import json
import tempfile
from pathlib import Path

from opsloop.runner import load_config, run

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "recurring_dns.json"


def banner(text: str) -> None:
    print(f"\n=== {text} " + "=" * max(0, 70 - len(text)))


def main() -> None:
    config = load_config(CONFIG)
    print(f"running {config.episodes} scripted episodes "
          f"(seed {config.seed}, learning every "
          f"{config.params.learning_cadence} episodes)")
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "run"
        report = run(config, out)

        banner("per-episode cost and outcome")
        print(f"{'episode':<9} {'path':<14} {'reasoner':>8} {'attempts':>8} "
              f"{'ticks':>6}  {'verdict'}")
        for row in report.rows:
            verdict = "correct" if row["correct"] else "WRONG"
            if not row["resolved"]:
                verdict += ", escalated"
            print(f"{row['episode_id']:<9} {row['path']:<14} "
                  f"{row['compute'].get('reasoner', 0.0):>8.1f} "
                  f"{row['attempts']:>8} {row['ticks_to_resolve']:>6}  {verdict}")

        first = [r["compute"].get("reasoner", 0.0) for r in report.rows[:5]]
        last = [r["compute"].get("reasoner", 0.0) for r in report.rows[15:]]
        banner("what the learner bought")
        print(f"mean reasoner units, episodes  1-5:  {sum(first) / 5:.2f} "
              f"(graph walk on every diagnosis)")
        print(f"mean reasoner units, episodes 16-20: {sum(last) / 5:.2f} "
              f"(rule lookup short-circuits the walk)")
        print(f"cost ratio: {(sum(last) / 5) / (sum(first) / 5):.3f}")

        banner("rules the run distilled")
        for line in (out / "rules.jsonl").read_text().splitlines():
            rule = json.loads(line)
            print(f"{rule['rule_id']}")
            print(f"    status {rule['status']}, support {rule['support']:.2f}, "
                  f"confidence {rule['confidence']:.2f}, "
                  f"evidence {len(rule['provenance'])} episodes")

        banner("artifacts written")
        for p in sorted(out.iterdir()):
            print(f"  {p.name}")
        print("\nsame config + same seed reproduces every file byte for byte")


if __name__ == "__main__":
    main()
