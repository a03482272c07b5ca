"""Procedural memory: runbooks ranked by smoothed success rate."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Runbook:
    runbook_id: str
    trigger: frozenset[str]  # symptom attributes that make it applicable
    steps: tuple[str, ...]  # ordered action kinds
    policy_tags: frozenset[str] = frozenset()
    success_count: int = 0
    attempt_count: int = 0

    @property
    def smoothed_rate(self) -> float:
        # Laplace (1, 2): unproven runbooks sit at 0.5, between winners and losers
        return (self.success_count + 1) / (self.attempt_count + 2)


class RunbookStore:
    def __init__(self):
        self._runbooks: dict[str, Runbook] = {}

    def __len__(self) -> int:
        return len(self._runbooks)

    def add(self, runbook: Runbook) -> None:
        if runbook.runbook_id in self._runbooks:
            raise ValueError(f"duplicate runbook id: {runbook.runbook_id!r}")
        if not runbook.steps:
            raise ValueError(f"runbook {runbook.runbook_id!r} has no steps")
        self._runbooks[runbook.runbook_id] = runbook

    def get(self, runbook_id: str) -> Runbook:
        return self._runbooks[runbook_id]

    def all_runbooks(self) -> list[Runbook]:
        return [self._runbooks[k] for k in sorted(self._runbooks)]

    def suggest(
        self, symptoms: frozenset[str] | set[str], blocked_tags: frozenset[str] = frozenset()
    ) -> list[Runbook]:
        """Applicable runbooks (trigger subset of symptoms, no blocked tag),
        best smoothed rate first; ties prefer the more-attempted, then id."""
        candidates = [
            rb
            for rb in self._runbooks.values()
            if rb.trigger <= set(symptoms) and not (rb.policy_tags & blocked_tags)
        ]
        candidates.sort(key=lambda rb: (-rb.smoothed_rate, -rb.attempt_count, rb.runbook_id))
        return candidates

    def record_outcome(self, runbook_id: str, success: bool) -> None:
        rb = self._runbooks[runbook_id]
        rb.attempt_count += 1
        if success:
            rb.success_count += 1
