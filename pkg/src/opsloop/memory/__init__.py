"""Four-tier agent memory: working buffer, episodic store, knowledge
graph, and procedural runbooks, bundled for the context assembler."""
from __future__ import annotations

from dataclasses import dataclass, field

from .buffer import BufferItem, ShortTermBuffer
from .episodic import (
    Episode,
    EpisodicStore,
    ForgetCriteria,
    cosine,
    embed_episode,
    embed_features,
)
from .knowledge import (
    AssertResult,
    KnowledgeGraph,
    Ontology,
    OntologyError,
    Triple,
    bootstrap_from_topology,
    default_ontology,
)
from .runbooks import Runbook, RunbookStore

__all__ = [
    "AssertResult",
    "BufferItem",
    "Episode",
    "EpisodicStore",
    "ForgetCriteria",
    "KnowledgeGraph",
    "Memories",
    "Ontology",
    "OntologyError",
    "Runbook",
    "RunbookStore",
    "ShortTermBuffer",
    "Triple",
    "bootstrap_from_topology",
    "cosine",
    "default_ontology",
    "embed_episode",
    "embed_features",
]


@dataclass
class Memories:
    """Handle bundle passed to the context assembler and the agent loop."""

    buffer: ShortTermBuffer
    episodic: EpisodicStore
    kg: KnowledgeGraph
    runbooks: RunbookStore
    blocked_policy_tags: frozenset[str] = field(default_factory=frozenset)
