"""Shared fixtures: a small three-rack topology and config paths."""
from __future__ import annotations

import json
from pathlib import Path

import pytest

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def small_topology_spec() -> dict:
    """Three racks, six nodes, twelve pods, four services in a call chain
    (checkout -> payments -> ledger -> dns)."""
    return json.loads((CONFIG_DIR / "recurring_dns.json").read_text())["topology"]


def tiny_topology_spec() -> dict:
    """One rack, two nodes, three pods, two services (front -> back)."""
    return {
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


@pytest.fixture
def small_topology():
    from opsloop.cluster import build_topology

    return build_topology(small_topology_spec())


@pytest.fixture
def tiny_topology():
    from opsloop.cluster import build_topology

    return build_topology(tiny_topology_spec())


@pytest.fixture
def dns_config_path() -> Path:
    return CONFIG_DIR / "recurring_dns.json"


@pytest.fixture
def forgetting_config_path() -> Path:
    return CONFIG_DIR / "decommission_forgetting.json"


@pytest.fixture
def mixed_config_path() -> Path:
    return CONFIG_DIR / "mixed_faults.json"
