"""Telemetry normalization and windowed anomaly detection.

Raw simulator output (metric samples and discrete events) is normalized
into a single record shape, then a sliding window is scored with an
exponentially weighted moving average per (entity, metric) series. The
detector is a pure function of the window: re-scoring the same window
yields the same alerts.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

from .cluster import RawEvent, TelemetrySample
from .config import (
    ANOMALY_ATTR,
    BASELINES,
    CLASSIFICATION,
    DETECT_K,
    DETECT_WINDOW,
    EVENT_SEVERITY,
    EVIDENCE_FLOOR_SIGMA,
    EWMA_ALPHA,
    SEVERITY_BUCKETS,
    category_of_attribute,
    metric_sigma,
)


@dataclass(frozen=True)
class UnifiedRecord:
    """One normalized observation: a metric sample, an event, or an alert."""

    tick: int
    entity: str
    source: str  # "telemetry" | "event" | "alert"
    category: str
    attribute: str
    value: float | None
    severity: int


@dataclass(frozen=True)
class Alert:
    tick: int
    entity: str
    attribute: str
    severity: int
    evidence: tuple[UnifiedRecord, ...]

    def to_record(self) -> UnifiedRecord:
        return UnifiedRecord(
            tick=self.tick,
            entity=self.entity,
            source="alert",
            category=category_of_attribute(self.attribute).value,
            attribute=self.attribute,
            value=None,
            severity=self.severity,
        )


def normalize(raw: TelemetrySample | RawEvent) -> UnifiedRecord:
    """Map a raw simulator row to the unified shape.

    Telemetry keeps its metric name as the attribute at severity 0; events
    keep their kind and carry the fixed per-kind severity. Feeding an
    already-normalized record back in is an error, as is an unknown metric
    or event kind.
    """
    if isinstance(raw, UnifiedRecord):
        raise TypeError("record is already normalized")
    if isinstance(raw, TelemetrySample):
        if raw.metric not in BASELINES:
            raise ValueError(f"unknown metric: {raw.metric!r}")
        return UnifiedRecord(
            tick=raw.tick,
            entity=raw.entity,
            source="telemetry",
            category=CLASSIFICATION[raw.metric].value,
            attribute=raw.metric,
            value=float(raw.value),
            severity=0,
        )
    if isinstance(raw, RawEvent):
        if raw.kind not in EVENT_SEVERITY:
            raise ValueError(f"unknown event kind: {raw.kind!r}")
        return UnifiedRecord(
            tick=raw.tick,
            entity=raw.entity,
            source="event",
            category=CLASSIFICATION[raw.kind].value,
            attribute=raw.kind,
            value=None,
            severity=EVENT_SEVERITY[raw.kind],
        )
    raise TypeError(f"cannot normalize {type(raw).__name__}")


def record_to_json(record: UnifiedRecord) -> str:
    return json.dumps(
        {
            "tick": record.tick,
            "entity": record.entity,
            "source": record.source,
            "category": record.category,
            "attribute": record.attribute,
            "value": record.value,
            "severity": record.severity,
        },
        sort_keys=True,
        separators=(",", ":"),
    )


def _severity_from_sigma(deviation: float, sigma: float) -> int:
    if sigma == 0.0:
        return 3 if deviation > 0.0 else 0
    lo, mid, hi = SEVERITY_BUCKETS
    ratio = deviation / sigma
    if ratio > hi:
        return 3
    if ratio > mid:
        return 2
    if ratio > lo:
        return 1
    return 0


def detect_anomalies(
    window: list[UnifiedRecord],
    *,
    alpha: float = EWMA_ALPHA,
    k: float = DETECT_K,
    min_ticks: int = DETECT_WINDOW,
    noise_pct: float | None = None,
) -> list[Alert]:
    """Score a sliding window and return alerts, sorted by (entity, attribute).

    Metric series need at least `min_ticks` distinct ticks; the EWMA starts
    at the metric baseline and an alert fires when the smoothed value ends
    the window more than k sigma away from baseline. Severity escalates at
    the 3/5/8 sigma buckets. Events with nonzero severity alert directly.
    Every alert cites the window records that support it.
    """
    series: dict[tuple[str, str], list[UnifiedRecord]] = {}
    event_groups: dict[tuple[str, str], list[UnifiedRecord]] = {}
    for rec in window:
        if rec.source == "telemetry":
            series.setdefault((rec.entity, rec.attribute), []).append(rec)
        elif rec.source == "event" and rec.severity > 0:
            event_groups.setdefault((rec.entity, rec.attribute), []).append(rec)

    alerts: list[Alert] = []
    for (entity, metric), recs in series.items():
        recs = sorted(recs, key=lambda r: r.tick)
        if len({r.tick for r in recs}) < min_ticks:
            continue
        baseline = BASELINES[metric]
        sigma = metric_sigma(metric) if noise_pct is None else (
            noise_pct * baseline / (3.0 ** 0.5)
        )
        ewma = baseline
        for rec in recs:
            ewma = alpha * rec.value + (1.0 - alpha) * ewma
        deviation = abs(ewma - baseline)
        threshold = k * sigma
        fired = deviation > threshold if sigma > 0.0 else deviation > 0.0
        if not fired:
            continue
        floor = EVIDENCE_FLOOR_SIGMA * sigma
        evidence = tuple(r for r in recs if abs(r.value - baseline) > floor)
        if not evidence:  # the extreme sample always clears the floor
            evidence = (max(recs, key=lambda r: abs(r.value - baseline)),)
        alerts.append(
            Alert(
                tick=recs[-1].tick,
                entity=entity,
                attribute=ANOMALY_ATTR[metric],
                severity=_severity_from_sigma(deviation, sigma),
                evidence=evidence,
            )
        )

    for (entity, attribute), recs in event_groups.items():
        recs = sorted(recs, key=lambda r: r.tick)
        alerts.append(
            Alert(
                tick=recs[-1].tick,
                entity=entity,
                attribute=attribute,
                severity=max(r.severity for r in recs),
                evidence=tuple(recs),
            )
        )

    alerts.sort(key=lambda a: (a.entity, a.attribute))
    return alerts


class TelemetryFeed:
    """Owns the sim-stepping loop and the sliding normalization window."""

    def __init__(self, sim, window_ticks: int = DETECT_WINDOW):
        self.sim = sim
        self.window_ticks = window_ticks
        self._per_tick: list[list[UnifiedRecord]] = []

    def step(self) -> list[UnifiedRecord]:
        samples, events = self.sim.step()
        batch = [normalize(s) for s in samples] + [normalize(e) for e in events]
        self._per_tick.append(batch)
        if len(self._per_tick) > self.window_ticks:
            self._per_tick = self._per_tick[-self.window_ticks:]
        return batch

    def window(self) -> list[UnifiedRecord]:
        return [rec for batch in self._per_tick for rec in batch]

    def latest(self) -> list[UnifiedRecord]:
        return list(self._per_tick[-1]) if self._per_tick else []
