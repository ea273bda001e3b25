"""Run counters and their CSV projection.

All counters are cumulative within a run and only ever move up, so a
per-tick snapshot table is monotone column-wise and byte-stable for a
fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields


@dataclass
class Metrics:
    messages: int = 0
    validations: int = 0
    validation_work: int = 0
    stores: int = 0
    backup_transfers: int = 0
    rejections: int = 0
    news_claims: int = 0
    blacklist_events: int = 0
    attacks_attempted: int = 0
    attacks_detected: int = 0
    attacks_missed: int = 0
    accesses_granted: int = 0
    accesses_denied: int = 0
    fuel_txs: int = 0
    conservation_violations: int = 0

    def snapshot(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


METRIC_COLUMNS = [f.name for f in fields(Metrics)]
CSV_HEADER = "tick," + ",".join(METRIC_COLUMNS)


@dataclass
class MetricsLog:
    """Per-tick cumulative snapshots, rendered as CSV."""

    rows: list[dict[str, int]] = field(default_factory=list)

    def record(self, tick: int, metrics: Metrics) -> None:
        row = {"tick": tick}
        row.update(metrics.snapshot())
        self.rows.append(row)

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for row in self.rows:
            lines.append(",".join(str(row[c]) for c in ["tick"] + METRIC_COLUMNS))
        return "\n".join(lines) + "\n"
