"""Scenario reports and their JSON-lines / CSV serialisation."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

SOURCES = ("ST", "AT", "RP_GUIDED", "TAGGED", "STRIDE")
VERDICTS = ("SUCCESS", "DEFEATED", "WRONG")
TABLES = ("latency", "prefetch", "protected", "summary")


@dataclass
class ScenarioReport:
    name: str = ""
    per_index_latency: list[float] = field(default_factory=list)
    verdict_rates: dict[str, float] = field(default_factory=dict)
    # source -> per-bucket accepted prefetch counts
    prefetch_counts: dict[str, list[int]] = field(default_factory=dict)
    protected_buffer_timeline: list[float] = field(default_factory=list)
    demand_miss_count: int = 0
    total_miss_latency: int = 0
    ipc_proxy: float = 0.0
    trials: int = 0
    bucket_cycles: int = 1000
    params: dict[str, str] = field(default_factory=dict)
    # per-trial extras kept for analysis; not serialised
    extras: dict = field(default_factory=dict, repr=False, compare=False)

    def prefetch_totals(self) -> dict[str, int]:
        return {s: sum(v) for s, v in self.prefetch_counts.items()}

    def summary_row(self) -> dict:
        row = {"name": self.name, **self.params, "trials": self.trials}
        for v in VERDICTS:
            if v in self.verdict_rates:
                row[f"rate_{v.lower()}"] = _f(self.verdict_rates[v])
        for s, n in self.prefetch_totals().items():
            row[f"prefetch_{s.lower()}"] = n
        row["demand_miss_count"] = self.demand_miss_count
        row["total_miss_latency"] = self.total_miss_latency
        row["ipc_proxy"] = _f(self.ipc_proxy)
        return row


def _f(x: float) -> str:
    return f"{x:.6f}"


def _table_rows(report: ScenarioReport, table: str) -> tuple[list[str], list[list]]:
    if table == "latency":
        return ["index", "mean_latency_cycles"], [[i, _f(v)] for i, v in enumerate(report.per_index_latency)]
    if table == "prefetch":
        rows = []
        n = max((len(v) for v in report.prefetch_counts.values()), default=0)
        for b in range(n):
            for s, counts in report.prefetch_counts.items():
                rows.append([b, b * report.bucket_cycles, s, counts[b] if b < len(counts) else 0])
        return ["bucket", "start_cycle", "source", "count"], rows
    if table == "protected":
        return ["bucket", "start_cycle", "protected_buffers"], [
            [b, b * report.bucket_cycles, _f(v)] for b, v in enumerate(report.protected_buffer_timeline)
        ]
    if table == "summary":
        row = report.summary_row()
        return list(row), [list(row.values())]
    raise ValueError(f"unknown table {table!r}; choose from {TABLES}")


def emit_csv(report: ScenarioReport, table: str = "latency") -> bytes:
    header, rows = _table_rows(report, table)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode()


def emit_jsonl(report: ScenarioReport) -> bytes:
    lines = [{"record": "summary", **report.summary_row()}]
    for table in ("latency", "prefetch", "protected"):
        header, rows = _table_rows(report, table)
        for r in rows:
            lines.append({"record": table, **dict(zip(header, r))})
    return "".join(json.dumps(obj, separators=(",", ":")) + "\n" for obj in lines).encode()


def emit_report(report: ScenarioReport, fmt: str = "JSON_LINES", table: str = "latency") -> bytes:
    """Serialise ``report``; CSV emits one table (``latency`` by default)."""
    fmt = fmt.upper().replace("-", "_")
    if fmt in ("JSON_LINES", "JSONL"):
        return emit_jsonl(report)
    if fmt == "CSV":
        return emit_csv(report, table)
    raise ValueError(f"unknown report format {fmt!r}")


def emit_rows_csv(rows: list[dict]) -> bytes:
    """Several summary rows (e.g. a parameter sweep) as one CSV table."""
    if not rows:
        return b""
    header: list[str] = []
    for r in rows:
        for k in r:
            if k not in header:
                header.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue().encode()
