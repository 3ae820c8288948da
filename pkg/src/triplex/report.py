"""Metrics report records: one JSON object per line, one line per tick.

Every pipeline writes the same schema, so comparing two runs is a
streaming diff over these lines.
"""

from __future__ import annotations

import json

from .hrv import AnalysisConfig, HrvMetrics

METRIC_FIELDS = (
    "bpm",
    "ibi_ms",
    "sdnn_ms",
    "sdsd_ms",
    "rmssd_ms",
    "pnn20",
    "pnn50",
    "mad_ms",
    "beat_count",
    "window_span_ms",
)


def metrics_to_dict(m: HrvMetrics) -> dict:
    return {name: getattr(m, name) for name in METRIC_FIELDS}


def flags_for(bpm: float, cfg: AnalysisConfig) -> list:
    """Abnormality flags; empty exactly when bpm sits inside the bounds."""
    flags = []
    if bpm < cfg.min_bpm:
        flags.append("bpm_below_min")
    if bpm > cfg.max_bpm:
        flags.append("bpm_above_max")
    return flags


def make_report(m: HrvMetrics, mode: str, ts_ms: int, cfg: AnalysisConfig) -> dict:
    return report_from_metric_dict(metrics_to_dict(m), mode, ts_ms, cfg)


def report_from_metric_dict(metrics: dict, mode: str, ts_ms: int, cfg: AnalysisConfig) -> dict:
    record = {"ts_ms": ts_ms, "mode": mode}
    record.update((name, metrics.get(name)) for name in METRIC_FIELDS)
    record["flags"] = flags_for(record["bpm"], cfg)
    return record


def format_line(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"))


def read_report(path) -> list:
    """All records of a report file, in file order."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


class ReportWriter:
    """Append-mode report sink; also keeps the records for inspection."""

    def __init__(self, path=None):
        self.path = path
        self.records = []
        self._fh = open(path, "a", encoding="utf-8") if path else None

    def __call__(self, record: dict):
        self.records.append(record)
        if self._fh is not None:
            self._fh.write(format_line(record) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None
