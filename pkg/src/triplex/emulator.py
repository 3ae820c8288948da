"""Replay a recorded heart signal as timed MQTT publishes.

The source file has no timestamps, so each record's t_ms is synthesized
from its sample index. Pacing uses deadline arithmetic against a fixed
origin rather than per-sample sleeps, so timing error does not accumulate
over long replays. speedup 0 is flood mode: no pacing at all, for test
runs that cover minutes of signal in well under a second.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from typing import Optional

from .hrv import InvalidSignal, read_amplitudes
from .mqtt import MqttError


class ReplayError(Exception):
    """Replay could not run or was cut short; carries the count so far."""

    def __init__(self, message: str, published_count: int = 0):
        super().__init__(message)
        self.published_count = published_count


@dataclass(frozen=True)
class ReplayConfig:
    data_path: str
    topic: str = "hr/patient1"
    sample_rate_hz: float = 100.0
    speedup: float = 1.0  # 0 means flood: publish as fast as possible
    qos: int = 1
    loop: bool = False
    start_time_ms: int = 0

    def __post_init__(self):
        if not isinstance(self.topic, str) or not self.topic:
            raise ValueError("topic must be a non-empty string")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.speedup < 0:
            raise ValueError("speedup must be zero or positive")
        if self.qos not in (0, 1):
            raise ValueError("qos must be 0 or 1")


@dataclass(frozen=True)
class ReplayReport:
    published_count: int
    duration_ms: float


def replay(cfg: ReplayConfig, publisher, stop: Optional[threading.Event] = None) -> ReplayReport:
    """Publish one sensor record per sample; returns counts and wall time.

    publisher is anything with publish(topic, payload, qos=...), normally a
    live client session. With cfg.loop the file repeats (seq and t_ms keep
    climbing) until stop is set or the connection dies.
    """
    try:
        values = read_amplitudes(cfg.data_path)
    except OSError as exc:
        raise ReplayError(f"cannot read {cfg.data_path}: {exc}") from exc
    except InvalidSignal as exc:
        raise ReplayError(str(exc)) from exc
    if not values:
        raise ReplayError(f"{cfg.data_path}: no samples")

    period_s = (1.0 / cfg.sample_rate_hz) / cfg.speedup if cfg.speedup > 0 else 0.0
    published = 0
    origin = time.perf_counter()
    while True:
        for value in values:
            if stop is not None and stop.is_set():
                return ReplayReport(published, (time.perf_counter() - origin) * 1000.0)
            if period_s:
                due = origin + published * period_s
                delay = due - time.perf_counter()
                if delay > 0:
                    time.sleep(delay)
            record = {
                "seq": published + 1,
                "t_ms": cfg.start_time_ms + round(published * 1000 / cfg.sample_rate_hz),
                "value": value,
            }
            try:
                publisher.publish(cfg.topic, json.dumps(record, separators=(",", ":")).encode(), qos=cfg.qos)
            except (MqttError, OSError) as exc:
                raise ReplayError(
                    f"lost the broker after {published} publishes: {exc}", published
                ) from exc
            published += 1
        if not cfg.loop:
            return ReplayReport(published, (time.perf_counter() - origin) * 1000.0)
