"""Wiring for full runs: broker, pipeline, replay, drain, final report.

Every mode follows the same script. Start an embedded broker, build the
pipeline (direct calls, a flow graph, or the function host), wait until
its subscription is live, flood or pace the data file through a publisher
session, wait until every published seq has landed in the window, then
force one last analysis so each run ends with a report over its final
window. Shutdown is ordered: sources first, then the pipeline, then the
broker.

All three pipelines share the storage dedup rule and the analysis chain,
so their final windows and final metrics must agree; compare_modes runs
them back to back and says so, or names the first field that drifted.
"""

from __future__ import annotations

import json
import math
import time
import uuid
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional

from . import hrv
from .config import MODES, ConfigError, RunConfig
from .emulator import ReplayConfig, replay
from .faas import FunctionHost, bind_mqtt_trigger, make_envelope, register_builtins
from .flow import FlowRuntime, parse_flow, run_flow
from .monolith import SensorIngestor, WindowAnalyzer, WindowGateway
from .mqtt import BrokerConfig, broker_start, client_connect
from .report import METRIC_FIELDS, make_report, report_from_metric_dict
from .store import DocStore

DEFAULT_FLOW = "health_monitor.json"


@dataclass
class RunResult:
    mode: str
    reports: list
    published: int
    stored: int
    total_inserted: int
    seq_range: Optional[tuple]
    wall_ms: float
    counts: dict

    @property
    def final_metrics(self) -> Optional[dict]:
        """Metric fields of the last report, or None if nothing was analyzable."""
        if not self.reports:
            return None
        last = self.reports[-1]
        return {name: last[name] for name in METRIC_FIELDS}


def _now_ms() -> int:
    return int(time.time() * 1000)


def load_samples(cfg: RunConfig) -> list:
    """Pre-read the data file; any defect is a configuration problem."""
    if cfg.data is None:
        raise ConfigError("no data file configured (--data or the config file)")
    try:
        return hrv.read_amplitudes(cfg.data)
    except OSError as exc:
        raise ConfigError(f"cannot read data file {cfg.data}: {exc}") from exc
    except hrv.InvalidSignal as exc:
        raise ConfigError(str(exc)) from exc


def shipped_flow_text(name: str = DEFAULT_FLOW) -> str:
    return resources.files("triplex").joinpath("flows").joinpath(name).read_text("utf-8")


def graph_for_run(cfg: RunConfig):
    """The flow to run, with every mqtt-in node retargeted at cfg.topic."""
    if cfg.flow_file:
        try:
            with open(cfg.flow_file, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read flow file {cfg.flow_file}: {exc}") from exc
    else:
        text = shipped_flow_text()
    parse_flow(text)  # reject malformed input before we start editing it
    doc = json.loads(text)
    for node in doc["nodes"]:
        if node["type"] == "mqtt-in":
            node["config"]["topic"] = cfg.topic
    return parse_flow(json.dumps(doc))


def _wait_for(pred: Callable[[], bool], timeout_s: float, interval_s: float = 0.02) -> bool:
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        if pred():
            return True
        time.sleep(interval_s)
    return pred()


def _replay_into(address, cfg: RunConfig) -> int:
    with client_connect(address, client_id=f"replay-{uuid.uuid4().hex[:8]}", keep_alive_s=30) as pub:
        report = replay(
            ReplayConfig(
                cfg.data,
                topic=cfg.topic,
                sample_rate_hz=cfg.rate,
                speedup=cfg.speedup,
                qos=1,
            ),
            pub,
        )
    return report.published_count


def _no_rejection_chain(analysis: hrv.AnalysisConfig, rate: float):
    """Tampered analysis for the comparison's self-test: outliers kept."""

    def metrics_fn(records):
        signal = hrv.signal_from_records(records, rate)
        peaks = hrv.detect_peaks(signal, analysis)
        rr = hrv.compute_rr(peaks, signal.sample_rate_hz)
        return hrv.compute_metrics(rr)

    return metrics_fn


def run_pipeline(
    mode: str,
    cfg: RunConfig,
    tamper: bool = False,
    on_report: Optional[Callable[[dict], None]] = None,
) -> RunResult:
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    if tamper and mode != "monolith":
        raise ValueError("the tamper hook exists only for the direct-call pipeline")
    samples = load_samples(cfg)
    expected = len(samples)
    analysis = cfg.analysis()

    reports: list = []

    def emit(record: dict):
        reports.append(record)
        if on_report is not None:
            on_report(record)

    started = time.perf_counter()
    with broker_start(BrokerConfig(host=cfg.host, port=cfg.port)) as broker:
        store = DocStore()
        store.create_collection("window", cfg.threshold)
        coll = store.collection("window")

        if mode == "monolith":
            gateway = WindowGateway(store)
            metrics_fn = _no_rejection_chain(analysis, cfg.rate) if tamper else None
            analyzer = WindowAnalyzer(gateway, analysis, cfg.rate, metrics_fn=metrics_fn)
            ingestor = SensorIngestor(
                gateway,
                analyzer,
                broker.address,
                cfg.topic,
                cfg.decimation,
                on_metrics=lambda m: emit(make_report(m, "monolith", _now_ms(), analysis)),
            )

            def drained(published):
                return ingestor.delivered >= published

            def finalize():
                try:
                    emit(make_report(analyzer.current_metrics(), "monolith", _now_ms(), analysis))
                except hrv.AnalysisError:
                    pass

            def shutdown():
                ingestor.stop()

            def counts():
                return {
                    "delivered": ingestor.delivered,
                    "pump_errors": len(ingestor.errors),
                    "skipped_analyses": ingestor.skipped_analyses,
                }

        elif mode == "flow":
            graph = graph_for_run(cfg)
            runtime = FlowRuntime(
                store=store,
                analysis=analysis,
                broker_address=broker.address,
                sample_rate_hz=cfg.rate,
                mode_tag="flow",
                report=emit,
            )
            handle = run_flow(graph, runtime)
            if not handle.wait_sources(10.0):
                handle.stop()
                raise RuntimeError(f"flow sources failed to come up: {handle.errors}")

            def drained(published):
                return handle.drain(10.0)

            def finalize():
                for node in graph.nodes:
                    if node.type == "manual-inject":
                        handle.inject(node.id)
                handle.drain(10.0)

            def shutdown():
                handle.stop()

            def counts():
                return {"node_errors": len(handle.errors)}

        else:  # faas
            host = FunctionHost(
                store, collection="window", analysis=analysis, sample_rate_hz=cfg.rate
            )
            register_builtins(host)

            def observe(rec):
                if rec.function == "metrics_calc" and rec.outcome == "ok":
                    emit(report_from_metric_dict(rec.result, "faas", _now_ms(), analysis))

            host.observers.append(observe)
            trigger = bind_mqtt_trigger(
                host, broker.address, cfg.topic, decimation_n=cfg.decimation
            )

            def drained(published):
                return trigger.delivered >= published

            def finalize():
                host.invoke("metrics_calc", make_envelope("runner", {}))

            def shutdown():
                trigger.stop()
                host.close()

            def counts():
                return {
                    "delivered": trigger.delivered,
                    "invocations": len(host.records),
                    "metrics_calls": host.invocation_count("metrics_calc"),
                }

        try:
            published = _replay_into(broker.address, cfg) if expected else 0
            settled = _wait_for(lambda: coll.total_inserted() >= published, 30.0)
            settled = _wait_for(lambda: drained(published), 30.0) and settled
            finalize()
        finally:
            shutdown()

        docs = coll.get_all()
        seq_range = (docs[0].body["seq"], docs[-1].body["seq"]) if docs else None
        run_counts = counts()
        run_counts["drained"] = settled
        stored = coll.count()
        total_inserted = coll.total_inserted()

    wall_ms = (time.perf_counter() - started) * 1000.0
    return RunResult(
        mode, reports, published, stored, total_inserted, seq_range, wall_ms, run_counts
    )


@dataclass
class ComparisonReport:
    verdict: str  # EQUAL | EQUAL-EMPTY | DIVERGED
    field: Optional[str]
    modes: dict

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "field": self.field, "modes": self.modes}


def _close(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-9)


def _verdict(results: dict) -> tuple:
    finals = [results[m].final_metrics for m in MODES]
    if all(f is None for f in finals):
        return "EQUAL-EMPTY", None
    if any(f is None for f in finals):
        return "DIVERGED", "final_metrics"
    reference = results[MODES[0]].final_metrics
    for name in METRIC_FIELDS:
        for mode in MODES[1:]:
            if not _close(reference[name], results[mode].final_metrics[name]):
                return "DIVERGED", name
    if len({results[m].seq_range for m in MODES}) > 1:
        return "DIVERGED", "seq_range"
    return "EQUAL", None


def compare_modes(cfg: RunConfig, tamper_mode: Optional[str] = None) -> ComparisonReport:
    if tamper_mode not in (None, "monolith"):
        raise ValueError("tamper hook exists only for the direct-call pipeline")
    results = {}
    for mode in MODES:
        results[mode] = run_pipeline(mode, cfg, tamper=(mode == tamper_mode))
    verdict, field = _verdict(results)
    modes = {
        mode: {
            "wall_ms": round(result.wall_ms, 3),
            "published": result.published,
            "stored": result.stored,
            "total_inserted": result.total_inserted,
            "seq_range": list(result.seq_range) if result.seq_range else None,
            "reports": len(result.reports),
            "final_metrics": result.final_metrics,
            "counts": result.counts,
        }
        for mode, result in results.items()
    }
    return ComparisonReport(verdict, field, modes)
