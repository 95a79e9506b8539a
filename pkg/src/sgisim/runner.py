"""Seeded batch execution, aggregation and report files."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .engines import RecordBatch, make_engine, initial_state
from .stages import (Flag, Label, STAGE_LABELS, StageConfig, classify, default_phase_tolerance,
                     format_tuple, phase_class, stage_records)
from .stats import AuditReport, RunReport, anomaly_rate, born_rule_test

CHUNK_SIZE = 1 << 17
N_CODES = {1: 16, 2: 12, 3: 24}


def phase_tolerance_for(cfg: ExperimentConfig) -> float | None:
    if cfg.stage != 3:
        return None
    if cfg.phase_tolerance is not None:
        return cfg.phase_tolerance
    return default_phase_tolerance(cfg.stage_config.delta_phi)


def outcome_codes(batch: RecordBatch, delta_phi: float = 0.0,
                  phase_tolerance: float | None = None) -> np.ndarray:
    """Index of each record in :func:`stage_records` order."""
    ts = batch.ts_left.astype(np.int64) * 2 + batch.ts_right
    if batch.stage == 1:
        return ts * 4 + batch.od_left.astype(np.int64) * 2 + batch.od_right
    codes = ts * 3 + batch.theta_idx
    if batch.stage == 2:
        return codes
    values, inverse = np.unique(batch.od_phi, return_inverse=True)
    flags = np.array([phase_class(v, delta_phi, phase_tolerance) for v in values], dtype=np.int64)
    return codes * 2 + flags[inverse.reshape(-1)]


def _count_chunk(args) -> np.ndarray:
    cfg, start, stop = args
    stage = cfg.stage_config
    engine = make_engine(cfg.engine, cfg.bhsi)
    batch = engine.batch(initial_state(stage), stage, cfg.seed, start, stop)
    codes = outcome_codes(batch, stage.delta_phi, phase_tolerance_for(cfg))
    return np.bincount(codes, minlength=N_CODES[cfg.stage])


def _chunks(trials: int, size: int = CHUNK_SIZE):
    return [(start, min(start + size, trials)) for start in range(0, trials, size)]


def count_outcomes(cfg: ExperimentConfig, workers: int | None = None) -> np.ndarray:
    """Outcome-code counts for every trial; identical for any worker count."""
    workers = cfg.workers if workers is None else workers
    jobs = [(cfg, a, b) for a, b in _chunks(cfg.trials)]
    if workers <= 1 or len(jobs) == 1:
        parts = map(_count_chunk, jobs)
        return sum(parts, np.zeros(N_CODES[cfg.stage], dtype=np.int64))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_count_chunk, jobs))
    return sum(parts, np.zeros(N_CODES[cfg.stage], dtype=np.int64))


def simulate_records(cfg: ExperimentConfig, start: int = 0, stop: int | None = None) -> RecordBatch:
    stage = cfg.stage_config
    stop = cfg.trials if stop is None else stop
    engine = make_engine(cfg.engine, cfg.bhsi)
    return engine.batch(initial_state(stage), stage, cfg.seed, start, stop)


def build_report(cfg: ExperimentConfig, counts: np.ndarray) -> RunReport:
    stage: StageConfig = cfg.stage_config
    delta_phi = stage.delta_phi if cfg.stage == 3 else None
    tol = phase_tolerance_for(cfg)
    rows = stage_records(cfg.stage, delta_phi) if delta_phi else stage_records(cfg.stage)
    if not cfg.ts_inserted:
        rows = [replace(r, ts_inserted=False) for r in rows]
    labels = (Label.CONTROL,) if not cfg.ts_inserted else STAGE_LABELS[cfg.stage]

    histogram = {label.value: 0 for label in labels}
    outcomes, retro = {}, {}
    audit = AuditReport(stage=cfg.stage)
    left = right = 0
    for record, n in zip(rows, counts.tolist()):
        outcomes[format_tuple(record, delta_phi)] = n
        if n == 0:
            continue
        outcome = classify(record, delta_phi, tol)
        histogram[outcome.label.value] += n
        audit.records += n
        if Flag.PHYSICAL in outcome.flags:
            audit.forbidden += n
        if Flag.PROBABILITY in outcome.flags:
            audit.probability_violations += n
        if outcome.retrocausality is not None:
            retro[outcome.retrocausality] = retro.get(outcome.retrocausality, 0) + n
        if cfg.stage == 1:
            left += n * record.od_left
            right += n * record.od_right
        elif record.od_theta == 0.0:
            left += n
        elif record.od_theta == 0.5 * math.pi:
            right += n

    born = born_rule_test(left, right, cfg.initial.theta) if left + right else None
    rates = {label: anomaly_rate(n, cfg.trials, cfg.z_score) for label, n in histogram.items()}
    return RunReport(
        stage=cfg.stage, engine=cfg.engine.value, trial_count=cfg.trials, histogram=histogram,
        outcomes=outcomes, born_test=born, anomaly_rates=rates, audit=audit, seed=cfg.seed,
        config_digest=cfg.digest(), delta_phi=delta_phi, retrocausality=retro,
    )


def run(cfg: ExperimentConfig, workers: int | None = None) -> RunReport:
    return build_report(cfg, count_outcomes(cfg, workers))


def report_json(report: RunReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


HISTOGRAM_COLUMNS = ("label", "count", "rate", "lower95", "upper95")


def histogram_csv(report: RunReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTOGRAM_COLUMNS)
    for label, count in report.histogram.items():
        r = report.anomaly_rates[label]
        writer.writerow((label, count, repr(r.rate), repr(r.lower95), repr(r.upper95)))
    return buf.getvalue()


def exit_code(report: RunReport) -> int:
    return 0 if report.audit.passed else 3


def write_outputs(report: RunReport, path: Path, fmt: str, meta: dict) -> tuple[Path, Path]:
    """Write the report body and a metadata sidecar carrying wall-clock data."""
    path.parent.mkdir(parents=True, exist_ok=True)
    body = report_json(report) if fmt == "json" else histogram_csv(report)
    path.write_text(body)
    sidecar = path.with_name(path.name + ".meta.json")
    sidecar.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return path, sidecar


def timed_run(cfg: ExperimentConfig, workers: int | None = None) -> tuple[RunReport, dict]:
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    report = run(cfg, workers)
    meta = {
        "started": started.isoformat(),
        "elapsed_seconds": time.perf_counter() - t0,
        "workers": cfg.workers if workers is None else workers,
        "version": __version__,
        "config_digest": report.config_digest,
    }
    return report, meta
