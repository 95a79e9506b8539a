"""Dual-sensor timing: reaction times, the click-pairing window and click records."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .rng import SLOT_TS_L_FIRE, SLOT_TS_L_TIME, SLOT_TS_R_FIRE, SLOT_TS_R_TIME
from .state import DomainError

# "Much shorter than": the pairing window must be at least this many times
# shorter than the repetition period.
WINDOW_PERIOD_RATIO = 100.0

TS_CHANNELS = ("TS_L", "TS_R")
OD_CHANNELS = ("OD_L", "OD_R", "OD")


@dataclass(frozen=True)
class SensorTimings:
    tau_od: float = 1e-9
    tau_ts: float = 10e-9
    t_window: float = 60e-9
    rep_rate: float = 1e3
    gap_transit: float = 1e-9

    def __post_init__(self):
        for name in ("tau_od", "tau_ts", "t_window", "rep_rate", "gap_transit"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class TimingCheck:
    name: str
    lhs: float
    rhs: float
    passed: bool


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[TimingCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]


def validate_timing(t: SensorTimings, period_ratio: float = WINDOW_PERIOD_RATIO) -> ValidationReport:
    """Check ``tau_od < tau_ts < t_window << 1/rep_rate``.

    A fourth check requires the OD click of a trial to land inside the pairing
    window (``gap_transit + tau_od <= t_window``), otherwise one particle would
    be counted as two trials.
    """
    period = 1.0 / t.rep_rate
    checks = (
        TimingCheck("tau_od < tau_ts", t.tau_od, t.tau_ts, t.tau_od < t.tau_ts),
        TimingCheck("tau_ts < t_window", t.tau_ts, t.t_window, t.tau_ts < t.t_window),
        TimingCheck("t_window << 1/rep_rate", t.t_window, period / period_ratio,
                    t.t_window <= period / period_ratio),
        TimingCheck("gap_transit + tau_od <= t_window", t.gap_transit + t.tau_od, t.t_window,
                    t.gap_transit + t.tau_od <= t.t_window),
    )
    return ValidationReport(checks)


@dataclass(frozen=True)
class TSEvent:
    fired: int
    commit_time: float
    branch_weight: float


def sample_ts_event(branch_weight, timings, commit_probability, rng, side="L"):
    """Realise one transparent-sensor reading.

    Engines normally pass ``commit_probability`` of exactly 0 or 1; values in
    between model a sensor that may fail to commit.  The commit time is
    uniform on ``[0, tau_ts]`` whether or not the sensor fires.
    """
    for name, p in (("branch_weight", branch_weight), ("commit_probability", commit_probability)):
        if not 0.0 <= p <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1], got {p!r}")
    fire_slot, time_slot = {
        "L": (SLOT_TS_L_FIRE, SLOT_TS_L_TIME),
        "R": (SLOT_TS_R_FIRE, SLOT_TS_R_TIME),
    }[side]
    fired = int(rng.draw(fire_slot) < commit_probability)
    return TSEvent(fired, rng.draw(time_slot) * timings.tau_ts, branch_weight)


@dataclass(frozen=True, order=True)
class Click:
    """One detector click.  ``theta``/``phi`` carry the OD reading in stages 2-3."""

    time: float
    channel: str
    theta: float | None = field(default=None, compare=False)
    phi: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.channel not in TS_CHANNELS + OD_CHANNELS:
            raise DomainError(f"unknown channel {self.channel!r}")
        if not (math.isfinite(self.time) and self.time >= 0):
            raise DomainError(f"click time must be finite and >= 0, got {self.time!r}")


@dataclass(frozen=True)
class ClickRecord:
    """Readings of one trial.

    Stage 1 uses ``od_left``/``od_right``; stages 2-3 use ``od_theta`` (and
    ``od_phi`` in stage 3).  ``ts_inserted`` is False only for the control run
    without mid-loop sensors.
    """

    stage: int
    ts_left: int
    ts_right: int
    od_left: int | None = None
    od_right: int | None = None
    od_theta: float | None = None
    od_phi: float | None = None
    timestamps: tuple[tuple[str, float], ...] = ()
    ts_inserted: bool = True

    def __post_init__(self):
        if self.stage not in (1, 2, 3):
            raise DomainError(f"stage must be 1, 2 or 3, got {self.stage!r}")
        if self.ts_left not in (0, 1) or self.ts_right not in (0, 1):
            raise DomainError("TS readings must be 0 or 1")
        if self.stage == 1:
            if self.od_left not in (0, 1) or self.od_right not in (0, 1):
                raise DomainError("stage-1 records need od_left/od_right in {0, 1}")
            if self.od_theta is not None or self.od_phi is not None:
                raise DomainError("stage-1 records carry no od_theta/od_phi")
            if not self.ts_inserted:
                raise DomainError("stage 1 always has its transparent sensors")
        else:
            if self.od_left is not None or self.od_right is not None:
                raise DomainError("stage-2/3 records carry no od_left/od_right")
            if self.od_theta is None:
                raise DomainError("stage-2/3 records need od_theta")
            if (self.stage == 3) != (self.od_phi is not None):
                raise DomainError("od_phi is present exactly in stage-3 records")
        if any(t < 0 for _, t in self.timestamps):
            raise DomainError("click timestamps must be >= 0")

    @property
    def tuple(self) -> tuple:
        if self.stage == 1:
            return (self.ts_left, self.ts_right, self.od_left, self.od_right)
        if self.stage == 2:
            return (self.ts_left, self.ts_right, self.od_theta)
        return (self.ts_left, self.ts_right, self.od_theta, self.od_phi)


class EmptyTrialError(ValueError):
    pass


def _record_from_window(clicks: list[Click], stage: int, ts_inserted: bool) -> ClickRecord:
    channels = {c.channel for c in clicks}
    stamps = tuple((c.channel, c.time) for c in clicks)
    ts_l, ts_r = int("TS_L" in channels), int("TS_R" in channels)
    if stage == 1:
        return ClickRecord(1, ts_l, ts_r, od_left=int("OD_L" in channels),
                           od_right=int("OD_R" in channels), timestamps=stamps)
    od = [c for c in clicks if c.channel == "OD"]
    if len(od) != 1:
        raise DomainError(f"stage-{stage} trial needs exactly one OD click, got {len(od)}")
    phi = None
    if stage == 3:
        phi = od[0].phi if od[0].phi is not None else 0.0
    return ClickRecord(stage, ts_l, ts_r, od_theta=od[0].theta, od_phi=phi,
                       timestamps=stamps, ts_inserted=ts_inserted)


def pair_clicks(events, timings: SensorTimings, stage: int = 1,
                ts_inserted: bool = True) -> list[ClickRecord]:
    """Group time-sorted clicks into trial records.

    The first click opens a window of length ``t_window``; clicks inside it
    belong to the same trial and the first click beyond it opens the next.
    """
    events = list(events)
    if not events:
        raise EmptyTrialError("no clicks to pair")
    if any(b.time < a.time for a, b in zip(events, events[1:])):
        raise DomainError("events must be sorted by timestamp")
    records, window, opened = [], [], None
    for click in events:
        if opened is not None and click.time - opened > timings.t_window:
            records.append(window)
            window, opened = [], None
        if opened is None:
            opened = click.time
        window.append(click)
    records.append(window)
    return [_record_from_window(w, stage, ts_inserted) for w in records]
