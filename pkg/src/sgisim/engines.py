"""Measurement-dynamics engines that turn a split state into sensor clicks.

CI and MWI sample "our" branch with Born weights and keep every later
reading consistent with it.  BHSI does the same at baseline, and can be told
to produce the anomalies its local-branching picture allows: TS/OD swaps,
uncommitted or doubly committed sensors, and recoherence of the branch the
sensor did not engage.

Each engine has a scalar path (:meth:`Engine.trial`, one :class:`TrialStream`
per trial) and a vectorised path (:meth:`Engine.batch`) that reads exactly
the same draws, so the two agree record for record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .rng import (SLOT_ANOMALY, SLOT_BRANCH, SLOT_OD_TIME, SLOT_RECOHERE, TrialStream,
                  uniform_block)
from .sensors import Click, ClickRecord, pair_clicks, sample_ts_event
from .stages import OD_THETAS, StageConfig
from .state import (HALF_PI, Branch, DomainError, PathState, absorb_branch, apply_em_phase,
                    born_weights, collapse, merge, phase_distance, recohere, split, tag_branch,
                    wrap_phase)


class EngineKind(str, Enum):
    CI = "CI"
    MWI = "MWI"
    BHSI = "BHSI"


RETRO_MODES = ("unitary", "erasure")


@dataclass(frozen=True)
class BhsiParams:
    p_delayed: float = 0.0
    p_uncommitted: float = 0.0
    p_double_ts: float = 0.0
    p_recohere: float = 0.0
    retrocausal_mode: str = "unitary"

    def __post_init__(self):
        for name in ("p_delayed", "p_uncommitted", "p_double_ts", "p_recohere"):
            p = getattr(self, name)
            if not (math.isfinite(p) and 0.0 <= p <= 1.0):
                raise DomainError(f"{name} must lie in [0, 1], got {p!r}")
        if self.p_delayed + self.p_uncommitted + self.p_double_ts > 1.0 + 1e-12:
            raise DomainError("p_delayed + p_uncommitted + p_double_ts must not exceed 1")
        if self.retrocausal_mode not in RETRO_MODES:
            raise DomainError(f"retrocausal_mode must be one of {RETRO_MODES}")


# Parameter sets used for audits and demos.
BHSI_PRESETS = {
    "baseline": BhsiParams(),
    "delayed": BhsiParams(p_delayed=0.05),
    "uncommitted": BhsiParams(p_uncommitted=0.1),
    "double-ts": BhsiParams(p_double_ts=0.1),
    "recohere": BhsiParams(p_recohere=1.0),
    "recohere-erasure": BhsiParams(p_recohere=1.0, retrocausal_mode="erasure"),
    "mixed": BhsiParams(p_delayed=0.1, p_uncommitted=0.1, p_double_ts=0.1, p_recohere=0.3),
    "all-delayed": BhsiParams(p_delayed=1.0),
}

NORMAL, DELAYED, UNCOMMITTED, DOUBLE = range(4)


def initial_state(stage: StageConfig) -> PathState:
    """Split the prepared qubit and, in stage 3, imprint the EM phase."""
    s = split(stage.initial)
    if stage.stage == 3:
        s = apply_em_phase(s, stage.delta_phi)
    return s


def theta_reading_index(theta: float) -> int:
    """Discretise a merged polar angle: pure up, pure down, or superposition."""
    if theta <= 1e-9:
        return 0
    if theta >= HALF_PI - 1e-9:
        return 2
    return 1


PHASE_SNAP = 1e-12


@dataclass(frozen=True)
class _Reading:
    theta_idx: int
    phi: float


def _reading(q, initial_phi: float) -> _Reading:
    idx = theta_reading_index(q.theta)
    # Relative phase is only observable for a genuine superposition.
    phi = wrap_phase(q.phi - initial_phi) if idx == 1 else 0.0
    if phase_distance(phi, 0.0) <= PHASE_SNAP:
        phi = 0.0  # rounding residue of an erased or absent phase
    return _Reading(idx, phi)


@dataclass
class RecordBatch:
    """Column-wise records for trials ``start .. start + n - 1``."""

    stage: int
    ts_inserted: bool
    start: int
    ts_left: np.ndarray
    ts_right: np.ndarray
    od_left: np.ndarray | None
    od_right: np.ndarray | None
    theta_idx: np.ndarray | None
    od_phi: np.ndarray | None
    t_ts_left: np.ndarray
    t_ts_right: np.ndarray
    t_od: np.ndarray

    def __len__(self):
        return len(self.ts_left)

    def record(self, i: int) -> ClickRecord:
        od = "OD"
        if self.stage == 1:
            od = "OD_L" if self.od_left[i] else "OD_R"
        stamps = [(od, float(self.t_od[i]))]
        for channel, times in (("TS_L", self.t_ts_left), ("TS_R", self.t_ts_right)):
            if not np.isnan(times[i]):
                stamps.append((channel, float(times[i])))
        stamps = tuple((c, t) for t, c in sorted((t, c) for c, t in stamps))
        common = dict(timestamps=stamps, ts_inserted=self.ts_inserted)
        if self.stage == 1:
            return ClickRecord(1, int(self.ts_left[i]), int(self.ts_right[i]),
                               od_left=int(self.od_left[i]), od_right=int(self.od_right[i]),
                               **common)
        phi = float(self.od_phi[i]) if self.stage == 3 else None
        return ClickRecord(self.stage, int(self.ts_left[i]), int(self.ts_right[i]),
                           od_theta=OD_THETAS[self.theta_idx[i]], od_phi=phi, **common)

    def records(self):
        return [self.record(i) for i in range(len(self))]


class Engine:
    kind: EngineKind

    def __init__(self, params: BhsiParams | None = None):
        self.params = params

    def __repr__(self):
        return f"{type(self).__name__}({self.params!r})" if self.params else f"{type(self).__name__}()"

    # Anomaly hooks; CI and MWI never produce anomalies.
    def _category(self, u: float) -> int:
        return NORMAL

    def _recoheres(self, u: float) -> bool:
        return False

    def _erase_phase(self) -> bool:
        return False

    def trial(self, state: PathState, stage: StageConfig, rng: TrialStream) -> ClickRecord:
        timings = stage.timings
        p_up, p_down = born_weights(state)
        up = rng.draw(SLOT_BRANCH) < p_up
        branch = Branch.UP_L if up else Branch.DOWN_R
        other = Branch.DOWN_R if up else Branch.UP_L
        category = self._category(rng.draw(SLOT_ANOMALY))
        clicks = []

        fire = {Branch.UP_L: False, Branch.DOWN_R: False}
        if stage.ts_inserted:
            if category == NORMAL:
                fire[branch] = True
            elif category == DELAYED:
                fire[other] = True
            elif category == DOUBLE:
                fire = {Branch.UP_L: True, Branch.DOWN_R: True}
            for b, side, weight in ((Branch.UP_L, "L", p_up), (Branch.DOWN_R, "R", p_down)):
                ev = sample_ts_event(weight, timings, 1.0 if fire[b] else 0.0, rng, side)
                if ev.fired:
                    clicks.append(Click(ev.commit_time, "TS_" + side))
                    state = tag_branch(state, b)

        t_od = timings.gap_transit + rng.draw(SLOT_OD_TIME) * timings.tau_od
        if stage.stage == 1:
            clicks.append(Click(t_od, "OD_L" if up else "OD_R"))
        else:
            if not stage.ts_inserted:
                q = merge(state)
            elif self._recoheres(rng.draw(SLOT_RECOHERE)):
                q = merge(recohere(state, erase_phase=self._erase_phase()))
            else:
                q = collapse(absorb_branch(state, other), branch)
            reading = _reading(q, stage.initial.phi)
            clicks.append(Click(t_od, "OD", theta=OD_THETAS[reading.theta_idx],
                                phi=reading.phi if stage.stage == 3 else None))

        records = pair_clicks(sorted(clicks), timings, stage.stage, stage.ts_inserted)
        if len(records) != 1:
            raise RuntimeError("trial clicks fell outside one pairing window; check timings")
        return records[0]

    def batch(self, state: PathState, stage: StageConfig, seed: int,
              start: int, stop: int) -> RecordBatch:
        timings = stage.timings
        p_up, _ = born_weights(state)
        u = uniform_block(seed, start, stop)
        up = u[:, SLOT_BRANCH] < p_up
        category = self._category_array(u[:, SLOT_ANOMALY])

        if stage.ts_inserted:
            normal, delayed, double = (category == NORMAL), (category == DELAYED), (category == DOUBLE)
            fire_l = np.where(normal, up, np.where(delayed, ~up, double))
            fire_r = np.where(normal, ~up, np.where(delayed, up, double))
        else:
            fire_l = fire_r = np.zeros(len(up), dtype=bool)
        t_ts_l = np.where(fire_l, u[:, 3] * timings.tau_ts, np.nan)
        t_ts_r = np.where(fire_r, u[:, 4] * timings.tau_ts, np.nan)
        t_od = timings.gap_transit + u[:, SLOT_OD_TIME] * timings.tau_od

        od_left = od_right = theta_idx = od_phi = None
        if stage.stage == 1:
            od_left, od_right = up.astype(np.uint8), (~up).astype(np.uint8)
        else:
            if not stage.ts_inserted:
                merged = _reading(merge(state), stage.initial.phi)
                recoh = np.ones(len(up), dtype=bool)
            else:
                merged = _reading(merge(recohere(state, erase_phase=self._erase_phase())),
                                  stage.initial.phi)
                recoh = self._recoheres_array(u[:, SLOT_RECOHERE])
            theta_idx = np.where(recoh, merged.theta_idx, np.where(up, 0, 2)).astype(np.int8)
            od_phi = np.where(recoh, merged.phi, 0.0)
        return RecordBatch(stage.stage, stage.ts_inserted, start,
                           fire_l.astype(np.uint8), fire_r.astype(np.uint8),
                           od_left, od_right, theta_idx, od_phi, t_ts_l, t_ts_r, t_od)

    def _category_array(self, u: np.ndarray) -> np.ndarray:
        return np.full(len(u), NORMAL, dtype=np.int8)

    def _recoheres_array(self, u: np.ndarray) -> np.ndarray:
        return np.zeros(len(u), dtype=bool)


class CIEngine(Engine):
    """Instant global collapse onto the Born-sampled branch."""

    kind = EngineKind.CI


class MWIEngine(Engine):
    """Global branching; the simulation follows the world we end up in."""

    kind = EngineKind.MWI


class BHSIEngine(Engine):
    kind = EngineKind.BHSI

    def __init__(self, params: BhsiParams | None = None):
        super().__init__(params if params is not None else BhsiParams())

    def _thresholds(self):
        p = self.params
        first = p.p_delayed
        second = first + p.p_uncommitted
        return first, second, second + p.p_double_ts

    def _category(self, u):
        t1, t2, t3 = self._thresholds()
        if u < t1:
            return DELAYED
        if u < t2:
            return UNCOMMITTED
        if u < t3:
            return DOUBLE
        return NORMAL

    def _category_array(self, u):
        t1, t2, t3 = self._thresholds()
        out = np.full(len(u), NORMAL, dtype=np.int8)
        out[u < t3] = DOUBLE
        out[u < t2] = UNCOMMITTED
        out[u < t1] = DELAYED
        return out

    def _recoheres(self, u):
        return u < self.params.p_recohere

    def _recoheres_array(self, u):
        return u < self.params.p_recohere

    def _erase_phase(self):
        return self.params.retrocausal_mode == "erasure"


def make_engine(kind, params: BhsiParams | None = None) -> Engine:
    kind = EngineKind(kind)
    if kind is EngineKind.BHSI:
        return BHSIEngine(params)
    if params is not None:
        raise DomainError(f"{kind.value} engine takes no BHSI parameters")
    return CIEngine() if kind is EngineKind.CI else MWIEngine()


def run_trial_ci(state: PathState, stage: StageConfig, rng: TrialStream) -> ClickRecord:
    return CIEngine().trial(state, stage, rng)


def run_trial_mwi(state: PathState, stage: StageConfig, rng: TrialStream) -> ClickRecord:
    return MWIEngine().trial(state, stage, rng)


def run_trial_bhsi(state: PathState, stage: StageConfig, params: BhsiParams,
                   rng: TrialStream) -> ClickRecord:
    return BHSIEngine(params).trial(state, stage, rng)
