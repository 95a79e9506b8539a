"""Stage configurations and the outcome taxonomy.

Stage 1 is a single interferometer half with a dual sensor (TS over OD) on
each path; readings are ``[ts_L, ts_R; od_L, od_R]``.  Stage 2 closes the
loop with one OD at the recombination point reading a polar angle,
``[ts_L, ts_R; theta]``.  Stage 3 adds a charged neighbour that imprints a
differential phase, ``[ts_L, ts_R; theta, phi]``.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

from .physics import PRESETS, PhysicsParams, em_phase_shift
from .sensors import ClickRecord, SensorTimings
from .state import HALF_PI, DomainError, SpinQubit, phase_distance

QUARTER_PI = 0.25 * math.pi
OD_THETAS = (0.0, QUARTER_PI, HALF_PI)
OD_THETA_NAMES = ("0", "pi/4", "pi/2")
THETA_MATCH_TOL = 1e-9


class Label(str, Enum):
    NORMAL = "Normal"
    DELAYED_CHOICE = "DelayedChoice"
    UNCOMMITTED_CHOICE = "UncommittedChoice"
    DOUBLE_TS = "DoubleTS"
    FORBIDDEN = "Forbidden"
    RECOHERENCE = "Recoherence"
    TS_NO_MERGE = "TSAnomalyNoMerge"
    TS_WITH_MERGE = "TSAnomalyWithMerge"
    MISMATCH = "Mismatch"
    RECOHERENCE_WITH_PHASE = "RecoherenceWithPhase"
    RECOHERENCE_WITHOUT_PHASE = "RecoherenceWithoutPhase"
    TS_WITH_MERGE_WITH_PHASE = "TSAnomalyWithMergeWithPhase"
    TS_WITH_MERGE_WITHOUT_PHASE = "TSAnomalyWithMergeWithoutPhase"
    CONTROL = "NoTSControl"


STAGE_LABELS = {
    1: (Label.NORMAL, Label.DELAYED_CHOICE, Label.UNCOMMITTED_CHOICE, Label.DOUBLE_TS,
        Label.FORBIDDEN),
    2: (Label.NORMAL, Label.RECOHERENCE, Label.TS_NO_MERGE, Label.TS_WITH_MERGE,
        Label.MISMATCH),
    3: (Label.NORMAL, Label.RECOHERENCE_WITH_PHASE, Label.RECOHERENCE_WITHOUT_PHASE,
        Label.TS_NO_MERGE, Label.TS_WITH_MERGE_WITH_PHASE, Label.TS_WITH_MERGE_WITHOUT_PHASE,
        Label.MISMATCH),
}


class Verdict(str, Enum):
    CONSISTENT = "consistent"
    VIOLATED = "violated"
    NO_EXPLANATION = "no-explanation"


class Flag(str, Enum):
    PROBABILITY = "probability-violation"
    PHYSICAL = "physical-conservation-violation"


INTERPRETATIONS = ("CI", "MWI", "BHSI")

C, V, N = Verdict.CONSISTENT, Verdict.VIOLATED, Verdict.NO_EXPLANATION

MERGE_CAVEAT = "same reading as the control run without sensors"


@dataclass(frozen=True)
class OutcomeClass:
    label: Label
    ci: Verdict
    mwi: Verdict
    bhsi: Verdict
    flags: frozenset = frozenset()
    notes: tuple[str, ...] = ()
    retrocausality: str | None = None

    @property
    def verdicts(self) -> dict[str, Verdict]:
        return {"CI": self.ci, "MWI": self.mwi, "BHSI": self.bhsi}


@dataclass(frozen=True)
class StageConfig:
    stage: int
    initial: SpinQubit
    timings: SensorTimings = field(default_factory=SensorTimings)
    em: PhysicsParams | None = None
    ts_inserted: bool = True
    phase_mode: str = "verbatim"

    def __post_init__(self):
        if self.stage not in (1, 2, 3):
            raise DomainError(f"stage must be 1, 2 or 3, got {self.stage!r}")
        if self.stage == 3 and self.em is None:
            raise DomainError("stage 3 needs physics parameters for the EM phase")
        if self.stage != 3 and self.em is not None:
            raise DomainError(f"stage {self.stage} takes no physics parameters")
        if self.stage == 1 and not self.ts_inserted:
            raise DomainError("the no-sensor control run exists only for stages 2 and 3")

    @property
    def delta_phi(self) -> float:
        if self.em is None:
            return 0.0
        return em_phase_shift(self.em, self.phase_mode)


def _flags(ts_left: int, ts_right: int, ts_inserted: bool, od_sum: int | None = None) -> frozenset:
    flags = set()
    if ts_inserted and ts_left + ts_right != 1:
        flags.add(Flag.PROBABILITY)
    if od_sum is not None and od_sum != 1:
        flags.add(Flag.PHYSICAL)
    return frozenset(flags)


def classify_stage1(r: ClickRecord) -> OutcomeClass:
    if r.stage != 1:
        raise DomainError(f"expected a stage-1 record, got stage {r.stage}")
    ts_l, ts_r, od_l, od_r = r.tuple
    flags = _flags(ts_l, ts_r, True, od_l + od_r)
    if od_l + od_r != 1:
        return OutcomeClass(Label.FORBIDDEN, V, V, V, flags)
    if ts_l + ts_r == 0:
        return OutcomeClass(Label.UNCOMMITTED_CHOICE, N, N, C, flags,
                            ("no sensor committed before the OD click",))
    if ts_l + ts_r == 2:
        return OutcomeClass(Label.DOUBLE_TS, N, N, N, flags)
    if (ts_l, ts_r) == (od_l, od_r):
        return OutcomeClass(Label.NORMAL, C, C, C, flags)
    return OutcomeClass(Label.DELAYED_CHOICE, V, V, C, flags)


def od_theta_index(theta: float) -> int:
    """Index of ``theta`` in the discrete OD readings (0, pi/4, pi/2)."""
    for i, ref in enumerate(OD_THETAS):
        if abs(theta - ref) <= THETA_MATCH_TOL:
            return i
    raise DomainError(f"od_theta {theta!r} is not one of 0, pi/4, pi/2")


def _classify_loop(ts_l: int, ts_r: int, theta_idx: int, ts_inserted: bool) -> OutcomeClass:
    flags = _flags(ts_l, ts_r, ts_inserted)
    if not ts_inserted:
        return OutcomeClass(Label.CONTROL, C, C, C, flags)
    merged = theta_idx == 1
    if ts_l + ts_r == 1:
        if merged:
            return OutcomeClass(Label.RECOHERENCE, V, V, C, flags,
                                ("superposition read after a single TS click",))
        if (ts_l == 1) == (theta_idx == 0):
            return OutcomeClass(Label.NORMAL, C, C, C, flags)
        return OutcomeClass(Label.MISMATCH, V, V, C, flags, ("delayed choice",))
    if merged:
        # Neither TS: reads like the uncommitted case; both: like the double-TS case.
        if ts_l == 0:
            return OutcomeClass(Label.TS_WITH_MERGE, N, N, C, flags, (MERGE_CAVEAT,))
        return OutcomeClass(Label.TS_WITH_MERGE, N, N, N, flags)
    return OutcomeClass(Label.TS_NO_MERGE, N, N, N, flags)


def classify_stage2(r: ClickRecord) -> OutcomeClass:
    if r.stage != 2:
        raise DomainError(f"expected a stage-2 record, got stage {r.stage}")
    return _classify_loop(r.ts_left, r.ts_right, od_theta_index(r.od_theta), r.ts_inserted)


def default_phase_tolerance(expected_phase: float) -> float:
    return abs(expected_phase) / 10


_WITH_PHASE = {
    Label.RECOHERENCE: Label.RECOHERENCE_WITH_PHASE,
    Label.TS_WITH_MERGE: Label.TS_WITH_MERGE_WITH_PHASE,
}
_WITHOUT_PHASE = {
    Label.RECOHERENCE: Label.RECOHERENCE_WITHOUT_PHASE,
    Label.TS_WITH_MERGE: Label.TS_WITH_MERGE_WITHOUT_PHASE,
}


def phase_class(od_phi: float, expected_phase: float, phase_tolerance: float) -> bool:
    """True if ``od_phi`` carries the expected shift, False if it is near zero."""
    if phase_distance(expected_phase, 0.0) <= 2 * phase_tolerance:
        raise DomainError("expected phase is too close to zero to separate the two cases")
    if phase_distance(od_phi, expected_phase) <= phase_tolerance:
        return True
    if phase_distance(od_phi, 0.0) <= phase_tolerance:
        return False
    raise DomainError(
        f"od_phi {od_phi!r} is neither near 0 nor near {expected_phase!r} "
        f"(tolerance {phase_tolerance!r})")


def classify_stage3(r: ClickRecord, expected_phase: float,
                    phase_tolerance: float | None = None) -> OutcomeClass:
    """Stage-2 taxonomy plus the phase carried by merged readings.

    A recohered reading that keeps the EM phase falsifies retrocausal
    accounts; one that lost it is what a retrocausal erasure would produce.
    For single-spin readings (theta 0 or pi/2) the phase is not observable
    and only has to be recognisable.
    """
    if r.stage != 3:
        raise DomainError(f"expected a stage-3 record, got stage {r.stage}")
    if phase_tolerance is None:
        phase_tolerance = default_phase_tolerance(expected_phase)
    with_phase = phase_class(r.od_phi, expected_phase, phase_tolerance)
    base = _classify_loop(r.ts_left, r.ts_right, od_theta_index(r.od_theta), r.ts_inserted)
    table = _WITH_PHASE if with_phase else _WITHOUT_PHASE
    if base.label not in table:
        return base
    retro = "falsified" if with_phase else "consistent"
    note = ("EM phase kept through recombination" if with_phase
            else "EM phase absent after recombination")
    return OutcomeClass(table[base.label], base.ci, base.mwi, base.bhsi, base.flags,
                        base.notes + (note,), retro)


def classify(r: ClickRecord, expected_phase: float | None = None,
             phase_tolerance: float | None = None) -> OutcomeClass:
    if r.stage == 1:
        return classify_stage1(r)
    if r.stage == 2:
        return classify_stage2(r)
    if expected_phase is None:
        raise DomainError("stage-3 classification needs the expected phase")
    return classify_stage3(r, expected_phase, phase_tolerance)


def format_tuple(r: ClickRecord, expected_phase: float | None = None) -> str:
    head = f"[{r.ts_left},{r.ts_right};"
    if r.stage == 1:
        return head + f"{r.od_left},{r.od_right}]"
    theta = OD_THETA_NAMES[od_theta_index(r.od_theta)]
    if r.stage == 2:
        return head + theta + "]"
    tol = default_phase_tolerance(expected_phase) if expected_phase else 0.0
    phi = "dPhi" if expected_phase and phase_class(r.od_phi, expected_phase, tol) else "0"
    return head + f"{theta},{phi}]"


@dataclass(frozen=True)
class TaxonomyRow:
    stage: int
    record: ClickRecord
    tuple_text: str
    outcome: OutcomeClass


DEFAULT_DELTA_PHI = em_phase_shift(PRESETS["electron-ion"])


def stage_records(stage: int, delta_phi: float = DEFAULT_DELTA_PHI) -> list[ClickRecord]:
    """Every syntactically valid record of ``stage`` (with sensors inserted)."""
    bits = (0, 1)
    if stage == 1:
        return [ClickRecord(1, a, b, od_left=c, od_right=d)
                for a, b, c, d in itertools.product(bits, bits, bits, bits)]
    if stage == 2:
        return [ClickRecord(2, a, b, od_theta=t)
                for a, b, t in itertools.product(bits, bits, OD_THETAS)]
    if stage == 3:
        return [ClickRecord(3, a, b, od_theta=t, od_phi=p)
                for a, b, t, p in itertools.product(bits, bits, OD_THETAS, (0.0, delta_phi))]
    raise DomainError(f"stage must be 1, 2 or 3, got {stage!r}")


def enumerate_taxonomy(stage: int, delta_phi: float = DEFAULT_DELTA_PHI) -> list[TaxonomyRow]:
    rows = []
    for r in stage_records(stage, delta_phi):
        outcome = classify(r, delta_phi)
        rows.append(TaxonomyRow(stage, r, format_tuple(r, delta_phi), outcome))
    return rows


TAXONOMY_COLUMNS = ("stage", "tuple", "label", "ci_verdict", "mwi_verdict", "bhsi_verdict", "flags")


def taxonomy_csv(rows: list[TaxonomyRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TAXONOMY_COLUMNS)
    for row in rows:
        o = row.outcome
        writer.writerow((row.stage, row.tuple_text, o.label.value, o.ci.value, o.mwi.value,
                         o.bhsi.value, "|".join(sorted(f.value for f in o.flags))))
    return buf.getvalue()
