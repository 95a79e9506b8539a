"""Feasibility numbers: acceleration-time mass scaling and the EM phase shift.

The phase shift is ``q1 q2 tau dx / (hbar d^2)`` with SI charges and no
Coulomb constant.  With the preset charges this gives the 0.2 / 0.1 / 0.02 rad
feasibility figures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .state import DomainError

# Pinned constants (SI).
ELEMENTARY_CHARGE = 1.602176634e-19  # C
HBAR = 1.0545718e-34  # J s
ELECTRON_MASS = 9.1093837e-31  # kg

PHASE_MODES = ("verbatim", "exact-denominator")


@dataclass(frozen=True)
class PhysicsParams:
    q1: float = -3 * ELEMENTARY_CHARGE
    q2: float = -3 * ELEMENTARY_CHARGE
    d: float = 100e-6
    delta_x: float = 10e-6
    tau: float = 100e-3
    m: float = ELECTRON_MASS
    grad_b: float = 1e6
    dt_ref: float = 0.1
    m_ref: float = 1e-14

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise DomainError(f"{f.name} must be finite, got {value!r}")
        if self.delta_x < 0:
            raise DomainError(f"delta_x must be >= 0, got {self.delta_x!r}")
        if not self.d > self.delta_x / 2:
            raise DomainError(f"d={self.d!r} must exceed delta_x/2={self.delta_x / 2!r}")
        for name in ("tau", "m", "grad_b", "dt_ref", "m_ref"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)!r}")


# Charge configurations discussed for the two-interferometer setup.
PRESETS = {
    "both-3e": PhysicsParams(),
    "electron-ion": PhysicsParams(q1=-ELEMENTARY_CHARGE, q2=-5 * ELEMENTARY_CHARGE),
    "two-electrons": PhysicsParams(q1=-ELEMENTARY_CHARGE, q2=-ELEMENTARY_CHARGE),
}


def acceleration_time(m: float, reference: tuple[float, float] = (0.1, 1e-14)) -> float:
    """Time to open a fixed branch separation at fixed gradient: ``dt_ref * sqrt(m / m_ref)``."""
    dt_ref, m_ref = reference
    if not (m > 0 and dt_ref > 0 and m_ref > 0):
        raise DomainError("mass and reference values must be positive")
    return dt_ref * math.sqrt(m / m_ref)


def em_phase_shift(p: PhysicsParams, mode: str = "verbatim") -> float:
    if mode not in PHASE_MODES:
        raise DomainError(f"mode must be one of {PHASE_MODES}, got {mode!r}")
    if p.d <= p.delta_x / 2:
        raise DomainError("d must exceed delta_x/2")
    numerator = p.q1 * p.q2 * p.tau * p.delta_x
    if mode == "verbatim":
        return numerator / (HBAR * p.d ** 2)
    return numerator / (HBAR * (p.d ** 2 - p.delta_x ** 2 / 4))


@dataclass(frozen=True)
class SweepRow:
    field: str
    value: float
    delta_phi: float | None
    delta_phi_exact: float | None
    delta_t: float | None
    error: str | None = None

    @property
    def valid(self) -> bool:
        return self.error is None


SWEEPABLE = tuple(f.name for f in fields(PhysicsParams))


def sweep(p: PhysicsParams, field: str, values) -> list[SweepRow]:
    """Vary one parameter, holding the rest fixed.

    Values that break a parameter invariant produce a row with ``error`` set
    instead of being dropped.
    """
    if field not in SWEEPABLE:
        raise DomainError(f"cannot sweep {field!r}; choose from {', '.join(SWEEPABLE)}")
    rows = []
    for value in values:
        try:
            q = replace(p, **{field: float(value)})
        except DomainError as exc:
            rows.append(SweepRow(field, float(value), None, None, None, str(exc)))
            continue
        rows.append(SweepRow(
            field, float(value),
            em_phase_shift(q, "verbatim"),
            em_phase_shift(q, "exact-denominator"),
            acceleration_time(q.m, (q.dt_ref, q.m_ref)),
        ))
    return rows
