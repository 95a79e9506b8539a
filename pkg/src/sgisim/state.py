"""Two-level spin states and their spin-path entangled (split) form.

A prepared qubit is ``cos(theta)|up> + exp(i phi) sin(theta)|down>``.  Splitting
it in the gradient field tags the up component with the left path and the down
component with the right path; recombining runs the map backwards.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from enum import Enum

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi
NORM_TOL = 1e-12


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class StateError(RuntimeError):
    """The operation is not defined for the current branch status."""


class RecoherenceError(StateError):
    """Branches can no longer be recombined (projected or absorbed)."""


class BranchStatus(str, Enum):
    COHERENT = "coherent"
    TS_TAGGED = "ts-tagged"
    ABSORBED = "environment-absorbed"
    RECOHERED = "recohered"


class Branch(str, Enum):
    UP_L = "up_L"
    DOWN_R = "down_R"


def wrap_phase(angle: float) -> float:
    """Representative of ``angle`` modulo 2*pi in ``[0, 2*pi)``."""
    w = math.fmod(angle, TWO_PI)
    if w < 0.0:
        w += TWO_PI
    # fmod can land on 2*pi after the correction for tiny negative inputs
    return 0.0 if w >= TWO_PI else w


def phase_distance(a: float, b: float) -> float:
    """Shortest distance between two angles on the circle."""
    d = wrap_phase(a - b)
    return min(d, TWO_PI - d)


def _check_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class SpinQubit:
    theta: float
    phi: float

    def __post_init__(self):
        _check_finite("theta", self.theta)
        _check_finite("phi", self.phi)
        if not 0.0 <= self.theta <= HALF_PI:
            raise DomainError(f"theta must lie in [0, pi/2], got {self.theta!r}")
        if not 0.0 <= self.phi < TWO_PI:
            raise DomainError(f"phi must lie in [0, 2*pi), got {self.phi!r}")

    @property
    def amplitudes(self) -> tuple[complex, complex]:
        return (complex(math.cos(self.theta), 0.0),
                cmath.exp(1j * self.phi) * math.sin(self.theta))


def prepare_qubit(theta: float, phi: float) -> SpinQubit:
    return SpinQubit(float(theta), float(phi))


@dataclass(frozen=True)
class PathState:
    """Two-branch superposition ``a|up,L> + b|down,R>``.

    ``em_phase`` is the accumulated differential phase already folded into
    ``amp_down_R``.  ``global_phase`` records the common phase picked up by
    both branches; it never enters an observable.
    """

    amp_up_L: complex
    amp_down_R: complex
    em_phase: float = 0.0
    global_phase: float = 0.0
    status_up_L: BranchStatus = BranchStatus.COHERENT
    status_down_R: BranchStatus = BranchStatus.COHERENT

    def __post_init__(self):
        if BranchStatus.ABSORBED not in self.statuses:
            norm = abs(self.amp_up_L) ** 2 + abs(self.amp_down_R) ** 2
            if abs(norm - 1.0) > NORM_TOL:
                raise StateError(f"branch weights sum to {norm!r}, expected 1")

    @property
    def statuses(self) -> tuple[BranchStatus, BranchStatus]:
        return (self.status_up_L, self.status_down_R)

    def status(self, branch: Branch) -> BranchStatus:
        return self.status_up_L if branch is Branch.UP_L else self.status_down_R

    def interfering(self, branch: Branch) -> bool:
        return self.status(branch) is not BranchStatus.ABSORBED

    def with_status(self, branch: Branch, status: BranchStatus) -> PathState:
        if branch is Branch.UP_L:
            return replace(self, status_up_L=status)
        return replace(self, status_down_R=status)


def split(q: SpinQubit) -> PathState:
    up, down = q.amplitudes
    return PathState(up, down)


def born_weights(s: PathState) -> tuple[float, float]:
    """Branch probabilities ``(|a|^2, |b|^2)`` for the left and right paths."""
    allowed = (BranchStatus.COHERENT, BranchStatus.TS_TAGGED)
    if any(st not in allowed for st in s.statuses):
        raise StateError(f"Born weights undefined for branch statuses {s.statuses}")
    return abs(s.amp_up_L) ** 2, abs(s.amp_down_R) ** 2


def apply_em_phase(s: PathState, delta_phi: float, global_phase: float = 0.0) -> PathState:
    """Shift the right/down branch by ``delta_phi``; magnitudes are untouched."""
    _check_finite("delta_phi", delta_phi)
    _check_finite("global_phase", global_phase)
    if any(st is not BranchStatus.COHERENT for st in s.statuses):
        raise StateError("EM phase can only be applied while both branches are coherent")
    return replace(
        s,
        amp_down_R=s.amp_down_R * cmath.exp(1j * delta_phi),
        em_phase=s.em_phase + delta_phi,
        global_phase=s.global_phase + global_phase,
    )


def tag_branch(s: PathState, branch: Branch) -> PathState:
    """Mark ``branch`` as having engaged a transparent sensor."""
    if s.status(branch) is not BranchStatus.COHERENT:
        raise StateError(f"branch {branch.value} is already {s.status(branch).value}")
    return s.with_status(branch, BranchStatus.TS_TAGGED)


def absorb_branch(s: PathState, branch: Branch) -> PathState:
    return s.with_status(branch, BranchStatus.ABSORBED)


def recohere(s: PathState, erase_phase: bool = False) -> PathState:
    """Bring locally decohered branches back into a mergeable superposition.

    With ``erase_phase`` the differential phase accumulated before the
    sensors is discarded, modelling a measurement that wipes out the
    branches' independent evolution.
    """
    if BranchStatus.ABSORBED in s.statuses:
        raise RecoherenceError("an absorbed branch cannot recohere")
    out = replace(s, status_up_L=BranchStatus.RECOHERED, status_down_R=BranchStatus.RECOHERED)
    if erase_phase and s.em_phase != 0.0:
        out = replace(out, amp_down_R=s.amp_down_R * cmath.exp(-1j * s.em_phase), em_phase=0.0)
    return out


def collapse(s: PathState, branch: Branch) -> SpinQubit:
    """Projected post-measurement spin state: |up> -> (0, 0), |down> -> (pi/2, 0)."""
    if not s.interfering(branch):
        raise StateError(f"branch {branch.value} was absorbed")
    return SpinQubit(0.0, 0.0) if branch is Branch.UP_L else SpinQubit(HALF_PI, 0.0)


def merge(s: PathState) -> SpinQubit:
    """Recombine the two paths into a spin qubit.

    The recovered azimuth is ``arg(b) - arg(a)``, so any applied EM phase
    shows up as ``phi + em_phase``.  When one amplitude vanishes the azimuth
    is undefined and comes back as whatever phase the survivor carries.
    """
    mergeable = (BranchStatus.COHERENT, BranchStatus.RECOHERED)
    if any(st not in mergeable for st in s.statuses):
        raise RecoherenceError(f"cannot merge branches with statuses {s.statuses}")
    a, b = s.amp_up_L, s.amp_down_R
    theta = math.atan2(abs(b), abs(a))
    phi = 0.0
    if b != 0:
        phi = cmath.phase(b) - (cmath.phase(a) if a != 0 else 0.0)
    return SpinQubit(min(theta, HALF_PI), wrap_phase(phi))
