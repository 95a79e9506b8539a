"""Counter-based random streams keyed by (master seed, trial index).

Every uniform is a pure function of ``(seed, trial, slot)``: the SplitMix64
output for counter ``trial * N_SLOTS + slot + 1`` under a seed-derived key.
Trials can therefore be generated in any order, on any number of workers,
scalar or vectorised, and still see the same numbers.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_KEY_SALT = 0x5851F42D4C957F2D
_INV_2_53 = 1.0 / (1 << 53)

# Fixed draw slots per trial; engines always read the same slot for the same purpose.
SLOT_BRANCH = 0
SLOT_ANOMALY = 1
SLOT_RECOHERE = 2
SLOT_TS_L_TIME = 3
SLOT_TS_R_TIME = 4
SLOT_OD_TIME = 5
SLOT_TS_L_FIRE = 6
SLOT_TS_R_FIRE = 7
N_SLOTS = 8


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int) -> int:
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return mix64(seed ^ _KEY_SALT)


class TrialStream:
    """Random stream owned by one trial."""

    __slots__ = ("seed", "trial", "_base")

    def __init__(self, seed: int, trial: int):
        if trial < 0:
            raise ValueError("trial index must be non-negative")
        self.seed = seed
        self.trial = trial
        self._base = stream_key(seed)

    def draw(self, slot: int) -> float:
        """Uniform in [0, 1) for ``slot``; repeated calls return the same value."""
        if not 0 <= slot < N_SLOTS:
            raise ValueError(f"slot {slot} out of range")
        counter = self.trial * N_SLOTS + slot + 1
        return (mix64(self._base + counter * GAMMA) >> 11) * _INV_2_53

    def __repr__(self):
        return f"TrialStream(seed={self.seed}, trial={self.trial})"


def stream(seed: int, trial: int) -> TrialStream:
    return TrialStream(seed, trial)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def uniform_block(seed: int, start: int, stop: int) -> np.ndarray:
    """All slot uniforms for trials ``start .. stop-1``, shape ``(n, N_SLOTS)``.

    Row ``i`` equals ``[TrialStream(seed, start + i).draw(k) for k in range(N_SLOTS)]``.
    """
    if stop < start:
        raise ValueError("stop must not precede start")
    base = np.uint64(stream_key(seed))
    trials = np.arange(start, stop, dtype=np.uint64)
    slots = np.arange(1, N_SLOTS + 1, dtype=np.uint64)
    counters = trials[:, None] * np.uint64(N_SLOTS) + slots[None, :]
    with np.errstate(over="ignore"):
        z = base + counters * np.uint64(GAMMA)
        z = _mix64_array(z)
    return (z >> np.uint64(11)).astype(np.float64) * _INV_2_53
