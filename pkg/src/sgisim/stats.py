"""Goodness-of-fit, interval estimates and conservation audits for click data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .stages import Flag, classify
from .state import DomainError

WILSON_Z95 = 1.959964
EQUIVALENCE_ALPHA = 1e-3

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


class EmptyDataError(ValueError):
    pass


def _gamma_series(a: float, x: float) -> float:
    # Regularised lower incomplete gamma P(a, x), series form; converges for x < a + 1.
    term = total = 1.0 / a
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cont_frac(a: float, x: float) -> float:
    # Regularised upper incomplete gamma Q(a, x), modified Lentz; for x >= a + 1.
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_q(a: float, x: float) -> float:
    """Regularised upper incomplete gamma function ``Q(a, x)``."""
    if a <= 0 or x < 0:
        raise DomainError("gamma_q needs a > 0 and x >= 0")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return _gamma_cont_frac(a, x)


def chi2_sf(x: float, dof: int) -> float:
    """Survival function of the chi-square distribution."""
    if dof <= 0:
        raise DomainError("degrees of freedom must be positive")
    if x <= 0:
        return 1.0
    return gamma_q(dof / 2.0, x / 2.0)


@dataclass(frozen=True)
class ChiSquareResult:
    chi2: float
    dof: int
    p: float


def born_rule_test(left_count: int, right_count: int, theta: float) -> ChiSquareResult:
    """One-dof chi-square of left/right OD counts against ``(cos^2, sin^2)`` of theta."""
    if left_count < 0 or right_count < 0:
        raise DomainError("counts must be non-negative")
    n = left_count + right_count
    if n == 0:
        raise EmptyDataError("no counts to test")
    chi2 = 0.0
    for observed, prob in ((left_count, math.cos(theta) ** 2), (right_count, math.sin(theta) ** 2)):
        expected = n * prob
        if expected == 0.0:
            if observed:
                return ChiSquareResult(math.inf, 1, 0.0)
            continue
        chi2 += (observed - expected) ** 2 / expected
    return ChiSquareResult(chi2, 1, chi2_sf(chi2, 1))


@dataclass(frozen=True)
class RateEstimate:
    hits: int
    trials: int
    rate: float
    lower95: float
    upper95: float


def anomaly_rate(hits: int, trials: int, z: float = WILSON_Z95) -> RateEstimate:
    """Rate with a Wilson score interval (95% by default)."""
    if trials <= 0:
        raise EmptyDataError("no trials")
    if not 0 <= hits <= trials:
        raise DomainError(f"hits must lie in [0, {trials}], got {hits}")
    p = hits / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    lower = 0.0 if hits == 0 else max(0.0, centre - half)
    upper = 1.0 if hits == trials else min(1.0, centre + half)
    return RateEstimate(hits, trials, p, min(lower, p), max(upper, p))


def engine_equivalence(hist_a: dict, hist_b: dict) -> ChiSquareResult:
    """Two-sample chi-square homogeneity test over shared outcome buckets.

    Buckets empty in both samples carry no information and are skipped.
    """
    if set(hist_a) != set(hist_b):
        raise DomainError("histograms must cover the same buckets")
    n_a, n_b = sum(hist_a.values()), sum(hist_b.values())
    if n_a <= 0 or n_b <= 0:
        raise EmptyDataError("both histograms need counts")
    total = n_a + n_b
    chi2, used = 0.0, 0
    for key in sorted(hist_a, key=str):
        a, b = hist_a[key], hist_b[key]
        col = a + b
        if col == 0:
            continue
        used += 1
        for observed, n in ((a, n_a), (b, n_b)):
            expected = n * col / total
            chi2 += (observed - expected) ** 2 / expected
    dof = used - 1
    if dof <= 0:
        return ChiSquareResult(0.0, 0, 1.0)
    return ChiSquareResult(chi2, dof, chi2_sf(chi2, dof))


@dataclass
class AuditReport:
    records: int = 0
    forbidden: int = 0
    probability_violations: int = 0
    stage: int | None = None

    @property
    def passed(self) -> bool:
        return self.forbidden == 0

    def merge(self, other: AuditReport) -> AuditReport:
        if self.stage is not None and other.stage is not None and self.stage != other.stage:
            raise DomainError("cannot merge audits from different stages")
        return AuditReport(self.records + other.records, self.forbidden + other.forbidden,
                           self.probability_violations + other.probability_violations,
                           self.stage if self.stage is not None else other.stage)


def conservation_audit(records, expected_phase: float | None = None,
                       phase_tolerance: float | None = None) -> AuditReport:
    audit = AuditReport()
    for r in records:
        if audit.stage is None:
            audit.stage = r.stage
        elif r.stage != audit.stage:
            raise DomainError(f"mixed stages in record stream ({audit.stage} and {r.stage})")
        outcome = classify(r, expected_phase, phase_tolerance)
        audit.records += 1
        if Flag.PHYSICAL in outcome.flags:
            audit.forbidden += 1
        if Flag.PROBABILITY in outcome.flags:
            audit.probability_violations += 1
    return audit


@dataclass
class RunReport:
    """Aggregated outcome of one experiment run; ``to_dict`` is the report body."""

    stage: int
    engine: str
    trial_count: int
    histogram: dict[str, int]
    outcomes: dict[str, int]
    born_test: ChiSquareResult | None
    anomaly_rates: dict[str, RateEstimate]
    audit: AuditReport
    seed: int
    config_digest: str
    delta_phi: float | None = None
    retrocausality: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if sum(self.histogram.values()) != self.trial_count:
            raise DomainError("histogram counts do not add up to the trial count")

    def to_dict(self) -> dict:
        born = None
        if self.born_test is not None:
            born = {"chi2": self.born_test.chi2, "dof": self.born_test.dof, "p": self.born_test.p}
        return {
            "schema": "sgisim.run-report/1",
            "stage": self.stage,
            "engine": self.engine,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "trial_count": self.trial_count,
            "delta_phi": self.delta_phi,
            "histogram": dict(self.histogram),
            "outcomes": dict(self.outcomes),
            "born_test": born,
            "anomaly_rates": {
                label: {"hits": r.hits, "rate": r.rate, "lower95": r.lower95, "upper95": r.upper95}
                for label, r in self.anomaly_rates.items()
            },
            "audit": {
                "forbidden": self.audit.forbidden,
                "probability_violations": self.audit.probability_violations,
                "passed": self.audit.passed,
            },
            "retrocausality": dict(self.retrocausality),
        }
