import math

import pytest
from hypothesis import given, strategies as st

from sgisim.rng import TrialStream
from sgisim.sensors import (
    Click,
    ClickRecord,
    EmptyTrialError,
    SensorTimings,
    pair_clicks,
    sample_ts_event,
    validate_timing,
)
from sgisim.state import DomainError

NS = 1e-9
NOMINAL = SensorTimings(tau_od=1 * NS, tau_ts=10 * NS, t_window=60 * NS, rep_rate=1e3)


def test_nominal_timings_pass():
    report = validate_timing(NOMINAL)
    assert report.passed
    assert report.failures() == []


def test_swapped_reaction_times_fail():
    report = validate_timing(SensorTimings(tau_od=10 * NS, tau_ts=1 * NS, t_window=60 * NS,
                                           rep_rate=1e3))
    assert not report.passed
    assert report.failures() == ["tau_od < tau_ts"]


def test_window_not_much_shorter_than_period():
    # 1/f = 20 ns, shorter than the 60 ns window
    report = validate_timing(SensorTimings(tau_od=1 * NS, tau_ts=10 * NS, t_window=60 * NS,
                                           rep_rate=50e6))
    assert report.failures() == ["t_window << 1/rep_rate"]


def test_window_ratio_threshold():
    # 1/f = 6 us: exactly 100 windows per period passes, slightly fewer fails
    assert validate_timing(SensorTimings(t_window=60 * NS, rep_rate=1 / 6e-6)).passed
    assert not validate_timing(SensorTimings(t_window=60 * NS, rep_rate=1 / 5.9e-6)).passed


def test_od_outside_window_is_flagged():
    report = validate_timing(SensorTimings(gap_transit=100 * NS))
    assert report.failures() == ["gap_transit + tau_od <= t_window"]


@pytest.mark.parametrize("field", ["tau_od", "tau_ts", "t_window", "rep_rate", "gap_transit"])
@pytest.mark.parametrize("value", [0.0, -1.0, math.inf, math.nan])
def test_non_positive_timings_rejected(field, value):
    with pytest.raises(DomainError):
        SensorTimings(**{field: value})


timing_values = st.floats(min_value=1e-12, max_value=1e-3)


@given(timing_values, timing_values, timing_values, st.floats(1.0, 1e9), st.floats(0.01, 1.0),
       st.floats(1.0, 1e3))
def test_validate_timing_monotone(tau_od, tau_ts, window, rate, shrink, stretch):
    t = SensorTimings(tau_od=tau_od, tau_ts=tau_ts, t_window=window, rep_rate=rate)
    if not validate_timing(t).passed:
        return
    assert validate_timing(SensorTimings(tau_od * shrink, tau_ts, window, rate)).passed
    assert validate_timing(SensorTimings(tau_od, tau_ts, window, rate / stretch)).passed


@pytest.mark.parametrize("p, expected", [(1.0, 1), (0.0, 0)])
def test_commit_probability_extremes(p, expected):
    for trial in range(2000):
        ev = sample_ts_event(0.5, NOMINAL, p, TrialStream(3, trial))
        assert ev.fired == expected
        assert 0.0 <= ev.commit_time <= NOMINAL.tau_ts


def test_commit_probability_half_rate():
    n = 100_000
    fired = sum(sample_ts_event(0.5, NOMINAL, 0.5, TrialStream(11, t), side="R").fired
                for t in range(n))
    # binomial oracle: sd = sqrt(0.25 / n) ~ 0.00158; 3 sd ~ 0.0047
    assert abs(fired / n - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_sample_ts_event_validates_probabilities():
    with pytest.raises(DomainError):
        sample_ts_event(1.5, NOMINAL, 0.5, TrialStream(1, 1))
    with pytest.raises(DomainError):
        sample_ts_event(0.5, NOMINAL, -0.1, TrialStream(1, 1))


def test_pair_clicks_single_window():
    records = pair_clicks([Click(5 * NS, "TS_L"), Click(15 * NS, "OD_L")], NOMINAL)
    assert len(records) == 1
    r = records[0]
    assert r.tuple == (1, 0, 1, 0)
    assert r.timestamps == (("TS_L", 5 * NS), ("OD_L", 15 * NS))


def test_pair_clicks_opens_second_window():
    records = pair_clicks([Click(5 * NS, "TS_L"), Click(70 * NS, "OD_R")], NOMINAL)
    assert [r.tuple for r in records] == [(1, 0, 0, 0), (0, 0, 0, 1)]


def test_pair_clicks_window_edge_is_inclusive():
    records = pair_clicks([Click(5 * NS, "TS_L"), Click(65 * NS, "OD_L")], NOMINAL)
    assert len(records) == 1


def test_pair_clicks_empty():
    with pytest.raises(EmptyTrialError):
        pair_clicks([], NOMINAL)


def test_pair_clicks_requires_sorted_input():
    with pytest.raises(DomainError):
        pair_clicks([Click(15 * NS, "OD_L"), Click(5 * NS, "TS_L")], NOMINAL)


def test_pair_clicks_stage3_carries_od_reading():
    clicks = [Click(2 * NS, "OD", theta=math.pi / 4, phi=0.122), Click(4 * NS, "TS_L")]
    (r,) = pair_clicks(clicks, NOMINAL, stage=3)
    assert r.tuple == (1, 0, math.pi / 4, 0.122)


def test_pair_clicks_deterministic():
    clicks = [Click(t * NS, ch) for t, ch in ((1, "TS_R"), (3, "OD_R"), (90, "TS_L"),
                                              (95, "OD_L"))]
    assert pair_clicks(clicks, NOMINAL) == pair_clicks(list(clicks), NOMINAL)


def test_paired_clicks_lie_within_window():
    clicks = [Click(t * NS, ch) for t, ch in ((0, "TS_L"), (59, "OD_L"), (61, "TS_R"),
                                              (119, "OD_R"), (200, "OD_L"))]
    for r in pair_clicks(clicks, NOMINAL):
        times = [t for _, t in r.timestamps]
        assert max(times) - min(times) <= NOMINAL.t_window


@pytest.mark.parametrize("kwargs", [
    dict(stage=1, ts_left=1, ts_right=0, od_left=1, od_right=0, od_theta=0.0),
    dict(stage=2, ts_left=1, ts_right=0, od_left=1, od_right=0),
    dict(stage=2, ts_left=1, ts_right=0, od_theta=0.0, od_phi=0.0),
    dict(stage=3, ts_left=1, ts_right=0, od_theta=0.0),
    dict(stage=1, ts_left=2, ts_right=0, od_left=1, od_right=0),
    dict(stage=4, ts_left=1, ts_right=0),
    dict(stage=1, ts_left=1, ts_right=0, od_left=1, od_right=0, timestamps=(("TS_L", -1.0),)),
])
def test_malformed_records(kwargs):
    with pytest.raises(DomainError):
        ClickRecord(**kwargs)
