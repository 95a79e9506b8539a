import math
import textwrap

import pytest
from hypothesis import given, settings, strategies as st

from sgisim.config import (
    ConfigError,
    ExperimentConfig,
    dump_config,
    parse_angle,
    parse_config,
    parse_quantity,
)
from sgisim.engines import BhsiParams, EngineKind
from sgisim.physics import ELEMENTARY_CHARGE, PhysicsParams
from sgisim.state import SpinQubit


def cfg(text):
    return parse_config(textwrap.dedent(text))


BASIC = """\
    [experiment]
    stage = 1
    engine = CI
    trials = 1000000
    seed = 42

    [initial]
    theta = pi/4
"""

STAGE3 = """\
    # stage 3, recohere everything
    [experiment]
    stage = 3
    engine = BHSI
    trials = 1e5
    seed = 7

    [initial]
    theta = pi/4
    phi = 0

    [bhsi]
    p_recohere = 1.0   # every un-engaged branch survives
    retrocausal_mode = unitary

    [physics]
    q1 = -1e
    q2 = -5e
    d = 100um
    delta_x = 10 μm
    tau = 100ms

    [timings]
    tau_od = 1ns
    tau_ts = 10ns
    t_window = 60ns
    rep_rate = 1kHz
"""


def test_basic_config():
    c = cfg(BASIC)
    assert c.stage == 1 and c.engine is EngineKind.CI
    assert c.trials == 1_000_000 and c.seed == 42
    assert c.initial == SpinQubit(math.pi / 4, 0.0)
    assert c.bhsi is None and c.physics is None and c.workers == 1


def test_units_and_blocks():
    c = cfg(STAGE3)
    assert c.trials == 100_000
    assert c.bhsi == BhsiParams(p_recohere=1.0)
    assert c.physics == PhysicsParams(q1=-ELEMENTARY_CHARGE, q2=-5 * ELEMENTARY_CHARGE)
    assert c.timings.tau_ts == pytest.approx(10e-9)
    assert c.stage_config.delta_phi == pytest.approx(0.1217, abs=1e-4)


@pytest.mark.parametrize("text, value", [
    ("pi/4", math.pi / 4), ("3pi/4", 3 * math.pi / 4), ("2*pi/3", 2 * math.pi / 3),
    ("pi", math.pi), ("-pi/2", -math.pi / 2), ("0.5", 0.5), ("π/6", math.pi / 6),
])
def test_parse_angle(text, value):
    assert parse_angle(text) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("text, dim, value", [
    ("10ns", "time", 1e-8), ("100 ms", "time", 0.1), ("1e-14 kg", "mass", 1e-14),
    ("1 me", "mass", 9.1093837e-31), ("50MHz", "frequency", 5e7), ("-3e", "charge",
                                                                    -3 * ELEMENTARY_CHARGE),
    ("100µm", "length", 1e-4), ("0.25", "length", 0.25), ("-e", "charge", -ELEMENTARY_CHARGE),
])
def test_parse_quantity(text, dim, value):
    assert parse_quantity(text, dim) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("text, dim", [("10 parsecs", "length"), ("abc", "time"),
                                       ("10ns", "length")])
def test_parse_quantity_errors(text, dim):
    with pytest.raises(ValueError):
        parse_quantity(text, dim)


def _error(text):
    with pytest.raises(ConfigError) as info:
        cfg(text)
    return info.value


def test_bhsi_engine_needs_block():
    err = _error(BASIC.replace("engine = CI", "engine = BHSI"))
    assert "[bhsi]" in str(err) and err.line == 3 and err.key == "engine"


def test_bhsi_block_rejected_for_ci():
    err = _error(BASIC + "\n    [bhsi]\n    p_delayed = 0.1\n")
    assert err.line == 10


def test_physics_block_rejected_in_stage1():
    err = _error(BASIC + "\n    [physics]\n    q1 = -e\n    q2 = -e\n    d = 100um\n"
                 "    delta_x = 10um\n    tau = 100ms\n")
    assert "physics" in str(err) and err.line == 10


def test_stage3_needs_physics():
    err = _error(BASIC.replace("stage = 1", "stage = 3"))
    assert err.key == "stage" and err.line == 2


def test_unknown_key_names_line_and_key():
    err = _error(BASIC + "    colour = blue\n")
    assert (err.line, err.key) == (9, "colour")
    assert "line 9" in str(err) and "colour" in str(err)


def test_missing_required_key():
    err = _error(BASIC.replace("    seed = 42\n", ""))
    assert err.key == "seed" and err.line == 1


def test_missing_section():
    with pytest.raises(ConfigError):
        cfg("[experiment]\nstage = 1\nengine = CI\ntrials = 5\nseed = 1\n")


@pytest.mark.parametrize("old, new, key", [
    ("theta = pi/4", "theta = 2", "theta"),
    ("trials = 1000000", "trials = 0", "trials"),
    ("trials = 1000000", "trials = 1.5", "trials"),
    ("seed = 42", "seed = 18446744073709551616", "seed"),
    ("engine = CI", "engine = Bohm", "engine"),
])
def test_invalid_values(old, new, key):
    err = _error(BASIC.replace(old, new))
    assert err.key == key


def test_timing_constraints_enforced():
    err = _error(STAGE3.replace("tau_od = 1ns", "tau_od = 20ns"))
    assert "tau_od < tau_ts" in str(err) and err.line == 23


def test_control_run_rejected_in_stage1():
    err = _error(BASIC.replace("seed = 42", "seed = 42\n    ts_inserted = false"))
    assert "control" in str(err)


def test_malformed_lines():
    assert _error("[experiment\n").line == 1
    assert _error("[experiment]\nstage 1\n").line == 2
    assert _error("stage = 1\n").line == 1
    assert _error(BASIC + "    [initial]\n").line == 9


def test_round_trip():
    for text in (BASIC, STAGE3):
        c = cfg(text)
        assert parse_config(dump_config(c)) == c


def test_digest_ignores_runtime_settings():
    a = cfg(BASIC)
    b = cfg(BASIC.replace("seed = 42", "seed = 42\n    workers = 8") +
            "\n    [output]\n    path = out.json\n")
    c = cfg(BASIC.replace("seed = 42", "seed = 43"))
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


def test_confidence_sets_z_score():
    assert cfg(BASIC).z_score == 1.959964
    c = cfg(BASIC + "    [stats]\n    confidence = 0.99\n")
    assert c.z_score == pytest.approx(2.5758293, rel=1e-7)


@settings(max_examples=50, deadline=None)
@given(
    st.sampled_from([1, 2, 3]),
    st.floats(0.0, math.pi / 2),
    st.floats(0.0, 2 * math.pi, exclude_max=True),
    st.integers(1, 10 ** 9),
    st.integers(0, 2 ** 64 - 1),
    st.one_of(st.none(), st.builds(BhsiParams, st.floats(0, 0.3), st.floats(0, 0.3),
                                   st.floats(0, 0.3), st.floats(0, 1),
                                   st.sampled_from(["unitary", "erasure"]))),
    st.booleans(),
)
def test_round_trip_property(stage, theta, phi, trials, seed, bhsi, inserted):
    config = ExperimentConfig(
        stage=stage, engine=EngineKind.BHSI if bhsi else EngineKind.MWI,
        initial=SpinQubit(theta, phi), trials=trials, seed=seed, bhsi=bhsi,
        physics=PhysicsParams() if stage == 3 else None,
        ts_inserted=inserted or stage == 1,
    )
    assert parse_config(dump_config(config)) == config
