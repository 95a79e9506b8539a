"""Experiment configuration files.

The format is line oriented::

    # comment
    [experiment]
    stage = 1
    engine = CI
    trials = 1000000
    seed = 42

    [initial]
    theta = pi/4

Values may carry unit suffixes (``10ns``, ``100um``, ``-5e`` for charges) and
angles may be written as fractions of pi.  Errors name the line and key.
"""

from __future__ import annotations

import hashlib
import math
import re
from decimal import Decimal
from dataclasses import dataclass, field, fields
from statistics import NormalDist

from .engines import RETRO_MODES, BhsiParams, EngineKind
from .physics import ELECTRON_MASS, ELEMENTARY_CHARGE, PHASE_MODES, PhysicsParams
from .sensors import WINDOW_PERIOD_RATIO, SensorTimings, validate_timing
from .stages import StageConfig
from .state import DomainError, SpinQubit, wrap_phase
from .stats import EQUIVALENCE_ALPHA, WILSON_Z95

UNITS = {
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "μs": 1e-6, "ns": 1e-9, "ps": 1e-12},
    "length": {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "μm": 1e-6, "nm": 1e-9},
    "frequency": {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9},
    "charge": {"c": 1.0, "e": ELEMENTARY_CHARGE},
    "mass": {"kg": 1.0, "g": 1e-3, "me": ELECTRON_MASS},
    "gradient": {"t/m": 1.0},
}

_NUMBER_RE = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*(.*?)\s*$")
_BARE_UNIT_RE = re.compile(r"^\s*([+-]?)\s*([^\d\s.+-][^\s]*)\s*$")
_PI_RE = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)?)\s*\*?\s*(?:pi|π)\s*(?:/\s*(\d+(?:\.\d+)?))?\s*$")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


def parse_quantity(text: str, dimension: str) -> float:
    """Parse ``'10ns'``, ``'1e-14 kg'`` or a bare SI number."""
    m = _NUMBER_RE.match(text) or _BARE_UNIT_RE.match(text)
    if not m:
        raise ValueError(f"not a number: {text!r}")
    number, unit = m.group(1), m.group(2)
    if number in ("", "+", "-"):
        number += "1"  # "-e" means one negative elementary charge
    if not unit:
        return float(number)
    table = UNITS[dimension]
    key = unit if unit in table else unit.lower()
    if key not in table:
        raise ValueError(f"unit {unit!r} is not a {dimension} unit ({', '.join(table)})")
    # Decimal keeps "100um" at exactly 1e-4 instead of 100 * 1e-6.
    return float(Decimal(number) * Decimal(repr(table[key])))


def parse_angle(text: str) -> float:
    """Radians from ``'pi/4'``, ``'3pi/4'``, ``'2*pi/3'`` or a decimal."""
    m = _PI_RE.match(text)
    if m:
        coeff = m.group(1)
        factor = 1.0 if coeff in (None, "", "+") else (-1.0 if coeff == "-" else float(coeff))
        denom = float(m.group(2)) if m.group(2) else 1.0
        return factor * math.pi / denom
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"angle must be finite: {text!r}")
    return value


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int(text: str) -> int:
    value = float(text) if re.search(r"[eE.]", text) else int(text)
    if value != int(value):
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _choice(*options):
    def parse(text):
        for opt in options:
            if text.strip().lower() == opt.lower():
                return opt
        raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
    return parse


def _quantity(dimension):
    return lambda text: parse_quantity(text, dimension)


# section -> key -> parser
SCHEMA = {
    "experiment": {
        "stage": _parse_int,
        "engine": _choice(*(k.value for k in EngineKind)),
        "trials": _parse_int,
        "seed": _parse_int,
        "ts_inserted": _parse_bool,
        "workers": _parse_int,
    },
    "initial": {"theta": parse_angle, "phi": parse_angle},
    "timings": {
        "tau_od": _quantity("time"),
        "tau_ts": _quantity("time"),
        "t_window": _quantity("time"),
        "rep_rate": _quantity("frequency"),
        "gap_transit": _quantity("time"),
        "window_period_ratio": float,
    },
    "bhsi": {
        "p_delayed": float,
        "p_uncommitted": float,
        "p_double_ts": float,
        "p_recohere": float,
        "retrocausal_mode": _choice(*RETRO_MODES),
    },
    "physics": {
        "q1": _quantity("charge"),
        "q2": _quantity("charge"),
        "d": _quantity("length"),
        "delta_x": _quantity("length"),
        "tau": _quantity("time"),
        "m": _quantity("mass"),
        "grad_b": _quantity("gradient"),
        "dt_ref": _quantity("time"),
        "m_ref": _quantity("mass"),
        "phase_mode": _choice(*PHASE_MODES),
    },
    "stats": {
        "confidence": float,
        "equivalence_alpha": float,
        "phase_tolerance": parse_angle,
    },
    "output": {"path": str, "format": _choice("json", "csv")},
}

REQUIRED = {"experiment": ("stage", "engine", "trials", "seed"), "initial": ("theta",),
            "physics": ("q1", "q2", "d", "delta_x", "tau")}


@dataclass(frozen=True)
class ExperimentConfig:
    stage: int
    engine: EngineKind
    initial: SpinQubit
    trials: int
    seed: int
    bhsi: BhsiParams | None = None
    timings: SensorTimings = field(default_factory=SensorTimings)
    physics: PhysicsParams | None = None
    ts_inserted: bool = True
    phase_mode: str = "verbatim"
    window_period_ratio: float = WINDOW_PERIOD_RATIO
    confidence: float = 0.95
    equivalence_alpha: float = EQUIVALENCE_ALPHA
    phase_tolerance: float | None = None
    workers: int = 1
    output_path: str | None = None
    output_format: str = "json"

    @property
    def stage_config(self) -> StageConfig:
        return StageConfig(self.stage, self.initial, self.timings, self.physics,
                           self.ts_inserted, self.phase_mode)

    @property
    def z_score(self) -> float:
        if self.confidence == 0.95:
            return WILSON_Z95
        return NormalDist().inv_cdf(0.5 + self.confidence / 2)

    def digest(self) -> str:
        """Hash of everything that determines the report body."""
        text = dump_config(self, include_runtime=False)
        return hashlib.sha256(text.encode()).hexdigest()


def _read_sections(text: str):
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    headers: dict[str, int] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("malformed section header", lineno)
            current = line[1:-1].strip().lower()
            if current not in SCHEMA:
                raise ConfigError(f"unknown section [{current}]", lineno)
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", lineno)
            sections[current] = {}
            headers[current] = lineno
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno)
        if current is None:
            raise ConfigError("key outside of any section", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in SCHEMA[current]:
            raise ConfigError(f"unknown key in [{current}]", lineno, key)
        if key in sections[current]:
            raise ConfigError(f"duplicate key in [{current}]", lineno, key)
        sections[current][key] = (value, lineno)
    return sections, headers


def parse_config(text: str) -> ExperimentConfig:
    sections, headers = _read_sections(text)
    values: dict[str, dict[str, object]] = {}
    for name, entries in sections.items():
        values[name] = {}
        for key, (raw, lineno) in entries.items():
            try:
                values[name][key] = SCHEMA[name][key](raw)
            except (ValueError, DomainError) as exc:
                raise ConfigError(str(exc), lineno, key) from None
        for key in REQUIRED.get(name, ()):
            if key not in entries:
                raise ConfigError(f"missing required key in [{name}]", headers[name], key)
    for name in ("experiment", "initial"):
        if name not in sections:
            raise ConfigError(f"missing required section [{name}]")

    exp = values["experiment"]

    def line_of(section, key=None):
        if key in sections.get(section, {}):
            return sections[section][key][1]
        return headers.get(section)

    def build(section, key, factory):
        try:
            return factory()
        except DomainError as exc:
            raise ConfigError(str(exc), line_of(section, key), key) from None

    stage = exp["stage"]
    if stage not in (1, 2, 3):
        raise ConfigError("stage must be 1, 2 or 3", line_of("experiment", "stage"), "stage")
    engine = EngineKind(exp["engine"])
    if engine is EngineKind.BHSI and "bhsi" not in sections:
        raise ConfigError("engine BHSI requires a [bhsi] block", line_of("experiment", "engine"),
                          "engine")
    if engine is not EngineKind.BHSI and "bhsi" in sections:
        raise ConfigError(f"[bhsi] block given for engine {engine.value}", headers["bhsi"])
    if stage == 3 and "physics" not in sections:
        raise ConfigError("stage 3 requires a [physics] block", line_of("experiment", "stage"),
                          "stage")
    if stage != 3 and "physics" in sections:
        raise ConfigError(f"stage {stage} takes no [physics] block", headers["physics"])
    trials = exp["trials"]
    if trials <= 0:
        raise ConfigError("trials must be positive", line_of("experiment", "trials"), "trials")
    seed = exp["seed"]
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be a 64-bit unsigned integer",
                          line_of("experiment", "seed"), "seed")
    workers = exp.get("workers", 1)
    if workers < 1:
        raise ConfigError("workers must be at least 1", line_of("experiment", "workers"),
                          "workers")

    init = values["initial"]
    phi = init.get("phi", 0.0)
    if math.isfinite(phi):
        phi = wrap_phase(phi)
    initial = build("initial", "theta", lambda: SpinQubit(init["theta"], phi))

    timing_values = dict(values.get("timings", {}))
    ratio = timing_values.pop("window_period_ratio", WINDOW_PERIOD_RATIO)
    timings = build("timings", None, lambda: SensorTimings(**timing_values))
    report = validate_timing(timings, ratio)
    if not report.passed:
        raise ConfigError(f"timing constraints fail: {', '.join(report.failures())}",
                          line_of("timings"))

    bhsi = None
    if "bhsi" in values:
        bhsi = build("bhsi", None, lambda: BhsiParams(**values["bhsi"]))

    physics, phase_mode = None, "verbatim"
    if "physics" in values:
        phys = dict(values["physics"])
        phase_mode = phys.pop("phase_mode", "verbatim")
        physics = build("physics", None, lambda: PhysicsParams(**phys))

    stats = values.get("stats", {})
    confidence = stats.get("confidence", 0.95)
    if not 0 < confidence < 1:
        raise ConfigError("confidence must lie in (0, 1)", line_of("stats", "confidence"),
                          "confidence")
    output = values.get("output", {})

    cfg = build("experiment", None, lambda: ExperimentConfig(
        stage=stage, engine=engine, initial=initial, trials=trials, seed=seed, bhsi=bhsi,
        timings=timings, physics=physics, ts_inserted=exp.get("ts_inserted", True),
        phase_mode=phase_mode, window_period_ratio=ratio, confidence=confidence,
        equivalence_alpha=stats.get("equivalence_alpha", EQUIVALENCE_ALPHA),
        phase_tolerance=stats.get("phase_tolerance"), workers=workers,
        output_path=output.get("path"), output_format=output.get("format", "json"),
    ))
    try:
        stage_cfg = cfg.stage_config
        if stage == 3:
            _ = stage_cfg.delta_phi
    except DomainError as exc:
        raise ConfigError(str(exc), line_of("experiment", "ts_inserted")) from None
    return cfg


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "value"):
        return value.value
    return str(value)


def dump_config(cfg: ExperimentConfig, include_runtime: bool = True) -> str:
    """Canonical text form; ``parse_config(dump_config(c)) == c``.

    ``include_runtime=False`` drops settings that cannot change the report
    body (worker count, output location).
    """
    out = ["[experiment]", f"stage = {cfg.stage}", f"engine = {cfg.engine.value}",
           f"trials = {cfg.trials}", f"seed = {cfg.seed}",
           f"ts_inserted = {_fmt(cfg.ts_inserted)}"]
    if include_runtime:
        out.append(f"workers = {cfg.workers}")
    out += ["", "[initial]", f"theta = {cfg.initial.theta!r}", f"phi = {cfg.initial.phi!r}"]
    out += ["", "[timings]"]
    out += [f"{f.name} = {getattr(cfg.timings, f.name)!r}" for f in fields(SensorTimings)]
    out.append(f"window_period_ratio = {cfg.window_period_ratio!r}")
    if cfg.bhsi is not None:
        out += ["", "[bhsi]"]
        out += [f"{f.name} = {_fmt(getattr(cfg.bhsi, f.name))}" for f in fields(BhsiParams)]
    if cfg.physics is not None:
        out += ["", "[physics]"]
        out += [f"{f.name} = {getattr(cfg.physics, f.name)!r}" for f in fields(PhysicsParams)]
        out.append(f"phase_mode = {cfg.phase_mode}")
    out += ["", "[stats]", f"confidence = {cfg.confidence!r}",
            f"equivalence_alpha = {cfg.equivalence_alpha!r}"]
    if cfg.phase_tolerance is not None:
        out.append(f"phase_tolerance = {cfg.phase_tolerance!r}")
    if include_runtime and cfg.output_path is not None:
        out += ["", "[output]", f"path = {cfg.output_path}", f"format = {cfg.output_format}"]
    return "\n".join(out) + "\n"
