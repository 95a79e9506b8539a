"""Command-line front end: ``sgisim run | feasibility | taxonomy | classify``.

Exit codes: 0 success, 1 usage or parse error, 2 runtime or I/O error,
3 audit failure (forbidden outcomes present).
"""

from __future__ import annotations

import csv
import io
import os
import sys
from dataclasses import replace
from pathlib import Path

import click

from .config import ConfigError, parse_angle, parse_config, parse_quantity
from .physics import PRESETS, PhysicsParams, acceleration_time, em_phase_shift, sweep
from .runner import exit_code, timed_run, write_outputs
from .sensors import ClickRecord, SensorTimings, validate_timing
from .stages import (DEFAULT_DELTA_PHI, Flag, classify, enumerate_taxonomy, format_tuple,
                     taxonomy_csv)
from .state import DomainError

OUTPUT_DIR_ENV = "SGISIM_OUTPUT_DIR"

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_AUDIT = 0, 1, 2, 3

PHYSICS_DIMENSIONS = {"q1": "charge", "q2": "charge", "d": "length", "delta_x": "length",
                      "tau": "time", "m": "mass", "grad_b": "gradient", "dt_ref": "time",
                      "m_ref": "mass"}
TIMING_DIMENSIONS = {"tau_od": "time", "tau_ts": "time", "t_window": "time",
                     "rep_rate": "frequency", "gap_transit": "time"}


def _table(rows, headers) -> str:
    rows = [tuple(str(c) for c in r) for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)


def _csv(rows, headers) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(headers)
    writer.writerows(rows)
    return buf.getvalue()


def _quantity_option(dimension):
    def convert(ctx, param, value):
        if value is None:
            return None
        try:
            return parse_quantity(value, dimension)
        except ValueError as exc:
            raise click.BadParameter(str(exc)) from None
    return convert


@click.group()
@click.version_option(package_name="artifact")
def cli():
    """Dual-sensing Stern-Gerlach interferometer simulator."""


@cli.command("run")
@click.argument("config_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None,
              help="Override the config's master seed.")
@click.option("--workers", type=click.IntRange(min=1), default=None,
              help="Worker processes; never changes the report.")
@click.option("--output", "output", type=click.Path(dir_okay=False, path_type=Path),
              default=None, help="Report path (default: config [output] path or "
              f"${OUTPUT_DIR_ENV}/<config>.report.<format>).")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default=None)
def run_cmd(config_path, seed, workers, output, fmt):
    """Simulate, classify and audit the trials described by CONFIG_PATH."""
    text = config_path.read_text()  # OSError maps to the I/O exit code
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        raise click.UsageError(f"{config_path}: {exc}") from None
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    fmt = fmt or cfg.output_format
    if output is None:
        if cfg.output_path is not None:
            output = Path(cfg.output_path)
        else:
            out_dir = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
            output = out_dir / f"{config_path.stem}.report.{fmt}"
    report, meta = timed_run(cfg, workers)
    path, sidecar = write_outputs(report, output, fmt, meta)
    click.echo(_table(report.histogram.items(), ("label", "count")))
    if report.born_test is not None:
        b = report.born_test
        click.echo(f"Born rule: chi2={b.chi2:.4g} dof={b.dof} p={b.p:.4g}")
    audit = report.audit
    click.echo(f"audit: forbidden={audit.forbidden} "
               f"probability_violations={audit.probability_violations} "
               f"{'pass' if audit.passed else 'FAIL'}")
    click.echo(f"wrote {path} and {sidecar}")
    return exit_code(report)


def _feasibility_rows(params: PhysicsParams, presets: dict, timings: SensorTimings,
                      ratio: float):
    rows = [("acceleration_time", f"{acceleration_time(params.m, (params.dt_ref, params.m_ref)):.4g}",
             "s", f"m={params.m:.6g} kg")]
    for name, p in presets.items():
        for mode in ("verbatim", "exact-denominator"):
            rows.append((f"delta_phi[{name},{mode}]", f"{em_phase_shift(p, mode):.4g}", "rad",
                         f"q1q2={p.q1 * p.q2:.4g} C^2"))
    report = validate_timing(timings, ratio)
    for check in report.checks:
        rows.append((f"timing: {check.name}", "pass" if check.passed else "fail", "",
                     f"{check.lhs:.3g} vs {check.rhs:.3g}"))
    rows.append(("timing", "pass" if report.passed else "fail", "", "all constraints"))
    return rows


@cli.command()
@click.option("--q1", callback=_quantity_option("charge"), help="Charge of the split particle, e.g. -1e.")
@click.option("--q2", callback=_quantity_option("charge"), help="Charge of the neighbour, e.g. -5e.")
@click.option("--d", callback=_quantity_option("length"), help="Separation, e.g. 100um.")
@click.option("--delta-x", callback=_quantity_option("length"), help="Branch separation.")
@click.option("--tau", callback=_quantity_option("time"), help="Interaction time.")
@click.option("--m", callback=_quantity_option("mass"), help="Particle mass (default electron).")
@click.option("--dt-ref", callback=_quantity_option("time"))
@click.option("--m-ref", callback=_quantity_option("mass"))
@click.option("--tau-od", callback=_quantity_option("time"))
@click.option("--tau-ts", callback=_quantity_option("time"))
@click.option("--t-window", callback=_quantity_option("time"))
@click.option("--rep-rate", callback=_quantity_option("frequency"))
@click.option("--gap-transit", callback=_quantity_option("time"))
@click.option("--window-period-ratio", type=float, default=100.0, show_default=True)
@click.option("--sweep", "sweep_spec", default=None, help="FIELD=v1,v2,... e.g. d=50um,100um")
@click.option("--csv", "as_csv", is_flag=True, help="Machine-readable output.")
def feasibility(sweep_spec, as_csv, window_period_ratio, **opts):
    """Acceleration time, EM phase shift and timing checks."""
    given = {k: v for k, v in opts.items() if v is not None}
    phys = {k: v for k, v in given.items() if k in PHYSICS_DIMENSIONS}
    timing = {k: v for k, v in given.items() if k in TIMING_DIMENSIONS}
    try:
        timings = SensorTimings(**timing)
        params = replace(PhysicsParams(), **phys)
        geometry = {k: v for k, v in phys.items() if k not in ("q1", "q2")}
        if "q1" in phys or "q2" in phys:
            presets = {"custom": params}
        else:
            presets = {name: replace(p, **geometry) for name, p in PRESETS.items()}
    except DomainError as exc:
        raise click.UsageError(str(exc)) from None

    if sweep_spec:
        field, _, values = sweep_spec.partition("=")
        field = field.strip().replace("-", "_")
        if field not in PHYSICS_DIMENSIONS or not values:
            raise click.UsageError(f"--sweep expects FIELD=v1,v2 with FIELD in "
                                   f"{', '.join(PHYSICS_DIMENSIONS)}")
        try:
            parsed = [parse_quantity(v, PHYSICS_DIMENSIONS[field]) for v in values.split(",")]
            rows = sweep(params, field, parsed)
        except (ValueError, DomainError) as exc:
            raise click.UsageError(str(exc)) from None
        headers = ("field", "value", "delta_phi_verbatim", "delta_phi_exact", "delta_t",
                   "valid", "error")
        out = [(r.field, repr(r.value), "" if r.delta_phi is None else repr(r.delta_phi),
                "" if r.delta_phi_exact is None else repr(r.delta_phi_exact),
                "" if r.delta_t is None else repr(r.delta_t), str(r.valid).lower(),
                r.error or "") for r in rows]
        click.echo(_csv(out, headers), nl=False)
        return EXIT_OK

    rows = _feasibility_rows(params, presets, timings, window_period_ratio)
    headers = ("quantity", "value", "unit", "note")
    click.echo(_csv(rows, headers) if as_csv else _table(rows, headers), nl=not as_csv)
    return EXIT_OK


@cli.command()
@click.option("--stage", type=click.IntRange(1, 3), required=True)
@click.option("--delta-phi", type=float, default=DEFAULT_DELTA_PHI, show_default=True,
              help="Phase used for the stage-3 'with phase' rows.")
@click.option("--csv", "as_csv", is_flag=True)
def taxonomy(stage, delta_phi, as_csv):
    """Print every outcome of a stage with its label and verdicts."""
    rows = enumerate_taxonomy(stage, delta_phi)
    if as_csv:
        click.echo(taxonomy_csv(rows), nl=False)
        return EXIT_OK
    table = [(r.tuple_text, r.outcome.label.value, r.outcome.ci.value, r.outcome.mwi.value,
              r.outcome.bhsi.value, ",".join(sorted(f.value for f in r.outcome.flags)) or "-")
             for r in rows]
    click.echo(_table(table, ("tuple", "label", "CI", "MWI", "BHSI", "flags")))
    return EXIT_OK


def _record_from_row(row: dict, stage: int) -> ClickRecord:
    def bit(key):
        return int(row[key])
    if stage == 1:
        return ClickRecord(1, bit("ts_left"), bit("ts_right"),
                           od_left=bit("od_left"), od_right=bit("od_right"))
    phi = parse_angle(row["od_phi"]) if stage == 3 else None
    return ClickRecord(stage, bit("ts_left"), bit("ts_right"),
                       od_theta=parse_angle(row["od_theta"]), od_phi=phi)


@cli.command("classify")
@click.argument("input_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--stage", type=click.IntRange(1, 3), required=True)
@click.option("--expected-phase", type=float, default=DEFAULT_DELTA_PHI, show_default=True)
@click.option("--phase-tolerance", type=float, default=None)
def classify_cmd(input_path, stage, expected_phase, phase_tolerance):
    """Label raw reading tuples from a CSV file.

    Columns: ts_left, ts_right and od_left, od_right (stage 1), od_theta
    (stages 2-3) and od_phi (stage 3).  Angles accept pi fractions.
    """
    text = input_path.read_text()
    rows_out, forbidden = [], 0
    for lineno, row in enumerate(csv.DictReader(io.StringIO(text)), 2):
        try:
            record = _record_from_row(row, stage)
            outcome = classify(record, expected_phase, phase_tolerance)
            tuple_text = format_tuple(record, expected_phase)
        except (KeyError, TypeError, ValueError) as exc:
            raise click.UsageError(f"{input_path}:{lineno}: {exc}") from None
        forbidden += Flag.PHYSICAL in outcome.flags
        rows_out.append((tuple_text, outcome.label.value, outcome.ci.value, outcome.mwi.value,
                         outcome.bhsi.value, "|".join(sorted(f.value for f in outcome.flags))))
    click.echo(_csv(rows_out, ("tuple", "label", "ci_verdict", "mwi_verdict", "bhsi_verdict",
                               "flags")), nl=False)
    return EXIT_AUDIT if forbidden else EXIT_OK


def main(argv=None) -> int:
    try:
        rv = cli.main(args=argv, prog_name="sgisim", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_RUNTIME
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_RUNTIME
    except (DomainError, RuntimeError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_RUNTIME
    return rv if isinstance(rv, int) else EXIT_OK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
