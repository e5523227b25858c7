"""Command-line driver.

Subcommands::

    optimize           --config run.ini [--out DIR] [--seed N]
    spectrum           --pulses pulses.csv [--out DIR]
    spin-transfer      --config run.ini --pulses pulses.csv [--out DIR]
    adiabatic-compare  --pulses pulses.csv

Exit codes: 0 success, 1 usage or input error, 2 computation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .analysis import adiabatic_compare, pulse_spectrum
from .config import ConfigError, RunConfig, load_config
from .lie_poisson import IntegrationDiverged
from .optimizer import OptimizationFailed, optimize
from .propagator import PiecewiseControls, populations, propagate
from .spin_sim import hyperfine_transfer

log = logging.getLogger("shuttle_control")

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2

CONTROL_COLUMNS = {
    ("omega12", "omega23"): "donor_chain",
    ("mu_L", "mu_R"): "triple_dot",
}


class InputError(ValueError):
    pass


# -- file helpers ----------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path: Path, header, columns) -> None:
    rows = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror})") from None
    if not rows:
        raise InputError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    data = []
    for n, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise InputError(f"{path}:{n}: expected {len(header)} fields, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError:
            raise InputError(f"{path}:{n}: non-numeric field") from None
    return header, np.array(data, dtype=float).reshape(len(data), len(header))


def read_pulses(path) -> tuple[str, list[str], np.ndarray, float]:
    """Return ``(system, control_names, values (N, p), dt)`` from a pulses file."""
    header, data = read_csv(path)
    if not header or header[0] != "t_ns":
        raise InputError(f"{path}:1: first column must be t_ns")
    names = tuple(header[1:])
    if names not in CONTROL_COLUMNS:
        raise InputError(f"{path}:1: unrecognised control columns {list(names)}")
    if len(data) < 2:
        raise InputError(f"{path}: need at least two slices")
    t = data[:, 0]
    dt = t[1] - t[0]
    if not (dt > 0 and t[0] == 0.0) or not np.allclose(np.diff(t), dt, rtol=1e-9, atol=0):
        raise InputError(f"{path}: t_ns must start at 0 and be uniformly spaced")
    values = data[:, 1:]
    if not np.all(np.isfinite(values)):
        raise InputError(f"{path}: non-finite control values")
    return CONTROL_COLUMNS[names], list(names), values, float(dt)


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _output_dir(args, run: RunConfig | None = None) -> Path:
    if args.out is not None:
        out = Path(args.out)
    elif run is not None:
        out = run.output_dir
    else:
        out = Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands -----------------------------------------------------------


def cmd_optimize(args) -> int:
    if args.config is None:
        raise InputError("optimize requires --config")
    run = load_config(args.config, seed=args.seed)
    model = run.model()
    try:
        result = optimize(model, run.optimizer)
    except OptimizationFailed as exc:
        log.error("%s", exc)
        return EXIT_FAILED
    out = _output_dir(args, run)
    controls = result.controls
    states = propagate(run.optimizer.rho0, controls)
    pops = populations(states)
    if "csv" in run.formats:
        write_csv(out / "pulses.csv", ["t_ns", *model.control_names],
                  [controls.times, *controls.values.T])
        write_csv(out / "populations.csv", ["t_ns", "rho11", "rho22", "rho33"],
                  [np.arange(len(pops)) * controls.dt, *pops.T])
    summary = {
        "system": run.system,
        "fidelity": result.fidelity,
        "fluence": result.fluence,
        "phi0_star": result.phi0_star.tolist(),
        "converged": result.converged,
        "reason": result.reason,
        "restart_index": result.restart_index,
        "seed": run.optimizer.seed,
        "max_abs_control": float(np.max(np.abs(controls.values))),
        "history": [list(h) for h in result.history],
        "restarts": result.restarts,
        "config": run.echo(),
    }
    if "json" in run.formats:
        _dump_json(out / "summary.json", summary)
    print(f"fidelity {result.fidelity:.6f} ({result.reason}) after "
          f"{result.history[-1][0]} iterations, restart {result.restart_index}")
    if not result.converged:
        log.error("optimizer stopped without converging (%s)", result.reason)
        return EXIT_FAILED
    return EXIT_OK


def cmd_spectrum(args) -> int:
    if args.pulses is None:
        raise InputError("spectrum requires --pulses")
    _, names, values, dt = read_pulses(args.pulses)
    spec = pulse_spectrum(values, dt)
    out = _output_dir(args)
    columns = [spec.freq_ghz]
    header = ["freq_GHz"]
    for i, name in enumerate(names):
        header += [f"{name}_mag", f"{name}_phase"]
        columns += [spec.magnitude[:, i], spec.phase[:, i]]
    write_csv(out / "spectrum.csv", header, columns)
    report = {
        "dominant_bin": spec.dominant_bin,
        "dominant_freq_GHz": spec.dominant_frequency,
        "bin_width_GHz": float(spec.freq_ghz[1]) if len(spec.freq_ghz) > 1 else None,
    }
    if len(names) == 2:
        report["relative_phase_rad"] = spec.relative_phase(0, 1)
    _dump_json(out / "spectrum.json", report)
    line = f"dominant component {spec.dominant_frequency:.6g} GHz (bin {spec.dominant_bin})"
    if "relative_phase_rad" in report:
        line += f", phase {names[1]} - {names[0]} = {report['relative_phase_rad']:.4f} rad"
    print(line)
    return EXIT_OK


def cmd_spin_transfer(args) -> int:
    if args.config is None or args.pulses is None:
        raise InputError("spin-transfer requires --config and --pulses")
    run = load_config(args.config, seed=args.seed)
    if run.system != "donor_chain":
        raise InputError("spin-transfer needs a donor_chain system")
    if run.spin is None:
        raise InputError(f"{args.config}: spin-transfer needs a [spin] section")
    system, _, values, dt = read_pulses(args.pulses)
    if system != "donor_chain":
        raise InputError(f"{args.pulses}: spin-transfer needs donor-chain pulses")
    model = run.model()
    controls = PiecewiseControls(values, dt, model)
    delta = run.parameters["delta"]
    out = _output_dir(args, run)
    table = []
    for field_gauss in run.spin.fields:
        cfg = run.spin.spin_config(field_gauss)
        for r in hyperfine_transfer(controls, cfg, delta):
            name = f"spin_{r.label}_{field_gauss:g}.csv"
            write_csv(out / name, ["t_ns", "site1_pop", "site3_pop", "D"],
                      [r.times, r.site1, r.site3, r.distance])
            table.append({
                "field_gauss": field_gauss,
                "label": r.label,
                "energy_meV": r.eigenstate.energy,
                "state": r.eigenstate.vector.tolist(),
                "anti_aligned_coefficients": list(r.eigenstate.anti_aligned_coefficients),
                "spatial_fidelity": r.spatial_fidelity,
                "final_D": float(r.distance[-1]),
            })
            print(f"B = {field_gauss:g} G  {r.label:<10s}  spatial fidelity {r.spatial_fidelity:.4f}"
                  f"  D(T) = {r.distance[-1]:.4f}")
    _dump_json(out / "table1.json", table)
    return EXIT_OK


def cmd_adiabatic_compare(args) -> int:
    if args.pulses is None:
        raise InputError("adiabatic-compare requires --pulses")
    system, _, values, dt = read_pulses(args.pulses)
    if system != "donor_chain":
        raise InputError(f"{args.pulses}: adiabatic-compare needs donor-chain pulses")
    cmp = adiabatic_compare(values, len(values) * dt)
    if math.isinf(cmp.t_adiabatic):
        log.warning("pulse is identically zero; adiabatic time is infinite")
    print(f"Omega_max = {cmp.omega_max:.6g} meV")
    print(f"t_adiabatic = {cmp.t_adiabatic:.6g} ns")
    print(f"ratio t_adiabatic / T = {cmp.ratio:.6g}")
    return EXIT_OK


COMMANDS = {
    "optimize": cmd_optimize,
    "spectrum": cmd_spectrum,
    "spin-transfer": cmd_spin_transfer,
    "adiabatic-compare": cmd_adiabatic_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shuttle-control", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path)
        p.add_argument("--pulses", type=Path)
        p.add_argument("--out", type=Path)
        p.add_argument("--seed", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationDiverged, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
