"""File-driven entry point: JSON configs in, JSON/CSV reports out.

Exit codes: 0 success, 2 invalid config or failed validation, 3 convergence
failure (or too many per-energy failures in a band scan). All outputs are
written atomically (temp file + rename) and carry the sha256 fingerprint of
the config file they were produced from, so identical configs yield
byte-identical artifacts.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile

import numpy as np

from .bloch import (NonlocalPotential1D, band_scan, detect_interior_extrema,
                    validate_potential)
from .builtins import CATALOG
from .grid import GridError, PeriodicGrid, StateSegment
from .monodromy import ConvergenceError, floquet_spectrum, verify_floquet_form
from .perturbation import LimitCycle, linearize, stability_verdict
from .system import (InvalidSystemError, LinearMemorySystem, DelayTap,
                     difference_kernel, tabulated_coefficient, validate_system)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NO_CONVERGENCE = 3


class ConfigError(ValueError):
    pass


def _load_config(path: str):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    try:
        cfg = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError(f"config root must be an object, got {type(cfg).__name__}")
    return cfg, hashlib.sha256(raw).hexdigest()


def _require(cfg: dict, key: str, where: str):
    if key not in cfg:
        raise ConfigError(f"missing field '{key}' in {where}")
    return cfg[key]


def _atomic_write(out_dir: str, name: str, text: str):
    os.makedirs(out_dir, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, os.path.join(out_dir, name))
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(out_dir: str, name: str, payload: dict):
    _atomic_write(out_dir, name, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _c2l(z):  # complex -> [re, im] for JSON
    return [float(np.real(z)), float(np.imag(z))]


def _builtin(spec: dict, where: str, expect):
    name = _require(spec, "builtin", where)
    if name not in CATALOG:
        raise ConfigError(f"unknown builtin '{name}' in {where}; "
                          f"choose from {sorted(CATALOG)}")
    params = spec.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError(f"'params' in {where} must be an object")
    try:
        obj, meta = CATALOG[name](**params)
    except TypeError as exc:
        raise ConfigError(f"bad params for builtin '{name}' in {where}: {exc}")
    if not isinstance(obj, expect):
        raise ConfigError(f"builtin '{name}' does not produce a {expect.__name__} "
                          f"(needed in {where})")
    return obj, meta


def _system_from_config(cfg: dict):
    spec = _require(cfg, "system", "config")
    if "builtin" in spec:
        system, meta = _builtin(spec, "system", LinearMemorySystem)
        period = float(spec.get("period", meta.get("period", 1.0)))
        depth = float(spec.get("memory_depth", meta.get("memory_depth", 0.0)))
        return system, period, depth
    dim = int(_require(spec, "dimension", "system"))
    period = float(_require(spec, "period", "system"))
    depth = float(spec.get("memory_depth", 0.0))
    if period <= 0:
        raise ConfigError(f"period must be positive, got {period}")
    if depth < 0:
        raise ConfigError(f"memory_depth must be non-negative, got {depth}")
    table = np.asarray(_require(spec, "coefficient", "system"), dtype=float)
    if table.ndim == 1:
        table = table.reshape(-1, 1, 1)
    if table.ndim != 3 or table.shape[1:] != (dim, dim):
        raise ConfigError(f"coefficient table shape {table.shape} does not match "
                          f"dimension {dim}")
    coefficient = tabulated_coefficient(table, period)
    taps = []
    for i, tap in enumerate(spec.get("delay_taps", [])):
        d = float(_require(tap, "delay", f"delay_taps[{i}]"))
        tt = np.asarray(_require(tap, "coefficient", f"delay_taps[{i}]"), dtype=float)
        if tt.ndim == 1:
            tt = tt.reshape(-1, 1, 1)
        taps.append(DelayTap(d, tabulated_coefficient(tt, period)))
    kernel = None
    kspec = spec.get("kernel")
    if kspec is not None:
        ktype = _require(kspec, "type", "kernel")
        if ktype != "exponential":
            raise ConfigError(f"unsupported kernel type '{ktype}' (only 'exponential')")
        amp = np.asarray(_require(kspec, "amplitude", "kernel"), dtype=float)
        if amp.ndim == 0:
            amp = amp.reshape(1, 1)
        theta = float(_require(kspec, "theta", "kernel"))
        if theta <= 0:
            raise ConfigError("kernel theta must be positive")
        kernel = difference_kernel(lambda u: np.exp(-np.asarray(u) / theta), scale=amp)
    return LinearMemorySystem(dim, coefficient, delay_taps=tuple(taps),
                              kernel=kernel), period, depth


def _grid_from_config(cfg: dict, period: float, depth: float, override_n):
    gspec = cfg.get("grid", {})
    n = int(override_n if override_n else gspec.get("samples_per_period", 256))
    return PeriodicGrid(period, n, depth)


def cmd_analyze(args) -> int:
    cfg, fingerprint = _load_config(args.config)
    system, period, depth = _system_from_config(cfg)
    grid = _grid_from_config(cfg, period, depth, args.grid)
    report = validate_system(system, grid)
    if not report.passed:
        print("validation failed:", "; ".join(report.messages) or "residuals above bound",
              file=sys.stderr)
        return EXIT_INVALID
    tol = float(args.tol if args.tol else cfg.get("tolerance", 1e-4))
    modes = int(cfg.get("modes", 8))
    quadrature = cfg.get("quadrature", "trapezoid")
    dec = floquet_spectrum(system, grid, modes=modes, convergence_tol=tol,
                           quadrature=quadrature)
    ver = verify_floquet_form(system, grid, dec, quadrature=quadrature)
    _write_json(args.out, "spectrum.json", {
        "config_fingerprint": fingerprint,
        "grid": {"period": grid.period, "samples_per_period": grid.samples_per_period,
                 "memory_depth": grid.memory_depth},
        "multipliers": [_c2l(m) for m in dec.multipliers],
        "exponents": [_c2l(e) for e in dec.exponents],
        "converged": [bool(c) for c in dec.converged],
        "p_retained": dec.p_retained,
    })
    buf = io.StringIO()
    writer = csv.writer(buf)
    header = ["sigma"]
    for j in range(len(dec.modes)):
        for c in range(system.dimension):
            header += [f"mode{j}_re{c}", f"mode{j}_im{c}"]
    writer.writerow(header)
    sigmas = np.arange(grid.samples_per_period + 1) * grid.step
    for i, s in enumerate(sigmas):
        row = [f"{s:.12g}"]
        for mode in dec.modes:
            for c in range(system.dimension):
                row += [f"{mode.samples[i, c].real:.12g}",
                        f"{mode.samples[i, c].imag:.12g}"]
        writer.writerow(row)
    _atomic_write(args.out, "modes.csv", buf.getvalue())
    _write_json(args.out, "verify.json", {
        "config_fingerprint": fingerprint,
        "shift_residual": ver.shift_residual,
        "mode_periodicity_residuals": list(ver.mode_periodicity_residuals),
        "operator_residuals": list(ver.operator_residuals),
        "max_residual": ver.max_residual,
    })
    return EXIT_OK


def _read_cycle_csv(path: str, dim: int):
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise ConfigError(f"cannot read cycle file {path}: {exc}")
    if rows and not rows[0][0].replace(".", "").replace("-", "").replace("e", "").isdigit():
        rows = rows[1:]  # header line
    try:
        data = np.asarray([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise ConfigError(f"non-numeric entry in cycle file {path}: {exc}")
    if data.ndim != 2 or data.shape[1] != dim + 1:
        raise ConfigError(f"cycle file {path} has {data.shape[1] if data.ndim == 2 else '?'} "
                          f"columns, expected t plus {dim} state columns")
    return data[:, 0], data[:, 1:]


def cmd_stability(args) -> int:
    cfg, fingerprint = _load_config(args.config)
    spec = _require(cfg, "system", "config")
    nl, meta = _builtin(spec, "system", object)
    from .perturbation import NonlinearMemorySystem

    if not isinstance(nl, NonlinearMemorySystem):
        raise ConfigError("stability requires a nonlinear builtin (e.g. van_der_pol)")
    times, samples = _read_cycle_csv(_require(cfg, "cycle_file", "config"), nl.dimension)
    period = float(cfg.get("period", times[-1] - times[0]))
    cycle = LimitCycle(period, samples, provenance="externally computed",
                       wrap_tol=float(cfg.get("wrap_tol", 1e-6)))
    fd_step = float(cfg.get("fd_step", 1e-6))
    linear = linearize(nl, cycle, fd_step=fd_step)
    grid = _grid_from_config(cfg, period, nl.memory_depth, args.grid)
    tol = float(args.tol if args.tol else cfg.get("tolerance", 1e-4))
    dec = floquet_spectrum(linear, grid, modes=int(cfg.get("modes", 4)),
                           convergence_tol=tol)
    report = stability_verdict(dec, autonomous=bool(cfg.get("autonomous",
                               meta.get("autonomous", False))), cycle=cycle)
    _write_json(args.out, "stability.json", {
        "config_fingerprint": fingerprint,
        "verdict": report.verdict,
        "trivial_multiplier": _c2l(report.trivial_multiplier)
        if report.trivial_multiplier is not None else None,
        "trivial_error": report.trivial_error,
        "decisive_magnitude": report.decisive_magnitude,
        "exponent_classes": [[{"exponent": _c2l(l), "multiplier": _c2l(m)}
                              for l, m in cls] for cls in report.exponent_classes],
        "cycle_period": period,
    })
    return EXIT_OK


def _potential_from_config(cfg: dict) -> NonlocalPotential1D:
    spec = _require(cfg, "potential", "config")
    if "builtin" in spec:
        pot, _ = _builtin(spec, "potential", NonlocalPotential1D)
        return pot
    a = float(_require(spec, "lattice_constant", "potential"))
    local = None
    if "local_table" in spec:
        table = np.asarray(spec["local_table"], dtype=float)
        if table.ndim != 1 or len(table) < 4:
            raise ConfigError("local_table must be a flat list of at least 4 samples")
        ev = tabulated_coefficient(table, a)
        local = lambda x: float(ev(x)[0, 0])
    return NonlocalPotential1D(a, local=local)


def cmd_bands(args) -> int:
    cfg, fingerprint = _load_config(args.config)
    pot = _potential_from_config(cfg)
    if pot.kernel is not None or pot.local is not None:
        rep = validate_potential(pot)
        if not rep.passed:
            print(f"potential validation failed: local {rep.local_residual:.2e}, "
                  f"kernel {rep.kernel_residual:.2e}, symmetry {rep.symmetry_residual:.2e}",
                  file=sys.stderr)
            return EXIT_INVALID
    espec = _require(cfg, "energies", "config")
    count = int(_require(espec, "count", "energies"))
    if count < 1:
        raise ConfigError("energy count must be at least 1")
    energies = np.linspace(float(_require(espec, "min", "energies")),
                           float(_require(espec, "max", "energies")), count)
    if energies.size > 1 and energies[0] >= energies[-1]:
        raise ConfigError("energy range must be ascending")
    gspec = cfg.get("grid", {})
    n = int(args.grid if args.grid else gspec.get("samples_per_period", 64))
    grid = PeriodicGrid(pot.lattice_constant, n, 0.0)
    unit_tol = float(args.tol if args.tol else cfg.get("unit_tol", 1e-3))
    diagram = band_scan(pot, energies, grid, unit_tol=unit_tol,
                        jobs=max(1, int(args.jobs or 1)))
    failures = sum(r.failed for r in diagram.records)
    ambiguity = []
    extrema = detect_interior_extrema(diagram, ambiguity_log=ambiguity)
    buf = io.StringIO()
    writer = csv.writer(buf)
    pmax = max((r.p for r in diagram.records), default=0)
    writer.writerow(["E", "p"] + [f"k{i + 1}" for i in range(pmax)])
    for r in diagram.records:
        writer.writerow([f"{r.energy:.12g}", r.p]
                        + [f"{k:.12g}" for k in r.k_values]
                        + [""] * (pmax - len(r.k_values)))
    _atomic_write(args.out, "bands.csv", buf.getvalue())
    _write_json(args.out, "extrema.json", {
        "config_fingerprint": fingerprint,
        "extrema": [{"band_index": e.band_index, "k_star": e.k_star,
                     "energy_star": e.energy_star} for e in extrema],
        "tracing_ambiguities": [{"energy": e, "p": p} for e, p in ambiguity],
    })
    _write_json(args.out, "diagnostics.json", {
        "config_fingerprint": fingerprint,
        "failures": failures,
        "records": [{"energy": r.energy, "p": r.p, "failed": r.failed,
                     "message": r.message,
                     "multiplier_magnitudes": list(r.multiplier_magnitudes)}
                    for r in diagram.records],
    })
    if failures > 0.1 * len(diagram.records):
        print(f"{failures}/{len(diagram.records)} energies failed", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gfloquet",
        description="Floquet analysis of periodic systems with memory and "
                    "Bloch bands for nonlocal potentials.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("analyze", cmd_analyze), ("stability", cmd_stability),
                     ("bands", cmd_bands)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--grid", type=int, default=None,
                       help="override samples per period")
        p.add_argument("--tol", type=float, default=None,
                       help="override the main tolerance of the command")
        p.add_argument("--jobs", type=int, default=None,
                       help="worker threads for scans")
        p.set_defaults(func=fn)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidSystemError, GridError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
