"""Command-line front end.

    mptwave [--config PATH] [--out DIR] [--workers N] [--verbose] COMMAND

Commands: tensors, sweep, compare-regimes, plotdata CSV.  Exit status is
0 on success, 1 when some frequencies failed, 2 for usage or config errors.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import EPS0, MU0, DomainError, MaterialSpec, ObjectPlacement, Rank2TensorC, Regime
from .fem import SolverParams
from .fields import (BackgroundField, ValidityError, hdelta_alt, hdelta_eddy, hdelta_main, hdelta_quasistatic,
                     hdelta_smallalpha, hdelta_smallk_dielectric, residual_bound)
from .mesh import UnitShape
from .oracles import polya_szego_sphere, sphere_mpt_eddy
from .pipeline import MeshSettings, RunSettings, compute, scalar_tensor
from .tensors import UsageError

log = logging.getLogger("mptwave")

CSV_HEADER = (["omega", "regime"]
              + [f"{part}M{r}{i}" for r in (1, 2, 3) for i in (1, 2, 3) for part in ("Re", "Im")]
              + [f"{part}B{j}{j}" for j in (1, 2, 3) for part in ("Re", "Im")]
              + ["normA", "normRmsi", "oracle_Rem", "oracle_Imm", "residual", "iterations"])

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config

_KEYS = {
    "material": {"mu_r", "mu_star", "eps_rel", "eps_star", "sigma"},
    "object": {"shape", "alpha", "z", "semi_axes", "side"},
    "sweep": {"omega", "omega_min", "omega_max", "points", "spacing"},
    "solver": {"solver", "model", "resolution", "truncation_radius", "boundary_layer", "layer_growth",
               "exterior_stretch", "seed", "tol", "max_iter", "method", "edge_family", "outer_condition"},
    "output": {"csv", "bundle", "report", "series"},
    "points": {"points", "H0"},
}


@dataclass(frozen=True)
class RunConfig:
    material: MaterialSpec
    shape: UnitShape
    placement: ObjectPlacement
    omegas: tuple
    settings: RunSettings
    csv_name: str = "sweep.csv"
    bundle_name: str = "tensors.txt"
    report_name: str = "compare.txt"
    series: tuple = ("ReM11", "ImM11")
    points: tuple = ()
    H0: tuple = (0.0, 0.0, 1.0)
    extra: dict = field(default_factory=dict)


def _floats(text, n=None, what="value"):
    try:
        vals = tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse {what}: {text!r}") from exc
    if n is not None and len(vals) != n:
        raise ConfigError(f"{what} needs {n} numbers, got {len(vals)}")
    return vals


def _number(section, key, default, kind=float):
    if key not in section:
        return default
    try:
        return kind(section[key])
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key}: cannot parse {section[key]!r}") from exc


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for name in parser.sections():
        if name not in _KEYS:
            raise ConfigError(f"unknown section [{name}]")
        unknown = set(parser[name]) - _KEYS[name]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    for required in ("material", "object"):
        if required not in parser:
            raise ConfigError(f"missing section [{required}]")

    mat = parser["material"]
    try:
        mu_star = _number(mat, "mu_star", None)
        mu_star = mu_star if mu_star is not None else _number(mat, "mu_r", 1.0) * MU0
        eps_star = _number(mat, "eps_star", None)
        eps_star = eps_star if eps_star is not None else _number(mat, "eps_rel", 1.0) * EPS0
        material = MaterialSpec(eps_star=eps_star, mu_star=mu_star, sigma_star=_number(mat, "sigma", 0.0))

        obj = parser["object"]
        kind = obj.get("shape", "sphere")
        if kind == "sphere":
            shape = UnitShape.sphere()
        elif kind == "ellipsoid":
            shape = UnitShape.ellipsoid(*_floats(obj.get("semi_axes", "1,1,1"), 3, "semi_axes"))
        elif kind == "cube":
            shape = UnitShape.cube(_number(obj, "side", 1.0))
        else:
            raise ConfigError(f"unknown shape {kind!r}")
        placement = ObjectPlacement(alpha=_number(obj, "alpha", 0.01), z=_floats(obj.get("z", "0,0,0"), 3, "z"))
    except (DomainError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    omegas = _parse_sweep(parser["sweep"] if "sweep" in parser else None)
    settings = _parse_solver(parser["solver"] if "solver" in parser else None)
    out = parser["output"] if "output" in parser else {}
    pts = parser["points"] if "points" in parser else {}
    points = ()
    if "points" in pts:
        points = tuple(_floats(p, 3, "point") for p in pts["points"].split(";") if p.strip())
    series = tuple(s.strip() for s in out.get("series", "ReM11,ImM11").split(",") if s.strip())
    for s in series:
        if s not in CSV_HEADER:
            raise ConfigError(f"unknown series {s!r}")
    return RunConfig(material=material, shape=shape, placement=placement, omegas=omegas, settings=settings,
                     csv_name=out.get("csv", "sweep.csv"), bundle_name=out.get("bundle", "tensors.txt"),
                     report_name=out.get("report", "compare.txt"), series=series, points=points,
                     H0=_floats(pts.get("H0", "0,0,1"), 3, "H0"))


def _parse_sweep(sec):
    if sec is None:
        return (1e5,)
    if "omega" in sec:
        omegas = _floats(sec["omega"], what="omega")
    elif "omega_min" in sec and "omega_max" in sec:
        lo, hi = _number(sec, "omega_min", 0.0), _number(sec, "omega_max", 0.0)
        n = _number(sec, "points", 10, int)
        if not 0 < lo <= hi or n < 1:
            raise ConfigError("sweep needs 0 < omega_min <= omega_max and points >= 1")
        spacing = sec.get("spacing", "log")
        if spacing == "log":
            omegas = tuple(np.logspace(math.log10(lo), math.log10(hi), n)) if n > 1 else (lo,)
        elif spacing == "linear":
            omegas = tuple(np.linspace(lo, hi, n))
        else:
            raise ConfigError(f"unknown spacing {spacing!r}")
    else:
        raise ConfigError("[sweep] needs omega or omega_min/omega_max")
    if not omegas or min(omegas) <= 0:
        raise ConfigError("frequencies must be positive")
    return tuple(sorted(float(w) for w in omegas))


def _parse_solver(sec):
    if sec is None:
        return RunSettings()
    try:
        dm, dp = MeshSettings(), RunSettings().params
        mesh = MeshSettings(resolution=_number(sec, "resolution", dm.resolution),
                            truncation_radius=_number(sec, "truncation_radius", dm.truncation_radius),
                            boundary_layer=_number(sec, "boundary_layer", dm.boundary_layer),
                            layer_growth=_number(sec, "layer_growth", dm.layer_growth),
                            exterior_stretch=_number(sec, "exterior_stretch", dm.exterior_stretch),
                            seed=_number(sec, "seed", dm.seed, int))
        params = SolverParams(tol=_number(sec, "tol", dp.tol), max_iter=_number(sec, "max_iter", dp.max_iter, int),
                              method=sec.get("method", dp.method),
                              edge_family=sec.get("edge_family", dp.edge_family),
                              outer_condition=sec.get("outer_condition", dp.outer_condition))
        return RunSettings(solver=sec.get("solver", "analytic"), model=sec.get("model", "auto"), mesh=mesh,
                           params=params)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


# -------------------------------------------------------------- commands


def _row(result) -> list:
    M = np.asarray(result.bundle.M)
    B = np.asarray(result.bundle.B)
    row = [repr(result.omega), str(result.regime)]
    for r in range(3):
        for i in range(3):
            row += [f"{M[r, i].real + 0.0:.10e}", f"{M[r, i].imag + 0.0:.10e}"]
    for j in range(3):
        row += [f"{B[j, j].real:.10e}", f"{B[j, j].imag:.10e}"]
    row += [f"{result.bundle.A.norm():.10e}", f"{result.bundle.R_msi_norm:.10e}"]
    if result.oracle is None:
        row += ["", ""]
    else:
        row += [f"{result.oracle.real:.10e}", f"{result.oracle.imag:.10e}"]
    row += [f"{result.residual:.3e}", str(result.iterations)]
    return row


def _run_one(cfg: RunConfig, omega: float):
    try:
        return compute(cfg.material, cfg.shape, cfg.placement, omega, cfg.settings), None
    except Exception as exc:  # a failed frequency is reported, the sweep goes on
        return None, f"{type(exc).__name__}: {exc}"


def _map(cfg, omegas, workers):
    if workers > 1 and len(omegas) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, [cfg] * len(omegas), omegas))
    return [_run_one(cfg, w) for w in omegas]


def cmd_tensors(cfg: RunConfig, out: Path, workers: int = 1) -> int:
    omega = cfg.omegas[0]
    result, error = _run_one(cfg, omega)
    if error:
        print(f"error: omega={omega}: {error}", file=sys.stderr)
        return EXIT_PARTIAL
    path = out / cfg.bundle_name
    result.bundle.write(path)
    M = np.asarray(result.bundle.M)
    print(f"omega={omega:g} regime={result.regime} model={result.model} -> {path}")
    print("M diagonal: " + "  ".join(f"{M[j, j].real:.6e}{M[j, j].imag:+.6e}j" for j in range(3)))
    if result.oracle is not None:
        print(f"oracle m: {result.oracle.real:.6e}{result.oracle.imag:+.6e}j")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Path, workers: int = 1) -> int:
    results = _map(cfg, cfg.omegas, workers)
    path = out / cfg.csv_name
    failed = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for omega, (result, error) in zip(cfg.omegas, results):
            if error:
                failed += 1
                print(f"error: omega={omega}: {error}", file=sys.stderr)
                writer.writerow([repr(omega), "failed"] + [""] * (len(CSV_HEADER) - 2))
            else:
                writer.writerow(_row(result))
    print(f"{len(cfg.omegas) - failed}/{len(cfg.omegas)} frequencies -> {path}")
    return EXIT_PARTIAL if failed else EXIT_OK


def _regime_table(cfg: RunConfig, result, point):
    """H_delta at one point under every applicable formula: (name, vector or None, note)."""
    pl = cfg.placement
    k = result.contrasts.k_alpha / pl.alpha
    bg = BackgroundField.uniform(cfg.H0, k, origin=pl.centre)
    H0 = np.asarray(cfg.H0, complex)
    cs = result.contrasts
    rows = []
    try:
        main = hdelta_main(point, pl, result.bundle, bg).H_delta
    except ValidityError as exc:
        return [("all", None, f"skipped: {exc}")]
    rows.append(("main", main, ""))
    rows.append(("alt", hdelta_alt(point, pl, result.bundle, bg).H_delta, ""))
    rows.append(("quasistatic", hdelta_quasistatic(point, pl, result.bundle.M, H0), ""))
    if cs.nu_i > 0:
        if cfg.shape.kind == "sphere":
            M_eddy = Rank2TensorC.identity(sphere_mpt_eddy(cs.mu_r, cs.nu_i, pl.alpha))
        else:
            M_eddy = result.bundle.M
        note = "" if result.regime is Regime.EDDY_CURRENT else "outside its regime"
        rows.append(("eddy", hdelta_eddy(point, pl, M_eddy, H0), note))
    else:
        rows.append(("eddy", None, "skipped: sigma = 0"))
    try:
        T_mu = scalar_tensor(cfg.shape, cs.mu_r, pl.alpha)
        T_eps = scalar_tensor(cfg.shape, cs.eps_r, pl.alpha)
    except ValueError as exc:
        rows.append(("smallk_dielectric", None, f"skipped: {exc}"))
        rows.append(("smallalpha", None, f"skipped: {exc}"))
        return rows
    if cs.nu_i == 0:
        rows.append(("smallk_dielectric", hdelta_smallk_dielectric(point, pl, T_mu, T_eps, bg), ""))
    else:
        rows.append(("smallk_dielectric", None, "skipped: conducting object"))
    rows.append(("smallalpha", hdelta_smallalpha(point, pl, T_mu, T_eps, bg), ""))
    return rows


def compare_regimes(cfg: RunConfig, result):
    """Per point: list of (name, H or None, relative difference to main, note) and the residual bound."""
    pl = cfg.placement
    k = result.contrasts.k_alpha / pl.alpha
    bg = BackgroundField.uniform(cfg.H0, k, origin=pl.centre)
    bound = residual_bound(pl, result.contrasts, k, bg.norms(pl.centre, pl.alpha))
    report = []
    for point in cfg.points:
        rows = _regime_table(cfg, result, np.asarray(point))
        ref = next((h for name, h, _ in rows if name == "main"), None)
        entries = []
        for name, h, note in rows:
            rel = float("nan")
            if h is not None and ref is not None and np.linalg.norm(ref) > 0:
                rel = float(np.linalg.norm(h - ref) / np.linalg.norm(ref))
            entries.append((name, h, rel, note))
        report.append((tuple(point), entries))
    return report, bound


def cmd_compare_regimes(cfg: RunConfig, out: Path, workers: int = 1) -> int:
    if not cfg.points:
        raise ConfigError("[points] points = x,y,z; ... is required for compare-regimes")
    omega = cfg.omegas[0]
    result, error = _run_one(cfg, omega)
    if error:
        print(f"error: omega={omega}: {error}", file=sys.stderr)
        return EXIT_PARTIAL
    report, bound = compare_regimes(cfg, result)
    lines = [f"# omega={omega:g} regime={result.regime} model={result.model} residual_bound={bound:.3e}",
             "# x y z formula |H_delta| rel_diff_to_main note"]
    for point, entries in report:
        for name, h, rel, note in entries:
            mag = "nan" if h is None else f"{np.linalg.norm(h):.6e}"
            lines.append(f"{point[0]:.6g} {point[1]:.6g} {point[2]:.6g} {name} {mag} {rel:.3e} {note}".rstrip())
    text = "\n".join(lines) + "\n"
    (out / cfg.report_name).write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_plotdata(csv_path, series, out: Path) -> int:
    try:
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {csv_path}: {exc}") from exc
    if len(rows) < 2:
        raise ConfigError(f"{csv_path} has no data rows")
    header, data = rows[0], rows[1:]
    for name in ("omega", *series):
        if name not in header:
            raise ConfigError(f"column {name!r} not found in {csv_path}")
    col_w = header.index("omega")
    data = sorted((r for r in data if r[header.index("regime")] != "failed"), key=lambda r: float(r[col_w]))
    stem = Path(csv_path).stem
    for name in series:
        col = header.index(name)
        path = out / f"{stem}_{name}.dat"
        with open(path, "w") as fh:
            for r in data:
                fh.write(f"{r[col_w]} {r[col]}\n")
        print(f"{name}: {len(data)} points -> {path}")
    return EXIT_OK


# ----------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mptwave", description="Polarizability tensors and field perturbations "
                                "of small objects.")
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--workers", type=int, default=1, help="parallel frequency workers")
    p.add_argument("--verbose", action="store_true", help="log solver progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("tensors", help="assemble all tensors at the first frequency")
    sub.add_parser("sweep", help="frequency sweep to CSV")
    sub.add_parser("compare-regimes", help="H_delta under each regime formula")
    plot = sub.add_parser("plotdata", help="two-column (omega, value) files from a sweep CSV")
    plot.add_argument("csv", help="sweep CSV")
    plot.add_argument("--series", default="ReM11,ImM11", help="comma-separated column names")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s %(message)s", stream=sys.stderr)
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "plotdata":
            series = tuple(s.strip() for s in args.series.split(",") if s.strip())
            return cmd_plotdata(args.csv, series, out)
        if not args.config:
            raise ConfigError(f"{args.command} needs --config")
        cfg = load_config(args.config)
        command = {"tensors": cmd_tensors, "sweep": cmd_sweep, "compare-regimes": cmd_compare_regimes}
        return command[args.command](cfg, out, args.workers)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
