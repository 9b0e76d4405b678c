import csv
import math

import numpy as np
import pytest

from mptwave import cli
from mptwave.cli import CSV_HEADER, ConfigError, compare_regimes, main, parse_config
from mptwave.pipeline import compute
from mptwave.tensors import TensorBundle

STEEL = """
[material]
mu_r = 100
sigma = 1e6
[object]
shape = sphere
alpha = 0.01
[sweep]
omega_min = 10
omega_max = 1e9
points = 40
[solver]
solver = analytic
model = {model}
[output]
csv = {model}.csv
"""

# a test-size mesh that still resolves the skin depth up to nu_i ~ 13 at mu_r = 100
FEM = """
[material]
mu_r = 100
sigma = 1e6
[object]
alpha = 0.01
[sweep]
omega = {omega}
[solver]
solver = fem
resolution = 0.3
truncation_radius = 4
boundary_layer = 0.02
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def run_sweep(tmp_path, text, *extra):
    cfg = write(tmp_path, text)
    return main(["--config", cfg, "--out", str(tmp_path), *extra, "sweep"])


def test_header_is_exact():
    expected = ("omega,regime,ReM11,ImM11,ReM12,ImM12,ReM13,ImM13,ReM21,ImM21,ReM22,ImM22,ReM23,ImM23,"
                "ReM31,ImM31,ReM32,ImM32,ReM33,ImM33,ReB11,ImB11,ReB22,ImB22,ReB33,ImB33,normA,normRmsi,"
                "oracle_Rem,oracle_Imm,residual,iterations")
    assert ",".join(CSV_HEADER) == expected


def test_steel_sweep_eddy_vs_full(tmp_path):
    for model in ("eddy", "full"):
        assert run_sweep(tmp_path, STEEL.format(model=model)) == 0
    eddy, full = read_csv(tmp_path / "eddy.csv"), read_csv(tmp_path / "full.csv")
    assert eddy[0] == CSV_HEADER and len(eddy) == 41 and len(full) == 41
    omegas = [float(r[0]) for r in eddy[1:]]
    assert omegas == sorted(omegas)
    assert omegas[0] == pytest.approx(10) and omegas[-1] == pytest.approx(1e9)
    col = {name: CSV_HEADER.index(name) for name in CSV_HEADER}
    for re, rf in zip(eddy[1:], full[1:]):
        for j in (1, 2, 3):
            me = complex(float(re[col[f"ReM{j}{j}"]]), float(re[col[f"ImM{j}{j}"]]))
            mf = complex(float(rf[col[f"ReM{j}{j}"]]), float(rf[col[f"ImM{j}{j}"]]))
            assert abs(me - mf) <= 1e-2 * abs(mf)


def test_sweep_is_deterministic(tmp_path):
    text = STEEL.format(model="auto").replace("points = 40", "points = 5")
    assert run_sweep(tmp_path, text) == 0
    first = (tmp_path / "auto.csv").read_bytes()
    assert run_sweep(tmp_path, text) == 0
    assert (tmp_path / "auto.csv").read_bytes() == first


def test_workers_do_not_change_output(tmp_path):
    text = STEEL.format(model="auto").replace("points = 40", "points = 4")
    assert run_sweep(tmp_path, text) == 0
    serial = (tmp_path / "auto.csv").read_bytes()
    assert run_sweep(tmp_path, text, "--workers", "2") == 0
    assert (tmp_path / "auto.csv").read_bytes() == serial


def test_single_frequency_sweep(tmp_path):
    text = STEEL.format(model="eddy").replace("omega_min = 10\nomega_max = 1e9\npoints = 40", "omega = 1e5")
    assert run_sweep(tmp_path, text) == 0
    rows = read_csv(tmp_path / "eddy.csv")
    assert len(rows) == 2 and float(rows[1][0]) == 1e5


def test_failed_frequency_is_marked(tmp_path, monkeypatch):
    real = cli.compute

    def flaky(material, shape, placement, omega, settings):
        if omega > 1e4:
            raise RuntimeError("did not converge")
        return real(material, shape, placement, omega, settings)

    monkeypatch.setattr(cli, "compute", flaky)
    text = STEEL.format(model="eddy").replace("omega_min = 10\nomega_max = 1e9\npoints = 40", "omega = 1e3, 1e5")
    assert run_sweep(tmp_path, text) == 1
    rows = read_csv(tmp_path / "eddy.csv")
    assert rows[1][1] != "failed"
    assert rows[2][:2] == ["100000.0", "failed"]


@pytest.mark.parametrize("text", [
    "[material\nmu_r = 2",
    "[material]\nmu_r = 2\n[object]\nalpha = 0.01\ncolour = red",
    "[material]\nmu_r = 2\n[object]\nalpha = 0.01\n[extras]\nx = 1",
    "[material]\nmu_r = two\n[object]\nalpha = 0.01",
    "[object]\nalpha = 0.01",
    "[material]\nmu_r = 2\n[object]\nalpha = -1",
    "[material]\nmu_r = 2\n[object]\nalpha = 0.01\n[sweep]\nomega_min = 10",
    "[material]\nmu_r = 2\n[object]\nalpha = 0.01\n[solver]\nsolver = magic",
])
def test_malformed_config_exit_2(tmp_path, text):
    with pytest.raises(ConfigError):
        parse_config(text)
    cfg = write(tmp_path, text)
    assert main(["--config", cfg, "--out", str(tmp_path), "tensors"]) == 2


def test_missing_config_exit_2(tmp_path):
    assert main(["--out", str(tmp_path), "sweep"]) == 2
    assert main(["--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path), "sweep"]) == 2


def test_zero_contrast_bundle(tmp_path):
    cfg = write(tmp_path, "[material]\n[object]\nalpha = 0.01\n[sweep]\nomega = 1e5\n[solver]\nsolver = fem\n")
    assert main(["--config", cfg, "--out", str(tmp_path), "tensors"]) == 0
    bundle = TensorBundle.read(tmp_path / "tensors.txt")
    for t in (bundle.A, bundle.B, bundle.C, bundle.C_check, bundle.N, bundle.M):
        assert t.norm() == 0


def test_fem_tensors_command(tmp_path, capsys):
    cfg = write(tmp_path, FEM.format(omega="1e5"))
    assert main(["--config", cfg, "--out", str(tmp_path), "tensors"]) == 0
    bundle = TensorBundle.read(tmp_path / "tensors.txt")
    parsed = parse_config(FEM.format(omega="1e5"))
    oracle = compute(parsed.material, parsed.shape, parsed.placement, 1e5).oracle
    diag = np.diag(np.asarray(bundle.M))
    assert np.all(np.abs(diag - oracle) <= 0.05 * abs(oracle))
    assert "oracle m" in capsys.readouterr().out


def test_fem_sweep_three_frequencies(tmp_path):
    assert run_sweep(tmp_path, FEM.format(omega="1e3, 1e4, 1e5")) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 4
    col = {name: CSV_HEADER.index(name) for name in CSV_HEADER}
    for row in rows[1:]:
        oracle = complex(float(row[col["oracle_Rem"]]), float(row[col["oracle_Imm"]]))
        for j in (1, 2, 3):
            m = complex(float(row[col[f"ReM{j}{j}"]]), float(row[col[f"ImM{j}{j}"]]))
            assert abs(m - oracle) <= 0.05 * abs(oracle)
        assert float(row[col["residual"]]) <= 1e-8


# -------------------------------------------------------------- plotdata


def test_plotdata(tmp_path):
    for model in ("eddy", "full"):
        assert run_sweep(tmp_path, STEEL.format(model=model)) == 0
        rc = main(["--out", str(tmp_path), "plotdata", str(tmp_path / f"{model}.csv"), "--series", "ReM11,ImM11"])
        assert rc == 0
    lines = (tmp_path / "eddy_ReM11.dat").read_text().splitlines()
    assert len(lines) == 40
    omegas = [float(line.split()[0]) for line in lines]
    assert omegas == sorted(omegas)
    eddy_grid = [line.split()[0] for line in (tmp_path / "eddy_ImM11.dat").read_text().splitlines()]
    full_grid = [line.split()[0] for line in (tmp_path / "full_ImM11.dat").read_text().splitlines()]
    assert eddy_grid == full_grid


def test_plotdata_errors(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["--out", str(tmp_path), "plotdata", str(empty)]) == 2
    header_only = tmp_path / "header.csv"
    header_only.write_text(",".join(CSV_HEADER) + "\n")
    assert main(["--out", str(tmp_path), "plotdata", str(header_only)]) == 2
    assert run_sweep(tmp_path, STEEL.format(model="eddy").replace("points = 40", "points = 3")) == 0
    assert main(["--out", str(tmp_path), "plotdata", str(tmp_path / "eddy.csv"), "--series", "ReM44"]) == 2
    assert "ReM44" in capsys.readouterr().err


# -------------------------------------------------------- compare-regimes


def _points(alpha, radii):
    rng = np.random.default_rng(3)
    pts = []
    for r in radii:
        d = rng.normal(size=3)
        pts.append(tuple(d / np.linalg.norm(d) * r * alpha))
    return ";".join(",".join(repr(float(c)) for c in p) for p in pts)


def test_compare_regimes_eddy_valid(tmp_path):
    text = (STEEL.format(model="auto").replace("omega_min = 10\nomega_max = 1e9\npoints = 40", "omega = 1e5")
            + f"[points]\npoints = {_points(0.01, [5, 10, 20, 50])}\nH0 = 0.3, -0.2, 1\n")
    cfg = parse_config(text)
    result = compute(cfg.material, cfg.shape, cfg.placement, 1e5, cfg.settings)
    report, bound = compare_regimes(cfg, result)
    assert len(report) == 4 and bound > 0
    for _, entries in report:
        rel = {name: r for name, _, r, _ in entries}
        assert rel["eddy"] <= 1e-2
        assert rel["alt"] <= 1e-12
    path = write(tmp_path, text)
    assert main(["--config", path, "--out", str(tmp_path), "compare-regimes"]) == 0
    assert "residual_bound" in (tmp_path / "compare.txt").read_text()


def test_compare_regimes_dielectric_small_k():
    ratios = []
    for omega in (1e4, 1e6):
        text = ("[material]\nmu_r = 2\neps_rel = 3\n[object]\nalpha = 0.01\n"
                f"[sweep]\nomega = {omega}\n[points]\npoints = {_points(0.01, [6, 15, 40])}\n")
        cfg = parse_config(text)
        result = compute(cfg.material, cfg.shape, cfg.placement, omega, cfg.settings)
        report, _ = compare_regimes(cfg, result)
        for _, entries in report:
            h = {name: v for name, v, _, _ in entries}
            ratios.append(np.linalg.norm(h["smallk_dielectric"]) / np.linalg.norm(h["smallalpha"]))
            gap = np.linalg.norm(h["smallk_dielectric"] - h["smallalpha"]) / np.linalg.norm(h["smallalpha"])
            assert gap <= 1e-2
    assert all(abs(r - 1) <= 1e-2 for r in ratios)


def test_compare_regimes_skips_points_inside_validity_radius():
    text = ("[material]\nmu_r = 100\nsigma = 1e6\n[object]\nalpha = 0.01\n[sweep]\nomega = 1e5\n"
            "[points]\npoints = 0.02, 0, 0; 0.2, 0, 0\n")
    cfg = parse_config(text)
    result = compute(cfg.material, cfg.shape, cfg.placement, 1e5, cfg.settings)
    report, _ = compare_regimes(cfg, result)
    (_, inside), (_, outside) = report
    assert inside[0][1] is None and "skipped" in inside[0][3] and "3" in inside[0][3]
    assert any(name == "main" and h is not None for name, h, _, _ in outside)


def test_compare_regimes_needs_points(tmp_path):
    path = write(tmp_path, "[material]\nmu_r = 2\n[object]\nalpha = 0.01\n")
    assert main(["--config", path, "--out", str(tmp_path), "compare-regimes"]) == 2


def test_log_spacing_default():
    cfg = parse_config("[material]\n[object]\n[sweep]\nomega_min = 10\nomega_max = 1000\npoints = 3\n")
    assert cfg.omegas == pytest.approx((10, 100, 1000))
    assert math.isclose(cfg.placement.alpha, 0.01)
