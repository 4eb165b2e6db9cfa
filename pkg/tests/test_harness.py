import os

import numpy as np
import pytest

from kinap.cli import main as cli_main
from kinap.errors import ConfigError
from kinap.harness import (
    PRESETS,
    Scenario,
    compare,
    eps_function,
    format_report,
    load_scenario,
    parse_config,
    run,
)


# ----------------------------------------------------------------- presets

def test_preset_test1a_constants():
    sc = PRESETS["test1a"]
    assert sc.nx == 100 and sc.lv == 8.4 and sc.nv == 32
    assert sc.bc == "periodic" and sc.equation == "boltzmann"
    assert sc.resolved_dt() == pytest.approx(0.01 / 20)
    # rho = (2 + sin 2 pi x)/3, T = (3 + cos 2 pi x)/4, u = (0.2, 0)
    assert (sc.rho_base, sc.rho_amp, sc.rho_wave, sc.rho_div) == (2, 1, 2, 3)
    assert (sc.T_base, sc.T_amp, sc.T_wave, sc.T_div) == (3, 1, 2, 4)
    assert (sc.u0x, sc.u0y) == (0.2, 0.0)
    assert sc.ic_shape == "double-peak"


def test_preset_test1b_eps_profile():
    sc = PRESETS["test1b"]
    eps = eps_function(sc)
    assert eps(0.7) == pytest.approx(1e-2)
    x = 0.3
    expected = 1e-2 + 0.5 * (np.tanh(25 - 20 * x) + np.tanh(-5 + 20 * x))
    assert eps(x) == pytest.approx(expected)
    assert eps(0.5) > 0.9          # plateau reaches order one
    assert sc.lv == 6.0


def test_preset_test1c_sod():
    sc = PRESETS["test1c"]
    assert (sc.sod_rho_l, sc.sod_T_l) == (1.0, 1.0)
    assert (sc.sod_rho_r, sc.sod_T_r) == (0.125, 0.25)
    assert sc.bc == "free-flow" and sc.eps == 1e-4 and sc.sod_split == 0.5


def test_preset_test2_constants():
    a, b = PRESETS["test2a"], PRESETS["test2b"]
    assert a.equation == "landau" and (a.x_a, a.x_b) == (-1.0, 1.0)
    assert a.rho_wave == 1.0 and a.T_wave == 1.0 and a.eps == 1.0
    assert b.eps == 1e-3 and (b.x_a, b.x_b) == (-0.5, 0.5) and b.sod_split == 0.0


def test_preset_test3_constants():
    sc = PRESETS["test3"]
    assert sc.nx == 200 and sc.nv == 64 and sc.dim == 1
    assert sc.x_b == pytest.approx(np.pi) and sc.lv == pytest.approx(2 * np.pi)
    assert sc.background == 1.0 and sc.plasma_wave == 2.0
    assert sc.resolved_dt() == pytest.approx((np.pi / 200) / 20)


# ------------------------------------------------------------------ config

def test_parse_config_roundtrip(tmp_path):
    text = """
[run]
preset = test1a
solver = DS
eps = 0.5
t_end = 0.05
snapshots = 0.05
"""
    sc = parse_config(text)
    assert sc.solver == "DS" and sc.eps == 0.5 and sc.t_end == 0.05
    assert sc.nx == 100     # inherited from the preset
    path = tmp_path / "case.cfg"
    path.write_text(text)
    sc2 = load_scenario(str(path))
    assert sc2.solver == "DS" and sc2.eps == 0.5


def test_parse_config_rejects_unknown_key():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("[run]\nnot_a_key = 1\n")
    with pytest.raises(ConfigError, match="key = value"):
        parse_config("just words\n")
    with pytest.raises(ConfigError):
        parse_config("eps = abc\n")


def test_invalid_combinations_rejected():
    with pytest.raises(ConfigError):
        Scenario(equation="boltzmann", solver="JY").validate()
    with pytest.raises(ConfigError):
        Scenario(equation="landau", solver="FJ").validate()
    with pytest.raises(ConfigError):
        Scenario(equation="nope").validate()
    with pytest.raises(ConfigError):
        Scenario(order=3).validate()


def test_load_scenario_unknown():
    with pytest.raises(ConfigError):
        load_scenario("missing-thing")


# -------------------------------------------------------------------- runs

def small(name, **kw):
    sc = load_scenario(name)
    base = dict(nx=16, nv=16, t_end=None, snapshots=None)
    base.update(kw)
    for k, v in base.items():
        if v is not None:
            setattr(sc, k, v)
    return sc


def test_run_writes_contractual_outputs(tmp_path):
    sc = small("test1a", t_end=0.005, snapshots=(0.005,))
    out = tmp_path / "mm"
    res = run(sc, out_dir=str(out))
    files = sorted(os.listdir(out))
    assert "diagnostics.csv" in files and "run.meta" in files
    assert "profiles_0.005.csv" in files
    header = open(out / "diagnostics.csv").readline().strip()
    assert header == "t,mass_me,mom1_me,energy_me,mass_mf,mom1_mf,energy_mf"
    pheader = open(out / "profiles_0.005.csv").readline().strip()
    assert pheader == "x,rho,u1,u2,T"
    meta = open(out / "run.meta").read()
    assert "nv = 16" in meta and "equation = boltzmann" in meta
    # ME columns exactly conserved
    d = np.loadtxt(out / "diagnostics.csv", delimiter=",", skiprows=1)
    assert abs(d[-1, 1] - d[0, 1]) < 1e-13 * abs(d[0, 1])


def test_run_plasma_outputs(tmp_path):
    sc = small("test3", nx=32, nv=32, t_end=0.05, snapshots=(0.05,))
    out = tmp_path / "va"
    run(sc, out_dir=str(out))
    header = open(out / "diagnostics.csv").readline().strip()
    assert header.endswith("etotal_me_amp,etotal_mf_amp,etotal_mf_poiss")
    pheader = open(out / "profiles_0.05.csv").readline().strip()
    assert pheader == "x,rho,u1,u2,T,E_field"
    d = np.loadtxt(out / "diagnostics.csv", delimiter=",", skiprows=1)
    col = header.split(",").index("etotal_me_amp")
    assert abs(d[-1, col] - d[0, col]) < 1e-13 * abs(d[0, col])


def test_run_determinism(tmp_path):
    sc = small("test1a", t_end=0.005, snapshots=(0.005,))
    a = tmp_path / "a"
    b = tmp_path / "b"
    run(sc, out_dir=str(a))
    run(sc, out_dir=str(b))
    for name in ("diagnostics.csv", "profiles_0.005.csv"):
        assert open(a / name).read() == open(b / name).read()


def test_all_solvers_run(tmp_path):
    for solver in ("MM", "FJ", "DS", "EULER"):
        sc = small("test1a", t_end=0.0025, snapshots=(0.0025,))
        sc.solver = solver
        run(sc, out_dir=str(tmp_path / solver))
    sc = small("test2a", nv=16, t_end=0.005, snapshots=(0.005,))
    sc.solver = "JY"
    run(sc, out_dir=str(tmp_path / "JY"))
    sc = small("test3vab", nx=12, nv=16, t_end=0.01, snapshots=(0.01,))
    run(sc, out_dir=str(tmp_path / "VAB"))


@pytest.mark.slow
def test_mixed_regime_matches_resolved_reference():
    # discontinuous Knudsen profile: the staggered scheme at dt = dx/20
    # tracks the resolved explicit solver, which is stable here because the
    # smallest eps (1e-2) is still four times the step
    mm = load_scenario("test1b")
    ds = load_scenario("test1b")
    ds.solver = "DS"
    pa = run(mm).profiles[0.2]
    pb = run(ds).profiles[0.2]
    worst = max(
        np.max(np.abs(pa[f] - pb[f])) / np.max(np.abs(pb[f]))
        for f in ("rho", "u1", "T")
    )
    assert worst <= 0.05


@pytest.mark.slow
def test_landau_shock_tube_completes_conservatively():
    sc = load_scenario("test2b")
    res = run(sc)
    assert res.final.t == pytest.approx(0.2)
    assert np.all(np.isfinite(res.final.U))
    # copy-out ghosts break exact telescoping; with the waves still inside
    # the domain the totals drift only through tiny boundary fluxes
    mass = np.asarray(res.diag["mass_me"])
    assert abs(mass[-1] - mass[0]) < 1e-8 * abs(mass[0])


# ----------------------------------------------------------------- compare

def test_compare_identical_and_mismatch(tmp_path):
    sc = small("test1a", t_end=0.005, snapshots=(0.005,))
    a = tmp_path / "a"
    b = tmp_path / "b"
    run(sc, out_dir=str(a))
    run(sc, out_dir=str(b))
    report = compare(str(a), str(b))
    for fields in report.values():
        for norms in fields.values():
            assert norms["l1"] == 0.0 and norms["sup"] == 0.0
    text = format_report(report)
    assert "rho" in text and "sup" in text
    sc2 = small("test1a", nx=20, t_end=0.005, snapshots=(0.005,))
    c = tmp_path / "c"
    run(sc2, out_dir=str(c))
    with pytest.raises(ConfigError):
        compare(str(a), str(c))


# --------------------------------------------------------------------- CLI

def test_cli_presets_and_run(tmp_path, capsys):
    assert cli_main(["presets"]) == 0
    out = capsys.readouterr().out
    for name in ("test1a", "test2b", "test3"):
        assert name in out

    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(
        "preset = test1a\nnx = 12\nnv = 16\nt_end = 0.005\nsnapshots = 0.005\n"
    )
    code = cli_main(["run", str(cfg), "--out", str(tmp_path / "r")])
    assert code == 0
    assert (tmp_path / "r" / "diagnostics.csv").exists()


def test_cli_overrides(tmp_path):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(
        "preset = test1a\nnx = 12\nnv = 16\nt_end = 0.005\nsnapshots = 0.005\n"
    )
    out = tmp_path / "r2"
    code = cli_main([
        "run", str(cfg), "--out", str(out),
        "--solver", "EULER", "--eps", "0.5", "--order", "1", "--beta-choice", "2",
    ])
    assert code == 0
    meta = open(out / "run.meta").read()
    assert "solver = EULER" in meta and "order = 1" in meta
    assert "beta_choice = 2" in meta


def test_cli_error_codes(tmp_path, capsys):
    assert cli_main(["run", "no-such-file.cfg"]) == 2
    assert cli_main(["run"]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("quux = 3\n")
    assert cli_main(["run", str(bad)]) == 2
    os.makedirs(tmp_path / "e1", exist_ok=True)
    os.makedirs(tmp_path / "e2", exist_ok=True)
    assert cli_main(["compare", str(tmp_path / "e1"), str(tmp_path / "e2")]) == 4


def test_cli_compare_json(tmp_path, capsys):
    sc = small("test1a", t_end=0.0025, snapshots=(0.0025,))
    a = tmp_path / "a"
    run(sc, out_dir=str(a))
    code = cli_main(["compare", str(a), str(a), "--json"])
    assert code == 0
    out = capsys.readouterr().out
    import json

    report = json.loads(out)
    assert "0.0025" in report
