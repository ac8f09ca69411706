import csv
import subprocess
import sys

import pytest

from atomwalk import cli
from atomwalk.config import COMMANDS, PRESETS, ConfigError, delta_grid, loads
from atomwalk.dynamics import IntegrationError

SMALL = """
[system]
omega_r = 0.001
delta = 0.4
n_trunc = 12
[initial]
field = fock
n = 10
atom = excited
p0 = 25
[simulate]
tau_end = 5
[spectrum]
tau_end = 20
[lyapunov]
horizon = 50
[fidelity]
horizon = 20
[sweep]
delta_min = 0
delta_max = 0.4
delta_step = 0.4
horizon = 50
window_max = 20
[scatter]
p0_min = 99
p0_max = 100
points = 3
tau_max = 500
[maps]
kind = position
grid_min = 10
grid_max = 20
points = 3
tau_snap = 5, 10
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text(SMALL)
    return p


def body(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]


@pytest.mark.parametrize("command", COMMANDS)
def test_every_command_runs(command, cfg_file, tmp_path, capsys):
    out = tmp_path / "out"
    rc = cli.main([command, "--config", str(cfg_file), "--out", str(out), "--workers", "1", "--plot"])
    assert rc == 0
    rows = list(csv.reader(body(out / f"{command}.csv")))
    assert len(rows) >= 2
    assert (out / f"{command}.manifest").exists() and (out / f"{command}.gp").exists()
    text = (out / f"{command}.csv").read_text()
    assert "# system.delta = 0.4" in text
    assert capsys.readouterr().out.startswith(command)


def test_simulate_columns(cfg_file, tmp_path):
    assert cli.main(["simulate", "--config", str(cfg_file), "--out", str(tmp_path)]) == 0
    header = body(tmp_path / "simulate.csv")[0].split(",")
    assert header[:8] == ["tau", "x", "p", "z", "P", "S_L", "S_N", "E"]


def test_manifest_rerun_is_identical(cfg_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["scatter", "--config", str(cfg_file), "--out", str(a)]) == 0
    assert cli.main(["scatter", "--config", str(a / "scatter.manifest"), "--out", str(b)]) == 0
    assert (a / "scatter.csv").read_bytes() == (b / "scatter.csv").read_bytes()


def test_empty_config_lists_missing_keys(tmp_path, capsys):
    empty = tmp_path / "empty.ini"
    empty.write_text("")
    assert cli.main(["simulate", "--config", str(empty), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    for key in ("system.omega_r", "system.delta", "initial.p0", "simulate.tau_end"):
        assert key in err


def test_unknown_command(capsys):
    assert cli.main(["bogus"]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_key(cfg_file, tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text(SMALL.replace("p0 = 25", "p0 = 25\npo = 3"))
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 1


def test_unknown_preset(tmp_path):
    assert cli.main(["simulate", "--preset", "fig99", "--out", str(tmp_path)]) == 1


def test_bad_set_syntax(cfg_file, tmp_path):
    assert cli.main(["simulate", "--config", str(cfg_file), "--set", "nonsense", "--out", str(tmp_path)]) == 1


def test_invalid_value(cfg_file, tmp_path):
    assert cli.main(["simulate", "--config", str(cfg_file), "--set", "system.omega_r=-1",
                     "--out", str(tmp_path)]) == 1


def test_truncation_is_config_error(cfg_file, tmp_path):
    assert cli.main(["simulate", "--config", str(cfg_file), "--set", "initial.n=40",
                     "--out", str(tmp_path)]) == 1


def test_numerical_failure_exit_code(cfg_file, tmp_path, monkeypatch, capsys):
    def fail(*a, **k):
        raise IntegrationError("step size underflow at tau=1")
    monkeypatch.setattr(cli, "integrate", fail)
    assert cli.main(["simulate", "--config", str(cfg_file), "--out", str(tmp_path)]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_overrides(cfg_file, tmp_path):
    args = ["simulate", "--config", str(cfg_file), "--out", str(tmp_path), "--delta", "0.8", "--z0", "0.5",
            "--p0", "30", "--rel-tol", "1e-9", "--set", "simulate.tau_end=2"]
    assert cli.main(args) == 0
    text = (tmp_path / "simulate.csv").read_text()
    for line in ("# system.delta = 0.8", "# initial.atom = inversion", "# initial.z0 = 0.5",
                 "# initial.p0 = 30.0", "# system.rel_tol = 1e-09", "# simulate.tau_end = 2"):
        assert line in text
    first = body(tmp_path / "simulate.csv")[1].split(",")
    assert float(first[2]) == 30.0 and float(first[3]) == pytest.approx(0.5)


def test_preset_layering(tmp_path):
    rc = cli.main(["simulate", "--preset", "fig1a", "--set", "simulate.tau_end=3", "--out", str(tmp_path)])
    assert rc == 0
    assert "# system.delta = 0.0" in (tmp_path / "simulate.csv").read_text()


def test_workers_validated(cfg_file, tmp_path):
    assert cli.main(["scatter", "--config", str(cfg_file), "--workers", "0", "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_validate(name):
    text = PRESETS[name]
    sections = {ln.strip("[]") for ln in text.splitlines() if ln.startswith("[")}
    cmds = [c for c in COMMANDS if c in sections]
    assert cmds
    for c in cmds:
        cfg = loads("", c, base=text)
        cfg.initial.build(cfg.params)


def test_delta_grid():
    cfg = loads("", "sweep", base=PRESETS["fig5"])
    g = delta_grid(cfg.section("sweep"))
    assert g.size == 41 and g[0] == -2.0 and g[-1] == 2.0 and 0.0 in g


def test_malformed_config():
    with pytest.raises(ConfigError):
        loads("not an ini", "simulate")


def test_module_entry_point(cfg_file, tmp_path):
    r = subprocess.run([sys.executable, "-m", "atomwalk", "simulate", "--config", str(cfg_file),
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "atomwalk"], capture_output=True, text=True)
    assert r.returncode == 1


def test_inline_comments():
    cfg = loads(SMALL.replace("atom = excited", "atom = excited   ; or ground"), "simulate")
    assert cfg.values["initial"]["atom"] == "excited"
