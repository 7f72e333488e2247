import json
import os
import subprocess
import sys

import pytest

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def run_cli(args):
    return subprocess.run([sys.executable, "-m", "hermlab.cli", *args],
                          capture_output=True, text=True)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


MINI_FLOW = """
seed = 11
[manifold]
kind = "two-ends"
m = 2
delta = 0.25
[target]
kind = "poincare-ball-n"
n = 2
[initial_map]
preset = "quotient-map"
amplitude = 0.4
[grid]
kind = "interval"
n_nodes = 49
s_max = 0.95
[flow]
t_end = 0.5
mu = 4.0
mu_prime = 2.0
"""


def test_malformed_config_exits_one(tmp_path):
    cfg = write(tmp_path, "bad.toml", "this is not [toml\n=")
    res = run_cli(["flow", "--config", cfg, "--out", str(tmp_path / "o")])
    assert res.returncode == 1
    assert "config error" in res.stderr


def test_out_of_range_alpha_rejected_before_dispatch(tmp_path):
    cfg = write(tmp_path, "b.toml", """
[barriers]
run = ["power"]
power_n = 4
power_alpha = 1.5
""")
    res = run_cli(["verify-barriers", "--config", cfg, "--out", str(tmp_path / "o")])
    assert res.returncode == 1
    assert "alpha" in res.stderr


def test_empty_barrier_selection_warns_noop(tmp_path):
    cfg = write(tmp_path, "b.toml", "[barriers]\nrun = []\n")
    out = tmp_path / "o"
    res = run_cli(["verify-barriers", "--config", cfg, "--out", str(out)])
    assert res.returncode == 0
    assert "empty barrier selection" in res.stderr
    assert (out / "manifest.json").exists()


def test_identity_map_rejected_as_negative_result(tmp_path):
    cfg = write(tmp_path, "f.toml", MINI_FLOW.replace('"quotient-map"', '"identity"'))
    res = run_cli(["flow", "--config", cfg, "--out", str(tmp_path / "o")])
    assert res.returncode == 1
    assert "decay" in res.stderr


def test_two_ends_delta_mu_precondition(tmp_path):
    cfg = write(tmp_path, "f.toml", MINI_FLOW.replace("mu_prime = 2.0",
                                                      "mu_prime = 5.0"))
    res = run_cli(["flow", "--config", cfg, "--out", str(tmp_path / "o")])
    assert res.returncode == 1
    assert "delta" in res.stderr


def test_flow_outputs_and_manifest(tmp_path):
    cfg = write(tmp_path, "f.toml", MINI_FLOW)
    out = tmp_path / "o"
    res = run_cli(["flow", "--config", cfg, "--out", str(out)])
    assert res.returncode == 0, res.stderr
    for f in ("trajectory.csv", "snapshot.csv", "decay.json", "manifest.json"):
        assert (out / f).exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 11
    assert "trajectory.csv" in man["files"]
    assert man["pass_summary"]["velocity_ceiling"]
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,max_velocity,sup_rho_over_V,slab_energy,dt"


def test_determinism_byte_identical(tmp_path):
    cfg = write(tmp_path, "f.toml", MINI_FLOW)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run_cli(["flow", "--config", cfg, "--out", str(out1)]).returncode == 0
    assert run_cli(["flow", "--config", cfg, "--out", str(out2)]).returncode == 0
    for f in ("trajectory.csv", "snapshot.csv", "decay.json"):
        assert (out1 / f).read_bytes() == (out2 / f).read_bytes()


def test_barriers_default_config_passes(tmp_path):
    res = run_cli(["verify-barriers", "--config",
                   os.path.join(CONFIG_DIR, "barriers.toml"),
                   "--out", str(tmp_path / "o")])
    assert res.returncode == 0, res.stderr
    certs = json.loads((tmp_path / "o" / "certificates.json").read_text())
    assert all(c["pass"] for c in certs)
    assert {c["barrier_id"] for c in certs} == {
        "power", "log", "poincare", "two-ends", "two-ends-weak"}


def test_special_functions_report(tmp_path):
    res = run_cli(["special-functions", "--config",
                   os.path.join(CONFIG_DIR, "special.toml"),
                   "--out", str(tmp_path / "o")])
    assert res.returncode == 0, res.stderr
    rep = json.loads((tmp_path / "o" / "kummer_report.json").read_text())
    assert rep["identity_max_residuals"]["diffequ"] < 1e-9
    assert rep["identity_max_residuals"]["kummer"] < 1e-10
    assert rep["identity_max_residuals"]["diff"] < 1e-8
    assert rep["limit_ratio_decreasing"]


def test_probe_resolvent_sweep(tmp_path):
    res = run_cli(["probe-resolvent", "--config",
                   os.path.join(CONFIG_DIR, "resolvent.toml"),
                   "--out", str(tmp_path / "o")])
    assert res.returncode == 0, res.stderr
    lines = (tmp_path / "o" / "sweep.csv").read_text().splitlines()
    assert lines[0] == "angle,r,lam_re,lam_im,sup_norm,sup_times_r"
    assert len(lines) == 1 + 2 * 6


def test_exhaust_radial_branch(tmp_path):
    cfg = write(tmp_path, "e.toml", """
seed = 2
[manifold]
kind = "conformal-Cm"
m = 2
[target]
kind = "flat-Rn"
n = 2
[initial_map]
preset = "radial-profile"
c0 = 0.5
profile_mu = 2.0
[flow]
mu = 2.0
mu_prime = 1.0
[exhaust]
n_levels = 3
r0 = 4.0
n_master = 257
newton_tol = 1e-9
""")
    out = tmp_path / "o"
    res = run_cli(["exhaust", "--config", cfg, "--out", str(out)])
    assert res.returncode == 0, res.stderr
    lines = (out / "convergence.csv").read_text().splitlines()
    assert lines[0] == ("level,radius,sup_rho_over_V,energy_L1,"
                        "interlevel_sup_diff,barrier_C")
    assert len(lines) >= 3


def test_grid_refine_flag(tmp_path):
    cfg = write(tmp_path, "f.toml", MINI_FLOW)
    out = tmp_path / "o"
    res = run_cli(["flow", "--config", cfg, "--out", str(out),
                   "--grid-refine", "1"])
    assert res.returncode == 0
    n_rows = len((out / "snapshot.csv").read_text().splitlines()) - 1
    assert n_rows == 97          # (49-1)*2 + 1
