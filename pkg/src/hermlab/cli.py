"""Command-line driver: verify-barriers, flow, exhaust, certify,
probe-resolvent, special-functions.

Exit codes: 0 all certificates pass, 2 run completed but some certificate
failed (data still written), 1 operational error.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np

from . import analytic, certify, config as cfgmod, elliptic, geometry as geo
from . import parabolic, presets
from .config import ConfigError, ExperimentConfig, load_config
from .io import config_hash, write_csv, write_json, write_manifest
from .special import KummerParams, gamma, kummer_f


def _snapshot_rows(grid, values):
    cols = ["coord"] + [f"u{i+1}" for i in range(values.shape[1])]
    rows = []
    for k in range(grid.n):
        row = {"coord": float(grid.nodes[k])}
        for i in range(values.shape[1]):
            row[f"u{i+1}"] = float(values[k, i])
        rows.append(row)
    return cols, rows


def cmd_verify_barriers(cfg: ExperimentConfig, outdir: str):
    params = cfgmod.barrier_params(cfg)
    run = params["run"]
    if not run:
        print("warning: empty barrier selection; nothing to do", file=sys.stderr)
        return [], {"none": True}, {}, {}
    certs = []
    if "power" in run:
        certs.append(analytic.barrier_power(params["power_n"], params["power_alpha"]))
    if "log" in run:
        certs.append(analytic.barrier_log(params["log_n"], params["log_alpha"]))
    if "poincare" in run:
        certs.append(analytic.barrier_poincare(params["poincare_mu_prime"]))
    if "two-ends" in run:
        certs.append(analytic.barrier_twoends(params["twoends_mu_prime"],
                                              params["twoends_delta"]))
    if "two-ends-weak" in run:
        met = geo.two_ends(2, params["twoends_delta"])
        certs.append(analytic.weak_supersolution_twoends(
            met, params["twoends_mu_prime"], params["weak_eps"]))
    records = [c.as_record() for c in certs]
    write_json(os.path.join(outdir, "certificates.json"), records)
    cols = ["barrier_id", "claimed_constant", "residual_min", "tolerance", "pass"]
    write_csv(os.path.join(outdir, "summary.csv"), cols,
              [{k: r[k] for k in cols} for r in records])
    passes = {c.barrier_id: bool(c.passed) for c in certs}
    return ["certificates.json", "summary.csv"], passes, {}, {}


def _build_flow(cfg: ExperimentConfig):
    metric = cfgmod.build_metric(cfg)
    target = cfgmod.build_target(cfg)
    grid = cfgmod.build_grid(cfg, metric)
    params = cfgmod.validate_flow_problem(cfg, metric, target, grid)
    h = cfgmod.build_initial_map(cfg, metric, target, grid)
    return metric, target, grid, h, params


def cmd_flow(cfg: ExperimentConfig, outdir: str):
    metric, target, grid, h, params = _build_flow(cfg)
    sig_h = geo.tension_norm(metric, target, h)
    V = elliptic.comparison_function(
        metric, geo.ScalarField(grid, 4.0 * sig_h), params["mu"],
        params["mu_prime"], grid=grid)
    traj = parabolic.integrate(
        metric, target, h, V, params["t_end"], dt_user=params["dt_user"],
        dt_safety=params["dt_safety"], sample_t0=params["sample_t0"],
        fit_t_min=params["fit_t_min"], energy_stride=params["energy_stride"])
    result = parabolic.stationarity(traj, params["stationarity_tol"],
                                    metric=metric, target=target, h=h)
    cols = ["t", "max_velocity", "sup_rho_over_V", "slab_energy", "dt"]
    rows = []
    slabs = traj.slab_energy
    for i, t in enumerate(traj.times):
        done = int(t // 2.0)
        slab_val = float(slabs[min(done, len(slabs)) - 1]) if done >= 1 and len(slabs) else 0.0
        rows.append({"t": float(t), "max_velocity": float(traj.max_velocity[i]),
                     "sup_rho_over_V": float(traj.rho_over_V[i]),
                     "slab_energy": slab_val, "dt": float(traj.dt)})
    write_csv(os.path.join(outdir, "trajectory.csv"), cols, rows)
    cols_s, rows_s = _snapshot_rows(grid, result["map"].values)
    write_csv(os.path.join(outdir, "snapshot.csv"), cols_s, rows_s)
    mu = params["mu"]
    analytic_exp = mu if metric.kind == geo.CONFORMAL_CM else None
    decay = {"fit": traj.decay_fit(), "ceiling": traj.ceiling,
             "analytic_exponent": analytic_exp,
             "velocity_violations": int(traj.velocity_violations),
             "monotonicity_violations": int(traj.monotonicity_violations),
             "slab_energy_max": float(slabs.max()) if len(slabs) else 0.0,
             "n_slabs": int(len(slabs)),
             "sup_rho_over_V_max": float(traj.rho_over_V.max()),
             "converged": bool(result["converged"]),
             "final_velocity": float(result["velocity"])}
    write_json(os.path.join(outdir, "decay.json"), decay)
    passes = {"velocity_ceiling": traj.velocity_violations == 0,
              "rho_over_V": bool(traj.rho_over_V.max() <= 1.0 + 1e4 * grid.h ** 2),
              "converged": bool(result["converged"])}
    steps = {"flow_steps": int(round(traj.times[-1] / traj.dt))}
    monitors = {"ceiling": float(traj.ceiling),
                "sup_rho_over_V_max": float(traj.rho_over_V.max()),
                "analytic_exponent": analytic_exp}
    return ["trajectory.csv", "snapshot.csv", "decay.json"], passes, steps, monitors


def cmd_exhaust(cfg: ExperimentConfig, outdir: str):
    metric = cfgmod.build_metric(cfg)
    target = cfgmod.build_target(cfg)
    params = cfgmod.flow_params(cfg)
    ex = cfgmod.exhaust_params(cfg)
    if metric.kind == geo.TWO_ENDS:
        schedule = elliptic.default_schedule(metric, n_levels=ex["n_levels"])
        amp = float(cfg.get("initial_map", "amplitude", 0.4))

        def h_fn(s):
            out = np.zeros((len(np.atleast_1d(s)), target.n))
            out[:, 0] = amp * np.atleast_1d(s)
            return out
    else:
        schedule = elliptic.ExhaustionSchedule(
            tuple(ex["r0"] * 2.0 ** k for k in range(ex["n_levels"])),
            ex["tol"], ex["r0"])
        c0 = float(cfg.get("initial_map", "c0", 1.0))
        pmu = float(cfg.get("initial_map", "profile_mu", 2.0))
        A = presets.parabolic_barrier_conformal_A(max(metric.m, 2), pmu)

        def h_fn(r):
            out = np.zeros((len(np.atleast_1d(r)), target.n))
            out[:, 0] = c0 * (A + np.log1p(np.atleast_1d(r) ** 2)) ** (1.0 - pmu)
            return out
    limit, rows = elliptic.exhaustion_harmonic(
        metric, target, h_fn, schedule, n_master=ex["n_master"],
        tol=ex["newton_tol"], mu=params["mu"], mu_prime=params["mu_prime"])
    cols = ["level", "radius", "sup_rho_over_V", "energy_L1",
            "interlevel_sup_diff", "barrier_C"]
    write_csv(os.path.join(outdir, "convergence.csv"), cols,
              [{k: r[k] for k in cols} for r in rows])
    cols_s, rows_s = _snapshot_rows(limit.grid, limit.values)
    write_csv(os.path.join(outdir, "limit_snapshot.csv"), cols_s, rows_s)
    passes = {"rho_over_V": all(r["sup_rho_over_V"] <= 1.0 + 1e-2 for r in rows)}
    return ["convergence.csv", "limit_snapshot.csv"], passes, {"levels": len(rows)}, {}


def cmd_certify(cfg: ExperimentConfig, outdir: str):
    rng = np.random.default_rng(cfg.seed)
    records = []
    passes = {}
    # contact sets: LP vs brute force on seeded random smooth grids
    agree = True
    contact_rows = []
    for size in cfg.get("certify", "contact_sizes", [[5, 5, 5], [6, 6, 6]]):
        nt, nx, ny = size
        base = rng.normal(size=(nt, nx, ny))
        tt = np.linspace(0, 1, nt)[:, None, None]
        xx = np.linspace(-1, 1, nx)[None, :, None]
        yy = np.linspace(-1, 1, ny)[None, None, :]
        u = 0.3 * base + tt - 0.5 * (xx ** 2 + yy ** 2)
        xs = (np.linspace(-1, 1, nx), np.linspace(-1, 1, ny))
        ts = np.linspace(0, 1, nt)
        lp = certify.upper_contact_set(u, xs, ts, method="lp")
        bf = certify.upper_contact_set(u, xs, ts, method="brute")
        agree = agree and bool(np.array_equal(lp.in_E, bf.in_E)
                               and np.array_equal(lp.in_E_plus, bf.in_E_plus))
        contact_rows = [
            {"t": float(ts[it]), "x": float(xs[0][ix]), "y": float(xs[1][iy]),
             "in_E": bool(lp.in_E[it, ix, iy]),
             "in_E_plus": bool(lp.in_E_plus[it, ix, iy])}
            for it in range(nt) for ix in range(nx) for iy in range(ny)]
    records.append({"check_id": "contact-lp-vs-brute", "bounds": {},
                    "constants": {}, "slack": 0.0, "pass": agree})
    passes["contact"] = agree
    write_csv(os.path.join(outdir, "contact.csv"),
              ["t", "x", "y", "in_E", "in_E_plus"], contact_rows)
    # frozen battery
    bat = certify.load_battery()
    ok_fm = True
    for case in bat["firstmax"]:
        xs, ts, u, f, a, b, c = certify.battery_case_fields(case)
        bounds = certify.battery_bounds(case, a, b, c)
        cert = certify.check_firstmax(xs, ts, u, f, b, c, a, bounds)
        records.append(cert.as_record() | {"case": case["id"]})
        ok_fm = ok_fm and cert.passed
    ok_pm = True
    for case in bat["parmax"]:
        xs, ts, u, f, a, b, c = certify.battery_case_fields(case)
        ts = ts - ts[-1]
        bounds = certify.battery_bounds(case, a, b, c)
        cert = certify.check_parmax(xs, ts, u, f, bounds)
        records.append(cert.as_record() | {"case": case["id"]})
        ok_pm = ok_pm and cert.passed
    passes["firstmax_battery"] = ok_fm
    passes["parmax_battery"] = ok_pm
    # energy inequality on a small converged preset (both modes)
    pre = presets.two_ends_poincare(n_nodes=65, T=2.0)
    res = elliptic.hermitian_harmonic_solve(pre.metric, pre.target, pre.h_map(),
                                            tol=1e-9, switch_tol=1e-2)
    ce = certify.check_energy_inequality(pre.metric, pre.target, res.u,
                                         mode="elliptic")
    records.append(ce.as_record())
    flow = parabolic.HeatFlow(pre.metric, pre.target, pre.h_map())
    for _ in range(200):
        flow.step()
    u_now = geo.MapField(pre.grid, flow.state_values(), pre.target)
    flow.step()
    u_next = geo.MapField(pre.grid, flow.state_values(), pre.target)
    cp = certify.check_energy_inequality(pre.metric, pre.target, u_now,
                                         mode="parabolic", u_next=u_next,
                                         dt=flow.dt)
    records.append(cp.as_record())
    passes["energy_elliptic"] = ce.passed
    passes["energy_parabolic"] = cp.passed
    write_json(os.path.join(outdir, "certificates.json"), records)
    cols = ["check_id", "slack", "pass"]
    write_csv(os.path.join(outdir, "summary.csv"), cols,
              [{"check_id": r.get("case", r["check_id"]), "slack": r["slack"],
                "pass": r["pass"]} for r in records])
    return ["certificates.json", "summary.csv", "contact.csv"], passes, {}, {}


def cmd_probe_resolvent(cfg: ExperimentConfig, outdir: str):
    params = cfgmod.resolvent_params(cfg)
    metric = cfgmod.build_metric(cfg)
    from .grids import radial_grid
    grid = radial_grid(params["r_max"], params["n_nodes"], metric.m)
    phi = geo.ScalarField(grid, 1.0 / (1.0 + grid.nodes ** 2))
    rows = elliptic.resolvent_probe(metric, grid, params["phi1"], params["phi2"],
                                    params["radii"], phi)
    cols = ["angle", "r", "lam_re", "lam_im", "sup_norm", "sup_times_r"]
    write_csv(os.path.join(outdir, "sweep.csv"), cols, rows)
    products = [r["sup_times_r"] for r in rows]
    passes = {"sweep_bounded": max(products) < 1e3 * (min(products) + 1e-300)}
    return ["sweep.csv"], passes, {}, {}


def cmd_special_functions(cfg: ExperimentConfig, outdir: str):
    params = cfgmod.special_params(cfg)
    avals = np.linspace(params["a_lo"], params["a_hi"], params["n_a"])
    zvals = np.linspace(params["z_lo"], params["z_hi"], params["n_z"])
    worst = {"diffequ": 0.0, "kummer": 0.0, "diff": 0.0}
    for a in avals:
        for b in params["b_values"]:
            for z in zvals:
                if z == 0.0 or (a == math.floor(a) and a <= 0):
                    continue
                F = kummer_f(a, b, z)
                Fp = (a / b) * kummer_f(a + 1, b + 1, z)
                Fpp = (a * (a + 1) / (b * (b + 1))) * kummer_f(a + 2, b + 2, z)
                scale = max(abs(F), abs(z * Fpp), abs((b - z) * Fp), 1e-30)
                worst["diffequ"] = max(worst["diffequ"],
                                       abs(z * Fpp + (b - z) * Fp - a * F) / scale)
                other = math.exp(z) * kummer_f(b - a, b, -z)
                worst["kummer"] = max(worst["kummer"], abs(F - other) / max(abs(F), 1e-30))
                hz = 1e-6 * max(1.0, abs(z))
                Ffd = (kummer_f(a, b, z + hz) - kummer_f(a, b, z - hz)) / (2 * hz)
                lhs = a * kummer_f(a + 1, b, z)
                rhs = a * F + z * Ffd
                dscale = max(abs(lhs), abs(a * F), abs(z * Ffd), 1.0)
                worst["diff"] = max(worst["diff"], abs(lhs - rhs) / dscale)
    ratio_rows = []
    for z in params["limit_z"]:
        a, b = 0.7, 1.9
        lead = gamma(b) / gamma(a) * math.exp(z) * z ** (a - b)
        ratio_rows.append({"z": z, "ratio_minus_one": kummer_f(a, b, z) / lead - 1.0})
    ok_limit = all(abs(r2["ratio_minus_one"]) < abs(r1["ratio_minus_one"])
                   for r1, r2 in zip(ratio_rows, ratio_rows[1:]))
    report = {"identity_max_residuals": worst, "limit_ratios": ratio_rows,
              "limit_ratio_decreasing": ok_limit,
              "tolerances": {"diffequ": 1e-9, "kummer": 1e-10, "diff": 1e-8}}
    write_json(os.path.join(outdir, "kummer_report.json"), report)
    passes = {"diffequ": worst["diffequ"] < 1e-9,
              "kummer": worst["kummer"] < 1e-10,
              "diff": worst["diff"] < 1e-8,
              "limit": ok_limit}
    return ["kummer_report.json"], passes, {}, {}


COMMANDS = {
    "verify-barriers": cmd_verify_barriers,
    "flow": cmd_flow,
    "exhaust": cmd_exhaust,
    "certify": cmd_certify,
    "probe-resolvent": cmd_probe_resolvent,
    "special-functions": cmd_special_functions,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hermlab")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", required=True)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--grid-refine", type=int, default=0)
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        if args.grid_refine:
            gsec = dict(cfg.raw.get("grid", {}))
            n0 = int(gsec.get("n_nodes", 257))
            gsec["n_nodes"] = min((n0 - 1) * 2 ** args.grid_refine + 1, 4096)
            cfg.raw["grid"] = gsec
        os.makedirs(args.out, exist_ok=True)
        t0 = time.time()
        files, passes, steps, monitors = COMMANDS[args.command](cfg, args.out)
        timings = {"wall_s": time.time() - t0}
        write_manifest(args.out, config_hash(cfg.raw_bytes, cfg.seed),
                       files + ["manifest.json"], timings, passes, cfg.seed,
                       steps, monitors)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:          # operational failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if all(passes.values()):
        return 0
    print("completed with failed certificates:",
          [k for k, v in passes.items() if not v], file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
