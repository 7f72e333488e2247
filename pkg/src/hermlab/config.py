"""Experiment configuration: TOML parsing and precondition validation.

Every downstream module precondition is checked here before any computation
runs; violations raise ConfigError with the offending key.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                  # python 3.10
    import tomli as tomllib

from . import geometry as geo
from . import presets
from .grids import interval_grid, radial_grid, radial_arclength_grid, box_grid

MANIFOLD_KINDS = ("euclidean-Cm", "conformal-Cm", "two-ends", "poincare-ball")
TARGET_KINDS = ("flat-Rn", "poincare-ball-n", "warped-product-planes")
MAP_PRESETS = ("identity", "z-over-1-plus-z2", "quotient-map", "radial-profile")
BARRIER_IDS = ("power", "log", "poincare", "two-ends", "two-ends-weak")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    raw: dict
    raw_bytes: bytes
    seed: int = 0

    def section(self, name: str, default=None) -> dict:
        out = self.raw.get(name, default if default is not None else {})
        if not isinstance(out, dict):
            raise ConfigError(f"[{name}] must be a table")
        return out

    def get(self, section: str, key: str, default=None):
        sec = self.section(section)
        if key not in sec:
            if default is None:
                raise ConfigError(f"missing {section}.{key}")
            return default
        return sec[key]


def load_config(path: str, seed_override: int | None = None) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw_bytes = fh.read()
    try:
        raw = tomllib.loads(raw_bytes.decode())
    except Exception as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    seed = int(raw.get("seed", 0)) if seed_override is None else int(seed_override)
    return ExperimentConfig(raw, raw_bytes, seed)


def _positive(cfg_val, name):
    if not (isinstance(cfg_val, (int, float)) and cfg_val > 0):
        raise ConfigError(f"{name} must be positive")
    return float(cfg_val)


def build_metric(cfg: ExperimentConfig) -> geo.ChartMetric:
    kind = cfg.get("manifold", "kind")
    if kind not in MANIFOLD_KINDS:
        raise ConfigError(f"unknown manifold kind {kind!r}")
    m = int(cfg.get("manifold", "m", 2))
    if m < 1:
        raise ConfigError("manifold.m must be >= 1")
    if kind == "euclidean-Cm":
        return geo.euclidean_cm(m)
    if kind == "conformal-Cm":
        return geo.conformal_cm(m)
    if kind == "poincare-ball":
        return geo.poincare_ball_chart(m)
    delta = _positive(cfg.get("manifold", "delta", 0.25), "manifold.delta")
    a0 = cfg.get("manifold", "a0", -1.0)
    return geo.two_ends(m, delta, None if a0 <= 0 else float(a0))


def build_target(cfg: ExperimentConfig) -> geo.TargetManifold:
    kind = cfg.get("target", "kind", "flat-Rn")
    n = int(cfg.get("target", "n", 2))
    if kind == "flat-Rn":
        return geo.flat_rn(n)
    if kind == "poincare-ball-n":
        scale = _positive(cfg.get("target", "scale", 2.0), "target.scale")
        return geo.poincare_ball_target(n, scale=scale)
    if kind == "warped-product-planes":
        if n % 2:
            raise ConfigError("warped product needs even target dimension")
        return geo.warped_product_planes(n // 2)
    raise ConfigError(f"unknown target kind {kind!r}")


def build_grid(cfg: ExperimentConfig, metric: geo.ChartMetric):
    kind = cfg.get("grid", "kind")
    n = int(cfg.get("grid", "n_nodes", 257))
    if not 8 <= n <= 4096:
        raise ConfigError("grid.n_nodes must lie in [8, 4096]")
    if kind == "interval":
        s_max = float(cfg.get("grid", "s_max", 0.95))
        if metric.kind != geo.TWO_ENDS:
            raise ConfigError("interval grids pair with the two-ends metric")
        return interval_grid(s_max, n, metric.m)
    if kind == "radial":
        r_max = _positive(cfg.get("grid", "r_max", 50.0), "grid.r_max")
        hi = metric.domain[1]
        if r_max >= hi:
            raise ConfigError("grid.r_max outside the metric chart")
        return radial_grid(r_max, n, metric.m)
    if kind == "radial-arclength":
        if metric.kind != geo.CONFORMAL_CM:
            raise ConfigError("arclength grading pairs with conformal-Cm")
        xi = _positive(cfg.get("grid", "xi_max", 40.0), "grid.xi_max")
        return radial_arclength_grid(xi, n, metric.m)
    if kind == "box":
        L = _positive(cfg.get("grid", "box_half_width", 1.0), "grid.box_half_width")
        npa = int(cfg.get("grid", "n_per_axis", 9))
        d = 2 * metric.m
        if npa ** d > 17 ** 4:
            raise ConfigError("box grid exceeds the desk-scale cap")
        return box_grid(L, npa, d)
    raise ConfigError(f"unknown grid kind {kind!r}")


def build_initial_map(cfg: ExperimentConfig, metric, target, grid) -> geo.MapField:
    preset = cfg.get("initial_map", "preset")
    if preset not in MAP_PRESETS:
        raise ConfigError(f"unknown initial map preset {preset!r}")
    if preset == "quotient-map":
        if grid.kind != "interval":
            raise ConfigError("quotient-map needs an interval grid")
        amp = float(cfg.get("initial_map", "amplitude", 0.4))
        smax = float(np.abs(grid.nodes).max())
        if target.kind == geo.POINCARE_BALL_N and not 0 < abs(amp) * smax < 1:
            raise ConfigError("quotient-map amplitude leaves the unit ball")
        vals = np.zeros((grid.n, target.n))
        vals[:, 0] = amp * grid.nodes
        return geo.MapField(grid, vals, target)
    if preset == "radial-profile":
        if grid.kind != "radial":
            raise ConfigError("radial-profile needs a radial grid")
        c0 = float(cfg.get("initial_map", "c0", 1.0))
        pmu = _positive(cfg.get("initial_map", "profile_mu", 2.0),
                        "initial_map.profile_mu")
        A = presets.parabolic_barrier_conformal_A(max(metric.m, 2), pmu)
        vals = np.zeros((grid.n, target.n))
        vals[:, 0] = c0 * (A + np.log1p(grid.nodes ** 2)) ** (1.0 - pmu)
        return geo.MapField(grid, vals, target)
    if preset == "z-over-1-plus-z2":
        if grid.kind != "box" or target.kind != geo.WARPED_PRODUCT:
            raise ConfigError("z-over-1-plus-z2 pairs a box grid with the "
                              "warped product target")
        return geo.MapField(grid, presets.z_over_one_plus_z2(grid), target)
    # identity: the decay precondition fails for the model charts -- this is
    # the negative result; flows must reject it before dispatch
    raise ConfigError(
        "initial_map preset 'identity': |sigma(id)| = (m-1)|z| under the ball "
        "chart is not in any decay class C0_mu (decay_norm diverges for every "
        "mu), so the flow/exhaustion preconditions fail")


def flow_params(cfg: ExperimentConfig) -> dict:
    sec = cfg.section("flow")
    out = {
        "t_end": _positive(sec.get("t_end", 20.0), "flow.t_end"),
        "dt_user": _positive(sec.get("dt_user", 0.01), "flow.dt_user"),
        "dt_safety": _positive(sec.get("dt_safety", 0.25), "flow.dt_safety"),
        "sample_t0": _positive(sec.get("sample_t0", 0.25), "flow.sample_t0"),
        "stationarity_tol": _positive(sec.get("stationarity_tol", 1e-8),
                                      "flow.stationarity_tol"),
        "fit_t_min": _positive(sec.get("fit_t_min", 1.0), "flow.fit_t_min"),
        "energy_stride": int(sec.get("energy_stride", 16)),
        "mu": _positive(sec.get("mu", 4.0), "flow.mu"),
        "mu_prime": _positive(sec.get("mu_prime", 2.0), "flow.mu_prime"),
    }
    return out


def validate_flow_problem(cfg: ExperimentConfig, metric, target, grid):
    params = flow_params(cfg)
    if metric.kind == geo.TWO_ENDS:
        if metric.delta * params["mu_prime"] >= 1.0:
            raise ConfigError("need delta * mu' < 1 for the two-ends barrier")
    if target.curvature_sign not in ("flat", "nonpositive", "strictly negative"):
        raise ConfigError("target must be nonpositively curved")
    return params


def barrier_params(cfg: ExperimentConfig) -> dict:
    sec = cfg.section("barriers")
    run = sec.get("run", list(BARRIER_IDS))
    for b in run:
        if b not in BARRIER_IDS:
            raise ConfigError(f"unknown barrier id {b!r}")
    out = {
        "run": run,
        "power_n": int(sec.get("power_n", 4)),
        "power_alpha": float(sec.get("power_alpha", 0.5)),
        "log_n": int(sec.get("log_n", 4)),
        "log_alpha": float(sec.get("log_alpha", 1.0)),
        "poincare_mu_prime": float(sec.get("poincare_mu_prime", 1.0)),
        "twoends_mu_prime": float(sec.get("twoends_mu_prime", 2.0)),
        "twoends_delta": float(sec.get("twoends_delta", 0.25)),
        "weak_eps": float(sec.get("weak_eps", 0.2)),
    }
    # precondition screen before any computation
    if "power" in run:
        n, a = out["power_n"], out["power_alpha"]
        if n <= 2 or not 0 < a < n / 2 - 1:
            raise ConfigError("power barrier needs n > 2, 0 < alpha < n/2 - 1")
    if "log" in run and (out["log_n"] <= 2 or out["log_alpha"] <= 0):
        raise ConfigError("log barrier needs n > 2, alpha > 0")
    if "poincare" in run and out["poincare_mu_prime"] <= 0:
        raise ConfigError("poincare barrier needs mu' > 0")
    if ("two-ends" in run or "two-ends-weak" in run):
        if out["twoends_delta"] * out["twoends_mu_prime"] >= 1.0:
            raise ConfigError("two-ends barrier needs delta * mu' < 1")
        if out["weak_eps"] <= 0:
            raise ConfigError("weak supersolution needs eps > 0")
    return out


def resolvent_params(cfg: ExperimentConfig) -> dict:
    sec = cfg.section("resolvent")
    phi1 = float(sec.get("phi1", 3 * math.pi / 4))
    phi2 = float(sec.get("phi2", -3 * math.pi / 4))
    if not (math.pi / 2 < phi1 < math.pi and -math.pi < phi2 < -math.pi / 2):
        raise ConfigError("rays need pi/2 < phi1 < pi and -pi < phi2 < -pi/2")
    radii = [float(r) for r in sec.get("radii", [1.0, 2.0, 5.0, 10.0, 30.0, 100.0])]
    if any(r <= 0 for r in radii):
        raise ConfigError("resolvent radii must be positive")
    return {"phi1": phi1, "phi2": phi2, "radii": radii,
            "r_max": float(sec.get("r_max", 30.0)),
            "n_nodes": int(sec.get("n_nodes", 301))}


def special_params(cfg: ExperimentConfig) -> dict:
    sec = cfg.section("special_functions")
    out = {
        "a_lo": float(sec.get("a_lo", -3.0)), "a_hi": float(sec.get("a_hi", 3.0)),
        "n_a": int(sec.get("n_a", 13)),
        "b_values": [float(b) for b in sec.get("b_values", [1.3, 3.0, 2.0, 6.0])],
        "z_lo": float(sec.get("z_lo", -20.0)), "z_hi": float(sec.get("z_hi", 20.0)),
        "n_z": int(sec.get("n_z", 21)),
        "limit_z": [float(z) for z in sec.get("limit_z", [50.0, 100.0, 200.0])],
    }
    for b in out["b_values"]:
        if b == math.floor(b) and b <= 0:
            raise ConfigError("b must not be a nonpositive integer")
    return out


def exhaust_params(cfg: ExperimentConfig) -> dict:
    sec = cfg.section("exhaust")
    return {
        "n_levels": int(sec.get("n_levels", 6)),
        "r0": float(sec.get("r0", 6.25)),
        "tol": float(sec.get("tol", 1e-6)),
        "n_master": int(sec.get("n_master", 513)),
        "newton_tol": float(sec.get("newton_tol", 1e-8)),
    }
