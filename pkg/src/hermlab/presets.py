"""Model-manifold presets wired for the experiment drivers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .grids import Grid, interval_grid, radial_grid, radial_arclength_grid
from .analytic import parabolic_barrier_conformal_A


@dataclass(frozen=True)
class FlowPreset:
    name: str
    metric: geo.ChartMetric
    target: geo.TargetManifold
    grid: Grid
    h_values: np.ndarray
    mu: float
    mu_prime: float
    T: float
    dt_user: float = 0.01
    dt_safety: float = 0.25
    sample_t0: float = 0.25
    fit_t_min: float = 1.0
    decay_exponent: float | None = None   # analytic comparison exponent

    def h_map(self) -> geo.MapField:
        return geo.MapField(self.grid, self.h_values.copy(), self.target)


def two_ends_poincare(n_nodes: int = 97, s_max: float = 0.95,
                      delta: float = 0.25, amplitude: float = 0.4,
                      T: float = 20.0, mu: float = 4.0) -> FlowPreset:
    """Two-ends manifold into the Poincare ball, quotient-map start h(s) =
    (amplitude * s, 0); mu' = mu - 2 with delta (mu - 2) < 1."""
    if delta * (mu - 2.0) >= 1.0 or mu <= 2.0:
        raise ValueError("need mu > 2 and delta (mu-2) < 1")
    if not 0 < amplitude * s_max < 1:
        raise ValueError("start map must stay inside the unit ball")
    metric = geo.two_ends(2, delta)
    grid = interval_grid(s_max, n_nodes, 2)
    target = geo.poincare_ball_target(2, scale=2.0)
    h = np.stack([amplitude * grid.nodes, np.zeros(grid.n)], axis=1)
    return FlowPreset("two-ends-poincare", metric, target, grid, h,
                      mu, mu - 2.0, T)


def conformal_decay(m: int = 2, mu: float = 2.0, xi_max: float = 40.0,
                    n_nodes: int = 2001, T: float = 140.0,
                    c0: float = 1.0) -> FlowPreset:
    """Conformal C^m with a flat target and the manufactured radial start
    h = (c0 (A + ln(1+r^2))^{1-mu}, 0): |sigma(h)| has the exact log-decay
    profile of the parabolic comparison function with exponent mu.

    The radial grid is uniform in metric arclength (r = sinh xi), which keeps
    the domain-truncation spectral floor below the fitted decay window.
    """
    if m < 2:
        raise ValueError("need m >= 2")
    A = parabolic_barrier_conformal_A(m, mu)
    metric = geo.conformal_cm(m)
    grid = radial_arclength_grid(xi_max, n_nodes, m)
    target = geo.flat_rn(2)
    prof = c0 * (A + np.log1p(grid.nodes ** 2)) ** (1.0 - mu)
    h = np.stack([prof, np.zeros(grid.n)], axis=1)
    return FlowPreset("conformal-decay", metric, target, grid, h, mu, mu - 1.0,
                      T, dt_user=0.05, sample_t0=0.25, fit_t_min=2.0,
                      decay_exponent=mu)


def poincare_identity_chart(m: int = 2):
    """Chart metric (1-r^2)^{-2} delta and unit-scale ball target: the pair
    for which the identity map's tension norm is exactly (m-1)|z|."""
    f = lambda r: 1.0 / (1.0 - np.asarray(r, float) ** 2) ** 2
    df = lambda r: 4.0 * np.asarray(r, float) / (1.0 - np.asarray(r, float) ** 2) ** 3
    d2f = lambda r: (4.0 + 20.0 * np.asarray(r, float) ** 2) / (1.0 - np.asarray(r, float) ** 2) ** 4
    metric = geo.conformal_profile(m, f, df, d2f, R=1.0)
    target = geo.poincare_ball_target(2 * m, scale=1.0)
    return metric, target, (f, df)


def z_over_one_plus_z2(grid: Grid) -> np.ndarray:
    """h(z) = z / (1 + |z|^2) on a 4-D box grid (values in R^2 x R^2)."""
    w = 1.0 + (grid.nodes ** 2).sum(axis=1)
    return grid.nodes / w[:, None]
