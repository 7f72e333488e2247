import numpy as np
import pytest
from numpy.testing import assert_allclose

import hermlab.elliptic as ell
import hermlab.geometry as geo
import hermlab.parabolic as par
from hermlab.grids import interval_grid, radial_grid
from hermlab.presets import two_ends_poincare


@pytest.fixture(scope="module")
def two_ends_short():
    pre = two_ends_poincare(n_nodes=65, T=3.0)
    h = pre.h_map()
    sig = geo.tension_norm(pre.metric, pre.target, h)
    V = ell.comparison_function(pre.metric, geo.ScalarField(pre.grid, 4 * sig),
                                pre.mu, pre.mu_prime, grid=pre.grid)
    traj = par.integrate(pre.metric, pre.target, h, V, T=3.0)
    return pre, h, V, traj


def test_flow_step_stationary_state_unchanged():
    met = geo.euclidean_cm(2)
    g = radial_grid(2.0, 65, 2)
    tgt = geo.flat_rn(2)
    hv = np.full((g.n, 2), 0.3)
    h = geo.MapField(g, hv, tgt)
    flow = par.HeatFlow(met, tgt, h, dt=0.01)
    state0 = flow.state()
    nxt = par.flow_step(state0, met, tgt, h)
    assert_allclose(nxt.u.values, hv, atol=1e-13)
    assert nxt.t == pytest.approx(0.01)


def test_flat_flow_equals_linear_backward_euler():
    met = geo.conformal_cm(2)
    g = radial_grid(3.0, 81, 2)
    tgt = geo.flat_rn(1)
    hv = np.exp(-g.nodes ** 2)[:, None]
    h = geo.MapField(g, hv, tgt)
    flow = par.HeatFlow(met, tgt, h, dt=0.02)
    for _ in range(5):
        flow.step()
    # manual theta = 1 scheme on the same stencil
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla
    op = ell.assemble_operator(met, g, 0.0)
    ni = op.n_interior
    M = sp.identity(ni, format="csr") + (0.02 / 4.0) * op.matrix
    u = hv[:, 0].copy()
    for _ in range(5):
        rhs = u[op.interior_idx] - (0.02 / 4.0) * (op.boundary_coupling @ u[op.boundary_idx])
        u[op.interior_idx] = spla.spsolve(M.tocsc(), rhs)
    assert np.abs(flow.u[:, 0] - u).max() < 1e-12


def test_monitor_velocity_initial_value(two_ends_short):
    pre, h, V, traj = two_ends_short
    sig_h = geo.tension_norm(pre.metric, pre.target, h)
    assert traj.max_velocity[0] == pytest.approx(float(sig_h.max()), rel=1e-12)
    assert traj.ceiling == pytest.approx(float(sig_h.max()), rel=1e-12)


def test_monitor_velocity_never_exceeds_ceiling(two_ends_short):
    _, _, _, traj = two_ends_short
    assert traj.velocity_violations == 0
    assert traj.monotonicity_violations == 0
    assert np.all(traj.max_velocity <= traj.ceiling * (1 + 1e-8))


def test_monitor_rho_zero_at_start_and_bounded(two_ends_short):
    pre, h, V, traj = two_ends_short
    assert traj.rho_over_V[0] == 0.0
    assert traj.rho_over_V.max() <= 1.0 + 100.0 * pre.grid.h ** 2


def test_flat_harmonic_boundary_flow_stays_zero_rho():
    # h harmonic (constant) into flat target: rho stays 0 for all t
    met = geo.euclidean_cm(2)
    g = radial_grid(2.0, 49, 2)
    tgt = geo.flat_rn(2)
    h = geo.MapField(g, np.full((g.n, 2), 0.1), tgt)
    V = geo.ScalarField(g, np.zeros(g.n))
    traj = par.integrate(met, tgt, h, V, T=0.5, dt=0.01)
    assert np.all(traj.rho_over_V == 0.0)
    assert traj.max_velocity[-1] < 1e-13


def test_dt_safeguard_applies_to_curved_targets():
    pre = two_ends_poincare(n_nodes=65)
    h = pre.h_map()
    flow = par.HeatFlow(pre.metric, pre.target, h, dt_user=0.1, dt_safety=0.25)
    f = pre.metric.f(pre.grid.nodes)
    assert flow.dt == pytest.approx(0.25 * f.min() * pre.grid.h ** 2)
    # flat targets keep the configured dt (no explicit term to safeguard)
    g = radial_grid(2.0, 33, 2)
    hf = geo.MapField(g, np.zeros((g.n, 1)), geo.flat_rn(1))
    flow2 = par.HeatFlow(geo.euclidean_cm(2), geo.flat_rn(1), hf, dt_user=0.1)
    assert flow2.dt == 0.1


def test_ball_escape_aborts():
    pre = two_ends_poincare(n_nodes=33)
    h = pre.h_map()
    bad = h.values.copy()
    flow = par.HeatFlow(pre.metric, pre.target, h)
    flow.u = bad
    flow.u[10] = [5.0, 0.0]
    with pytest.raises(par.FlowError):
        flow._refresh_cache()


def test_stationarity_flags_and_polish(two_ends_short):
    pre, h, V, traj = two_ends_short
    res = par.stationarity(traj, 1e-8, metric=pre.metric, target=pre.target, h=h)
    assert res["converged"]
    assert res["velocity"] < 1e-8
    # cross-check against the elliptic solver on the same domain
    res_e = ell.hermitian_harmonic_solve(pre.metric, pre.target, h, tol=1e-8)
    assert np.abs(res["map"].values - res_e.u.values).max() < 1e-7


def test_stationarity_constant_zero_series_flagged():
    met = geo.euclidean_cm(2)
    g = radial_grid(2.0, 33, 2)
    tgt = geo.flat_rn(1)
    h = geo.MapField(g, np.full((g.n, 1), 0.2), tgt)
    V = geo.ScalarField(g, np.zeros(g.n))
    traj = par.integrate(met, tgt, h, V, T=0.3, dt=0.01)
    fit = traj.decay_fit()
    assert fit["flag"] == "constant-zero-or-short"
    res = par.stationarity(traj, 1e-6)
    assert res["converged"]


def test_slab_energy_recorded(two_ends_short):
    _, _, _, traj = two_ends_short
    assert len(traj.slab_energy) == 1          # one completed [0,2] slab at T=3
    assert traj.slab_energy[0] > 0


def test_energy_inequality_trace_on_converged_flow(two_ends_short):
    # display-(25) style residual along the converged flow
    import hermlab.certify as cert
    pre, h, V, traj = two_ends_short
    res = par.stationarity(traj, 1e-9, metric=pre.metric, target=pre.target, h=h)
    ce = cert.check_energy_inequality(pre.metric, pre.target, res["map"],
                                      mode="elliptic", stationarity_tol=1e-7)
    assert ce.passed
