import numpy as np
import pytest
from numpy.testing import assert_allclose
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import hermlab.elliptic as ell
import hermlab.geometry as geo
from hermlab.grids import interval_grid, radial_grid


def test_assemble_mmatrix_structure():
    g = radial_grid(3.0, 65, 2)
    op = ell.assemble_operator(geo.conformal_cm(2), g, 0.0)
    A = op.matrix.toarray()
    off = A - np.diag(np.diag(A))
    assert off.max() <= 1e-14
    assert np.all(np.diag(A) > 0)


def test_assemble_complex_shift_block_system():
    g = radial_grid(3.0, 33, 2)
    op = ell.assemble_operator(geo.euclidean_cm(2), g, 1.0 + 2.0j)
    assert op.is_complex
    assert op.matrix.shape == (2 * op.n_interior, 2 * op.n_interior)


def test_solve_zero_data_zero_solution():
    g = radial_grid(2.0, 65, 2)
    op = ell.assemble_operator(geo.euclidean_cm(2), g, 0.0)
    u = ell.solve_dirichlet(op, np.zeros(g.n), 0.0)
    assert_allclose(u.values, 0.0, atol=1e-14)


def test_solve_euclidean_ball_closed_form():
    # -Lap u = 1 on B_1 in R^4, u|_boundary = 0 -> u = (1-r^2)/8
    g = radial_grid(1.0, 201, 2)
    op = ell.assemble_operator(geo.euclidean_cm(2), g, 0.0)
    u = ell.solve_dirichlet(op, np.ones(g.n), 0.0)
    assert np.abs(u.values - (1 - g.nodes ** 2) / 8).max() < 1e-10


def test_mms_conformal_order_two():
    met = geo.conformal_cm(2)
    errs = []
    for n in (101, 201, 401):
        g = radial_grid(2.0, n, 2)
        r = g.nodes
        ustar = 1.0 / (1 + r ** 2)
        lap = 8.0 * (1 + r ** 2) ** (-2) - 8.0 * r ** 2 * (1 + r ** 2) ** (-3)
        f = (1 + r ** 2) * lap                  # -Lap~ u* in closed form
        op = ell.assemble_operator(met, g, 0.0)
        u = ell.solve_dirichlet(op, f, ustar[-1])
        errs.append(np.abs(u.values - ustar).max())
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all((1.8 <= orders) & (orders <= 2.2))


@settings(max_examples=20, deadline=None)
@given(arrays(float, 33, elements=st.floats(0.0, 5.0)),
       st.floats(0.0, 2.0), st.floats(0.0, 3.0))
def test_discrete_maximum_principle(fvals, gval, lam):
    g = radial_grid(2.0, 33, 2)
    op = ell.assemble_operator(geo.conformal_cm(2), g, lam)
    u = ell.solve_dirichlet(op, fvals, gval)
    assert u.values.min() >= -1e-11 * max(1.0, abs(fvals).max(), gval)


def test_resolvent_real_shift_bound():
    # lambda real > 0: u >= 0 and sup u <= sup phi / lambda
    g = radial_grid(5.0, 101, 2)
    met = geo.conformal_cm(2)
    phi = 1.0 / (1 + g.nodes ** 2)
    lam = 2.0
    op = ell.assemble_operator(met, g, lam)
    u = ell.solve_dirichlet(op, phi, 0.0)
    assert u.values.min() >= -1e-13
    assert u.values.max() <= phi.max() / lam + 1e-12


def test_resolvent_probe_rows_and_halved_grid():
    met = geo.conformal_cm(2)
    g = radial_grid(20.0, 201, 2)
    phi = geo.ScalarField(g, 1.0 / (1 + g.nodes ** 2))
    rows = ell.resolvent_probe(met, g, 3 * np.pi / 4, -3 * np.pi / 4, [1.0], phi)
    g2 = radial_grid(20.0, 401, 2)
    phi2 = geo.ScalarField(g2, 1.0 / (1 + g2.nodes ** 2))
    rows2 = ell.resolvent_probe(met, g2, 3 * np.pi / 4, -3 * np.pi / 4, [1.0], phi2)
    # imaginary shift produces a genuinely complex solution; halved spacing agrees
    assert rows[0]["sup_norm"] == pytest.approx(rows2[0]["sup_norm"], rel=5e-3)
    op = ell.assemble_operator(met, g, 1.0j)
    u = ell.solve_dirichlet(op, phi.values, 0.0)
    assert np.abs(u.values.imag).max() > 1e-4


def test_resolvent_probe_angle_validation():
    met = geo.conformal_cm(2)
    g = radial_grid(5.0, 33, 2)
    phi = geo.ScalarField(g, np.ones(33))
    with pytest.raises(ell.SolverError):
        ell.resolvent_probe(met, g, np.pi / 4, -3 * np.pi / 4, [1.0], phi)


def test_exhaustion_zero_source_zero_limit():
    met = geo.euclidean_cm(2)
    res = ell.exhaustion_solve(met, lambda r: np.zeros_like(np.asarray(r, float)),
                               4.0, 2.0,
                               ell.ExhaustionSchedule((4.0, 8.0, 16.0), 1e-6, 4.0),
                               n_master=513)
    assert_allclose(res.field.values, 0.0, atol=1e-14)
    assert res.converged


def test_exhaustion_manufactured_power_barrier():
    # u* = (1+r^2)^{-1/2}, f = -Lap u*: recovered with C ~ 1
    met = geo.euclidean_cm(2)
    alpha = 0.5

    def source(r):
        r = np.asarray(r, float)
        return (1 + r ** 2) ** (-alpha - 2) * (2 * alpha * 4 * (1 + r ** 2)
                                               - 4 * alpha * (alpha + 1) * r ** 2)

    sched = ell.ExhaustionSchedule(tuple(8.0 * 2.0 ** k for k in range(5)), 1e-6, 8.0)
    res = ell.exhaustion_solve(met, source, 2 * alpha + 2, 2 * alpha, sched,
                               n_master=4001)
    r = res.field.grid.nodes
    ustar = (1 + r ** 2) ** (-alpha)
    inner = r <= 8.0
    # truncation-level agreement on the reference compact
    assert np.abs(res.field.values - ustar)[inner].max() < 2e-2
    assert res.barrier_constant == pytest.approx(1.0, abs=0.15)
    # stabilization control: increments of C_k shrink with the level
    Cs = [row["barrier_C"] for row in res.levels]
    incs = np.abs(np.diff(Cs))
    assert np.all(np.diff(incs) < 0)


def test_exhaustion_manufactured_log_barrier():
    from hermlab.analytic import barrier_log_A
    met = geo.conformal_cm(2)
    alpha = 1.0
    A = barrier_log_A(4, alpha)

    def ustar(r):
        return np.log(A + np.asarray(r, float) ** 2) ** (-alpha)

    def source(r):
        r = np.asarray(r, float)
        h = 1e-4
        lap = ((ustar(r + h) - 2 * ustar(r) + ustar(r - h)) / h ** 2
               + 3.0 / np.maximum(r, 1e-8) * (ustar(r + h) - ustar(r - h)) / (2 * h))
        lap = np.where(r < 1e-6, 8 * (ustar(r + h) - ustar(r)) / h ** 2, lap)
        return -(1 + r ** 2) * lap

    sched = ell.ExhaustionSchedule(tuple(16.0 * 2.0 ** k for k in range(4)), 1e-6, 16.0)
    res = ell.exhaustion_solve(met, source, alpha + 1, alpha, sched, n_master=2049)
    r = res.field.grid.nodes
    inner = r <= 16.0
    # the zero-boundary truncation is exactly a constant shift (the radial
    # bounded kernel of Lap~ is constant), so recovery holds up to u*(R_last)
    shift = ustar(sched.levels[-1])
    err = np.abs(res.field.values + shift - ustar(r))[inner].max()
    assert err < 5e-3 * ustar(0.0)


def test_comparison_function_positivity():
    met = geo.two_ends(2, 0.25)
    g = interval_grid(0.95, 97, 2)
    src = np.exp(-8 * g.nodes ** 2)
    V = ell.comparison_function(met, geo.ScalarField(g, src), 4.0, 2.0, grid=g)
    assert V.values[g.interior].min() > 0
    V0 = ell.comparison_function(met, geo.ScalarField(g, np.zeros(g.n)), 4.0, 2.0,
                                 grid=g)
    assert_allclose(V0.values, 0.0, atol=1e-14)


def test_comparison_function_decay_class_two_ends():
    # V for the quotient-map source lies in the mu' = 2 decay class
    from hermlab.presets import two_ends_poincare
    pre = two_ends_poincare(n_nodes=129, s_max=0.97)
    h = pre.h_map()
    sig = geo.tension_norm(pre.metric, pre.target, h)
    V = ell.comparison_function(pre.metric, geo.ScalarField(pre.grid, 4 * sig),
                                pre.mu, pre.mu_prime, grid=pre.grid)
    sp = geo.decay_space_for(pre.metric, pre.mu_prime)
    rep = geo.decay_norm(V, sp)
    assert not rep.diverged


def test_harmonic_solve_flat_equals_linear_solve():
    # flat target: stationary flow solves Lap~ u = 0 with boundary data h
    met = geo.conformal_cm(2)
    g = radial_grid(3.0, 101, 2)
    tgt = geo.flat_rn(2)
    hv = np.stack([0.3 * np.exp(-g.nodes ** 2), 0.1 * np.ones(g.n)], 1)
    h = geo.MapField(g, hv, tgt)
    res = ell.hermitian_harmonic_solve(met, tgt, h, tol=1e-10)
    op = ell.assemble_operator(met, g, 0.0)
    for k in range(2):
        lin = ell.solve_dirichlet(op, np.zeros(g.n), hv[-1, k])
        assert np.abs(res.u.values[:, k] - lin.values).max() < 1e-8


def test_harmonic_solve_already_stationary():
    met = geo.euclidean_cm(2)
    g = radial_grid(2.0, 65, 2)
    tgt = geo.flat_rn(2)
    hv = np.stack([np.full(g.n, 0.2), np.linspace(0, 0, g.n)], 1)
    h = geo.MapField(g, hv, tgt)
    res = ell.hermitian_harmonic_solve(met, tgt, h, tol=1e-10)
    assert res.flow_steps == 0
    assert res.newton_iters == 0
    assert_allclose(res.u.values, hv, atol=1e-12)


def test_harmonic_solve_two_ends_rho_bound():
    from hermlab.presets import two_ends_poincare
    pre = two_ends_poincare(n_nodes=65, T=2.0)
    res = ell.hermitian_harmonic_solve(pre.metric, pre.target, pre.h_map(),
                                       tol=1e-9)
    assert res.sigma_max < 1e-9
    assert np.all(res.rho >= 0)
    assert res.rho_over_V_max <= 1.0 + 1e-6


def test_exhaustion_harmonic_two_schedules_agree():
    from hermlab.presets import two_ends_poincare
    pre = two_ends_poincare(n_nodes=65)

    def h_fn(s):
        out = np.zeros((len(np.atleast_1d(s)), 2))
        out[:, 0] = 0.4 * np.atleast_1d(s)
        return out

    lev_a = (0.75, 0.875, 0.9375, 0.96875)
    lev_b = (0.875, 0.96875)
    lim_a, rows_a = ell.exhaustion_harmonic(
        pre.metric, pre.target, h_fn,
        ell.ExhaustionSchedule(lev_a, 1e-9, 0.5), n_master=193, tol=1e-9)
    lim_b, rows_b = ell.exhaustion_harmonic(
        pre.metric, pre.target, h_fn,
        ell.ExhaustionSchedule(lev_b, 1e-9, 0.5), n_master=193, tol=1e-9)
    ref = np.abs(lim_a.grid.nodes) <= 0.5
    diff = np.abs(lim_a.values - lim_b.values)[ref].max()
    assert diff < 1e-6
    assert all(r["sup_rho_over_V"] <= 1.0 + 1e-2 for r in rows_a)
    assert all(np.isfinite(r["energy_L1"]) for r in rows_a)


def test_exhaustion_harmonic_stationary_start_returns_h():
    # sigma(h) = 0 (affine flat map): every level returns h
    met = geo.euclidean_cm(2)
    tgt = geo.flat_rn(2)

    def h_fn(r):
        out = np.zeros((len(np.atleast_1d(r)), 2))
        out[:, 0] = 0.25
        return out

    lim, rows = ell.exhaustion_harmonic(
        met, tgt, h_fn, ell.ExhaustionSchedule((2.0, 4.0), 1e-8, 2.0),
        n_master=129, tol=1e-10)
    assert_allclose(lim.values[:, 0], 0.25, atol=1e-12)
    assert rows[-1]["interlevel_sup_diff"] < 1e-12
