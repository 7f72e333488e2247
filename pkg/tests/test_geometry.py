import numpy as np
import pytest
from numpy.testing import assert_allclose
from hypothesis import given, settings
from hypothesis import strategies as st

import hermlab.geometry as geo
from hermlab.grids import (box_grid, interval_grid, periodic_interval_grid,
                           radial_grid)
from hermlab.presets import poincare_identity_chart, z_over_one_plus_z2


def test_laplacian_constant_field():
    g = radial_grid(3.0, 101, 2)
    u = geo.ScalarField(g, np.ones(g.n))
    lap = geo.holomorphic_laplacian(geo.euclidean_cm(2), u)
    assert_allclose(lap.values, 0.0, atol=1e-12)


def test_laplacian_euclidean_quadratic():
    # |x|^2 in real dimension 4 -> 8
    g = radial_grid(3.0, 201, 2)
    u = geo.ScalarField(g, g.nodes ** 2)
    lap = geo.holomorphic_laplacian(geo.euclidean_cm(2), u)
    assert_allclose(lap.values[:-1], 8.0, atol=1e-9)


def test_laplacian_conformal_quadratic():
    g = radial_grid(3.0, 201, 2)
    u = geo.ScalarField(g, g.nodes ** 2)
    lap = geo.holomorphic_laplacian(geo.conformal_cm(2), u)
    assert_allclose(lap.values[:-1], 8.0 * (1 + g.nodes[:-1] ** 2), rtol=1e-8)


def test_field_grid_mismatch_rejected():
    g = radial_grid(1.0, 8, 2)
    with pytest.raises(geo.GeometryError):
        geo.ScalarField(g, np.zeros(5))
    with pytest.raises(geo.GeometryError):
        geo.ScalarField(g, np.full(8, np.nan))


def test_flat_target_factor_convention():
    # sigma(u) = (1/4) Lap~ u componentwise for flat targets
    rng = np.random.default_rng(0)
    g = radial_grid(2.0, 129, 2)
    met = geo.conformal_cm(2)
    tgt = geo.flat_rn(3)
    for _ in range(10):
        vals = rng.normal(size=(g.n, 3))
        u = geo.MapField(g, vals, tgt)
        sig = geo.tension_field(met, tgt, u)
        for k in range(3):
            lap = geo.holomorphic_laplacian(met, geo.ScalarField(g, vals[:, k]))
            assert_allclose(sig.values[:-1, k], lap.values[:-1] / 4, atol=1e-12)


def test_constant_map_tension_and_energy_vanish():
    g = interval_grid(0.9, 65, 2)
    met = geo.two_ends(2, 0.25)
    tgt = geo.poincare_ball_target(2)
    u = geo.MapField(g, np.full((g.n, 2), 0.3) * np.array([1.0, -0.5]), tgt)
    sig = geo.tension_field(met, tgt, u)
    e = geo.energy_density(met, tgt, u)
    assert_allclose(sig.values, 0.0, atol=1e-12)
    assert_allclose(e.values, 0.0, atol=1e-14)


def test_poincare_identity_tension_norm():
    # (m-1)|z| for the (1-r^2)^{-2} chart with unit-scale ball target
    metric, target, _ = poincare_identity_chart(2)
    pts = np.zeros((9, 4))
    pts[:, 0] = np.linspace(0.05, 0.85, 9)
    pts[:, 1] = 0.1
    sig = geo.tension_at_points(metric, target, lambda x: x.copy(), pts, 1e-3)
    nrm = geo.gnorm_vector(target, pts, sig)
    r = np.sqrt((pts ** 2).sum(1))
    assert_allclose(nrm, r, rtol=1e-5)


def test_warped_sigma_h_closed_form_order():
    # |sigma(h)| for h = z/(1+|z|^2), against the closed form, at h and h/2
    tgt = geo.warped_product_planes(2)
    met = geo.conformal_cm(2)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.7, 0.7, size=(12, 4))
    r = np.sqrt((pts ** 2).sum(1))
    closed = r * (7 + 2 * r ** 2) / (2 * (1 + r ** 2) ** 2)

    def h_fn(x):
        w = 1 + (x ** 2).sum(1)
        return x / w[:, None]

    errs = []
    for h in (0.02, 0.01):
        sig = geo.tension_at_points(met, tgt, h_fn, pts, h)
        nrm = geo.gnorm_vector(tgt, h_fn(pts), sig)
        errs.append(np.abs(nrm - closed).max())
    order = np.log2(errs[0] / errs[1])
    assert errs[1] < 1e-3
    assert 1.7 < order < 2.3


def test_energy_identity_flat():
    # e(id) = m/2 for the flat chart into flat R^{2m}
    bg = box_grid(1.0, 7, 4)
    met = geo.euclidean_cm(2)
    tgt = geo.flat_rn(4)
    u = geo.MapField(bg, bg.nodes.copy(), tgt)
    e = geo.energy_density(met, tgt, u)
    assert_allclose(e.values[bg.interior], 1.0, atol=1e-12)   # m/2 = 1


def test_energy_h_at_origin_symbolic_oracle():
    sympy = pytest.importorskip("sympy")
    x1, y1, x2, y2 = sympy.symbols("x1 y1 x2 y2", real=True)
    w = 1 + x1 ** 2 + y1 ** 2 + x2 ** 2 + y2 ** 2
    comps = [x1 / w, y1 / w, x2 / w, y2 / w]
    gam_inv = w   # chart (1+|z|^2)^{-1} delta
    e_sym = 0
    for c in comps:
        for v in (x1, y1, x2, y2):
            e_sym += sympy.diff(c, v) ** 2
    e_sym = gam_inv * e_sym / 4
    oracle = float(e_sym.subs({x1: 0, y1: 0, x2: 0, y2: 0}))

    bg = box_grid(0.08, 5, 4)
    met = geo.conformal_cm(2)
    tgt = geo.flat_rn(4)
    u = geo.MapField(bg, z_over_one_plus_z2(bg), tgt)
    e = geo.energy_density(met, tgt, u)
    center = np.argmin((bg.nodes ** 2).sum(1))
    assert abs(e.values[center] - oracle) < 5e-3
    assert oracle == pytest.approx(1.0)


def test_christoffel_flat_zero():
    tgt = geo.flat_rn(3)
    assert_allclose(geo.christoffel(tgt, np.zeros(3)), 0.0)


def test_christoffel_poincare_component():
    tgt = geo.poincare_ball_target(3)
    G = geo.christoffel(tgt, np.array([0.5, 0.0, 0.0]))
    assert G[0, 0, 0] == pytest.approx(4.0 / 3.0, rel=1e-12)
    lo, hi = geo.poincare_christoffel_bounds(0.5)
    assert np.abs(G).max() == pytest.approx(hi, rel=1e-10)
    assert np.abs(G).max() > lo


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-0.6, 0.6), min_size=2, max_size=2))
def test_christoffel_symmetric_lower_indices(x):
    x = np.asarray(x)
    if (x ** 2).sum() >= 0.9:
        x = 0.5 * x
    for tgt in (geo.poincare_ball_target(2), geo.warped_product_planes(1)):
        G = geo.christoffel(tgt, x)
        assert_allclose(G, np.swapaxes(G, 1, 2), atol=1e-9)


def test_warped_polar_christoffel_closed_forms():
    r = np.array([0.3, 0.7, 1.4])
    Grphi, Gphir = geo.warped_polar_christoffel(r)
    assert_allclose(Grphi, -(r + 2 * r ** 3), rtol=1e-12)
    assert_allclose(Gphir, (1 + 2 * r ** 2) / (r * (1 + r ** 2)), rtol=1e-12)


def test_warped_christoffel_fd_vs_sympy():
    sympy = pytest.importorskip("sympy")
    p, q = sympy.symbols("p q", real=True)
    gm = sympy.Matrix([[1 + q ** 2, -p * q], [-p * q, 1 + p ** 2]])
    gi = gm.inv()
    pt = {p: 0.4, q: -0.25}
    Gs = np.zeros((2, 2, 2))
    for l in range(2):
        for j in range(2):
            for k in range(2):
                expr = sum(gi[l, s] * (sympy.diff(gm[s, k], (p, q)[j])
                                       + sympy.diff(gm[s, j], (p, q)[k])
                                       - sympy.diff(gm[j, k], (p, q)[s])) / 2
                           for s in range(2))
                Gs[l, j, k] = float(expr.subs(pt))
    tgt = geo.warped_product_planes(1)
    Gn = geo.christoffel(tgt, np.array([0.4, -0.25]))
    assert_allclose(Gn, Gs, atol=1e-9)


def test_metric_positive_definite_and_inverse():
    rng = np.random.default_rng(2)
    for tgt in (geo.poincare_ball_target(3), geo.warped_product_planes(2)):
        x = rng.uniform(-0.4, 0.4, size=(20, tgt.n))
        g = tgt.metric(x)
        gi = tgt.metric_inv(x)
        assert_allclose(np.einsum("nij,njk->nik", g, gi),
                        np.broadcast_to(np.eye(tgt.n), g.shape), atol=1e-12)
        ev = np.linalg.eigvalsh(g)
        assert ev.min() > 0


def test_distance_axioms_and_closed_form():
    tgt = geo.poincare_ball_target(2)
    p = np.array([0.5, 0.0])
    assert geo.target_distance(tgt, p, p) == 0.0
    assert geo.target_distance(tgt, np.zeros(2), p) == pytest.approx(
        2 * np.arctanh(0.5), rel=1e-12)
    rng = np.random.default_rng(3)
    P = rng.uniform(-0.5, 0.5, (25, 2))
    Q = rng.uniform(-0.5, 0.5, (25, 2))
    d_pq = tgt.distance(P, Q)
    d_qp = tgt.distance(Q, P)
    assert_allclose(d_pq, d_qp, rtol=1e-12)
    # triangle inequality on sampled triples
    Rpts = rng.uniform(-0.5, 0.5, (25, 2))
    assert np.all(d_pq <= tgt.distance(P, Rpts) + tgt.distance(Rpts, Q) + 1e-12)


def test_distance_closed_form_vs_shooting():
    tgt = geo.poincare_ball_target(2)
    rng = np.random.default_rng(4)
    P = rng.uniform(-0.55, 0.55, (8, 2))
    Q = rng.uniform(-0.55, 0.55, (8, 2))
    d_sh = geo.geodesic_shooting_batch(tgt, P, Q, n_steps=2500, max_iter=40)
    assert np.abs(d_sh - tgt.distance(P, Q)).max() < 1e-6


def test_distance_shooting_hundred_random_pairs():
    # module invariant: closed form vs oracle to 1e-6 on 100 random pairs
    tgt = geo.poincare_ball_target(2)
    rng = np.random.default_rng(44)
    P = rng.uniform(-0.6, 0.6, (100, 2))
    Q = rng.uniform(-0.6, 0.6, (100, 2))
    keep = (((P ** 2).sum(1) < 0.64) & ((Q ** 2).sum(1) < 0.64)
            & (((P - Q) ** 2).sum(1) > 1e-4))
    P, Q = P[keep], Q[keep]
    d_sh = geo.geodesic_shooting_batch(tgt, P, Q, n_steps=3000, max_iter=40)
    assert np.abs(d_sh - tgt.distance(P, Q)).max() < 1e-6


def test_warped_radial_distance():
    tw = geo.warped_product_planes(1)
    assert geo.target_distance(tw, [0.3, 0.0], [0.7, 0.0]) == pytest.approx(0.4)
    assert geo.target_distance(tw, [0.0, 0.0], [0.0, 0.6]) == pytest.approx(0.6)


def test_kahler_form_differential():
    met = geo.conformal_cm(2)
    r = np.array([0.5, 1.0, 2.0])
    assert np.all(geo.kahler_form_differential(met, r) > 0)
    const = geo.euclidean_cm(2)
    assert_allclose(geo.kahler_form_differential(const, r), 0.0)
    m1 = geo.conformal_cm(1)
    assert_allclose(geo.kahler_form_differential(m1, r), 0.0)


def test_kahler_differential_fd_component_oracle():
    # orthonormal-coframe component magnitude against differences of f
    met = geo.conformal_cm(2)
    r0 = 1.0
    hs = 1e-6
    dfd = (met.f(r0 + hs) - met.f(r0 - hs)) / (2 * hs)
    want = np.sqrt(2 - 1) * abs(dfd) * met.f(r0) ** (-1.5) / (2 * np.sqrt(2))
    assert geo.kahler_form_differential(met, r0) == pytest.approx(want, rel=1e-8)


def test_decay_norm_exact_profile():
    g = radial_grid(50.0, 501, 2)
    sp = geo.DecaySpace(1.5, lambda r: np.asarray(r, float))
    f = geo.ScalarField(g, (1 + g.nodes) ** (-1.5))
    rep = geo.decay_norm(f, sp)
    assert rep.constant == pytest.approx(1.0, rel=1e-12)
    assert not rep.diverged


def test_decay_norm_divergence_flag():
    g = radial_grid(50.0, 501, 2)
    sp = geo.DecaySpace(0.5, lambda r: np.asarray(r, float))
    f = geo.ScalarField(g, np.ones(g.n))
    assert geo.decay_norm(f, sp).diverged


def test_decay_norm_sigma_h_all_mu():
    # |sigma(h)| ~ 1/|z| decays beating every power of the log distance
    from hermlab.analytic import sigma_h_example
    g = radial_grid(400.0, 2001, 2)
    f = geo.ScalarField(g, sigma_h_example(g.nodes))
    for mu in (0.5, 2.0, 5.0):
        sp = geo.DecaySpace(mu, lambda r: np.log1p(np.asarray(r, float) ** 2))
        assert not geo.decay_norm(f, sp).diverged


def test_two_ends_profile_invariants():
    met = geo.two_ends(2, 0.25)
    s = np.linspace(-0.99, 0.99, 399)
    f = met.f(s)
    assert np.all(f > 0)
    outer = np.abs(s) > 0.5
    assert_allclose(f[outer],
                    0.0625 * (1 - np.abs(s[outer])) ** (-2.5), rtol=1e-12)
    # derivative evaluators against second-order central differences of f
    hs = 1e-5
    dfd = (met.f(s + hs) - met.f(s - hs)) / (2 * hs)
    assert_allclose(met.df(s), dfd, rtol=2e-4, atol=1e-8)
    d2fd = (met.f(s + hs) - 2 * f + met.f(s - hs)) / hs ** 2
    assert_allclose(met.d2f(s), d2fd, rtol=2e-3, atol=1e-4)


def test_poincare_chart_profile():
    met = geo.poincare_ball_chart(2)
    r = np.linspace(0.0, 0.95, 30)
    assert_allclose(met.f(r), 4.0 / (1 - r ** 2) ** 2, rtol=1e-14)


def test_map_field_ball_membership_assertion():
    g = interval_grid(0.9, 33, 2)
    tgt = geo.poincare_ball_target(2)
    bad = np.zeros((g.n, 2))
    bad[5, 0] = 1.2
    with pytest.raises(geo.GeometryError):
        geo.MapField(g, bad, tgt)


def test_tension_chart_escape_error():
    g = interval_grid(0.9, 33, 2)
    met = geo.two_ends(2, 0.25)
    tgt = geo.poincare_ball_target(2)
    u = geo.MapField(g, np.zeros((g.n, 2)), tgt)
    u.values[4, 0] = 1.5          # mutate past the constructor check
    with pytest.raises(geo.GeometryError):
        geo.tension_field(met, tgt, u)


def test_radial_reduction_consistency_box():
    # radial test function on a full 13^4 box vs the radial-grid computation
    met = geo.conformal_cm(2)
    bg = box_grid(1.5, 13, 4)
    prof = lambda r: 1.0 / (1.0 + np.asarray(r, float) ** 2)
    u_box = geo.ScalarField(bg, prof(bg.radii()))
    lap_box = geo.holomorphic_laplacian(met, u_box)
    rg = radial_grid(3.0, 1201, 2)
    lap_rad = geo.holomorphic_laplacian(met, geo.ScalarField(rg, prof(rg.nodes)))
    mask = bg.interior
    interp = np.interp(bg.radii()[mask], rg.nodes, lap_rad.values)
    err = np.abs(lap_box.values[mask] - interp).max()
    h = bg.box_step[0]
    assert err < 5.0 * h ** 2 * 8.0      # O(h^2) with a moderate constant


def test_periodic_interval_cross_validation():
    # s-only fields on the 2-D periodic x interval grid agree with the 1-D path
    met = geo.two_ends(1, 0.25)
    g2 = periodic_interval_grid(0.9, 65, 8, 1)
    g1 = interval_grid(0.9, 65, 1)
    prof = np.cos(1.3 * g1.nodes)
    vals2 = np.tile(prof, (8, 1)).ravel()
    lap2 = geo.holomorphic_laplacian(met, geo.ScalarField(g2, vals2))
    lap1 = geo.holomorphic_laplacian(met, geo.ScalarField(g1, prof))
    l2 = lap2.values.reshape(8, 65)
    assert_allclose(l2[3, 1:-1], lap1.values[1:-1], rtol=1e-10)
