"""Metrics, connections and the model differential operators.

Conventions (fixed package-wide, cross-checked against closed forms):
  * chart metric gamma_{ab} = f * delta with a positive conformal profile f of
    the radius r (or of the interval coordinate s); its inverse is f^{-1}.
  * holomorphic laplacian  Lap~ u = 4 gamma^{ab} d2u/dz dzbar = f^{-1} Lap_e u,
    with the radial reduction Lap_e u = u'' + (2m-1) u'/r and the interval
    reduction f^{-1} u_ss.
  * tension field sigma(u)^l = gamma^{ab}(d2 u^l + Gamma^l_{jk} du^j du^k)
    = (4f)^{-1}(Lap_e u^l + Gamma^l_{jk} grad u^j . grad u^k); for flat targets
    sigma(u) = (1/4) Lap~ u componentwise.
  * energy density e(u) = (4f)^{-1} (g_{jk} o u) grad u^j . grad u^k >= 0.
  * a Hermitian coefficient F corresponds to the real conformal factor
    sqrt(F) |dx| on the underlying real manifold.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grids import Grid, RADIAL, INTERVAL, BOX, PERIODIC_INTERVAL

EUCLIDEAN_CM = "euclidean-Cm"
CONFORMAL_CM = "conformal-Cm"
POINCARE_BALL = "poincare-ball"
TWO_ENDS = "two-ends"

FLAT_RN = "flat-Rn"
POINCARE_BALL_N = "poincare-ball-n"
WARPED_PRODUCT = "warped-product-planes"


class GeometryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# chart metrics


@dataclass(frozen=True)
class ChartMetric:
    """Hermitian metric f(coord) * delta in one chart.

    `coord` is the radius r for radial kinds and the noncompact coordinate s
    for the two-ends kind. `f`, `df`, `d2f` are vectorized profile evaluators.
    """
    kind: str
    m: int
    f: Callable
    df: Callable
    d2f: Callable
    domain: tuple
    delta: float | None = None
    a0: float | None = None

    def __post_init__(self):
        if self.m < 1:
            raise GeometryError("complex dimension m must be >= 1")

    @property
    def real_dim(self) -> int:
        return 2 * self.m

    def check_grid(self, grid: Grid):
        lo, hi = self.domain
        if self.kind == TWO_ENDS:
            if grid.kind not in (INTERVAL, PERIODIC_INTERVAL):
                raise GeometryError("two-ends metric needs an interval grid")
        elif grid.kind in (INTERVAL, PERIODIC_INTERVAL):
            raise GeometryError(f"{self.kind} metric on an interval grid")
        if grid.kind in (RADIAL, INTERVAL):
            coords = grid.nodes
        elif grid.kind == PERIODIC_INTERVAL:
            coords = grid.nodes[:, 1]
        else:
            coords = grid.radii()
        if coords.max() >= hi or coords.min() < lo:
            raise GeometryError("grid leaves the metric's coordinate domain")
        if grid.dim != self.real_dim and grid.kind in (RADIAL, BOX):
            raise GeometryError("grid real dimension does not match 2m")


def _const_profile(c):
    return (lambda x: np.full_like(np.asarray(x, float), c),
            lambda x: np.zeros_like(np.asarray(x, float)),
            lambda x: np.zeros_like(np.asarray(x, float)))


def euclidean_cm(m: int, R: float = np.inf) -> ChartMetric:
    f, df, d2f = _const_profile(1.0)
    return ChartMetric(EUCLIDEAN_CM, m, f, df, d2f, (0.0, R))


def conformal_cm(m: int, R: float = np.inf) -> ChartMetric:
    """The model non-Kaehler metric f(r) = (1+r^2)^{-1} on C^m."""
    f = lambda r: 1.0 / (1.0 + np.asarray(r, float) ** 2)
    df = lambda r: -2.0 * r / (1.0 + np.asarray(r, float) ** 2) ** 2
    d2f = lambda r: (6.0 * np.asarray(r, float) ** 2 - 2.0) / (1.0 + np.asarray(r, float) ** 2) ** 3
    return ChartMetric(CONFORMAL_CM, m, f, df, d2f, (0.0, R))


def conformal_profile(m: int, f, df, d2f, R: float = np.inf) -> ChartMetric:
    """Conformal metric with a caller-supplied radial profile."""
    return ChartMetric(CONFORMAL_CM, m, f, df, d2f, (0.0, R))


def poincare_ball_chart(m: int) -> ChartMetric:
    """f(r) = 4/(1-r^2)^2 on the unit ball; d(0,z) = 2 artanh|z|."""
    f = lambda r: 4.0 / (1.0 - np.asarray(r, float) ** 2) ** 2
    df = lambda r: 16.0 * r / (1.0 - np.asarray(r, float) ** 2) ** 3
    d2f = lambda r: (16.0 + 80.0 * np.asarray(r, float) ** 2) / (1.0 - np.asarray(r, float) ** 2) ** 4
    return ChartMetric(POINCARE_BALL, m, f, df, d2f, (0.0, 1.0))


def _smoothstep(x):
    """C-infinity step: identically 0 for x<=0, identically 1 for x>=1."""
    x = np.asarray(x, float)

    def bump(y):
        out = np.zeros_like(y)
        pos = y > 0
        out[pos] = np.exp(-1.0 / y[pos])
        return out

    a = bump(x)
    b = bump(1.0 - x)
    return a / (a + b)


def two_ends(m: int, delta: float, a0: float | None = None,
             blend: tuple = (0.4, 0.5)) -> ChartMetric:
    """Two-ends metric on S^1x...x(-1,1): f = delta^2 (1-|s|)^{-2delta-2}
    exactly for |s| >= 1/2, blended to the constant interior level a0.
    """
    if delta <= 0:
        raise GeometryError("delta must be positive")
    if a0 is None:
        a0 = delta ** 2 * 0.5 ** (-2.0 * delta - 2.0)
    if a0 <= 0:
        raise GeometryError("interior level a0 must be positive")
    lo2, hi2 = blend[0] ** 2, blend[1] ** 2

    def f(s):
        s = np.asarray(s, float)
        w = _smoothstep((s * s - lo2) / (hi2 - lo2))
        outer = np.where(np.abs(s) >= blend[0],
                         delta ** 2 * np.maximum(1.0 - np.abs(s), 1e-300) ** (-2.0 * delta - 2.0),
                         a0)
        return (1.0 - w) * a0 + w * outer

    # profile derivatives via high-order differences of the smooth blend;
    # exact power-law derivatives take over where the blend is identically 1
    def _fd(fun, s, order):
        s = np.asarray(s, float)
        h = 1e-4
        st = np.stack([fun(s + k * h) for k in (-2, -1, 0, 1, 2)])
        if order == 1:
            return (st[0] - 8 * st[1] + 8 * st[3] - st[4]) / (12 * h)
        return (-st[0] + 16 * st[1] - 30 * st[2] + 16 * st[3] - st[4]) / (12 * h * h)

    def df(s):
        s = np.asarray(s, float)
        out = _fd(f, s, 1)
        outer = np.abs(s) > blend[1] + 2.5e-4
        sg = np.sign(s)
        out = np.where(outer,
                       sg * delta ** 2 * (2 * delta + 2) * np.maximum(1.0 - np.abs(s), 1e-300) ** (-2 * delta - 3),
                       out)
        return out

    def d2f(s):
        s = np.asarray(s, float)
        out = _fd(f, s, 2)
        outer = np.abs(s) > blend[1] + 2.5e-4
        out = np.where(outer,
                       delta ** 2 * (2 * delta + 2) * (2 * delta + 3) * np.maximum(1.0 - np.abs(s), 1e-300) ** (-2 * delta - 4),
                       out)
        return out

    return ChartMetric(TWO_ENDS, m, f, df, d2f, (-1.0, 1.0), delta=delta, a0=a0)


def kahler_form_differential(metric: ChartMetric, coord) -> np.ndarray:
    """Pointwise norm of d(omega) for omega = (i/2) f sum dz^a ^ dzbar^a.

    Frobenius norm of the independent (2,1)+(1,2) components in an
    orthonormal coframe: sqrt(m-1) |f'| f^{-3/2} / (2 sqrt 2). Vanishes iff
    the metric is Kaehler at the point (m>=2: iff f' = 0; m=1: identically).
    """
    coord = np.asarray(coord, float)
    if metric.m == 1:
        return np.zeros_like(coord)
    fp = metric.df(coord)
    fv = metric.f(coord)
    return np.sqrt(metric.m - 1.0) * np.abs(fp) * fv ** (-1.5) / (2.0 * np.sqrt(2.0))


# ---------------------------------------------------------------------------
# targets


@dataclass(frozen=True)
class TargetManifold:
    """Riemannian target with metric/Christoffel/distance evaluators."""
    kind: str
    n: int
    curvature_sign: str
    scale: float = 2.0           # poincare conformal factor scale/(1-r^2)
    warp: Callable | None = None  # b(r) for warped planes
    dwarp: Callable | None = None

    @property
    def is_flat(self) -> bool:
        return self.kind == FLAT_RN

    # -- metric -------------------------------------------------------------
    def metric(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        N = x.shape[0]
        if self.kind == FLAT_RN:
            return np.broadcast_to(np.eye(self.n), (N, self.n, self.n)).copy()
        if self.kind == POINCARE_BALL_N:
            r2 = (x ** 2).sum(1)
            lam2 = (self.scale / (1.0 - r2)) ** 2
            return lam2[:, None, None] * np.eye(self.n)
        if self.kind == WARPED_PRODUCT:
            g = np.zeros((N, self.n, self.n))
            for blk in range(self.n // 2):
                p = x[:, 2 * blk]
                q = x[:, 2 * blk + 1]
                g[:, 2 * blk:2 * blk + 2, 2 * blk:2 * blk + 2] = self._plane_metric(p, q)
            return g
        raise GeometryError(self.kind)

    def _plane_metric(self, p, q):
        # dr^2 + b(r) dphi^2 in cartesian coordinates
        r2 = p * p + q * q
        N = len(p)
        g = np.broadcast_to(np.eye(2), (N, 2, 2)).copy()
        w = np.empty_like(p)
        tiny = r2 < 1e-20
        # (b/r^4 - 1/r^2) -> 1 as r -> 0 for b = r^2 + r^4
        b = self.warp(np.sqrt(r2))
        w[~tiny] = b[~tiny] / r2[~tiny] ** 2 - 1.0 / r2[~tiny]
        w[tiny] = 1.0
        g[:, 0, 0] += w * q * q
        g[:, 0, 1] -= w * p * q
        g[:, 1, 0] -= w * p * q
        g[:, 1, 1] += w * p * p
        return g

    def metric_inv(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.inv(self.metric(x))

    # -- Christoffel symbols --------------------------------------------------
    def christoffel(self, x: np.ndarray) -> np.ndarray:
        """Gamma^j_{kl}(x), shape (N, n, n, n), symmetric in (k, l)."""
        x = np.atleast_2d(np.asarray(x, float))
        if self.kind == FLAT_RN:
            return np.zeros((x.shape[0], self.n, self.n, self.n))
        if self.kind == POINCARE_BALL_N:
            r2 = (x ** 2).sum(1)
            if np.any(r2 >= 1.0):
                raise GeometryError("point outside the unit ball")
            phi = 2.0 * x / (1.0 - r2)[:, None]      # gradient of ln factor
            N, n = x.shape[0], self.n
            G = np.zeros((N, n, n, n))
            eye = np.eye(n)
            G += eye[None, :, :, None] * phi[:, None, None, :]
            G += eye[None, :, None, :] * phi[:, None, :, None]
            G -= eye[None, None, :, :] * phi[:, :, None, None]
            return G
        return self._christoffel_fd(x)

    def _christoffel_fd(self, x: np.ndarray, step: float = 1e-3) -> np.ndarray:
        """Fourth-order finite differences of the metric."""
        N, n = x.shape[0], self.n
        dg = np.zeros((N, n, n, n))  # dg[:, s, k, l] = d g_{kl} / d x^s
        for s in range(n):
            e = np.zeros(n)
            e[s] = 1.0
            gm2 = self.metric(x - 2 * step * e)
            gm1 = self.metric(x - step * e)
            gp1 = self.metric(x + step * e)
            gp2 = self.metric(x + 2 * step * e)
            dg[:, s] = (gm2 - 8 * gm1 + 8 * gp1 - gp2) / (12 * step)
        ginv = self.metric_inv(x)
        # Gamma^j_{kl} = 1/2 g^{js} (g_{sl,k} + g_{sk,l} - g_{kl,s});
        # dg[n,s,k,l] = d g_{kl} / d x^s
        term = (np.einsum("nksl->nskl", dg)      # g_{sl,k}
                + np.einsum("nlsk->nskl", dg)    # g_{sk,l}
                - dg)                            # g_{kl,s}
        return 0.5 * np.einsum("njs,nskl->njkl", ginv, term)

    # -- distances ------------------------------------------------------------
    def distance(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Geodesic distance (vectorized for flat / poincare)."""
        p = np.atleast_2d(np.asarray(p, float))
        q = np.atleast_2d(np.asarray(q, float))
        if self.kind == FLAT_RN:
            return np.sqrt(((p - q) ** 2).sum(1))
        if self.kind == POINCARE_BALL_N:
            p2 = (p ** 2).sum(1)
            q2 = (q ** 2).sum(1)
            if np.any(p2 >= 1.0) or np.any(q2 >= 1.0):
                raise GeometryError("point outside the unit ball")
            arg = 1.0 + 2.0 * ((p - q) ** 2).sum(1) / ((1.0 - p2) * (1.0 - q2))
            return (self.scale / 2.0) * np.arccosh(np.maximum(arg, 1.0))
        if self.kind == WARPED_PRODUCT:
            out = np.zeros(p.shape[0])
            for blk in range(self.n // 2):
                sl = slice(2 * blk, 2 * blk + 2)
                out += np.array([self._plane_distance(pp, qq)
                                 for pp, qq in zip(p[:, sl], q[:, sl])]) ** 2
            return np.sqrt(out)
        raise GeometryError(self.kind)

    def _plane_distance(self, p, q):
        rp, rq = np.hypot(*p), np.hypot(*q)
        if rp < 1e-14 or rq < 1e-14:
            # radial geodesics are euclidean lines; dr coefficient is 1
            return abs(rp - rq)
        cross = abs(p[0] * q[1] - p[1] * q[0])
        if cross < 1e-14 and np.dot(p, q) > 0:
            return abs(rp - rq)
        plane = TargetManifold(WARPED_PRODUCT, 2, self.curvature_sign,
                               warp=self.warp, dwarp=self.dwarp)
        return geodesic_shooting(plane, p, q)

    # -- curvature -------------------------------------------------------------
    def curvature_tensor(self, x: np.ndarray) -> np.ndarray:
        """R_{ijkl} with R(X,Y,X,Y) = sectional curvature quadratic form."""
        x = np.atleast_2d(np.asarray(x, float))
        N, n = x.shape[0], self.n
        if self.kind == FLAT_RN:
            return np.zeros((N, n, n, n, n))
        if self.kind == POINCARE_BALL_N:
            K = -4.0 / self.scale ** 2
            g = self.metric(x)
            return K * (np.einsum("nik,njl->nijkl", g, g)
                        - np.einsum("nil,njk->nijkl", g, g))
        if self.kind == WARPED_PRODUCT:
            R = np.zeros((N, n, n, n, n))
            for blk in range(self.n // 2):
                p = x[:, 2 * blk]
                q = x[:, 2 * blk + 1]
                r = np.hypot(p, q)
                K = gaussian_curvature_warped(self.warp, r)
                g = self._plane_metric(p, q)
                detg = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
                i0 = 2 * blk
                val = K * detg
                for (i, j, k, l, sgn) in ((0, 1, 0, 1, 1), (0, 1, 1, 0, -1),
                                          (1, 0, 0, 1, -1), (1, 0, 1, 0, 1)):
                    R[:, i0 + i, i0 + j, i0 + k, i0 + l] = sgn * val
            return R
        raise GeometryError(self.kind)

    def in_chart(self, u: np.ndarray) -> bool:
        if self.kind == POINCARE_BALL_N:
            return bool(np.all((np.atleast_2d(u) ** 2).sum(1) < 1.0))
        return bool(np.all(np.isfinite(u)))


def flat_rn(n: int) -> TargetManifold:
    return TargetManifold(FLAT_RN, n, "flat")


def poincare_ball_target(n: int, scale: float = 2.0) -> TargetManifold:
    return TargetManifold(POINCARE_BALL_N, n, "strictly negative", scale=scale)


def _default_warp(r):
    r = np.asarray(r, float)
    return r ** 2 + r ** 4


def _default_dwarp(r):
    r = np.asarray(r, float)
    return 2.0 * r + 4.0 * r ** 3


def warped_product_planes(planes: int = 2) -> TargetManifold:
    """R^2 x ... x R^2 with g0 = dr^2 + (r^2+r^4) dphi^2 on each factor."""
    return TargetManifold(WARPED_PRODUCT, 2 * planes, "nonpositive",
                          warp=_default_warp, dwarp=_default_dwarp)


def warped_polar_christoffel(r, b=_default_warp, db=_default_dwarp):
    """Closed-form polar components (Gamma^r_{phi phi}, Gamma^phi_{r phi})."""
    r = np.asarray(r, float)
    return -0.5 * db(r), db(r) / (2.0 * b(r))


def gaussian_curvature_warped(b, r):
    """K = -(sqrt b)'' / sqrt b by fourth-order differences of sqrt(b)."""
    r = np.asarray(r, float)
    h = 1e-4
    sb = lambda t: np.sqrt(b(np.maximum(t, 1e-12)))
    d2 = (-sb(r + 2 * h) + 16 * sb(r + h) - 30 * sb(r) + 16 * sb(r - h) - sb(r - 2 * h)) / (12 * h * h)
    return -d2 / sb(r)


def poincare_christoffel_bounds(r):
    """Both recorded bounds for |Gamma^l_{jk}| of the Poincare-type ball
    metric at radius r: (paper's r/(1-r^2), componentwise max 2r/(1-r^2))."""
    r = np.asarray(r, float)
    return r / (1.0 - r ** 2), 2.0 * r / (1.0 - r ** 2)


# ---------------------------------------------------------------------------
# fields


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.shape[0] != self.grid.n:
            raise GeometryError("field length does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise GeometryError("non-finite field values")


@dataclass
class MapField:
    grid: Grid
    values: np.ndarray           # (N, n)
    target: TargetManifold

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.ndim != 2 or self.values.shape[0] != self.grid.n:
            raise GeometryError("map values must be (n_nodes, n_target)")
        if not np.all(np.isfinite(self.values)):
            raise GeometryError("non-finite map values")
        if self.target.kind == POINCARE_BALL_N:
            if not self.target.in_chart(self.values):
                raise GeometryError("map leaves the unit ball")


# ---------------------------------------------------------------------------
# finite-difference kernels


def _grad_1d(nodes, vals):
    """Second-order first derivative on (possibly nonuniform) nodes."""
    out = np.zeros_like(vals)
    hm = nodes[1:-1] - nodes[:-2]
    hp = nodes[2:] - nodes[1:-1]
    sh = (slice(None),) + (None,) * (vals.ndim - 1)
    out[1:-1] = (hm[sh] ** 2 * vals[2:] + (hp[sh] ** 2 - hm[sh] ** 2) * vals[1:-1]
                 - hp[sh] ** 2 * vals[:-2]) / (hm * hp * (hm + hp))[sh]
    out[0] = (vals[1] - vals[0]) / (nodes[1] - nodes[0])
    out[-1] = (vals[-1] - vals[-2]) / (nodes[-1] - nodes[-2])
    return out


def _second_1d(nodes, vals):
    out = np.zeros_like(vals)
    hm = nodes[1:-1] - nodes[:-2]
    hp = nodes[2:] - nodes[1:-1]
    sh = (slice(None),) + (None,) * (vals.ndim - 1)
    out[1:-1] = 2.0 * (hm[sh] * vals[2:] - (hm + hp)[sh] * vals[1:-1]
                       + hp[sh] * vals[:-2]) / (hm * hp * (hm + hp))[sh]
    return out


def radial_laplacian(nodes, vals, dim):
    """Flux-form Lap_e of a radial profile in `dim` real dimensions.

    Second order on uniform and smoothly graded nodes; M-matrix signs. The
    center r=0 uses the even-extension stencil Lap = dim * u''(0).
    """
    d = dim - 1
    out = np.zeros_like(vals)
    r = nodes
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    rp = r[1:-1] + hp / 2
    rm = r[1:-1] - hm / 2
    sh = (slice(None),) + (None,) * (vals.ndim - 1)
    flux_p = rp ** d / hp
    flux_m = rm ** d / hm
    # exact cell volume (r_+^dim - r_-^dim)/dim keeps the stencil exact on r^2
    # and second order up to the center node
    denom = (rp ** dim - rm ** dim) / dim
    out[1:-1] = (flux_p[sh] * (vals[2:] - vals[1:-1])
                 - flux_m[sh] * (vals[1:-1] - vals[:-2])) / denom[sh]
    if r[0] == 0.0:
        h0 = r[1] - r[0]
        out[0] = dim * 2.0 * (vals[1] - vals[0]) / h0 ** 2
    return out


def _box_reshape(grid, vals):
    return vals.reshape(grid.shape + vals.shape[1:])


def box_laplacian(grid: Grid, vals):
    """Euclidean laplacian on a cartesian box (interior nodes)."""
    v = _box_reshape(grid, vals)
    out = np.zeros_like(v)
    d = len(grid.shape)
    inner = tuple(slice(1, -1) for _ in range(d))
    for ax in range(d):
        h2 = grid.box_step[ax] ** 2
        sl_p = list(inner); sl_p[ax] = slice(2, None)
        sl_m = list(inner); sl_m[ax] = slice(0, -2)
        sl_c = list(inner); sl_c[ax] = slice(1, -1)
        out[inner] += (v[tuple(sl_p)] - 2 * v[tuple(sl_c)] + v[tuple(sl_m)]) / h2
    return out.reshape(vals.shape)


def box_gradient(grid: Grid, vals):
    """Central-difference gradient, shape (N, d) (+ component axes)."""
    v = _box_reshape(grid, vals)
    d = len(grid.shape)
    grads = []
    for ax in range(d):
        g = np.zeros_like(v)
        h = grid.box_step[ax]
        sl_c = [slice(1, -1) if a == ax else slice(None) for a in range(d)]
        sl_p = list(sl_c); sl_p[ax] = slice(2, None)
        sl_m = list(sl_c); sl_m[ax] = slice(0, -2)
        g[tuple(sl_c)] = (v[tuple(sl_p)] - v[tuple(sl_m)]) / (2 * h)
        grads.append(g.reshape(vals.shape))
    return np.stack(grads, axis=1)  # (N, d, ...)


def periodic_interval_laplacian(grid: Grid, vals):
    v = _box_reshape(grid, vals)
    out = np.zeros_like(v)
    hx2 = grid.box_step[0] ** 2
    hs2 = grid.box_step[1] ** 2
    out[:, 1:-1] = (np.roll(v, -1, 0)[:, 1:-1] - 2 * v[:, 1:-1] + np.roll(v, 1, 0)[:, 1:-1]) / hx2
    out[:, 1:-1] += (v[:, 2:] - 2 * v[:, 1:-1] + v[:, :-2]) / hs2
    return out.reshape(vals.shape)


def _metric_coord(metric: ChartMetric, grid: Grid):
    if grid.kind in (RADIAL, INTERVAL):
        return grid.nodes
    if grid.kind == PERIODIC_INTERVAL:
        return grid.nodes[:, 1]
    return grid.radii()


def _reduced_laplacian(metric: ChartMetric, grid: Grid, vals):
    if grid.kind == RADIAL:
        return radial_laplacian(grid.nodes, vals, grid.dim)
    if grid.kind == INTERVAL:
        return _second_1d(grid.nodes, vals)
    if grid.kind == BOX:
        return box_laplacian(grid, vals)
    if grid.kind == PERIODIC_INTERVAL:
        return periodic_interval_laplacian(grid, vals)
    raise GeometryError(grid.kind)


def _grad_dot(grid: Grid, a, b):
    """grad a . grad b in the reduced coordinates (euclidean pairing)."""
    if grid.kind in (RADIAL, INTERVAL):
        return _grad_1d(grid.nodes, a) * _grad_1d(grid.nodes, b)
    ga = box_gradient(grid, a)
    gb = box_gradient(grid, b)
    return (ga * gb).sum(axis=1)


# ---------------------------------------------------------------------------
# spec operations


def holomorphic_laplacian(metric: ChartMetric, u: ScalarField) -> ScalarField:
    """Lap~ u = f^{-1} Lap_e u (radial/box) or f^{-1} u_ss (interval)."""
    metric.check_grid(u.grid)
    if u.grid.n < 4:
        raise GeometryError("fewer than 3 interior nodes")
    coord = _metric_coord(metric, u.grid)
    lap = _reduced_laplacian(metric, u.grid, u.values)
    return ScalarField(u.grid, lap / metric.f(coord))


def tension_field(metric: ChartMetric, target: TargetManifold, u: MapField) -> MapField:
    """sigma(u)^l = (4f)^{-1} (Lap_e u^l + Gamma^l_{jk} grad u^j . grad u^k)."""
    metric.check_grid(u.grid)
    if not target.in_chart(u.values):
        raise GeometryError("map values escape the target chart")
    coord = _metric_coord(metric, u.grid)
    lin = _reduced_laplacian(metric, u.grid, u.values)
    if target.is_flat:
        quad = 0.0
    else:
        G = target.christoffel(u.values)      # (N, n, n, n)
        if u.grid.kind in (RADIAL, INTERVAL):
            du = _grad_1d(u.grid.nodes, u.values)       # (N, n)
            dots = np.einsum("nj,nk->njk", du, du)
        else:
            du = box_gradient(u.grid, u.values)          # (N, d, n)
            dots = np.einsum("naj,nak->njk", du, du)
        quad = np.einsum("nljk,njk->nl", G, dots)
    sig = (lin + quad) / (4.0 * metric.f(coord))[:, None]
    sig[~u.grid.interior] = 0.0
    out = MapField.__new__(MapField)
    out.grid, out.values, out.target = u.grid, sig, target
    return out


def energy_density(metric: ChartMetric, target: TargetManifold, u: MapField) -> ScalarField:
    """e(u) = (4f)^{-1} (g_{jk} o u) grad u^j . grad u^k >= 0."""
    metric.check_grid(u.grid)
    if not target.in_chart(u.values):
        raise GeometryError("map values escape the target chart")
    coord = _metric_coord(metric, u.grid)
    g = target.metric(u.values)
    if u.grid.kind in (RADIAL, INTERVAL):
        du = _grad_1d(u.grid.nodes, u.values)
        e = np.einsum("njk,nj,nk->n", g, du, du)
    else:
        du = box_gradient(u.grid, u.values)
        e = np.einsum("njk,naj,nak->n", g, du, du)
    e = e / (4.0 * metric.f(coord))
    return ScalarField(u.grid, np.maximum(e, 0.0))


def christoffel(target: TargetManifold, x) -> np.ndarray:
    """Gamma^j_{kl} at the point(s) x."""
    x = np.asarray(x, float)
    single = x.ndim == 1
    G = target.christoffel(np.atleast_2d(x))
    return G[0] if single else G


def tension_at_points(metric: ChartMetric, target: TargetManifold, map_fn,
                      points: np.ndarray, h: float) -> np.ndarray:
    """sigma(u) at arbitrary chart points by local cross stencils.

    `map_fn` maps (N, 2m) chart points to (N, n) target values; only axis
    second differences and central gradients enter (the reduced tension
    formula needs no mixed derivatives), so a 9-point cross per node at
    spacing `h` suffices. Second-order accurate.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    N, d = pts.shape
    if d != metric.real_dim:
        raise GeometryError("points must live in R^{2m}")
    u0 = np.asarray(map_fn(pts), float)
    n = u0.shape[1]
    lap = np.zeros((N, n))
    grads = np.zeros((N, d, n))
    for ax in range(d):
        e = np.zeros(d)
        e[ax] = h
        up = np.asarray(map_fn(pts + e), float)
        um = np.asarray(map_fn(pts - e), float)
        lap += (up - 2.0 * u0 + um) / h ** 2
        grads[:, ax, :] = (up - um) / (2.0 * h)
    if target.is_flat:
        quad = 0.0
    else:
        G = target.christoffel(u0)
        dots = np.einsum("naj,nak->njk", grads, grads)
        quad = np.einsum("nljk,njk->nl", G, dots)
    r = np.sqrt((pts ** 2).sum(1))
    return (lap + quad) / (4.0 * metric.f(r))[:, None]


def gnorm_vector(target: TargetManifold, x, v) -> np.ndarray:
    """Target-metric norm sqrt(g_{jk}(x) v^j v^k) per node."""
    g = target.metric(np.atleast_2d(x))
    v = np.atleast_2d(v)
    return np.sqrt(np.maximum(np.einsum("njk,nj,nk->n", g, v, v), 0.0))


def tension_norm(metric, target, u: MapField) -> np.ndarray:
    sig = tension_field(metric, target, u)
    return gnorm_vector(target, u.values, sig.values)


def target_distance(target: TargetManifold, p, q):
    p = np.asarray(p, float)
    single = p.ndim == 1
    d = target.distance(np.atleast_2d(p), np.atleast_2d(q))
    return float(d[0]) if single else d


# ---------------------------------------------------------------------------
# geodesic shooting oracle


def _radial_length(target: TargetManifold, r: np.ndarray) -> np.ndarray:
    """d(0, x) with |x| = r, by quadrature of the radial line element."""
    r = np.asarray(r, float)
    if target.kind == POINCARE_BALL_N:
        return target.scale * np.arctanh(r)
    if target.kind == WARPED_PRODUCT:
        return r          # dr coefficient is 1
    return r


def _shoot_pairs(target, P, Q, gP, S_max, theta, n_steps):
    """Integrate unit-speed geodesics from P at launch angles theta.

    Returns (miss, length) at the closest approach to Q; both refined by a
    parabola fit of miss^2 across the three steps around the discrete
    minimum, so the reported miss is the true transverse offset.
    """
    B = P.shape[0]
    v = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    speed = np.sqrt(np.einsum("njk,nj,nk->n", gP, v, v))
    v = v / speed[:, None]
    hstep = S_max / n_steps
    best_miss = np.full(B, np.inf)
    best_s = np.zeros(B)
    m2_prev = np.full(B, np.inf)
    m2_prev2 = np.full(B, np.inf)
    s = np.zeros(B)

    def rhs(state):
        xx, vv = state[:, :2], state[:, 2:]
        G = target.christoffel(xx)
        acc = -np.einsum("njkl,nk,nl->nj", G, vv, vv)
        return np.concatenate([vv, acc], axis=1)

    y = np.concatenate([P, v], axis=1)
    hh = hstep[:, None]
    for _ in range(n_steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * hh * k1)
        k3 = rhs(y + 0.5 * hh * k2)
        k4 = rhs(y + hh * k3)
        y = y + (hh / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        s = s + hstep
        dx = Q - y[:, :2]
        m2 = (dx ** 2).sum(1)
        vertex = (np.isfinite(m2_prev2) & (m2_prev < m2_prev2) & (m2_prev <= m2)
                  & (np.sqrt(m2_prev) < best_miss))
        if np.any(vertex):
            denom = m2_prev2 - 2 * m2_prev + m2
            off = np.zeros(B)
            np.divide(0.5 * (m2_prev2 - m2), denom, out=off,
                      where=np.abs(denom) > 1e-300)
            off = np.clip(off, -1.0, 1.0)
            m2_v = np.maximum(m2_prev - 0.125 * (m2_prev2 - m2) * off, 0.0)
            best_s = np.where(vertex, s - hstep + off * hstep, best_s)
            best_miss = np.where(vertex, np.sqrt(m2_v), best_miss)
        m2_prev2 = m2_prev
        m2_prev = m2
        if target.kind == POINCARE_BALL_N:
            if np.all((y[:, :2] ** 2).sum(1) > 0.999998):
                break
    none_found = ~np.isfinite(best_miss)
    if np.any(none_found):
        dx = Q - y[:, :2]
        best_miss = np.where(none_found, np.sqrt((dx ** 2).sum(1)), best_miss)
        best_s = np.where(none_found, s, best_s)
    return best_miss, best_s


def geodesic_shooting_batch(target: TargetManifold, P, Q, n_steps: int = 2500,
                            max_iter: int = 200, tol: float = 1e-8,
                            scan: int = 41):
    """Two-point geodesic lengths by RK4 shooting on the launch angle.

    `target` must be a 2-D rotationally symmetric chart (poincare-ball-n with
    n=2 or a single warped plane). A coarse scan over the half-fan around the
    chord direction brackets the optimal angle; golden-section on the
    transverse miss refines it. Near the optimum the closest-approach length
    is quadratically insensitive to the remaining angle error, so the length
    accuracy is set by the RK4 step count. Independent oracle for the closed
    forms.
    """
    P = np.atleast_2d(np.asarray(P, float))
    Q = np.atleast_2d(np.asarray(Q, float))
    B = P.shape[0]
    gP = target.metric(P)
    chord = Q - P
    theta_c = np.arctan2(chord[:, 1], chord[:, 0])
    S_max = (_radial_length(target, np.hypot(P[:, 0], P[:, 1]))
             + _radial_length(target, np.hypot(Q[:, 0], Q[:, 1])) + 1.0)

    # stage 1: coarse scan, all pairs x all angles in one integration
    width = np.pi / 2 - 1e-9
    offsets = np.linspace(-width, width, scan)
    thetas = theta_c[:, None] + offsets[None, :]            # (B, K)
    Pk = np.repeat(P, scan, axis=0)
    Qk = np.repeat(Q, scan, axis=0)
    gPk = np.repeat(gP, scan, axis=0)
    Sk = np.repeat(S_max, scan)
    n_coarse = max(n_steps // 5, 400)
    miss_k, _ = _shoot_pairs(target, Pk, Qk, gPk, Sk, thetas.ravel(), n_coarse)
    best_idx = miss_k.reshape(B, scan).argmin(axis=1)
    dtheta = offsets[1] - offsets[0]
    lo = thetas[np.arange(B), best_idx] - dtheta
    hi = thetas[np.arange(B), best_idx] + dtheta

    # stage 2: trisection on the refined miss (unimodal within the bracket),
    # run at the coarse step count; the angle only needs to be resolved to
    # ~sqrt(tol) because the closest-approach length is quadratically
    # insensitive to it
    best_miss = np.full(B, np.inf)
    best_theta = 0.5 * (lo + hi)
    for _ in range(max_iter):
        x1 = lo + (hi - lo) / 3.0
        x2 = hi - (hi - lo) / 3.0
        f1, _ = _shoot_pairs(target, P, Q, gP, S_max, x1, n_coarse)
        f2, _ = _shoot_pairs(target, P, Q, gP, S_max, x2, n_coarse)
        take1 = f1 <= f2
        upd = np.where(take1, f1, f2) < best_miss
        best_theta = np.where(upd, np.where(take1, x1, x2), best_theta)
        best_miss = np.where(upd, np.where(take1, f1, f2), best_miss)
        hi = np.where(take1, x2, hi)
        lo = np.where(take1, lo, x1)
        if np.all(hi - lo < 1e-7):
            break
    # final high-accuracy pass at the resolved angle
    miss, length = _shoot_pairs(target, P, Q, gP, S_max, best_theta, n_steps)
    if np.any(miss > 1e-4 * (1 + S_max)):
        raise GeometryError(f"geodesic shooting failed (worst miss {miss.max():.2e})")
    return length


def geodesic_shooting(target: TargetManifold, p, q, n_steps: int = 2500,
                      max_iter: int = 200, tol: float = 1e-8):
    """Scalar wrapper; reduces poincare pairs in n>2 to their 2-plane."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    if np.allclose(p, q):
        return 0.0
    if target.kind == POINCARE_BALL_N and target.n > 2:
        e1 = p if np.linalg.norm(p) > 1e-14 else q
        e1 = e1 / np.linalg.norm(e1)
        q_perp = q - np.dot(q, e1) * e1
        if np.linalg.norm(q_perp) < 1e-14:
            e2 = np.zeros_like(e1)
            e2[np.argmin(np.abs(e1))] = 1.0
            e2 = e2 - np.dot(e2, e1) * e1
        else:
            e2 = q_perp
        e2 = e2 / np.linalg.norm(e2)
        t2 = poincare_ball_target(2, scale=target.scale)
        return geodesic_shooting(t2, np.array([p @ e1, p @ e2]),
                                 np.array([q @ e1, q @ e2]), n_steps, max_iter, tol)
    return float(geodesic_shooting_batch(target, p[None, :], q[None, :],
                                         n_steps, max_iter, tol)[0])


# ---------------------------------------------------------------------------
# decay spaces


@dataclass(frozen=True)
class DecaySpace:
    """C^0_mu class data: weight (1 + d(., z0))^mu along a distance profile."""
    mu: float
    distance: Callable           # coord -> d(coord, z0)
    label: str = ""

    def __post_init__(self):
        if self.mu <= 0:
            raise GeometryError("mu must be positive")


def decay_space_for(metric: ChartMetric, mu: float) -> DecaySpace:
    if metric.kind == EUCLIDEAN_CM:
        return DecaySpace(mu, lambda r: np.asarray(r, float), "euclidean")
    if metric.kind == CONFORMAL_CM:
        return DecaySpace(mu, lambda r: np.log1p(np.asarray(r, float) ** 2), "log")
    if metric.kind == POINCARE_BALL:
        return DecaySpace(mu, lambda r: 2.0 * np.arctanh(np.asarray(r, float)), "poincare")
    if metric.kind == TWO_ENDS:
        dlt = metric.delta
        return DecaySpace(mu, lambda s: (1.0 - np.abs(np.asarray(s, float))) ** (-dlt) - 1.0,
                          "two-ends")
    raise GeometryError(metric.kind)


@dataclass
class DecayReport:
    constant: float
    diverged: bool
    weighted: np.ndarray


def decay_norm(field: ScalarField, space: DecaySpace) -> DecayReport:
    """sup |f| (1+d)^mu with a divergence heuristic on the outer quartile."""
    coord = field.grid.nodes if field.grid.kind in (RADIAL, INTERVAL) else field.grid.radii()
    d = space.distance(np.abs(coord) if field.grid.kind == INTERVAL else coord)
    w = np.abs(field.values) * (1.0 + d) ** space.mu
    order = np.argsort(d)
    w_sorted = w[order]
    run = np.maximum.accumulate(w_sorted)
    tail = run[int(0.75 * len(run)):]
    scale = max(float(run[-1]), 1e-300)
    diverged = bool(len(tail) > 3 and np.all(np.diff(tail) > 1e-13 * scale))
    return DecayReport(float(w.max()), diverged, w)
