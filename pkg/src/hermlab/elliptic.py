"""Monotone discretizations of -Lap~ (+ lambda) and the exhaustion drivers.

The assembled interior matrices are M-matrices (nonpositive off-diagonals,
weak diagonal dominance, strict at boundary-adjacent rows), which is what
carries the discrete maximum principle through every solver here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry as geo
from .grids import Grid, RADIAL, INTERVAL, integrate
from .geometry import ChartMetric, ScalarField, MapField, TargetManifold
from .analytic import barrier_log_A, twoends_dtilde


class SolverError(RuntimeError):
    pass


class MMatrixError(SolverError):
    pass


# ---------------------------------------------------------------------------
# operator assembly


def _stencil_1d(metric: ChartMetric, grid: Grid):
    """Rows (lower, diag, upper) of -Lap~ on interior nodes.

    Radial grids use the flux form of Lap_e in 2m dimensions with the
    even-extension center stencil; interval grids use f^{-1} u_ss.
    """
    x = grid.nodes
    n = grid.n
    f = metric.f(x)
    lo = np.zeros(n)
    di = np.zeros(n)
    up = np.zeros(n)
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    if grid.kind == RADIAL:
        d = grid.dim - 1
        rp = x[1:-1] + hp / 2
        rm = x[1:-1] - hm / 2
        vol = (rp ** grid.dim - rm ** grid.dim) / grid.dim
        cp = rp ** d / hp / vol
        cm = rm ** d / hm / vol
        if x[0] == 0.0:
            h0 = x[1] - x[0]
            di[0] = grid.dim * 2.0 / h0 ** 2 / f[0]
            up[0] = -grid.dim * 2.0 / h0 ** 2 / f[0]
    elif grid.kind == INTERVAL:
        cp = 2.0 / (hp * (hp + hm))
        cm = 2.0 / (hm * (hp + hm))
    else:
        raise SolverError(f"1-D stencil undefined for {grid.kind}")
    di[1:-1] = (cp + cm) / f[1:-1]
    up[1:-1] = -cp / f[1:-1]
    lo[1:-1] = -cm / f[1:-1]
    return lo, di, up


@dataclass
class DiscreteOperator:
    metric: ChartMetric
    grid: Grid
    lam: complex
    matrix: sp.csr_matrix          # interior system (real block form if complex)
    interior_idx: np.ndarray
    boundary_idx: np.ndarray
    boundary_coupling: sp.csr_matrix   # interior x boundary (real part shape)
    is_complex: bool

    @property
    def n_interior(self) -> int:
        return len(self.interior_idx)


def assemble_operator(metric: ChartMetric, grid: Grid, lam: complex = 0.0) -> DiscreteOperator:
    """-Lap~ + lambda on the grid's interior; validates the M-matrix
    invariant for real lambda >= 0 and reports the offending row otherwise."""
    metric.check_grid(grid)
    if grid.kind not in (RADIAL, INTERVAL):
        raise SolverError("operator assembly supports the 1-D reductions")
    lo, di, up = _stencil_1d(metric, grid)
    n = grid.n
    interior = np.where(grid.interior)[0]
    boundary = np.where(~grid.interior)[0]
    pos = -np.ones(n, int)
    pos[interior] = np.arange(len(interior))
    rows, cols, vals = [], [], []
    brows, bcols, bvals = [], [], []
    lam_r = complex(lam).real
    lam_i = complex(lam).imag
    for k, i in enumerate(interior):
        diag = di[i] + lam_r
        rows.append(k); cols.append(k); vals.append(diag)
        for j, a in ((i - 1, lo[i]), (i + 1, up[i])):
            if j < 0 or j >= n or a == 0.0:
                continue
            if pos[j] >= 0:
                rows.append(k); cols.append(pos[j]); vals.append(a)
            else:
                brows.append(k); bcols.append(int(np.where(boundary == j)[0][0]))
                bvals.append(a)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(interior), len(interior)))
    Bc = sp.csr_matrix((bvals, (brows, bcols)), shape=(len(interior), len(boundary)))
    if lam_i == 0.0 and lam_r >= 0.0:
        _check_mmatrix(A, Bc)
        matrix = A
        is_complex = False
    elif lam_i == 0.0:
        matrix = A
        is_complex = False
    else:
        # 2x2 real block system [[A, -b I], [b I, A]]
        I = sp.identity(len(interior), format="csr")
        matrix = sp.bmat([[A, -lam_i * I], [lam_i * I, A]], format="csr")
        is_complex = True
    return DiscreteOperator(metric, grid, complex(lam), matrix.tocsr(),
                            interior, boundary, Bc, is_complex)


def _check_mmatrix(A: sp.csr_matrix, Bc: sp.csr_matrix):
    n = A.shape[0]
    coo = A.tocoo()
    off = coo.data[(coo.row != coo.col)]
    if off.size and off.max() > 1e-13 * abs(coo.data).max():
        bad = coo.row[(coo.row != coo.col) & (coo.data > 1e-13 * abs(coo.data).max())][0]
        raise MMatrixError(f"positive off-diagonal entry in row {int(bad)}")
    diag = A.diagonal()
    rowsum = np.asarray(A.sum(axis=1)).ravel()
    scale = np.abs(diag).max()
    weak = rowsum >= -1e-12 * scale
    if not np.all(weak):
        raise MMatrixError(f"diagonal dominance fails at row {int(np.where(~weak)[0][0])}")
    # strict dominance at boundary-adjacent rows
    badj = np.unique(Bc.tocoo().row)
    if badj.size and not np.all(rowsum[badj] + np.asarray(-Bc.sum(axis=1)).ravel()[badj] > 0):
        raise MMatrixError("boundary-adjacent rows lack strict dominance")
    if np.any(diag <= 0):
        raise MMatrixError(f"nonpositive diagonal at row {int(np.where(diag <= 0)[0][0])}")


def solve_dirichlet(op: DiscreteOperator, source, boundary_values) -> ScalarField:
    """Direct sparse solve of (op) u = source with Dirichlet data; the
    relative residual is checked below 1e-10."""
    n = op.grid.n
    src = source.values if isinstance(source, ScalarField) else np.asarray(source, float)
    g = np.asarray(boundary_values, float)
    if g.ndim == 0:
        g = np.full(len(op.boundary_idx), float(g))
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(g))):
        raise SolverError("non-finite data")
    rhs = src[op.interior_idx] - op.boundary_coupling @ g
    if op.is_complex:
        rhs = np.concatenate([rhs, np.zeros_like(rhs)])
    sol = spla.spsolve(op.matrix, rhs)
    resid = np.linalg.norm(op.matrix @ sol - rhs)
    scale = np.linalg.norm(rhs)
    if scale > 0 and resid / scale > 1e-10:
        raise SolverError(f"direct solve residual {resid/scale:.2e}")
    if op.is_complex:
        ni = op.n_interior
        out = np.zeros(n, complex)
        out[op.interior_idx] = sol[:ni] + 1j * sol[ni:]
        out[op.boundary_idx] = g
        fld = ScalarField.__new__(ScalarField)
        fld.grid, fld.values = op.grid, out
        return fld
    out = np.zeros(n)
    out[op.interior_idx] = sol
    out[op.boundary_idx] = g
    return ScalarField(op.grid, out)


# ---------------------------------------------------------------------------
# volume weights and integrals


def volume_weight(metric: ChartMetric, grid: Grid) -> np.ndarray:
    """Riemannian volume density along the reduced coordinate.

    Radial: f^m r^{2m-1} omega_{2m-1}; interval: f^m (unit torus factor).
    """
    m = metric.m
    if grid.kind == RADIAL:
        from .special import gamma
        omega = 2.0 * math.pi ** m / gamma(float(m))   # area of S^{2m-1}
        return metric.f(grid.nodes) ** m * grid.nodes ** (2 * m - 1) * omega
    if grid.kind == INTERVAL:
        return metric.f(grid.nodes) ** m
    raise SolverError(grid.kind)


# ---------------------------------------------------------------------------
# exhaustion


@dataclass(frozen=True)
class ExhaustionSchedule:
    levels: tuple                  # strictly increasing radii / s-levels
    tol: float = 1e-6
    ref_compact: float = 1.0       # radius (or |s|) of the reference compact

    def __post_init__(self):
        if not all(b > a for a, b in zip(self.levels, self.levels[1:])):
            raise SolverError("levels must be strictly increasing")
        if self.tol <= 0:
            raise SolverError("tolerance must be positive")


def default_schedule(metric: ChartMetric, R0: float = 6.25, n_levels: int = 6) -> ExhaustionSchedule:
    if metric.kind == geo.TWO_ENDS:
        levels = tuple(1.0 - 2.0 ** (-k - 1) for k in range(1, n_levels + 1))
        return ExhaustionSchedule(levels, 1e-6, 0.5)
    levels = tuple(R0 * 2.0 ** k for k in range(n_levels))
    return ExhaustionSchedule(levels, 1e-6, R0)


def exhaustion_barrier(metric: ChartMetric, mu_prime: float):
    """The comparison profile matched to the metric's decay class."""
    kind = metric.kind
    if kind == geo.EUCLIDEAN_CM:
        a = mu_prime / 2.0
        return lambda r: (1.0 + np.asarray(r, float) ** 2) ** (-a), "power"
    if kind == geo.CONFORMAL_CM:
        A = barrier_log_A(metric.real_dim, mu_prime)
        return lambda r: np.log(A + np.asarray(r, float) ** 2) ** (-mu_prime), "log"
    if kind == geo.POINCARE_BALL:
        A = mu_prime + 2.0
        return lambda r: (A + 2.0 * np.arctanh(np.asarray(r, float))) ** (-mu_prime), "artanh"
    if kind == geo.TWO_ENDS:
        d = metric.delta
        return (lambda s: (1.0 + twoends_dtilde(s, d)) ** (-mu_prime)), "two-ends"
    raise SolverError(f"no matching barrier for metric kind {kind}")


def _level_grids(metric: ChartMetric, schedule: ExhaustionSchedule, n_master: int):
    """Master grid spanning the final level plus per-level node-count cuts."""
    if metric.kind == geo.TWO_ENDS:
        s_max = schedule.levels[-1]
        master = Grid(INTERVAL, np.linspace(-s_max, s_max, n_master), 2 * metric.m)
        cuts = []
        s = master.nodes
        for lev in schedule.levels:
            mask = np.abs(s) <= lev + 1e-12
            cuts.append(np.where(mask)[0])
        return master, cuts
    R_max = schedule.levels[-1]
    master = Grid(RADIAL, np.linspace(0.0, R_max, n_master), 2 * metric.m)
    cuts = [np.where(master.nodes <= lev + 1e-12)[0] for lev in schedule.levels]
    return master, cuts


def _subgrid(master: Grid, idx: np.ndarray) -> Grid:
    return Grid(master.kind, master.nodes[idx], master.dim)


@dataclass
class ExhaustionResult:
    field: ScalarField
    barrier_constant: float
    levels: list                   # per-level dict rows
    converged: bool


def exhaustion_solve(metric: ChartMetric, source, mu: float, mu_prime: float,
                     schedule: ExhaustionSchedule | None = None,
                     n_master: int = 2049) -> ExhaustionResult:
    """Zero-boundary Dirichlet solves on increasing domains with barrier
    monitoring; stops when successive levels are Cauchy on the reference
    compact. `source` is a callable of the reduced coordinate."""
    if schedule is None:
        schedule = default_schedule(metric)
    barrier, bname = exhaustion_barrier(metric, mu_prime)
    master, cuts = _level_grids(metric, schedule, n_master)
    ref_mask = (np.abs(master.nodes) <= schedule.ref_compact + 1e-12)
    prev = np.zeros(master.n)
    rows = []
    C_rec = 0.0
    converged = False
    field = ScalarField(master, np.zeros(master.n))
    for k, idx in enumerate(cuts):
        sub = _subgrid(master, idx)
        opk = assemble_operator(metric, sub, 0.0)
        src = np.asarray(source(sub.nodes), float)
        u = solve_dirichlet(opk, src, 0.0)
        full = np.zeros(master.n)
        full[idx] = u.values
        bvals = barrier(np.abs(sub.nodes))
        C_k = float(np.max(np.abs(u.values) / np.maximum(bvals, 1e-300)))
        C_rec = C_k
        diff = float(np.max(np.abs(full - prev)[ref_mask]))
        rows.append({"level": k, "radius": float(schedule.levels[k]),
                     "barrier_C": C_k, "interlevel_sup_diff": diff,
                     "barrier": bname})
        prev = full
        field = ScalarField(master, full)
        if k > 0 and diff < schedule.tol:
            converged = True
            break
        if not math.isfinite(C_k) or C_k > 1e12:
            raise SolverError("barrier violation: constant grows without bound")
    return ExhaustionResult(field, C_rec, rows, converged)


def comparison_function(metric: ChartMetric, source, mu: float, mu_prime: float,
                        grid: Grid | None = None,
                        schedule: ExhaustionSchedule | None = None) -> ScalarField:
    """V with -Lap~ V = source (= 4 |sigma(h)| in the flow drivers).

    With `grid` given, solves locally on that grid with zero boundary data;
    otherwise runs the exhaustion. Positivity of V on interior nodes is
    asserted whenever the source is nontrivial.
    """
    if grid is not None:
        op = assemble_operator(metric, grid, 0.0)
        src = source.values if isinstance(source, ScalarField) else np.asarray(source(grid.nodes), float)
        if np.any(src < -1e-14 * max(1.0, np.abs(src).max())):
            raise SolverError("comparison source must be nonnegative")
        V = solve_dirichlet(op, np.maximum(src, 0.0), 0.0)
    else:
        V = exhaustion_solve(metric, source, mu, mu_prime, schedule).field
        src = np.asarray(source(V.grid.nodes), float)
    inner = V.grid.interior
    if np.max(np.abs(src)) > 0:
        if np.any(V.values[inner] <= 0.0):
            raise SolverError("comparison function not strictly positive")
    elif np.any(V.values < -1e-12):
        raise SolverError("comparison function negative with zero source")
    return V


# ---------------------------------------------------------------------------
# nonlinear solve: flow to stationarity + damped Newton polish


def _tension_interior(metric, target, grid, vals, hvals):
    full = vals.copy()
    mf = MapField.__new__(MapField)
    mf.grid, mf.values, mf.target = grid, full, target
    sig = geo.tension_field(metric, target, mf)
    return sig.values


@dataclass
class HarmonicResult:
    u: MapField
    sigma_max: float
    rho: np.ndarray
    V: ScalarField
    rho_over_V_max: float
    newton_iters: int
    flow_steps: int


def hermitian_harmonic_solve(metric: ChartMetric, target: TargetManifold,
                             h: MapField, tol: float = 1e-8,
                             switch_tol: float = 5e-2,
                             max_flow_steps: int = 4000,
                             max_newton: int = 40,
                             mu: float = 4.0, mu_prime: float = 2.0,
                             initial: np.ndarray | None = None) -> HarmonicResult:
    """Solve sigma(u) = 0 with u = h on the boundary.

    Runs the heat flow into the attraction basin (primary method), then
    polishes with damped Newton on the discretized system; certifies
    0 <= rho(u, h) <= V nodewise with V the local comparison function.
    """
    from .parabolic import HeatFlow     # lazy: parabolic builds on this module

    grid = h.grid
    flow = HeatFlow(metric, target, h, initial=initial)
    steps = 0
    while flow.sigma_gnorm_max() > switch_tol and steps < max_flow_steps:
        flow.step()
        steps += 1
    u = flow.state_values()

    interior = grid.interior
    n_comp = h.values.shape[1]
    idx_int = np.where(interior)[0]

    def residual(uvals):
        sig = _tension_interior(metric, target, grid, uvals, h.values)
        return sig[idx_int].ravel()

    def gnorm_max(uvals):
        sig = _tension_interior(metric, target, grid, uvals, h.values)
        return float(geo.gnorm_vector(target, uvals, sig).max())

    newton_iters = 0
    cur = gnorm_max(u)
    if cur > tol:
        x = u[idx_int].ravel().copy()

        def unpack(xv):
            full = h.values.copy()
            full[idx_int] = xv.reshape(len(idx_int), n_comp)
            return full

        F = residual(unpack(x))
        for it in range(max_newton):
            if gnorm_max(unpack(x)) <= tol:
                break
            # finite-difference Jacobian; the system is small by construction
            nun = len(x)
            J = np.empty((nun, nun))
            base = F
            eps = 1e-7 * max(1.0, np.abs(x).max())
            for j in range(nun):
                xp = x.copy()
                xp[j] += eps
                J[:, j] = (residual(unpack(xp)) - base) / eps
            try:
                dx = np.linalg.solve(J, -base)
            except np.linalg.LinAlgError as exc:
                raise SolverError(f"newton linearization singular: {exc}")
            lam = 1.0
            n0 = np.linalg.norm(base)
            for _ in range(30):
                xn = x + lam * dx
                un = unpack(xn)
                if target.in_chart(un):
                    Fn = residual(un)
                    if np.linalg.norm(Fn) < (1 - 0.25 * lam) * n0:
                        break
                lam *= 0.5
            else:
                raise SolverError("newton line search failed")
            x, F = xn, Fn
            newton_iters = it + 1
        u = unpack(x)
        cur = gnorm_max(u)
    if cur > tol:
        raise SolverError(f"stationarity not reached: |sigma| = {cur:.2e}")

    umap = MapField(grid, u, target)
    sig_h = geo.tension_norm(metric, target, h)
    V = comparison_function(metric, ScalarField(grid, 4.0 * sig_h), mu, mu_prime, grid=grid)
    rho = target.distance(u, h.values)
    denom = np.where(V.values > 1e-300, V.values, np.inf)
    ratio = float(np.max(rho / denom)) if np.any(np.isfinite(denom)) else 0.0
    return HarmonicResult(umap, cur, rho, V, ratio, newton_iters, steps)


def exhaustion_harmonic(metric: ChartMetric, target: TargetManifold,
                        h_fn, schedule: ExhaustionSchedule,
                        n_master: int = 513, tol: float = 1e-8,
                        mu: float = 4.0, mu_prime: float = 2.0,
                        energy_ref: float | None = None):
    """Per-level Dirichlet solves along the exhaustion with the existence
    monitors; returns (limit MapField on the master grid, per-level rows).

    `h_fn` maps reduced coordinates to target points (the boundary/initial
    map). Levels are continued from the previous solution.
    """
    master, cuts = _level_grids(metric, schedule, n_master)
    ref = schedule.ref_compact if energy_ref is None else energy_ref
    ref_mask = np.abs(master.nodes) <= ref + 1e-12
    barrier, bname = exhaustion_barrier(metric, mu_prime)
    h_master = np.asarray(h_fn(master.nodes), float)
    prev_full = h_master.copy()
    rows = []
    limit = None
    for k, idx in enumerate(cuts):
        sub = _subgrid(master, idx)
        h_sub = MapField(sub, h_master[idx].copy(), target)
        init = prev_full[idx].copy()
        res = hermitian_harmonic_solve(metric, target, h_sub, tol=tol,
                                       mu=mu, mu_prime=mu_prime, initial=init)
        full = h_master.copy()
        full[idx] = res.u.values
        e_sub = geo.energy_density(metric, target, res.u)
        w_sub = volume_weight(metric, sub)
        ref_sub = np.abs(sub.nodes) <= ref + 1e-12
        energy = float(np.trapezoid((e_sub.values * w_sub)[ref_sub], sub.nodes[ref_sub]))
        diff = float(np.max(np.linalg.norm(full - prev_full, axis=1)[ref_mask]))
        bC = float(np.max(res.rho / np.maximum(barrier(np.abs(sub.nodes)), 1e-300)))
        rows.append({"level": k, "radius": float(schedule.levels[k]),
                     "sup_rho_over_V": res.rho_over_V_max, "energy_L1": energy,
                     "interlevel_sup_diff": diff, "barrier_C": bC})
        prev_full = full
        limit = MapField(master, full, target)
        if res.rho_over_V_max > 1.0 + 1e4 * sub.h ** 2:
            raise SolverError("rho/V bound violated along the exhaustion")
        if k > 0 and diff < schedule.tol:
            break
    return limit, rows


# ---------------------------------------------------------------------------
# resolvent probe


def resolvent_probe(metric: ChartMetric, grid: Grid, phi1: float, phi2: float,
                    radii, phi: ScalarField):
    """Sup-norm sweep of (-Lap~ + lambda)^{-1} along the sector rays
    lambda = r e^{i phi_j}; empirical evidence for the 1/t semigroup bound."""
    if not (math.pi / 2 < phi1 < math.pi) or not (-math.pi < phi2 < -math.pi / 2):
        raise SolverError("rays must satisfy pi/2 < phi1 < pi, -pi < phi2 < -pi/2")
    rows = []
    for ang in (phi1, phi2):
        for r in radii:
            lam = complex(r * math.cos(ang), r * math.sin(ang))
            op = assemble_operator(metric, grid, lam)
            u = solve_dirichlet(op, phi.values, 0.0)
            mod = np.abs(u.values)
            rows.append({"angle": ang, "r": float(r),
                         "lam_re": lam.real, "lam_im": lam.imag,
                         "sup_norm": float(mod.max()),
                         "sup_times_r": float(mod.max() * r)})
    return rows
