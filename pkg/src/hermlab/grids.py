"""Node sets for the radial / interval / box reductions.

All 1-D grids store their nodes in the reduced coordinate (r or s); box grids
store a full cartesian product. Radial grids may be nonuniform (graded in
metric arclength); stencils downstream use flux forms that stay second order
on smoothly graded nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RADIAL = "radial"
INTERVAL = "interval"
BOX = "box"
PERIODIC_INTERVAL = "periodic-interval"


@dataclass(frozen=True)
class Grid:
    kind: str
    nodes: np.ndarray          # (N,) for 1-D kinds, (N, d) flattened for box
    dim: int                   # real dimension represented (2m for reductions)
    shape: tuple = ()          # box / periodic-interval only
    box_step: tuple = ()       # per-axis spacing for box kinds

    def __post_init__(self):
        if self.kind in (RADIAL, INTERVAL):
            d = np.diff(self.nodes)
            if self.nodes.ndim != 1 or len(self.nodes) < 4:
                raise ValueError("need at least 4 strictly monotone nodes")
            if not np.all(d > 0):
                raise ValueError("nodes must be strictly increasing")

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    @property
    def h(self) -> float:
        """Largest node spacing (tolerance scale for O(h^2) statements)."""
        if self.kind in (RADIAL, INTERVAL):
            return float(np.max(np.diff(self.nodes)))
        return float(max(self.box_step))

    @property
    def interior(self) -> np.ndarray:
        """Mask of interior nodes (the discrete complement of the boundary)."""
        if self.kind == RADIAL:
            # only r=R is a boundary; r=0 is a smooth center node
            m = np.ones(self.n, bool)
            m[-1] = False
            return m
        if self.kind == INTERVAL:
            m = np.ones(self.n, bool)
            m[0] = m[-1] = False
            return m
        if self.kind == PERIODIC_INTERVAL:
            m = np.ones(self.shape, bool)
            m[:, 0] = m[:, -1] = False
            return m.ravel()
        m = np.ones(self.shape, bool)
        for ax in range(len(self.shape)):
            sl = [slice(None)] * len(self.shape)
            sl[ax] = 0
            m[tuple(sl)] = False
            sl[ax] = -1
            m[tuple(sl)] = False
        return m.ravel()

    def radii(self) -> np.ndarray:
        """Euclidean |x| per node (box kinds); identity for radial grids."""
        if self.kind == RADIAL:
            return self.nodes
        if self.kind == BOX:
            return np.sqrt((self.nodes ** 2).sum(axis=1))
        raise ValueError(f"radii undefined for {self.kind} grid")


def radial_grid(R: float, n: int, m: int) -> Grid:
    """Uniform radial grid on [0, R] for the 2m-dimensional reduction."""
    return Grid(RADIAL, np.linspace(0.0, R, n), 2 * m)


def radial_arclength_grid(xi_max: float, n: int, m: int) -> Grid:
    """Radial grid graded as r = sinh(xi), uniform in conformal arclength.

    Reaches exponentially large radii with O(n) nodes; pairs with the
    (1+r^2)^{-1} conformal factor whose metric distance is asinh(r).
    """
    xi = np.linspace(0.0, xi_max, n)
    return Grid(RADIAL, np.sinh(xi), 2 * m)


def interval_grid(s_max: float, n: int, m: int) -> Grid:
    """Symmetric grid on [-s_max, s_max] for the two-ends reduction."""
    if not 0 < s_max < 1:
        raise ValueError("s_max must lie in (0,1)")
    return Grid(INTERVAL, np.linspace(-s_max, s_max, n), 2 * m)


def box_grid(L: float, n_per_axis: int, dim: int) -> Grid:
    """Cartesian box [-L, L]^dim, n_per_axis nodes per axis, flattened."""
    axes = [np.linspace(-L, L, n_per_axis)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([c.ravel() for c in mesh], axis=1)
    step = tuple(float(a[1] - a[0]) for a in axes)
    return Grid(BOX, nodes, dim, shape=(n_per_axis,) * dim, box_step=step)


def periodic_interval_grid(s_max: float, n_s: int, n_x: int, m: int,
                           x_period: float = 1.0) -> Grid:
    """Small 2-D cross-check grid: one periodic direction x one s-interval."""
    s = np.linspace(-s_max, s_max, n_s)
    x = np.linspace(0.0, x_period, n_x, endpoint=False)
    X, S = np.meshgrid(x, s, indexing="ij")
    nodes = np.stack([X.ravel(), S.ravel()], axis=1)
    return Grid(PERIODIC_INTERVAL, nodes, 2 * m, shape=(n_x, n_s),
                box_step=(x[1] - x[0], s[1] - s[0]))


def integrate(grid: Grid, values: np.ndarray, weight: np.ndarray | None = None):
    """Trapezoid integral of `values` (optionally weighted) over grid nodes.

    Radial grids integrate in the coordinate r only; geometric volume weights
    (f^m r^{2m-1}...) are supplied by the caller through `weight`.
    """
    v = values if weight is None else values * weight
    if grid.kind in (RADIAL, INTERVAL):
        return float(np.trapezoid(v, grid.nodes))
    if grid.kind in (BOX, PERIODIC_INTERVAL):
        cell = float(np.prod(grid.box_step))
        return float(np.sum(v) * cell)
    raise ValueError(grid.kind)
