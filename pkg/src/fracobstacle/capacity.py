"""Condenser, relative and global fractional capacities on uniform grids.

All problems share one discrete form: minimise the lattice energy of ``u``
with ``u = 1`` on the target nodes, ``u = 0`` off the support and
``0 <= u <= 1`` in between.  Nodes off the grid are zero, so the energy of
the infinite lattice is represented exactly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .energy import GridDomain, KernelSpec, LatticeEnergy
from .errors import InfeasibleGeometry, LadderNotMonotone
from .shapes import Ball
from .solvers import ConvexProblem, SolverOptions, minimize

CSV_COLUMNS = ("problem_id", "geometry", "R", "r", "h", "value", "kkt", "iters")


@dataclass
class CapacityResult:
    value: float
    potential: np.ndarray = field(repr=False)
    iterations: int
    kkt: float
    geometry: str
    R: float = math.nan
    r: float = math.nan
    h: float = math.nan
    method: str = ""

    def row(self, problem_id) -> dict:
        return {"problem_id": problem_id, "geometry": self.geometry, "R": self.R, "r": self.r,
                "h": self.h, "value": self.value, "kkt": self.kkt, "iters": self.iterations}


@dataclass
class GlobalCapacity:
    value: float
    ladder: list  # (R, condenser value)
    exponent: float
    observed_ratio: float = math.nan
    results: list = field(default_factory=list, repr=False)


def target_mask(T, grid: GridDomain) -> np.ndarray:
    """Nodes whose cell centre lies in ``T`` (a shape, a node mask or None)."""
    if T is None:
        return np.zeros(grid.shape, bool)
    if isinstance(T, np.ndarray):
        if T.shape != grid.shape:
            raise InfeasibleGeometry("target mask does not match the grid")
        return T.astype(bool)
    if T.is_empty():
        return np.zeros(grid.shape, bool)
    return grid.mask_from_predicate(T.contains)


def _reach(T):
    if T is None or isinstance(T, np.ndarray):
        return None
    return 0.0 if T.is_empty() else T.reach()


def _grid_for(radius, kernel, h, grid):
    if grid is None:
        if h is None:
            raise InfeasibleGeometry("either a grid or a spacing h is required")
        return GridDomain.centered(radius, h, kernel.n)
    hi = grid.lower + np.asarray(grid.shape) * grid.h
    if np.any(grid.lower > -radius + 1e-12) or np.any(hi < radius - 1e-12):
        raise InfeasibleGeometry(f"grid does not cover the ball of radius {radius:g}")
    return grid


def set_capacity(grid: GridDomain, kernel: KernelSpec, target, support, counted=None,
                 options: SolverOptions | None = None, geometry="set") -> CapacityResult:
    """Capacity of the node set ``target`` relative to ``support``.

    ``counted=None`` counts every pair of the infinite lattice.
    """
    target = np.asarray(target, bool)
    support = np.asarray(support, bool)
    if np.any(target & ~support):
        raise InfeasibleGeometry("target nodes must lie in the support")
    if not target.any():
        return CapacityResult(0.0, np.zeros(grid.shape), 0, 0.0, geometry, h=grid.h, method="trivial")
    lat = LatticeEnergy(grid, kernel, support, counted)
    prob = ConvexProblem(lat, fixed=target, fixed_values=1.0, lower=0.0, upper=1.0)
    res = minimize(prob, options)
    u = res.u
    assert np.all((u >= 0) & (u <= 1)), "capacitary potential left [0, 1]"
    return CapacityResult(res.value, u, res.iterations, res.kkt, geometry, h=grid.h, method=res.method)


def condenser_capacity(T, R: float, kernel: KernelSpec, grid: GridDomain | None = None, h=None,
                       options: SolverOptions | None = None) -> CapacityResult:
    """``C_K(T, B_R)``: support in the closed ball, all pairs counted."""
    reach = _reach(T)
    if reach is not None and reach > R:
        raise InfeasibleGeometry(f"target reaches {reach:g} > R = {R:g}")
    grid = _grid_for(R, kernel, h, grid)
    support = grid.ball_mask(np.zeros(kernel.n), R, closed=True)
    res = set_capacity(grid, kernel, target_mask(T, grid), support, None, options, "condenser")
    res.R = float(R)
    return res


def relative_capacity(T, r: float, R: float, kernel: KernelSpec, grid: GridDomain | None = None,
                      h=None, options: SolverOptions | None = None) -> CapacityResult:
    """``cap_K(T, B_R; r)``: support in the closed ``B_r``, pairs counted inside ``B_R``."""
    if not 0 < r < R:
        raise InfeasibleGeometry("relative capacity needs 0 < r < R")
    reach = _reach(T)
    if reach is not None and reach > r:
        raise InfeasibleGeometry(f"target reaches {reach:g} > r = {r:g}")
    grid = _grid_for(R, kernel, h, grid)
    origin = np.zeros(kernel.n)
    support = grid.ball_mask(origin, r, closed=True)
    counted = grid.ball_mask(origin, R) | support
    res = set_capacity(grid, kernel, target_mask(T, grid), support, counted, options, "relative")
    res.R, res.r = float(R), float(r)
    return res


def global_capacity(T, kernel: KernelSpec, h: float, R0: float | None = None,
                    factors=(1, 2, 4), options: SolverOptions | None = None) -> GlobalCapacity:
    """Limit of ``C_K(T, B_R)`` as ``R`` grows, extrapolated from a ladder of radii.

    The model is the condenser law ``C^(-1/(p-1)) = a - b R^-alpha`` with
    ``alpha = (n - sp)/(p - 1)``, fitted through the two largest radii.
    ``observed_ratio`` compares the first and second ladder increments of the
    transformed values; it should be close to ``2^alpha`` for a doubling ladder.
    """
    n, sp, p = kernel.n, kernel.sp, kernel.p
    alpha = (n - sp) / (p - 1)
    reach = _reach(T)
    if T is None or reach == 0.0:
        return GlobalCapacity(0.0, [], alpha)
    if R0 is None:
        R0 = 8.0 * T.diameter
    radii = [R0 * f for f in factors]
    results = [condenser_capacity(T, R, kernel, h=h, options=options) for R in radii]
    vals = [r.value for r in results]
    for a, b in zip(vals, vals[1:]):
        if b > a * (1 + 1e-9) + 1e-14:
            raise LadderNotMonotone(f"condenser values increase along the ladder: {vals}")
    ladder = list(zip(radii, vals))
    if len(vals) == 1 or vals[-1] == 0:
        return GlobalCapacity(vals[-1], ladder, alpha, results=results)
    y = [v ** (-1.0 / (p - 1)) for v in vals]
    x = [R ** -alpha for R in radii]
    slope = (y[-1] - y[-2]) / (x[-1] - x[-2])
    y0 = y[-1] - slope * x[-1]
    limit = y0 ** -(p - 1)
    ratio = math.nan
    if len(vals) >= 3 and y[-1] != y[-2]:
        ratio = (y[-2] - y[-3]) / (y[-1] - y[-2])
    return GlobalCapacity(limit, ladder, alpha, ratio, results)


def standard_ball_capacity(n: int, s: float, radius: float = 1.0) -> float:
    """Closed-form capacity of ``B_radius`` for the standard kernel with p = 2.

    The potential is the Riesz potential of the equilibrium density
    ``kappa (1 - |y|^2)^-s``; the energy equals ``2 mu(B) / C_{n,s}`` where
    ``C_{n,s}`` normalises the fractional Laplacian.
    """
    C = 4 ** s * special.gamma(n / 2 + s) / (math.pi ** (n / 2) * abs(special.gamma(-s)))
    green = special.gamma(n / 2 - s) / (4 ** s * math.pi ** (n / 2) * special.gamma(s))
    riesz = math.pi ** (n / 2 + 1) / (special.gamma(n / 2) * math.sin(math.pi * s))
    mass = math.pi ** (n / 2) * special.gamma(1 - s) / special.gamma(n / 2 + 1 - s)
    return float(2 / C * mass / (green * riesz) * radius ** (n - 2 * s))


def capacity_diagnostics(T, kernel: KernelSpec, h: float, R0=None, pairs=((4.0, 8.0), (4.0, 32.0)),
                         scales=(0.5, 2.0), options: SolverOptions | None = None) -> dict:
    """Scaling residuals, comparability against the standard kernel, and the
    gap ``cap_K(T) - cap_K(T, B_R; r)`` with the size of its bound."""
    n, sp = kernel.n, kernel.sp
    base = global_capacity(T, kernel, h, R0, options=options)
    out = {"cap": base.value, "ladder": base.ladder, "scaling": {}, "gaps": []}
    for rho in scales:
        R0s = None if R0 is None else R0 * rho
        c = global_capacity(T.scaled(rho), kernel, h, R0s, options=options).value
        out["scaling"][rho] = abs(c - rho ** (n - sp) * base.value) / base.value
    if kernel.is_standard:
        out["comparability"] = 1.0
    else:
        std = KernelSpec(kernel.params)
        out["comparability"] = base.value / global_capacity(T, std, h, R0, options=options).value
    rho = T.reach()
    for r, R in pairs:
        rel = relative_capacity(T, r, R, kernel, h=h, options=options).value
        ball = condenser_capacity(Ball((0.0,) * n, rho), r, kernel, h=h, options=options).value
        bound = (r ** sp / (R - r) ** sp) * ball
        out["gaps"].append({"r": r, "R": R, "relative": rel, "gap": base.value - rel, "bound": bound})
    return out


def write_capacity_csv(path, rows, append=False):
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        if not append or fh.tell() == 0:
            w.writeheader()
        for row in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for k, v in row.items()})
