"""Minimisers for the discrete convex problems.

Objective on a grid field ``u``::

    J(u) = E(u) + gamma h^n sum |u_i|^p - p h^n sum f_i u_i

where ``E`` is a :class:`~fracobstacle.energy.LatticeEnergy`; some nodes are
pinned to prescribed values and the others may carry box bounds.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, cg

from .energy import LatticeEnergy
from .errors import InvalidParameter, SolverDiverged

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


@dataclass
class SolverOptions:
    """Stopping rule: relative decrease of J below ``rtol_decrease`` over
    ``window`` iterations and projected-gradient norm below
    ``kkt_tol * (1 + |J|)``."""

    rtol_decrease: float = 1e-10
    window: int = 10
    kkt_tol: float = 1e-8
    max_iter: int = 50_000
    direct_limit: int = 5000
    method: str = "auto"  # auto | direct | cg | apg
    cg_rtol: float = 1e-12
    box_slack: float = 1e-9  # round-off allowed before the linear path is rejected

    def __post_init__(self):
        if self.method not in ("auto", "direct", "cg", "apg"):
            raise InvalidParameter(f"unknown solver method {self.method!r}")


@dataclass
class SolveResult:
    u: np.ndarray
    value: float
    iterations: int
    kkt: float
    method: str
    info: dict = field(default_factory=dict)


class ConvexProblem:
    """``min J(u)`` with ``u = fixed_values`` on ``fixed`` and
    ``lower <= u <= upper`` elsewhere on the support."""

    def __init__(self, lattice: LatticeEnergy, fixed=None, fixed_values=0.0,
                 lower=-np.inf, upper=np.inf, gamma=0.0, f=None):
        self.lattice = lattice
        grid = lattice.grid
        self.grid = grid
        self.p = lattice.p
        sup = lattice.support
        self.fixed = np.zeros(grid.shape, bool) if fixed is None else np.asarray(fixed, bool) & sup
        self.free = sup & ~self.fixed
        self.fixed_values = np.broadcast_to(np.asarray(fixed_values, float), grid.shape)
        self.lower = np.broadcast_to(np.asarray(lower, float), grid.shape)
        self.upper = np.broadcast_to(np.asarray(upper, float), grid.shape)
        if gamma < 0:
            raise InvalidParameter("zero-order coefficient gamma must be >= 0")
        self.gamma = float(gamma)
        self.f = np.zeros(grid.shape) if f is None else np.where(sup, np.asarray(f, float), 0.0)
        self.cell = grid.cell_volume

    # objective ------------------------------------------------------------
    def value(self, u) -> float:
        if self.p == 2:
            e = self.lattice.quadratic_value(u)
        else:
            e = self.lattice.value(u)
        sup = self.lattice.support
        zero = self.gamma * self.cell * float(np.sum(np.abs(u[sup]) ** self.p))
        lin = self.p * self.cell * float(np.sum(self.f[sup] * u[sup]))
        return e + zero - lin

    def gradient(self, u) -> np.ndarray:
        if self.p == 2:
            g = self.lattice.hessian_apply(u)
        else:
            g = self.lattice.gradient(u)
        g = g + self.p * self.cell * (self.gamma * np.sign(u) * np.abs(u) ** (self.p - 1) - self.f)
        return np.where(self.lattice.support, g, 0.0)

    def project(self, u) -> np.ndarray:
        u = np.clip(u, self.lower, self.upper)
        u = np.where(self.fixed, self.fixed_values, u)
        return np.where(self.lattice.support, u, 0.0)

    def projected_gradient(self, u, g=None) -> np.ndarray:
        g = self.gradient(u) if g is None else g
        pg = np.where(self.free, g, 0.0)
        at_lo = self.free & (u <= self.lower) & (pg > 0)
        at_hi = self.free & (u >= self.upper) & (pg < 0)
        pg[at_lo | at_hi] = 0.0
        return pg

    def kkt(self, u) -> float:
        return float(np.linalg.norm(self.projected_gradient(u)))

    def initial(self, u0=None) -> np.ndarray:
        u = np.zeros(self.grid.shape) if u0 is None else np.asarray(u0, float)
        return self.project(u)


def minimize(problem: ConvexProblem, options: SolverOptions | None = None, u0=None) -> SolveResult:
    options = options or SolverOptions()
    nfree = int(problem.free.sum())
    if nfree == 0:
        u = problem.initial()
        return SolveResult(u, problem.value(u), 0, problem.kkt(u), "trivial")
    method = options.method
    if problem.p == 2 and method in ("auto", "direct", "cg"):
        if method == "auto":
            method = "direct" if nfree <= options.direct_limit else "cg"
        res = _solve_linear(problem, options, method)
        u = res.u
        inside = np.all(u[problem.free] >= problem.lower[problem.free] - options.box_slack) and np.all(
            u[problem.free] <= problem.upper[problem.free] + options.box_slack)
        if inside:
            res.u = problem.project(u)
            res.value = problem.value(res.u)
            res.kkt = problem.kkt(res.u)
            return res
        log.info("linear solution leaves the box; switching to projected gradient")
        return _apg(problem, options, problem.project(u))
    if method in ("direct", "cg"):
        raise InvalidParameter(f"method {method!r} requires p = 2")
    return _apg(problem, options, problem.initial(u0))


def _solve_linear(problem: ConvexProblem, options: SolverOptions, method: str) -> SolveResult:
    lat = problem.lattice
    F = problem.free
    shift = 2.0 * problem.gamma * problem.cell
    base = np.where(problem.fixed, problem.fixed_values, 0.0)
    rhs = (2.0 * problem.cell * problem.f - lat.hessian_apply(base))[F]
    diag = (4.0 * lat.diagonal + shift)[F]
    if method == "direct":
        flat = np.flatnonzero(F.ravel())
        A = -4.0 * lat.dense_block(flat, flat)
        A[np.diag_indices_from(A)] = diag
        x = linalg.solve(A, rhs, assume_a="pos", check_finite=False)
        iters = 1
    else:
        def matvec(v):
            full = np.zeros(problem.grid.shape)
            full[F] = v
            return (lat.hessian_apply(full) + shift * full)[F]

        n = int(F.sum())
        A = LinearOperator((n, n), matvec=matvec, dtype=float)
        M = LinearOperator((n, n), matvec=lambda v: v / diag, dtype=float)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = cg(A, rhs, rtol=options.cg_rtol, atol=0.0, maxiter=options.max_iter, M=M, callback=cb)
        if info != 0:
            r = np.linalg.norm(A.matvec(x) - rhs) / max(np.linalg.norm(rhs), 1e-300)
            if r > 1e-8:
                raise SolverDiverged(f"conjugate gradients stopped with relative residual {r:.2e}")
        iters = count[0]
    u = base.copy()
    u[F] = x
    return SolveResult(u, problem.value(u), iters, problem.kkt(u), method)


def _apg(problem: ConvexProblem, options: SolverOptions, x: np.ndarray) -> SolveResult:
    """Accelerated projected gradient with backtracking and monotone restart."""
    x = problem.project(x)
    Jx = problem.value(x)
    y, t = x.copy(), 1.0
    L = _initial_lipschitz(problem, x)
    history = [Jx]
    kkt = math.inf
    stagnated = False
    for it in range(1, options.max_iter + 1):
        gy = problem.gradient(y)
        Jy = Jx if y is x else problem.value(y)
        while True:
            z = problem.project(y - gy / L)
            dz = z - y
            Jz = problem.value(z)
            bound = Jy + float(np.sum(gy * dz)) + 0.5 * L * float(np.sum(dz * dz))
            if Jz <= bound + 1e-14 * abs(Jy) or L > 1e300:
                break
            L *= 2.0
        if Jz > Jx:
            if y is x:
                # a plain projected step no longer decreases J: round-off level
                stagnated = True
                break
            # monotone restart from the last accepted iterate
            y, t = x, 1.0
            continue
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        y_new = z + ((t - 1) / t_new) * (z - x)
        if float(np.sum((y - z) * (z - x))) > 0:
            y_new, t_new = z, 1.0
        x, Jx = z, Jz
        y, t = y_new, t_new
        L *= 0.9
        history.append(Jx)
        if len(history) > options.window:
            old = history[-options.window - 1]
            stalled = (old - Jx) <= options.rtol_decrease * max(abs(Jx), 1e-300)
            if stalled or it % options.window == 0:
                kkt = problem.kkt(x)
                tol = options.kkt_tol * (1 + abs(Jx))
                if stalled and kkt <= tol:
                    return SolveResult(x, Jx, it, kkt, "apg", {"kkt_tol": tol, "stagnated": False})
    kkt = problem.kkt(x)
    tol = options.kkt_tol * (1 + abs(Jx))
    if stagnated:
        # a step g/L lowers J by |g|^2 / (2L), invisible once it drops below
        # the rounding error of J (a few ulps per partial sum)
        tol = max(tol, math.sqrt(2.0 * L * 16 * _EPS * (1 + abs(Jx))))
    if kkt <= tol:
        return SolveResult(x, Jx, it, kkt, "apg", {"kkt_tol": tol, "stagnated": stagnated})
    raise SolverDiverged(f"projected gradient did not converge: KKT residual {kkt:.3e} "
                         f"after {options.max_iter} iterations")


def _initial_lipschitz(problem, x):
    g0 = problem.gradient(x)
    e = np.where(problem.free, np.random.default_rng(0).standard_normal(x.shape), 0.0)
    e *= 1e-3 / max(np.linalg.norm(e), 1e-300)
    g1 = problem.gradient(problem.project(x + e))
    est = np.linalg.norm(g1 - g0) / 1e-3
    return max(est, 1e-12)
