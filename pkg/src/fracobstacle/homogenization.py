"""Pinned eps-problems, the effective problem and the convergence study."""
from __future__ import annotations

import functools
import json
import logging
import math
import statistics
from dataclasses import asdict, dataclass, field

import numpy as np

from .capacity import condenser_capacity, global_capacity, set_capacity
from .energy import GridDomain, KernelSpec, LatticeEnergy, ScalingParams
from .ergodic import gamma_estimate
from .errors import InvalidParameter, TemplateOutOfBounds, UnderResolvedObstacles
from .obstacles import (TemplateCache, build_obstacles, build_shaped_obstacles,
                        cardinality_report, check_safety_layer, classify_indices, lq_norm)
from .point_process import ProcessSpec, Window, child_seed
from .shapes import Ball
from .solvers import ConvexProblem, SolverOptions, minimize

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("eps", "median_lp_dist", "median_energy_gap", "gamma_hat", "runs")


@dataclass
class FieldSolution:
    u: np.ndarray = field(repr=False)
    objective: float
    iterations: int
    kkt: float
    method: str
    under_resolved: bool = False


def _field(f, grid):
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        return np.full(grid.shape, float(f))
    if f.shape != grid.shape:
        raise InvalidParameter("source field does not match the grid")
    if not np.all(np.isfinite(f)):
        raise InvalidParameter("source field must be finite")
    return f


def _solve(grid, kernel, f, pinned=None, gamma=0.0, options=None, u0=None):
    lat = LatticeEnergy(grid, kernel, grid.inside)
    prob = ConvexProblem(lat, fixed=pinned, fixed_values=0.0, gamma=gamma, f=_field(f, grid))
    res = minimize(prob, options, u0=u0)
    return FieldSolution(res.u, res.value, res.iterations, res.kkt, res.method)


def pinning_mask(obstacles, grid: GridDomain) -> tuple[np.ndarray, bool]:
    """Obstacle nodes and a flag for ``h > r_min / 2``; raises when ``h > r_min``."""
    if len(obstacles) == 0:
        return np.zeros(grid.shape, bool), False
    r_min = obstacles.min_radius
    if grid.h > r_min:
        raise UnderResolvedObstacles(f"grid spacing {grid.h:g} exceeds the smallest obstacle radius {r_min:g}")
    return obstacles.obstacle_mask(grid), grid.h > r_min / 2


def solve_eps_problem(obstacles, f, grid: GridDomain, kernel: KernelSpec,
                      options: SolverOptions | None = None, u0=None) -> FieldSolution:
    """Minimise energy - p h^n sum f u with u = 0 on obstacle and exterior nodes."""
    pinned, flag = pinning_mask(obstacles, grid)
    sol = _solve(grid, kernel, f, pinned, 0.0, options, u0)
    sol.under_resolved = flag
    return sol


def solve_effective_problem(gamma: float, f, grid: GridDomain, kernel: KernelSpec,
                            options: SolverOptions | None = None, u0=None) -> FieldSolution:
    """Minimise energy + gamma h^n sum |u|^p - p h^n sum f u with u = 0 outside U."""
    if gamma < 0:
        raise InvalidParameter("gamma must be >= 0")
    return _solve(grid, kernel, f, None, gamma, options, u0)


def lp_distance(u, v, grid: GridDomain, p: float) -> float:
    d = np.abs(np.asarray(u) - np.asarray(v))[grid.inside]
    return float((grid.cell_volume * np.sum(d ** p)) ** (1.0 / p))


def grid_for_window(U: Window, h: float) -> GridDomain:
    return GridDomain.box(U.lower, U.upper, h)


# ---------------------------------------------------------------------------
# vanishing capacity of the not very good obstacles

@dataclass
class NVGCheck:
    bound: float
    direct: float | None = None
    subadditive: float | None = None
    nodes: int = 0


def nvg_capacity_check(obstacles, cls, kernel: KernelSpec, h: float,
                       cap_b1_b2: float | None = None, budget: int = 5000,
                       options: SolverOptions | None = None) -> NVGCheck:
    """Bound ``C(B_1, B_2) eps^n sum_{NVG} rho^(n-sp)`` on the condenser
    capacity of the not very good balls inside their doubles.

    When the doubled balls are resolved by spacing ``h`` within ``budget``
    nodes, the condenser capacity is also solved directly on that grid, along
    with the discrete sum of single-ball capacities, which bounds it exactly.
    """
    n = kernel.n
    expo = kernel.n - kernel.sp
    where = {int(k): a for a, k in enumerate(obstacles.indices)}
    rows = [where[int(k)] for k in cls.NVG]
    if not rows:
        return NVGCheck(0.0, 0.0, 0.0, 0)
    if cap_b1_b2 is None:
        cap_b1_b2 = unit_condenser_capacity(kernel, h=1.0 / 64, options=options)
    marks = obstacles.marks[rows]
    bound = cap_b1_b2 * obstacles.eps ** n * float(np.sum(marks ** expo))
    centers, radii = obstacles.centers[rows], obstacles.radii[rows]
    out = NVGCheck(bound)
    if radii.min() < 2 * h:
        return out
    lo = np.floor((centers - 2 * radii[:, None]).min(axis=0) / h) - 1
    hi = np.ceil((centers + 2 * radii[:, None]).max(axis=0) / h) + 1
    shape = (hi - lo).astype(int)
    if np.prod(shape) > 50 * budget:
        return out
    grid = GridDomain(lo * h, h, tuple(shape))
    target = np.zeros(grid.shape, bool)
    support = np.zeros(grid.shape, bool)
    for c, r in zip(centers, radii):
        target |= grid.ball_mask(c, r)
        support |= grid.ball_mask(c, 2 * r, closed=True)
    out.nodes = int(support.sum())
    if out.nodes > budget:
        return out
    out.direct = set_capacity(grid, kernel, target, support, None, options).value
    total = 0.0
    for c, r in zip(centers, radii):
        total += set_capacity(grid, kernel, grid.ball_mask(c, r), grid.ball_mask(c, 2 * r, closed=True),
                              None, options).value
    out.subadditive = total
    return out


def unit_condenser_capacity(kernel: KernelSpec, h: float, options=None) -> float:
    return condenser_capacity(Ball((0.0,) * kernel.n, 1.0), 2.0, kernel, h=h, options=options).value


# ---------------------------------------------------------------------------
# convergence study

@dataclass
class StudyRecord:
    eps: float
    seed: int
    energy: float
    lp_dist: float
    energy_gap: float
    gamma_hat: float
    obstacles: int
    under_resolved: bool
    excluded: bool
    cardinality: dict
    lq_norm: float
    lq_inf: float
    safety_layer: bool
    method: str = ""
    kkt: float = math.nan

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, allow_nan=True)


@dataclass
class ConvergenceStudy:
    eps: list
    seeds: list
    gamma_hat: float
    gamma_stderr: float
    effective: FieldSolution
    records: list
    template: object = None

    def summary(self):
        rows = []
        for e in self.eps:
            good = [r for r in self.records if r.eps == e and not r.excluded]
            rows.append({
                "eps": e,
                "median_lp_dist": statistics.median(r.lp_dist for r in good) if good else math.nan,
                "median_energy_gap": statistics.median(r.energy_gap for r in good) if good else math.nan,
                "gamma_hat": self.gamma_hat,
                "runs": len(good),
            })
        return rows

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(r.to_json() + "\n")


def _ladder_window(U: Window, eps_ladder, margin: float) -> Window:
    lo = np.minimum.reduce([np.asarray(U.lower) / e for e in eps_ladder])
    hi = np.maximum.reduce([np.asarray(U.upper) / e for e in eps_ladder])
    return Window(tuple(lo), tuple(hi)).enlarged(margin)


def convergence_study(process: ProcessSpec, params: ScalingParams, U: Window, f, eps_ladder,
                      replicas: int, seed: int, R: float = 8, h: float = 2.0 ** -12,
                      kernel: KernelSpec | None = None, capacity_solver=None, template=None,
                      gamma_replicas: int = 4000, options: SolverOptions | None = None,
                      cache: TemplateCache | None = None, mapper=map) -> ConvergenceStudy:
    """Solve ``u_eps`` per (eps, seed) and compare with the effective ``u_0``.

    One realization per seed, sampled on a window covering ``U/eps`` for every
    eps on the ladder, is shared across the ladder.  ``template`` (a shape in
    the unit ball) replaces the balls; ``capacity_solver`` maps a canonical
    template to its global capacity.
    """
    eps_ladder = [float(e) for e in eps_ladder]
    if any(b >= a for a, b in zip(eps_ladder, eps_ladder[1:])):
        raise InvalidParameter("eps ladder must be decreasing")
    kernel = kernel or KernelSpec(params)
    if capacity_solver is None:
        capacity_solver = default_capacity_solver(kernel)
    cache = cache or TemplateCache(capacity_solver, params.cap_exponent)
    shape = template if template is not None else Ball((0.0,) * params.n, 1.0)
    if shape.reach() > 1 + 1e-12:
        raise TemplateOutOfBounds("template must fit in the unit ball")
    tpl_cap = cache.capacity(shape)
    gam = gamma_estimate(process, params, tpl_cap, gamma_replicas, child_seed(seed, 2 ** 32))
    grid = grid_for_window(U, h)
    eff = solve_effective_problem(gam.value, f, grid, kernel, options)

    seeds = [child_seed(seed, k) for k in range(replicas)]
    window = _ladder_window(U, eps_ladder, 2.0 / R)
    jobs = [(process, params, U, f, eps_ladder, s, R, grid, kernel, template, cache, options, eff, gam.value, window)
            for s in seeds]
    records = [r for batch in mapper(_run_seed, jobs) for r in batch]
    records.sort(key=lambda r: (-r.eps, seeds.index(r.seed)))
    return ConvergenceStudy(eps_ladder, seeds, gam.value, gam.stderr, eff, records, template)


def _run_seed(job):
    (process, params, U, f, eps_ladder, s, R, grid, kernel, template, cache, options, eff,
     gamma_hat, window) = job
    cfg = process.sample(window, s)
    out = []
    q = 2 * params.cap_exponent
    for e in eps_ladder:
        obs = build_obstacles(cfg, params, e, U)
        cls = classify_indices(obs, cfg, R)
        pins = obs
        if template is not None:
            pins = build_shaped_obstacles(obs, template, None, cache)
        card = cardinality_report(cls, e)
        base = dict(eps=e, seed=s, gamma_hat=gamma_hat, obstacles=len(obs), cardinality=card,
                    lq_norm=lq_norm(obs, q), lq_inf=lq_norm(obs, math.inf),
                    safety_layer=check_safety_layer(cls, obs))
        try:
            sol = solve_eps_problem(pins, f, grid, kernel, options)
        except UnderResolvedObstacles as err:
            log.warning("eps=%g seed=%d excluded: %s", e, s, err)
            out.append(StudyRecord(energy=math.nan, lp_dist=math.nan, energy_gap=math.nan,
                                   under_resolved=True, excluded=True, **base))
            continue
        out.append(StudyRecord(energy=sol.objective, lp_dist=lp_distance(sol.u, eff.u, grid, kernel.p),
                               energy_gap=sol.objective - eff.objective, under_resolved=sol.under_resolved,
                               excluded=False, method=sol.method, kkt=sol.kkt, **base))
    return out


def _template_capacity(kernel, h, shape):
    return global_capacity(shape, kernel, h).value


def default_capacity_solver(kernel: KernelSpec, h: float = 1.0 / 64):
    """Global capacity of a canonical template on spacing ``h`` (picklable,
    so worker processes can carry it)."""
    return functools.partial(_template_capacity, kernel, h)
