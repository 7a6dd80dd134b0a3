"""Scaled random obstacles in U and the good / very good index partition."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .energy import ScalingParams
from .errors import InvalidParameter, MismatchedRealization, TemplateOutOfBounds, WindowTooSmall
from .point_process import MarkedConfiguration, Window, format_table
from .shapes import Ball


def lambda_eps(params: ScalingParams, eps: float) -> float:
    """Critical radius scale ``eps^(n/(n-sp))``."""
    if not 0 < params.sp < params.n:
        raise InvalidParameter("need 0 < sp < n")
    if not eps > 0:
        raise InvalidParameter("eps must be > 0")
    return eps ** (params.n / (params.n - params.sp))


def _fingerprint(config: MarkedConfiguration) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(config.positions).tobytes())
    h.update(np.ascontiguousarray(config.marks).tobytes())
    h.update(str(config.seed).encode())
    return h.hexdigest()


@dataclass(frozen=True, eq=False)
class ObstacleSet:
    eps: float
    lam: float
    U: Window
    params: ScalingParams
    indices: np.ndarray  # into the source configuration
    centers: np.ndarray  # eps * x_i
    radii: np.ndarray    # lam * rho_i
    marks: np.ndarray
    source: str = ""

    def __len__(self):
        return len(self.indices)

    @property
    def n(self):
        return self.U.n

    @property
    def min_radius(self):
        return float(self.radii.min()) if len(self) else math.inf

    def balls(self):
        return [Ball(c, r) for c, r in zip(self.centers, self.radii)]

    def obstacle_mask(self, grid) -> np.ndarray:
        """Nodes of ``grid`` inside U whose closed cell meets an obstacle."""
        mask = np.zeros(grid.shape, bool)
        for c, r in zip(self.centers, self.radii):
            if r > 0:
                grid._mark_cells_meeting_ball(mask, c, r)
        return mask & grid.inside


def build_obstacles(config: MarkedConfiguration, params: ScalingParams, eps: float,
                    U: Window) -> ObstacleSet:
    """Balls ``B_(lam rho_i)(eps x_i)`` for the points with ``x_i`` in ``U / eps``."""
    if config.n != U.n or params.n != U.n:
        raise InvalidParameter("dimensions of configuration, parameters and U differ")
    lam = lambda_eps(params, eps)
    target = U.scaled(1.0 / eps)
    if not config.window.covers(target):
        raise WindowTooSmall(f"configuration window does not cover U/eps for eps={eps:g}")
    idx = np.flatnonzero(target.contains(config.positions)) if len(config) else np.zeros(0, int)
    return ObstacleSet(eps, lam, U, params, idx, eps * config.positions[idx],
                       lam * config.marks[idx], config.marks[idx].copy(), _fingerprint(config))


@dataclass
class IndexClassification:
    R: float
    delta: float
    I: np.ndarray
    I_2R: np.ndarray
    G: np.ndarray
    VG: np.ndarray
    NVG: np.ndarray
    eps: float = math.nan
    n: int = 1


def classify_indices(obstacles: ObstacleSet, config: MarkedConfiguration, R: float,
                     delta: float | None = None) -> IndexClassification:
    """Partition the indices of ``obstacles`` into the nested sets
    ``VG <= G <= I_2R <= I`` and ``NVG = I \\ VG``.

    ``delta`` is the thinning distance defining ``I_2R`` (default ``2/R``).
    """
    if not R >= 1:
        raise InvalidParameter("R must be >= 1")
    if obstacles.source != _fingerprint(config):
        raise MismatchedRealization("obstacles were built from a different realization")
    delta = 2.0 / R if delta is None else float(delta)
    if not delta > 0:
        raise InvalidParameter("delta must be > 0")
    eps = obstacles.eps
    I = obstacles.indices
    nn = config.nearest_neighbor_distance()[I] if len(I) else np.zeros(0)
    in_2R = nn >= delta
    dist_bd = obstacles.U.boundary_distance(obstacles.centers) if len(I) else np.zeros(0)
    good = in_2R & (obstacles.marks <= R) & (dist_bd > eps / R)
    very_good = good.copy()
    if len(I) > 1 and good.any():
        # B_(eps/R)(c_i) meets B_(2 lam rho_j)(c_j) iff |c_i - c_j| < eps/R + 2 lam rho_j
        tree = cKDTree(obstacles.centers)
        reach = eps / R + 2 * float(obstacles.radii.max())
        for a in np.flatnonzero(good):
            for b in tree.query_ball_point(obstacles.centers[a], reach):
                if b == a:
                    continue
                d = np.linalg.norm(obstacles.centers[a] - obstacles.centers[b])
                if d < eps / R + 2 * obstacles.radii[b]:
                    very_good[a] = False
                    break
    return IndexClassification(R, delta, I.copy(), I[in_2R], I[good], I[very_good],
                               I[~very_good], eps, obstacles.n)


def _positions_of(obstacles: ObstacleSet, ids):
    where = {int(k): a for a, k in enumerate(obstacles.indices)}
    rows = [where[int(k)] for k in ids]
    return obstacles.centers[rows], obstacles.radii[rows]


def check_safety_layer(cls: IndexClassification, obstacles: ObstacleSet) -> bool:
    """True iff the enlarged very good balls miss the doubled not very good balls."""
    if len(cls.VG) == 0 or len(cls.NVG) == 0:
        return True
    cv, _ = _positions_of(obstacles, cls.VG)
    cn, rn = _positions_of(obstacles, cls.NVG)
    small = obstacles.eps / cls.R
    tree = cKDTree(cn)
    for c in cv:
        for b in tree.query_ball_point(c, small + 2 * float(rn.max())):
            if np.linalg.norm(c - cn[b]) < small + 2 * rn[b]:
                return False
    return True


def cardinality_report(cls: IndexClassification, eps: float) -> dict:
    """``eps^n`` times the sizes of ``I \\ I_2R``, ``I_2R \\ G``, ``G \\ VG`` and ``NVG``."""
    w = eps ** cls.n
    return {
        "I_minus_I2R": w * (len(cls.I) - len(cls.I_2R)),
        "I2R_minus_G": w * (len(cls.I_2R) - len(cls.G)),
        "G_minus_VG": w * (len(cls.G) - len(cls.VG)),
        "NVG": w * len(cls.NVG),
    }


def lq_norm(obstacles: ObstacleSet, q: float) -> float:
    """``(sum_i (lam rho_i)^q)^(1/q)``, or the largest radius for ``q = inf``."""
    if not (q == math.inf or q > obstacles.params.cap_exponent):
        raise InvalidParameter(f"q must exceed n - sp = {obstacles.params.cap_exponent:g}")
    r = obstacles.radii
    if len(r) == 0:
        return 0.0
    if q == math.inf:
        return float(r.max())
    m = float(r.max())
    if m == 0:
        return 0.0
    return m * float(np.sum((r / m) ** q)) ** (1.0 / q)


# ---------------------------------------------------------------------------
# shaped obstacles

@dataclass
class ShapedObstacleSet:
    base: ObstacleSet
    shapes: list
    template_ids: np.ndarray
    gammas: np.ndarray
    templates: dict = field(default_factory=dict)  # id -> (template, capacity)

    def __len__(self):
        return len(self.shapes)

    @property
    def eps(self):
        return self.base.eps

    @property
    def min_radius(self):
        """Smallest feature: ball radius, or smallest box half width."""
        if not self.shapes:
            return math.inf
        return min(_feature_size(s) for s in self.shapes)

    def obstacle_mask(self, grid) -> np.ndarray:
        mask = np.zeros(grid.shape, bool)
        for s in self.shapes:
            s.mark(grid, mask)
        return mask & grid.inside


def _feature_size(shape):
    if shape.kind == "ball":
        return shape.radius
    if shape.kind == "box":
        return min(shape.half_widths)
    return min(b.radius for b in shape.balls)


class TemplateCache:
    """Template capacities keyed by the normalised shape, solved once each."""

    def __init__(self, capacity_solver, cap_exponent):
        self.solver = capacity_solver
        self.exponent = cap_exponent
        self.values = {}

    def capacity(self, template) -> float:
        canon, scale = template.normalized()
        key = canon.key()
        if key not in self.values:
            self.values[key] = float(self.solver(canon))
        return scale ** self.exponent * self.values[key]


def build_shaped_obstacles(obstacles: ObstacleSet, template_assignment, capacity_solver,
                           cache: TemplateCache | None = None) -> ShapedObstacleSet:
    """Replace each ball by its template scaled by ``lam rho_i`` and centred at
    ``eps x_i``; ``gamma_i = rho_i^(n-sp) cap_K(template)``.

    ``template_assignment`` is a shape (used for every obstacle) or a callable
    ``(k, rho) -> shape``; templates are given in unit coordinates and must
    fit in the closed unit ball.
    """
    expo = obstacles.params.cap_exponent
    cache = cache or TemplateCache(capacity_solver, expo)
    assign = template_assignment if callable(template_assignment) else (lambda k, rho: template_assignment)
    shapes, ids, gammas = [], [], []
    templates, id_of = {}, {}
    for k, (c, rho) in enumerate(zip(obstacles.centers, obstacles.marks)):
        tpl = assign(k, rho)
        if tpl.n != obstacles.n:
            raise InvalidParameter("template dimension differs from U")
        if tpl.reach() > 1 + 1e-12:
            raise TemplateOutOfBounds(f"template reaches {tpl.reach():g} > 1")
        key = tpl.key()
        if key not in id_of:
            id_of[key] = len(id_of)
            templates[id_of[key]] = (tpl, cache.capacity(tpl))
        cap = templates[id_of[key]][1]
        shapes.append(tpl.scaled(obstacles.lam * rho).translated(c))
        ids.append(id_of[key])
        gammas.append(rho ** expo * cap)
    return ShapedObstacleSet(obstacles, shapes, np.array(ids, int), np.array(gammas, float), templates)


def obstacle_table(obstacles, config: MarkedConfiguration) -> str:
    """Configuration table of the obstacle points with ``radius`` (and, for
    shaped sets, ``template_id gamma_i``) columns."""
    base = obstacles.base if isinstance(obstacles, ShapedObstacleSet) else obstacles
    sub = config.subset(base.indices)
    extra = {"radius": base.radii}
    if isinstance(obstacles, ShapedObstacleSet):
        extra["template_id"] = obstacles.template_ids
        extra["gamma_i"] = obstacles.gammas
    return format_table(sub, extra)
