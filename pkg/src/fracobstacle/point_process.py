"""Stationary marked point processes on boxes, Matérn-I thinning and mark laws.

Marks are obstacle radii (dimensionless).  Every sampler is a pure function
of ``(window, parameters, seed)``; configurations are immutable.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidParameter

MASK64 = (1 << 64) - 1

# SplitMix64 constants (Steele, Lea & Flood 2014).
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x``."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def child_seed(seed: int, k: int) -> int:
    """Seed of replica ``k`` derived from a parent ``seed``.

    ``child = splitmix64(splitmix64(seed) ^ splitmix64(k + 1))``.  The value
    depends only on ``(seed, k)``, so sweeps can be run in any order.
    """
    return splitmix64(splitmix64(seed & MASK64) ^ splitmix64((k + 1) & MASK64))


def child_seeds(seed: int, count: int) -> list[int]:
    return [child_seed(seed, k) for k in range(count)]


# ---------------------------------------------------------------------------
# mark laws

_FAMILIES = ("constant", "uniform", "lognormal", "pareto")


@dataclass(frozen=True)
class MarkDistribution:
    """Law of the radii.

    ``params`` per family: constant ``(rho0,)``, uniform ``(a, b)``,
    lognormal ``(mu, sigma)``, pareto ``(alpha, x_min)``.
    """

    family: str
    params: tuple

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        fam, p = self.family, self.params
        if fam not in _FAMILIES:
            raise InvalidParameter(f"unknown mark family {fam!r}")
        expected = 1 if fam == "constant" else 2
        if len(p) != expected:
            raise InvalidParameter(f"{fam} marks take {expected} parameter(s), got {len(p)}")
        if not all(math.isfinite(v) for v in p):
            raise InvalidParameter("mark parameters must be finite")
        if fam == "constant" and p[0] < 0:
            raise InvalidParameter("constant mark must be >= 0")
        if fam == "uniform" and not 0 <= p[0] < p[1]:
            raise InvalidParameter("uniform marks need 0 <= a < b")
        if fam == "lognormal" and p[1] <= 0:
            raise InvalidParameter("lognormal sigma must be > 0")
        if fam == "pareto" and (p[0] <= 0 or p[1] <= 0):
            raise InvalidParameter("pareto needs alpha > 0 and x_min > 0")

    @classmethod
    def constant(cls, rho0):
        return cls("constant", (rho0,))

    @classmethod
    def uniform(cls, a, b):
        return cls("uniform", (a, b))

    @classmethod
    def lognormal(cls, mu, sigma):
        return cls("lognormal", (mu, sigma))

    @classmethod
    def pareto(cls, alpha, x_min):
        return cls("pareto", (alpha, x_min))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        fam, p = self.family, self.params
        if fam == "constant":
            return np.full(size, p[0])
        if fam == "uniform":
            return rng.uniform(p[0], p[1], size)
        if fam == "lognormal":
            return rng.lognormal(p[0], p[1], size)
        # numpy's pareto is the Lomax law; shift to classical Pareto(alpha, x_min)
        return p[1] * (1.0 + rng.pareto(p[0], size))

    def to_dict(self):
        return {"family": self.family, "params": list(self.params)}


def analytic_mark_moment(marks: MarkDistribution, q: float) -> float:
    """Closed form of ``E[rho^q]``; ``math.inf`` when the moment diverges."""
    if q < 0:
        raise InvalidParameter("moment order q must be >= 0")
    fam, p = marks.family, marks.params
    if fam == "constant":
        return p[0] ** q if q > 0 else 1.0
    if fam == "uniform":
        a, b = p
        return (b ** (q + 1) - a ** (q + 1)) / ((q + 1) * (b - a))
    if fam == "lognormal":
        mu, sigma = p
        return math.exp(q * mu + 0.5 * q * q * sigma * sigma)
    alpha, x_min = p
    if alpha <= q:
        return math.inf
    return alpha * x_min ** q / (alpha - q)


# ---------------------------------------------------------------------------
# windows and configurations

@dataclass(frozen=True)
class Window:
    """Axis-aligned box ``[l_1,u_1) x ... x [l_n,u_n)``."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) < 1 or len(lo) != len(hi):
            raise InvalidParameter("window bounds must have equal length >= 1")
        if not all(l < u for l, u in zip(lo, hi)):
            raise InvalidParameter("degenerate window: need lower < upper on every axis")

    @classmethod
    def cube(cls, n, a=0.0, b=1.0):
        return cls((a,) * n, (b,) * n)

    @property
    def n(self):
        return len(self.lower)

    @property
    def lengths(self):
        return np.subtract(self.upper, self.lower)

    @property
    def volume(self):
        return float(np.prod(self.lengths))

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.all((x >= self.lower) & (x < self.upper), axis=1)

    def covers(self, other: "Window") -> bool:
        return all(a <= b for a, b in zip(self.lower, other.lower)) and all(
            a >= b for a, b in zip(self.upper, other.upper))

    def enlarged(self, margin: float) -> "Window":
        return Window(tuple(l - margin for l in self.lower), tuple(u + margin for u in self.upper))

    def scaled(self, factor: float) -> "Window":
        return Window(tuple(l * factor for l in self.lower), tuple(u * factor for u in self.upper))

    def translated(self, shift) -> "Window":
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (self.n,))
        return Window(tuple(np.add(self.lower, shift)), tuple(np.add(self.upper, shift)))

    def boundary_distance(self, x) -> np.ndarray:
        """Distance of points inside the box to its boundary."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.minimum(x - self.lower, np.subtract(self.upper, x)).min(axis=1)


def _frozen(a, dtype=float, ndim=1):
    a = np.array(a, dtype=dtype, copy=True, ndmin=ndim)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MarkedConfiguration:
    """Finite realization ``sum_i delta_(x_i, rho_i)`` inside ``window``."""

    window: Window
    positions: np.ndarray
    marks: np.ndarray
    seed: int = 0
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.window.n
        pos = np.asarray(self.positions, dtype=float).reshape(-1, n)
        rho = np.asarray(self.marks, dtype=float).reshape(-1)
        if len(pos) != len(rho):
            raise InvalidParameter("positions and marks differ in length")
        if np.any(rho < 0) or not np.all(np.isfinite(rho)):
            raise InvalidParameter("marks must be finite and nonnegative")
        if len(pos) and not np.all(self.window.contains(pos)):
            raise InvalidParameter("configuration has points outside its window")
        if len(pos) > 1 and len(np.unique(pos, axis=0)) != len(pos):
            raise InvalidParameter("configuration has duplicate positions")
        object.__setattr__(self, "positions", _frozen(pos, ndim=2))
        object.__setattr__(self, "marks", _frozen(rho))
        object.__setattr__(self, "seed", int(self.seed))

    def __len__(self):
        return len(self.marks)

    @property
    def n(self):
        return self.window.n

    def subset(self, keep) -> "MarkedConfiguration":
        keep = np.asarray(keep)
        return MarkedConfiguration(self.window, self.positions[keep], self.marks[keep],
                                   self.seed, dict(self.descriptor))

    def restrict(self, window: Window) -> "MarkedConfiguration":
        """Points lying in ``window`` (which must sit inside this window)."""
        if not self.window.covers(window):
            raise InvalidParameter("restriction window must lie inside the configuration window")
        keep = window.contains(self.positions) if len(self) else np.zeros(0, bool)
        return MarkedConfiguration(window, self.positions[keep], self.marks[keep],
                                   self.seed, dict(self.descriptor))

    def same_realization(self, other: "MarkedConfiguration") -> bool:
        return (self.window == other.window and self.seed == other.seed
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.marks, other.marks))

    def nearest_neighbor_distance(self) -> np.ndarray:
        """Distance from each point to its nearest other point (inf if alone)."""
        if len(self) < 2:
            return np.full(len(self), np.inf)
        d, _ = cKDTree(self.positions).query(self.positions, k=2)
        return d[:, 1]


# ---------------------------------------------------------------------------
# samplers

def sample_poisson(window: Window, intensity: float, marks: MarkDistribution,
                   seed: int) -> MarkedConfiguration:
    """Homogeneous Poisson ground process with i.i.d. marks."""
    if not intensity >= 0 or not math.isfinite(intensity):
        raise InvalidParameter("intensity must be finite and >= 0")
    rng = np.random.default_rng(seed & MASK64)
    count = rng.poisson(intensity * window.volume)
    pos = rng.uniform(window.lower, window.upper, size=(count, window.n))
    rho = marks.sample(rng, count)
    desc = {"process": "poisson", "intensity": float(intensity), "marks": marks.to_dict()}
    return MarkedConfiguration(window, pos, rho, seed, desc)


def sample_shifted_lattice(window: Window, marks: MarkDistribution,
                           seed: int) -> MarkedConfiguration:
    """``(Z^n + zeta)`` restricted to the window, ``zeta`` uniform on ``[0,1)^n``."""
    rng = np.random.default_rng(seed & MASK64)
    zeta = rng.uniform(0.0, 1.0, size=window.n)
    axes = []
    for l, u, z in zip(window.lower, window.upper, zeta):
        k = np.arange(math.floor(l - z), math.ceil(u - z) + 1)
        x = k + z
        axes.append(x[(x >= l) & (x < u)])
    grids = np.meshgrid(*axes, indexing="ij")
    pos = np.stack([g.ravel() for g in grids], axis=1) if axes else np.zeros((0, window.n))
    rho = marks.sample(rng, len(pos))
    desc = {"process": "lattice", "intensity": 1.0, "marks": marks.to_dict(),
            "shift": zeta.tolist()}
    return MarkedConfiguration(window, pos, rho, seed, desc)


def matern_thin(config: MarkedConfiguration, delta: float) -> MarkedConfiguration:
    """Keep the points whose nearest neighbour is at distance >= ``delta``."""
    if not delta > 0:
        raise InvalidParameter("thinning distance delta must be > 0")
    keep = config.nearest_neighbor_distance() >= delta
    out = config.subset(keep)
    out.descriptor["thinned_delta"] = float(delta)
    return out


@dataclass(frozen=True)
class ProcessSpec:
    """A process family plus parameters; ``kind`` is ``poisson`` or ``lattice``."""

    kind: str
    marks: MarkDistribution
    intensity: float = 1.0

    def __post_init__(self):
        if self.kind not in ("poisson", "lattice"):
            raise InvalidParameter(f"unknown process kind {self.kind!r}")
        if self.kind == "lattice":
            object.__setattr__(self, "intensity", 1.0)
        if not self.intensity >= 0:
            raise InvalidParameter("intensity must be >= 0")

    def sample(self, window: Window, seed: int) -> MarkedConfiguration:
        if self.kind == "poisson":
            return sample_poisson(window, self.intensity, self.marks, seed)
        return sample_shifted_lattice(window, self.marks, seed)

    @property
    def wald_applicable(self) -> bool:
        # marks are i.i.d. and independent of positions for both families
        return True

    def to_dict(self):
        return {"kind": self.kind, "intensity": self.intensity, "marks": self.marks.to_dict()}


# ---------------------------------------------------------------------------
# plain-text tables

def format_table(config: MarkedConfiguration, extra: dict | None = None) -> str:
    """Header ``n <dim> seed <seed>``, then ``x_1 ... x_n rho [extra...]`` rows.

    ``extra`` maps column names to per-point arrays; they are announced in a
    ``# columns`` comment so the table stays self-describing.
    """
    extra = extra or {}
    out = io.StringIO()
    out.write(f"n {config.n} seed {config.seed}\n")
    out.write("# window " + " ".join(f"{v:.17g}" for v in config.window.lower + config.window.upper) + "\n")
    names = [f"x_{k + 1}" for k in range(config.n)] + ["rho"] + list(extra)
    out.write("# columns " + " ".join(names) + "\n")
    cols = [config.positions[:, k] for k in range(config.n)] + [config.marks]
    cols += [np.asarray(v) for v in extra.values()]
    for row in zip(*cols):
        out.write(" ".join(_fmt(v) for v in row) + "\n")
    return out.getvalue()


def _fmt(v):
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def parse_table(text: str) -> tuple[MarkedConfiguration, dict]:
    """Inverse of :func:`format_table`; returns the configuration and extra columns."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if len(head) != 4 or head[0] != "n" or head[2] != "seed":
        raise InvalidParameter("table header must read 'n <dim> seed <seed>'")
    n, seed = int(head[1]), int(head[3])
    window, names = None, None
    rows = []
    for ln in lines[1:]:
        if ln.startswith("# window"):
            b = [float(v) for v in ln.split()[2:]]
            window = Window(tuple(b[:n]), tuple(b[n:]))
        elif ln.startswith("# columns"):
            names = ln.split()[2:]
        elif not ln.startswith("#"):
            rows.append(ln.split())
    names = names or [f"x_{k + 1}" for k in range(n)] + ["rho"]
    pos = np.array([[float(v) for v in r[:n]] for r in rows]).reshape(-1, n)
    rho = np.array([float(r[n]) for r in rows])
    if window is None:
        lo = pos.min(axis=0) if len(pos) else np.zeros(n)
        hi = pos.max(axis=0) + 1.0 if len(pos) else np.ones(n)
        window = Window(tuple(lo), tuple(hi))
    extra = {}
    for k, name in enumerate(names[n + 1:], start=n + 1):
        vals = [r[k] for r in rows]
        try:
            extra[name] = np.array([float(v) for v in vals])
        except ValueError:
            extra[name] = np.array(vals, dtype=object)
    return MarkedConfiguration(window, pos, rho, seed), extra


def write_table(config: MarkedConfiguration, path, extra=None):
    with open(path, "w") as fh:
        fh.write(format_table(config, extra))


def read_table(path):
    with open(path) as fh:
        return parse_table(fh.read())
