"""Kernels, uniform grids and the collocated nonlocal p-energy.

Nodes are cell centres of a uniform lattice ``lower + (k + 1/2) h``.  A pair
of distinct nodes ``(i, j)`` carries the weight ``h^(2n) K(x_i - x_j)``; the
diagonal is skipped.  By homogeneity of the kernel that weight only depends
on the integer offset ``d = k_i - k_j`` and equals ``h^(n-sp) K(d)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import signal, special

from .errors import (EmptyNodeSet, InvalidParameter, NodeOutsideBall,
                     OverlappingSets, ZeroArgument)


@dataclass(frozen=True)
class ScalingParams:
    n: int
    s: float
    p: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParameter("dimension n must be an integer >= 1")
        if not 0 < self.s < 1:
            raise InvalidParameter("s must lie in (0, 1)")
        if not 1 < self.p < math.inf:
            raise InvalidParameter("p must lie in (1, inf)")
        if not 0 < self.sp < self.n:
            raise InvalidParameter(f"need 0 < sp < n, got sp={self.sp:g}, n={self.n}")

    @property
    def sp(self):
        return self.s * self.p

    @property
    def cap_exponent(self):
        """``n - sp``, the homogeneity degree of the capacity."""
        return self.n - self.sp


# ---------------------------------------------------------------------------
# kernels

_SECTORS_2D = 16


class KernelSpec:
    """Even, ``-(n+sp)``-homogeneous kernel ``K(z) = A(z/|z|) |z|^-(n+sp)``.

    ``profile=None`` gives the standard kernel (``A = 1``).  Otherwise the
    angular profile is piecewise constant: one value in 1D (evenness forces
    the two directions to agree) and 16 sectors of width pi/8 in 2D, of which
    only the 8 covering ``[0, pi)`` are free.  Every value must lie in
    ``[1/c, c]``.
    """

    def __init__(self, params: ScalingParams, profile=None, c: float = 1.0):
        self.params = params
        self.c = float(c)
        if self.c < 1:
            raise InvalidParameter("comparability constant c must be >= 1")
        if profile is None:
            self.profile = None
        else:
            prof = np.asarray(profile, dtype=float).ravel()
            if params.n == 1:
                if prof.size not in (1, 2) or (prof.size == 2 and prof[0] != prof[1]):
                    raise InvalidParameter("1D profile must be one value (even kernel)")
                prof = prof[:1]
            elif params.n == 2:
                if prof.size == _SECTORS_2D:
                    if not np.array_equal(prof[:8], prof[8:]):
                        raise InvalidParameter("2D profile must be even: A[k] == A[k+8]")
                    prof = prof[:8]
                elif prof.size != 8:
                    raise InvalidParameter("2D profile needs 8 (half-plane) or 16 sector values")
            else:
                raise InvalidParameter("anisotropic profiles are implemented for n <= 2")
            if np.any(prof < 1 / self.c - 1e-15) or np.any(prof > self.c + 1e-15):
                raise InvalidParameter(f"profile values must lie in [1/c, c] with c={self.c:g}")
            self.profile = prof
            self.profile.setflags(write=False)

    @property
    def n(self):
        return self.params.n

    @property
    def sp(self):
        return self.params.sp

    @property
    def p(self):
        return self.params.p

    @property
    def is_standard(self):
        return self.profile is None

    def __repr__(self):
        kind = "standard" if self.is_standard else f"anisotropic{tuple(self.profile)}"
        return f"KernelSpec(n={self.n}, s={self.params.s}, p={self.p}, {kind}, c={self.c})"

    def angular(self, z) -> np.ndarray:
        """Profile value ``A`` at directions ``z`` (last axis = coordinates)."""
        z = np.asarray(z, dtype=float)
        if self.profile is None:
            return np.ones(z.shape[:-1])
        if self.n == 1:
            return np.full(z.shape[:-1], self.profile[0])
        x, y = z[..., 0], z[..., 1]
        flip = (y < 0) | ((y == 0) & (x < 0))
        x = np.where(flip, -x, x)
        y = np.where(flip, -y, y)
        theta = np.arctan2(y, x)
        k = np.clip(np.floor(theta / (np.pi / 8)).astype(int), 0, 7)
        return self.profile[k]

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        r = np.sqrt(np.sum(z * z, axis=-1))
        with np.errstate(divide="ignore"):
            return self.angular(z) * r ** (-(self.n + self.sp))

    def angular_integral(self) -> float:
        """``int_{S^(n-1)} A``."""
        if self.n == 1:
            return 2.0 * (1.0 if self.profile is None else self.profile[0])
        if self.n == 2:
            return 2 * np.pi if self.profile is None else 2 * float(np.sum(self.profile)) * np.pi / 8
        return 2 * np.pi ** (self.n / 2) / special.gamma(self.n / 2)

    @cached_property
    def lattice_sum(self) -> float:
        """``sum over d in Z^n \\ {0} of K(d)``."""
        sig = self.n + self.sp
        if self.n == 1:
            a = 1.0 if self.profile is None else self.profile[0]
            return 2 * a * float(special.zeta(sig, 1))
        if self.n == 2 and self.profile is None:
            return standard_square_lattice_sum(sig / 2)
        return self.lattice_sum_numeric()

    def lattice_sum_numeric(self, M: int = 200) -> float:
        """Direct sum over ``|d|_inf <= M`` plus the integral of ``K`` outside the
        cube of half-width ``M + 1/2`` (each lattice point owns a unit cell)."""
        ax = np.arange(-M, M + 1, dtype=float)
        grids = np.meshgrid(*([ax] * self.n), indexing="ij")
        d = np.stack([g.ravel() for g in grids], axis=1)
        d = d[np.any(d != 0, axis=1)]
        direct = math.fsum(self(d))
        return direct + self._outside_cube_integral(M + 0.5)

    def _outside_cube_integral(self, L: float) -> float:
        if self.n == 1:
            return self.angular_integral() * L ** (-self.sp) / self.sp
        if self.n != 2:
            raise InvalidParameter("numeric lattice sums are implemented for n <= 2")
        # int_0^{2pi} A(theta) r_c(theta)^(-sp) / sp, r_c = L / max(|cos|, |sin|)
        m = 4096
        theta = (np.arange(_SECTORS_2D * m) + 0.5) * (2 * np.pi / (_SECTORS_2D * m))
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        rc = L / np.maximum(np.abs(dirs[:, 0]), np.abs(dirs[:, 1]))
        vals = self.angular(dirs) * rc ** (-self.sp) / self.sp
        return float(np.sum(vals) * (2 * np.pi / theta.size))

    def offset_weights(self, shape, h: float) -> np.ndarray:
        """Pair weights ``h^(n-sp) K(d)`` on offsets ``|d_k| < shape_k``.

        Array of shape ``(2 N_k - 1)``; the centre (zero offset) holds 0.
        """
        axes = [np.arange(-(N - 1), N, dtype=float) for N in shape]
        grids = np.meshgrid(*axes, indexing="ij")
        d = np.stack(grids, axis=-1)
        w = self(d)
        centre = tuple(N - 1 for N in shape)
        w[centre] = 0.0
        return h ** (self.n - self.sp) * w


def standard_square_lattice_sum(sigma: float) -> float:
    """``sum_{(a,b) != 0} (a^2 + b^2)^(-sigma) = 4 zeta(sigma) beta(sigma)``."""
    beta = 4.0 ** (-sigma) * (special.zeta(sigma, 0.25) - special.zeta(sigma, 0.75))
    return float(4 * special.zeta(sigma, 1) * beta)


def kernel_eval(kernel: KernelSpec, z) -> float:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (kernel.n,):
        raise InvalidParameter(f"expected a point of R^{kernel.n}")
    if not np.any(z):
        raise ZeroArgument("kernel is singular at the origin")
    return float(kernel(z))


# ---------------------------------------------------------------------------
# grids

class GridDomain:
    """Uniform grid of cell centres with an ``inside`` (U) and ``obstacle`` mask.

    Nodes outside ``inside`` are exterior nodes.  ``inside`` defaults to all
    nodes and ``obstacle`` to none.
    """

    def __init__(self, lower, h, shape, inside=None, obstacle=None):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.h = float(h)
        self.shape = tuple(int(N) for N in np.atleast_1d(shape))
        if self.h <= 0:
            raise InvalidParameter("grid spacing must be > 0")
        if len(self.shape) != self.lower.size or min(self.shape) < 1:
            raise InvalidParameter("grid shape must match the dimension and be positive")
        self.inside = np.ones(self.shape, bool) if inside is None else np.asarray(inside, bool)
        self.obstacle = np.zeros(self.shape, bool) if obstacle is None else np.asarray(obstacle, bool)
        if self.inside.shape != self.shape or self.obstacle.shape != self.shape:
            raise InvalidParameter("masks must have the grid shape")
        if np.any(self.obstacle & ~self.inside):
            raise InvalidParameter("obstacle nodes must lie inside U")

    @classmethod
    def box(cls, lower, upper, h, inside=None):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        shape = np.rint((upper - lower) / h).astype(int)
        if np.any(np.abs(shape * h - (upper - lower)) > 1e-9 * np.maximum(1.0, np.abs(upper - lower))):
            raise InvalidParameter("box lengths must be integer multiples of h")
        return cls(lower, h, shape, inside)

    @classmethod
    def centered(cls, half_width, h, n):
        """Box ``[-L, L]^n`` with ``L = half_width`` rounded up to a multiple of h."""
        k = int(math.ceil(half_width / h - 1e-9))
        L = k * h
        return cls(np.full(n, -L), h, (2 * k,) * n)

    @property
    def n(self):
        return len(self.shape)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @cached_property
    def axes(self):
        return [self.lower[k] + (np.arange(N) + 0.5) * self.h for k, N in enumerate(self.shape)]

    @cached_property
    def coords(self) -> np.ndarray:
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(grids, axis=-1)

    @property
    def points(self):
        return self.coords.reshape(-1, self.n)

    @property
    def exterior(self):
        return ~self.inside

    @property
    def free(self):
        return self.inside & ~self.obstacle

    @property
    def cell_volume(self):
        return self.h ** self.n

    def with_obstacle(self, obstacle) -> "GridDomain":
        return GridDomain(self.lower, self.h, self.shape, self.inside, obstacle)

    def mask_from_predicate(self, pred) -> np.ndarray:
        """Nodes whose cell centre satisfies ``pred(points) -> bool array``."""
        return np.asarray(pred(self.points), bool).reshape(self.shape)

    def ball_mask(self, center, radius, closed=False) -> np.ndarray:
        d = np.sqrt(np.sum((self.coords - np.asarray(center, float)) ** 2, axis=-1))
        return d <= radius if closed else d < radius

    def cells_meeting_ball(self, center, radius) -> np.ndarray:
        """Nodes whose closed cell meets the open ball ``B_radius(center)``."""
        mask = np.zeros(self.shape, bool)
        self._mark_cells_meeting_ball(mask, np.asarray(center, float), float(radius))
        return mask

    def _mark_cells_meeting_ball(self, mask, center, radius):
        h = self.h
        lo = np.floor((center - radius - self.lower) / h - 0.5).astype(int)
        hi = np.ceil((center + radius - self.lower) / h - 0.5).astype(int) + 1
        lo = np.clip(lo, 0, self.shape)
        hi = np.clip(hi, 0, self.shape)
        if np.any(hi <= lo):
            return
        sl = tuple(slice(a, b) for a, b in zip(lo, hi))
        c = self.coords[sl]
        gap = np.maximum(np.abs(c - center) - h / 2, 0.0)
        mask[sl] |= np.sum(gap * gap, axis=-1) < radius * radius

    def cells_meeting_box(self, center, half_widths) -> np.ndarray:
        """Nodes whose closed cell meets the open box ``center +- half_widths``."""
        c = self.coords
        gap = np.abs(c - np.asarray(center, float)) - self.h / 2
        return np.all(gap < np.asarray(half_widths, float), axis=-1)

    def integer_index(self):
        """Integer lattice coordinates of every node, shape ``(size, n)``."""
        grids = np.meshgrid(*[np.arange(N) for N in self.shape], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


# ---------------------------------------------------------------------------
# pair sums by offsets

def _half_offsets(shape):
    """Integer offsets ``d != 0`` with the first nonzero entry positive,
    in lexicographic order, restricted to ``|d_k| < N_k``."""
    ranges = [range(-(N - 1), N) for N in shape]
    for d in itertools.product(*ranges):
        for v in d:
            if v != 0:
                if v > 0:
                    yield d
                break


def _pair_slices(shape, d):
    a, b = [], []
    for N, dk in zip(shape, d):
        if dk >= 0:
            a.append(slice(0, N - dk))
            b.append(slice(dk, N))
        else:
            a.append(slice(-dk, N))
            b.append(slice(0, N + dk))
    return tuple(a), tuple(b)


def _check_field(u, grid):
    u = np.asarray(u, dtype=float)
    if u.shape != grid.shape:
        raise InvalidParameter(f"field shape {u.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(u)):
        raise InvalidParameter("field values must be finite")
    return u


def _check_mask(A, grid, name="node set"):
    A = np.asarray(A, bool)
    if A.shape != grid.shape:
        raise InvalidParameter(f"{name} mask does not match the grid")
    return A


def _offset_scale(kernel, grid):
    return grid.h ** (kernel.n - kernel.sp)


def _weight(kernel, d):
    return float(kernel(np.asarray(d, dtype=float)))


def energy(u, A, kernel: KernelSpec, grid: GridDomain) -> float:
    """``sum_{i != j in A} h^(2n) K(x_i - x_j) |u_i - u_j|^p``."""
    u = _check_field(u, grid)
    A = _check_mask(A, grid)
    if not A.any():
        raise EmptyNodeSet("energy needs a nonempty node set")
    p, scale = kernel.p, _offset_scale(kernel, grid)
    parts = []
    for d in _half_offsets(grid.shape):
        sa, sb = _pair_slices(grid.shape, d)
        m = A[sa] & A[sb]
        if not m.any():
            continue
        t = np.abs(u[sa][m] - u[sb][m])
        parts.append(2.0 * _weight(kernel, d) * float(np.sum(t ** p)))
    return scale * math.fsum(parts)


def locality_defect(u, A, A2, kernel: KernelSpec, grid: GridDomain) -> float:
    """Cross energy ``sum_{i in A, j in A2} h^(2n) K(x_i - x_j) |u_i - u_j|^p``."""
    u = _check_field(u, grid)
    A = _check_mask(A, grid)
    A2 = _check_mask(A2, grid)
    if np.any(A & A2):
        raise OverlappingSets("locality defect needs disjoint node sets")
    p, scale = kernel.p, _offset_scale(kernel, grid)
    parts = []
    for d in _half_offsets(grid.shape):
        sa, sb = _pair_slices(grid.shape, d)
        m = (A[sa] & A2[sb]) | (A2[sa] & A[sb])
        if not m.any():
            continue
        t = np.abs(u[sa][m] - u[sb][m])
        parts.append(_weight(kernel, d) * float(np.sum(t ** p)))
    return scale * math.fsum(parts)


def energy_gradient(u, A, kernel: KernelSpec, grid: GridDomain) -> np.ndarray:
    """Gradient of :func:`energy` with respect to the node values (zero off ``A``)."""
    u = _check_field(u, grid)
    A = _check_mask(A, grid)
    p, scale = kernel.p, _offset_scale(kernel, grid)
    g = np.zeros(grid.shape)
    for d in _half_offsets(grid.shape):
        sa, sb = _pair_slices(grid.shape, d)
        m = A[sa] & A[sb]
        if not m.any():
            continue
        t = u[sa] - u[sb]
        f = np.where(m, 2.0 * p * _weight(kernel, d) * np.sign(t) * np.abs(t) ** (p - 1), 0.0)
        g[sa] += f
        g[sb] -= f
    return scale * g


def tail_mass(x, R_ball: float, kernel: KernelSpec, grid: GridDomain, side: int | None = None) -> float:
    """``sum over lattice nodes y outside B_R of h^n K(x - y)``.

    The lattice is the grid's node lattice extended to all of R^n, so the
    sum is over infinitely many nodes.  ``x`` must be a node inside the ball.
    In 1D ``side=+1`` (``-1``) keeps only nodes to the right (left) of ``x``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.sqrt(np.sum(x * x)) >= R_ball:
        raise NodeOutsideBall("x must lie inside B_R")
    h, n, sp = grid.h, kernel.n, kernel.sp
    kx = (x - grid.lower) / h - 0.5
    if np.any(np.abs(kx - np.rint(kx)) > 1e-6):
        raise InvalidParameter("x must be a grid node")
    scale = h ** (-sp)  # h^n * h^-(n+sp) per unit-lattice term
    if n == 1:
        a = 1.0 if kernel.profile is None else kernel.profile[0]
        sig = 1 + sp
        total = 0.0
        for direction in (+1, -1):
            if side is not None and direction != side:
                continue
            # nodes y = x + direction * m h with |y| >= R
            gap = (R_ball - direction * x[0]) / h
            m0 = max(1, int(math.ceil(gap - 1e-9)))
            total += float(special.zeta(sig, m0))
        return a * scale * total
    if side is not None:
        raise InvalidParameter("side selection is only defined in 1D")
    # all-lattice sum minus nodes inside the ball
    k = int(math.ceil(R_ball / h)) + 1
    ax = np.arange(-k, k + 1)
    grids = np.meshgrid(*([ax] * n), indexing="ij")
    d = np.stack([g.ravel() for g in grids], axis=1)
    d = d[np.any(d != 0, axis=1)]
    y = x + d * h
    inside = np.sum(y * y, axis=1) < R_ball * R_ball
    return scale * (kernel.lattice_sum - math.fsum(kernel(d[inside].astype(float))))


# ---------------------------------------------------------------------------
# lattice functional with a zero exterior

class LatticeEnergy:
    """Energy of fields supported on ``support`` over the pairs of ``counted``.

    ``counted=None`` means every pair of the infinite lattice; nodes outside
    the support carry the value 0, so their interaction with the support
    reduces to a diagonal term ``2 sum_i c_i |u_i|^p`` with
    ``c_i = sum_{j in counted \\ support} w_ij``.
    """

    def __init__(self, grid: GridDomain, kernel: KernelSpec, support, counted=None):
        self.grid = grid
        self.kernel = kernel
        self.support = _check_mask(support, grid, "support")
        self.counted = None if counted is None else _check_mask(counted, grid, "counted")
        if self.counted is not None and np.any(self.support & ~self.counted):
            raise InvalidParameter("support must lie inside the counted region")
        self.p = kernel.p
        self.weights = kernel.offset_weights(grid.shape, grid.h)
        self.total_row = kernel.lattice_sum * grid.h ** (kernel.n - kernel.sp)
        sup = self.support.astype(float)
        self.row_support = self.convolve(sup)
        if self.counted is None:
            row_counted = np.full(grid.shape, self.total_row)
        else:
            row_counted = self.convolve(self.counted.astype(float))
        self.exterior_row = np.where(self.support, np.maximum(row_counted - self.row_support, 0.0), 0.0)

    def convolve(self, v) -> np.ndarray:
        """``(W v)_i = sum_{j != i} w_ij v_j`` over grid nodes."""
        return signal.fftconvolve(v, self.weights, mode="valid")

    @property
    def diagonal(self):
        """Row sums ``sum_{j in counted, j != i} w_ij`` on the support."""
        return np.where(self.support, self.row_support + self.exterior_row, 0.0)

    def value(self, u) -> float:
        u = np.where(self.support, u, 0.0)
        inner = energy(u, self.support, self.kernel, self.grid) if self.support.any() else 0.0
        return inner + 2.0 * float(np.sum(self.exterior_row * np.abs(u) ** self.p))

    def gradient(self, u) -> np.ndarray:
        u = np.where(self.support, u, 0.0)
        g = energy_gradient(u, self.support, self.kernel, self.grid)
        g += 2.0 * self.p * self.exterior_row * np.sign(u) * np.abs(u) ** (self.p - 1)
        return np.where(self.support, g, 0.0)

    # quadratic case -------------------------------------------------------
    def hessian_apply(self, v) -> np.ndarray:
        """For p = 2: ``H v`` with ``value(u) = u.Hu / 2``."""
        v = np.where(self.support, v, 0.0)
        return np.where(self.support, 4.0 * (self.diagonal * v - self.convolve(v)), 0.0)

    def quadratic_value(self, u) -> float:
        u = np.where(self.support, u, 0.0)
        return 0.5 * float(np.sum(u * self.hessian_apply(u)))

    def dense_block(self, rows, cols) -> np.ndarray:
        """Dense ``W[rows][:, cols]`` for flat node indices."""
        idx = self.grid.integer_index().astype(np.int32)
        centre = np.array([N - 1 for N in self.grid.shape], np.int32)
        a, b = idx[rows], idx[cols] - centre
        out = np.empty((len(rows), len(cols)))
        step = 512
        for k0 in range(0, len(rows), step):
            chunk = a[k0:k0 + step]
            diff = tuple(chunk[:, None, k] - b[None, :, k] for k in range(self.grid.n))
            out[k0:k0 + step] = self.weights[diff]
        return out
