"""Independent reference computations used by the tests.

Nothing here imports the package internals it checks: energies are summed
pair by pair from node coordinates, exterior interactions are summed over an
explicit lattice, and classifications follow the textbook definitions with
quadratic scans.
"""
import math

import numpy as np
from scipy import integrate


def node_coords_1d(lower, h, N):
    return lower + (np.arange(N) + 0.5) * h


def brute_energy_1d(u, A, h, sp, p, amp=1.0):
    """sum_{i != j in A} h^2 amp |x_i - x_j|^-(1+sp) |u_i - u_j|^p from coordinates."""
    x = node_coords_1d(0.0, h, len(u))
    idx = np.flatnonzero(A)
    terms = []
    for i in idx:
        for j in idx:
            if i != j:
                terms.append(h * h * amp * abs(x[i] - x[j]) ** (-(1 + sp)) * abs(u[i] - u[j]) ** p)
    return math.fsum(terms)


def brute_energy_nd(u, A, h, n, sp, p):
    pts = np.stack(np.meshgrid(*[(np.arange(N) + 0.5) * h for N in u.shape], indexing="ij"), -1)
    pts = pts.reshape(-1, n)
    v = u.ravel()
    idx = np.flatnonzero(np.asarray(A).ravel())
    terms = []
    for i in idx:
        d = np.linalg.norm(pts[idx] - pts[i], axis=1)
        m = idx != i
        terms.extend(h ** (2 * n) * d[m] ** (-(n + sp)) * np.abs(v[i] - v[idx[m]]) ** p)
    return math.fsum(terms)


def exterior_row_1d(k, support_idx, sp, M=200_000):
    """sum over integer lattice offsets m != 0 with k + m outside ``support_idx``
    of |m|^-(1+sp), summing explicitly up to |m| <= M and integrating beyond."""
    sup = set(int(i) for i in support_idx)
    m = np.arange(1, M + 1, dtype=float)
    total = 2 * math.fsum(m ** (-(1 + sp)))
    total += 2 * (M + 0.5) ** (-sp) / sp  # midpoint tail
    inside = [abs(j - k) for j in sup if j != k]
    return total - math.fsum(float(d) ** (-(1 + sp)) for d in inside)


def dense_condenser_1d(h, R, T_radius, sp):
    """p = 2 capacity of [-T, T] in B_R by assembling the full matrix from
    explicit pair sums and solving the linear system with numpy."""
    N = 2 * int(math.ceil(R / h - 1e-9))
    x = node_coords_1d(-N * h / 2, h, N)
    support = np.flatnonzero(np.abs(x) <= R)
    target = np.abs(x) < T_radius
    scale = h ** (1 - sp)
    W = np.zeros((N, N))
    for i in support:
        for j in support:
            if i != j:
                W[i, j] = scale * abs(i - j) ** (-(1 + sp))
    ext = np.zeros(N)
    for i in support:
        ext[i] = scale * exterior_row_1d(i, support, sp)
    # energy(u) = sum_{i != j} W_ij (u_i - u_j)^2 + 2 sum_i ext_i u_i^2
    H = 4 * (np.diag(W.sum(axis=1) + ext) - W)
    fixed = target
    free = np.zeros(N, bool)
    free[support] = True
    free &= ~fixed
    u = fixed.astype(float)
    rhs = -H[np.ix_(free, fixed)] @ u[fixed]
    u[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
    return 0.5 * u @ H @ u, u


def riesz_potential_1d(x, s):
    """int_{-1}^{1} (1 - y^2)^-s |x - y|^(2s - 1) dy by adaptive quadrature."""
    f = lambda y: (1 - y * y) ** (-s) * abs(x - y) ** (2 * s - 1)
    pts = sorted({-1.0, float(x), 1.0})
    return sum(integrate.quad(f, a, b, limit=200)[0] for a, b in zip(pts, pts[1:]) if b > a)


def tail_integral_1d(dist, sp):
    """int_dist^inf t^-(1+sp) dt."""
    return dist ** (-sp) / sp


def brute_nn(pos):
    pos = np.asarray(pos, float)
    out = np.full(len(pos), np.inf)
    for i in range(len(pos)):
        for j in range(len(pos)):
            if i != j:
                out[i] = min(out[i], float(np.linalg.norm(pos[i] - pos[j])))
    return out


def brute_matern(pos, delta):
    return brute_nn(pos) >= delta


def brute_classify(pos, marks, eps, lam, R, lower, upper):
    """Index sets from the definitions, all-pairs; positions are unscaled."""
    pos = np.asarray(pos, float)
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    I = [i for i in range(len(pos)) if np.all(pos[i] >= lower / eps) and np.all(pos[i] < upper / eps)]
    nn = brute_nn(pos)
    I2R = [i for i in I if nn[i] >= 2 / R]
    G = []
    for i in I2R:
        c = eps * pos[i]
        bd = min(np.min(c - lower), np.min(upper - c))
        if marks[i] <= R and bd > eps / R:
            G.append(i)
    VG = []
    for i in G:
        ok = True
        for j in I:
            if j != i and np.linalg.norm(eps * (pos[i] - pos[j])) < eps / R + 2 * lam * marks[j]:
                ok = False
        if ok:
            VG.append(i)
    NVG = [i for i in I if i not in VG]
    return I, I2R, G, VG, NVG


def lognormal_moment(mu, sigma, q):
    return math.exp(q * mu + 0.5 * (q * sigma) ** 2)


def dense_effective_1d(h, N, sp, gamma, f):
    """p = 2 minimiser on the N-cell grid of (0, N h) with zero exterior data:
    solves (H + 2 gamma h) u = 2 h f with H assembled from explicit pair sums."""
    scale = h ** (1 - sp)
    idx = np.arange(N)
    W = np.zeros((N, N))
    for i in idx:
        for j in idx:
            if i != j:
                W[i, j] = scale * abs(i - j) ** (-(1 + sp))
    ext = np.array([scale * exterior_row_1d(i, idx, sp) for i in idx])
    H = 4 * (np.diag(W.sum(axis=1) + ext) - W)
    A = H + 2 * gamma * h * np.eye(N)
    return np.linalg.solve(A, 2 * h * np.asarray(f, float)), A
