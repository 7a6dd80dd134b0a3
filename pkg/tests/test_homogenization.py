import numpy as np
import pytest

from fracobstacle.energy import KernelSpec, ScalingParams
from fracobstacle.errors import InvalidParameter, UnderResolvedObstacles
from fracobstacle.homogenization import (SUMMARY_COLUMNS, convergence_study, grid_for_window,
                                         lp_distance, nvg_capacity_check, pinning_mask,
                                         solve_effective_problem, solve_eps_problem)
from fracobstacle.obstacles import build_obstacles, classify_indices
from fracobstacle.point_process import MarkDistribution, MarkedConfiguration, ProcessSpec, Window
import oracles

P = ScalingParams(1, 0.25, 2.0)
K = KernelSpec(P)
U = Window((0.0,), (1.0,))
H = 1 / 64
GRID = grid_for_window(U, H)


def config(xs, rho, lo=-1.0, hi=40.0):
    return MarkedConfiguration(Window((lo,), (hi,)), np.reshape(xs, (-1, 1)), rho)


def obstacles(xs, rho, eps=0.25):
    cfg = config(xs, rho)
    return build_obstacles(cfg, P, eps, U), cfg


def test_zero_source_gives_zero():
    sol = solve_effective_problem(3.0, 0.0, GRID, K)
    assert not np.any(sol.u) and sol.objective == 0.0
    obs, _ = obstacles([1.0, 3.0], [1.0, 1.0])
    assert not np.any(solve_eps_problem(obs, 0.0, GRID, K).u)


def test_full_pinning_gives_zero():
    # one huge mark swallows U
    obs, _ = obstacles([2.0], [400.0])
    sol = solve_eps_problem(obs, 1.0, GRID, K)
    assert not np.any(sol.u)


def test_no_obstacles_is_effective_problem_at_zero():
    obs, _ = obstacles([], [])
    a = solve_eps_problem(obs, 1.0, GRID, K)
    b = solve_effective_problem(0.0, 1.0, GRID, K)
    assert np.array_equal(a.u, b.u) and a.objective == b.objective


@pytest.mark.parametrize("gamma", [0.0, 5.0])
def test_linear_system_against_assembled_operator(gamma):
    N = 64
    f = 1.0 + np.sin(np.linspace(0, 4, N))
    sol = solve_effective_problem(gamma, f, GRID, K)
    ref, A = oracles.dense_effective_1d(H, N, 0.5, gamma, f)
    resid = A @ sol.u - 2 * H * f
    assert np.max(np.abs(resid)) < 1e-8 * np.max(np.abs(2 * H * f))
    assert np.max(np.abs(sol.u - ref)) < 1e-9 * np.max(np.abs(ref))


def test_objective_monotone_in_gamma():
    vals = [solve_effective_problem(g, 1.0, GRID, K).objective for g in (0.0, 1.0, 4.0, 16.0)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    us = [solve_effective_problem(g, 1.0, GRID, K).u for g in (0.0, 16.0)]
    assert np.all(us[1] <= us[0] + 1e-12)


def test_uniqueness_probe_nonquadratic():
    k3 = KernelSpec(ScalingParams(1, 0.25, 3.0))
    g = grid_for_window(U, 1 / 32)
    a = solve_effective_problem(2.0, 1.0, g, k3)
    b = solve_effective_problem(2.0, 1.0, g, k3, u0=np.random.default_rng(0).uniform(-2, 2, g.shape))
    assert np.max(np.abs(a.u - b.u)) < 1e-4 * np.max(np.abs(a.u))
    assert a.objective == pytest.approx(b.objective, rel=1e-9)


def test_pinning_comparison_and_energy_ordering():
    free = solve_effective_problem(0.0, 1.0, GRID, K)
    obs, _ = obstacles([1.0, 2.5], [2.0, 2.0])
    pinned = solve_eps_problem(obs, 1.0, GRID, K)
    mask, _ = pinning_mask(obs, GRID)
    assert mask.any() and not np.any(pinned.u[mask])
    assert np.all(pinned.u <= free.u + 1e-12) and np.all(pinned.u >= -1e-12)
    assert pinned.objective >= free.objective
    more, _ = obstacles([1.0, 2.5, 3.5], [2.0, 2.0, 2.0])
    assert solve_eps_problem(more, 1.0, GRID, K).objective >= pinned.objective


def test_symmetric_obstacles_give_symmetric_solution():
    obs, _ = obstacles([1.0, 3.0], [2.0, 2.0])
    u = solve_eps_problem(obs, 1.0, GRID, K).u
    assert np.max(np.abs(u - u[::-1])) < 1e-8 * np.max(u)


def test_under_resolved():
    obs, _ = obstacles([2.0], [0.01])
    with pytest.raises(UnderResolvedObstacles):
        solve_eps_problem(obs, 1.0, GRID, K)
    obs, _ = obstacles([2.0], [1.0])  # radius 1/16 = 4h: resolved
    assert not pinning_mask(obs, GRID)[1]
    assert pinning_mask(obs, grid_for_window(U, 1 / 24))[1]


def test_effective_rejects_negative_gamma():
    with pytest.raises(InvalidParameter):
        solve_effective_problem(-1.0, 1.0, GRID, K)


def test_lp_distance():
    u = np.ones(GRID.shape)
    assert lp_distance(u, 0 * u, GRID, 2.0) == pytest.approx(1.0)
    assert lp_distance(u, u, GRID, 3.0) == 0.0


def test_nvg_check():
    eps = 0.25
    single, cfg = obstacles([2.0], [1.0], eps)
    chk = nvg_capacity_check(single, classify_indices(single, cfg, 8), K, 1 / 256)
    assert chk.bound == 0.0 and chk.direct == 0.0
    pair, cfg = obstacles([2.0, 2.3], [1.0, 1.0], eps)
    cls = classify_indices(pair, cfg, 4)
    assert len(cls.NVG) == 2
    chk = nvg_capacity_check(pair, cls, K, 1 / 256, budget=20_000)
    assert chk.direct is not None and chk.nodes > 0
    assert chk.direct <= chk.subadditive + 1e-6
    # the bound uses C(B_1, B_2) on a coarser grid; allow its discretisation gap
    assert chk.direct <= chk.bound * 1.02
    assert chk.subadditive == pytest.approx(chk.bound, rel=0.02)


def test_zero_intensity_study():
    proc = ProcessSpec("poisson", MarkDistribution.constant(1.0), 0.0)
    study = convergence_study(proc, P, U, 1.0, [0.25, 0.125], 2, 0, h=H,
                              capacity_solver=lambda shape: 13.5, gamma_replicas=10)
    assert study.gamma_hat == 0.0
    assert all(r.lp_dist == 0.0 and r.obstacles == 0 for r in study.records)
    rows = study.summary()
    assert tuple(rows[0]) == SUMMARY_COLUMNS and rows[1]["runs"] == 2


def test_study_rejects_increasing_ladder():
    proc = ProcessSpec("poisson", MarkDistribution.constant(1.0), 1.0)
    with pytest.raises(InvalidParameter):
        convergence_study(proc, P, U, 1.0, [0.1, 0.2], 1, 0, h=H, capacity_solver=lambda s: 1.0)


def test_study_excludes_under_resolved(tmp_path):
    proc = ProcessSpec("lattice", MarkDistribution.constant(1.0))
    # eps = 1/32 gives radius eps^2 = 2^-10, far below h
    study = convergence_study(proc, P, U, 1.0, [0.25, 1 / 32], 1, 0, h=H,
                              capacity_solver=lambda s: 13.5, gamma_replicas=10)
    coarse, fine = study.records
    assert not coarse.excluded and fine.excluded and np.isnan(fine.lp_dist)
    assert np.isnan(study.summary()[1]["median_lp_dist"])
    study.write_jsonl(tmp_path / "runs.jsonl")
    assert len((tmp_path / "runs.jsonl").read_text().splitlines()) == 2
