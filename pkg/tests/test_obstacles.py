import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracobstacle.capacity import condenser_capacity
from fracobstacle.energy import GridDomain, KernelSpec, ScalingParams
from fracobstacle.errors import (InvalidParameter, MismatchedRealization, TemplateOutOfBounds,
                                 WindowTooSmall)
from fracobstacle.obstacles import (IndexClassification, TemplateCache, build_obstacles,
                                    build_shaped_obstacles, cardinality_report, check_safety_layer,
                                    classify_indices, lambda_eps, lq_norm, obstacle_table)
from fracobstacle.point_process import (MarkDistribution, MarkedConfiguration, Window, parse_table,
                                        sample_poisson)
from fracobstacle.shapes import Ball, BallUnion, Box
import oracles

P1 = ScalingParams(1, 0.25, 2.0)
U1 = Window((0.0,), (1.0,))


def config(xs, rho, lo=-1.0, hi=20.0):
    return MarkedConfiguration(Window((lo,), (hi,)), np.reshape(xs, (-1, 1)), rho)


def test_lambda_examples():
    assert lambda_eps(P1, 1.0) == 1.0
    assert lambda_eps(ScalingParams(2, 0.5, 2.0), 0.1) == pytest.approx(0.01, rel=1e-14)
    with pytest.raises(InvalidParameter):
        lambda_eps(ScalingParams(1, 0.9, 2.0), 0.5)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.01, 10), eps=st.floats(1e-3, 1), s=st.floats(0.05, 0.45))
def test_lambda_homogeneity(a, eps, s):
    prm = ScalingParams(1, s, 2.0)
    expect = a ** (1 / (1 - 2 * s)) * lambda_eps(prm, eps)
    assert lambda_eps(prm, a * eps) == pytest.approx(expect, rel=1e-12)


def test_build_examples():
    empty = config([], [])
    assert len(build_obstacles(empty, P1, 0.25, U1)) == 0
    cfg = config([2.0, 5.0], [1.0, 1.0])
    obs = build_obstacles(cfg, P1, 0.25, U1)
    assert len(obs) == 1
    assert obs.centers[0, 0] == 0.5 and obs.radii[0] == 0.0625
    with pytest.raises(WindowTooSmall):
        build_obstacles(config([2.0], [1.0], hi=3.0), P1, 0.25, U1)


def test_obstacle_mask_cells():
    obs = build_obstacles(config([2.0], [1.0]), P1, 0.25, U1)
    g = GridDomain([0.0], 1 / 64, (64,))
    mask = obs.obstacle_mask(g)
    # open ball (28/64, 36/64): cells 27 and 36 only touch its missing end points
    assert np.flatnonzero(mask).tolist() == list(range(28, 36))


def test_classification_examples():
    R = 8
    single = config([2.0], [1.0])
    cls = classify_indices(build_obstacles(single, P1, 0.25, U1), single, R)
    assert list(cls.VG) == [0] and len(cls.NVG) == 0
    pair = config([2.0, 2.0 + 1 / R], [1.0, 1.0])
    cls = classify_indices(build_obstacles(pair, P1, 0.25, U1), pair, R)
    assert len(cls.I_2R) == 0 and sorted(cls.NVG) == [0, 1]
    fat = config([2.0], [R + 1.0])
    cls = classify_indices(build_obstacles(fat, P1, 0.25, U1), fat, R)
    assert list(cls.I_2R) == [0] and len(cls.G) == 0 and list(cls.NVG) == [0]


def test_cardinality_examples():
    eps = 0.25
    single = config([2.0], [1.0])
    cls = classify_indices(build_obstacles(single, P1, eps, U1), single, 8)
    assert set(cardinality_report(cls, eps).values()) == {0.0}
    pair = config([2.0, 2.05], [1.0, 1.0])
    cls = classify_indices(build_obstacles(pair, P1, eps, U1), pair, 8)
    rep = cardinality_report(cls, eps)
    assert rep == {"I_minus_I2R": 2 * eps, "I2R_minus_G": 0.0, "G_minus_VG": 0.0, "NVG": 2 * eps}


def test_mismatched_realization():
    a, b = config([2.0], [1.0]), config([2.5], [1.0])
    with pytest.raises(MismatchedRealization):
        classify_indices(build_obstacles(a, P1, 0.25, U1), b, 8)


def test_safety_layer_adversarial_relabel():
    # a good point whose small ball meets a big neighbour's doubled ball
    cfg = config([2.0, 2.3], [1.0, 8.0])
    obs = build_obstacles(cfg, P1, 0.25, U1)
    cls = classify_indices(obs, cfg, 4)
    assert 0 in cls.NVG and check_safety_layer(cls, obs)
    forged = IndexClassification(cls.R, cls.delta, cls.I, cls.I_2R, cls.G, np.array([0]),
                                 np.array([1]), cls.eps, cls.n)
    assert not check_safety_layer(forged, obs)
    empty = IndexClassification(cls.R, cls.delta, cls.I, cls.I_2R, cls.G, cls.G, np.array([], int))
    assert check_safety_layer(empty, obs)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32), eps=st.sampled_from([0.25, 0.125, 0.0625]),
       R=st.sampled_from([2.0, 4.0, 8.0]), n=st.integers(1, 2))
def test_classification_matches_definitions(seed, eps, R, n):
    prm = ScalingParams(n, 0.25, 2.0)
    U = Window.cube(n, 0.0, 1.0)
    cfg = sample_poisson(Window.cube(n, -0.5, 1 / eps + 0.5), 2.0, MarkDistribution.lognormal(0, 1), seed)
    obs = build_obstacles(cfg, prm, eps, U)
    cls = classify_indices(obs, cfg, R)
    ref = oracles.brute_classify(cfg.positions, cfg.marks, eps, obs.lam, R, U.lower, U.upper)
    for got, want in zip((cls.I, cls.I_2R, cls.G, cls.VG, cls.NVG), ref):
        assert sorted(got.tolist()) == sorted(want)
    # nested sets, partition identity, safety layer
    assert set(cls.VG) <= set(cls.G) <= set(cls.I_2R) <= set(cls.I)
    assert len(cls.I) == len(cls.VG) + len(cls.NVG)
    assert check_safety_layer(cls, obs)
    # good balls B_(eps/R)(eps x_i) are pairwise disjoint
    rows = [int(np.flatnonzero(obs.indices == k)[0]) for k in cls.G]
    c = obs.centers[rows]
    for i in range(len(c)):
        for j in range(i + 1, len(c)):
            assert np.linalg.norm(c[i] - c[j]) >= 2 * eps / R - 1e-12


def test_lq_norm():
    cfg = config([2.0], [3.0])
    obs = build_obstacles(cfg, P1, 0.25, U1)
    for q in (0.6, 1.0, 2.0, math.inf):
        assert lq_norm(obs, q) == pytest.approx(obs.lam * 3.0, rel=1e-14)
    two = build_obstacles(config([0.4, 1.2], [0.1, 0.3]), P1, 1.0, Window((0.0,), (2.0,)))
    assert lq_norm(two, math.inf) == pytest.approx(0.3)
    assert lq_norm(two, 2.0) == pytest.approx(math.hypot(0.1, 0.3))
    with pytest.raises(InvalidParameter):
        lq_norm(two, 0.5)


def test_lq_norm_decreases():
    law = MarkDistribution.lognormal(0, 0.5)
    med = []
    for eps in (0.125, 0.0625, 0.03125, 0.015625):
        vals = [lq_norm(build_obstacles(sample_poisson(Window((0.0,), (64.0,)), 2.0, law, k), P1, eps, U1), 1.0)
                for k in range(20)]
        med.append(np.median(vals))
    assert all(b < a for a, b in zip(med, med[1:]))


def fake_capacity(shape):
    # capacity of canonical templates, scale 1: ball -> 10, others -> 4
    return 10.0 if shape.kind == "ball" else 4.0


def test_shaped_templates():
    cfg = config([2.0, 3.0], [1.0, 2.0])
    obs = build_obstacles(cfg, P1, 0.25, U1)
    expo = P1.cap_exponent
    unit = build_shaped_obstacles(obs, Ball((0.0,), 1.0), fake_capacity)
    assert np.allclose(unit.gammas, obs.marks ** expo * 10.0, rtol=1e-14)
    half = build_shaped_obstacles(obs, Ball((0.0,), 0.5), fake_capacity)
    assert np.allclose(half.gammas, (obs.marks / 2) ** expo * 10.0, rtol=1e-14)
    assert half.shapes[1].radius == pytest.approx(0.5 * obs.radii[1])
    assert half.min_radius == pytest.approx(0.5 * obs.radii.min())
    with pytest.raises(TemplateOutOfBounds):
        build_shaped_obstacles(obs, Ball((0.5,), 0.6), fake_capacity)
    mixed = build_shaped_obstacles(obs, lambda k, rho: Box((0.0,), (0.5,)) if k else Ball((0.0,), 1.0),
                                   fake_capacity)
    assert mixed.template_ids.tolist() == [0, 1]


def test_gamma_bound_by_unit_ball():
    # templates inside the unit ball have capacity at most cap(B_1)
    cfg = config([2.0, 3.0], [1.0, 2.0])
    obs = build_obstacles(cfg, P1, 0.25, U1)
    k = KernelSpec(P1)
    solver = lambda T: condenser_capacity(T, 4.0, k, h=1 / 32).value
    cap_b1 = solver(Ball((0.0,), 1.0))
    for tpl in (Ball((0.2,), 0.5), Box((0.0,), (0.7,)), BallUnion((Ball((-0.6,), 0.3), Ball((0.6,), 0.3)))):
        sh = build_shaped_obstacles(obs, tpl, solver)
        assert np.all(sh.gammas >= 0)
        assert np.all(sh.gammas <= k.c * cap_b1 * obs.marks ** P1.cap_exponent + 1e-9)


def test_template_cache_solves_once():
    calls = []

    def solver(shape):
        calls.append(shape)
        return 3.0

    cache = TemplateCache(solver, 0.5)
    assert cache.capacity(Ball((0.0,), 0.5)) == pytest.approx(3.0 * 0.5 ** 0.5)
    assert cache.capacity(Ball((0.3,), 0.25)) == pytest.approx(3.0 * 0.25 ** 0.5)
    assert len(calls) == 1


def test_obstacle_table():
    cfg = config([2.0, 3.0], [1.0, 2.0])
    obs = build_obstacles(cfg, P1, 0.25, U1)
    sh = build_shaped_obstacles(obs, Ball((0.0,), 0.5), fake_capacity)
    back, extra = parse_table(obstacle_table(sh, cfg))
    assert np.array_equal(back.marks, obs.marks)
    assert np.array_equal(extra["radius"], obs.radii)
    assert np.array_equal(extra["gamma_i"], sh.gammas)
