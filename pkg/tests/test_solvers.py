import numpy as np
import pytest
from scipy import optimize

from fracobstacle.energy import GridDomain, KernelSpec, LatticeEnergy, ScalingParams
from fracobstacle.errors import InvalidParameter, SolverDiverged
from fracobstacle.solvers import ConvexProblem, SolverOptions, minimize


def problem(p=2.0, N=64, gamma=0.5, lower=-np.inf, upper=np.inf):
    g = GridDomain([0.0], 1.0 / N, (N,))
    lat = LatticeEnergy(g, KernelSpec(ScalingParams(1, 0.3, p)), np.ones(N, bool))
    f = np.sin(np.linspace(0, 3, N)) + 0.5
    return ConvexProblem(lat, gamma=gamma, f=f, lower=lower, upper=upper)


def test_linear_paths_agree():
    prob = problem()
    sols = {m: minimize(prob, SolverOptions(method=m)) for m in ("direct", "cg", "apg")}
    ref = sols["direct"].u
    assert np.max(np.abs(sols["cg"].u - ref)) < 1e-9 * np.max(np.abs(ref))
    assert np.max(np.abs(sols["apg"].u - ref)) < 1e-5 * np.max(np.abs(ref))
    assert sols["apg"].value >= sols["direct"].value - 1e-12


def test_stationarity_residual():
    prob = problem()
    u = minimize(prob).u
    assert prob.kkt(u) < 1e-8 * (1 + abs(prob.value(u)))


def test_box_fallback():
    prob = problem(gamma=0.0, upper=0.05)
    res = minimize(prob)
    assert res.method == "apg"
    assert res.u.max() <= 0.05
    unconstrained = minimize(problem(gamma=0.0))
    assert unconstrained.u.max() > 0.05
    assert res.value >= unconstrained.value


def test_nonquadratic_kkt():
    prob = problem(p=3.0)
    res = minimize(prob)
    assert res.kkt <= res.info["kkt_tol"]
    # independent quasi-Newton minimiser of the same objective
    ref = optimize.minimize(prob.value, np.zeros(64), jac=prob.gradient, method="L-BFGS-B",
                            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10_000})
    assert np.max(np.abs(res.u - ref.x)) < 1e-5 * np.max(np.abs(ref.x))
    assert res.value <= ref.fun + 1e-12
    with pytest.raises(InvalidParameter):
        minimize(prob, SolverOptions(method="direct"))


def test_iteration_budget():
    with pytest.raises(SolverDiverged):
        minimize(problem(p=3.0), SolverOptions(max_iter=3))
