import numpy as np
import pytest

from qbrownian import resolvent_limits as RL
from qbrownian.errors import NotAccretive, NotNormal


def test_diagonal_example_limit():
    # A = diag(0, i, 2), B = I: the limit is conj(phi_0) * psi_0
    prob = RL.ResolventProblem(a=np.diag([0.0, 1j, 2.0]), b=np.eye(3),
                               phi=np.array([1 + 2j, 3.0, 4j]),
                               psi=np.array([2 - 1j, 1.0, 1.0]),
                               lam_list=np.geomspace(1, 1e8, 9))
    res = RL.limit_resolvent(prob)
    want = np.conj(1 + 2j) * (2 - 1j)
    assert res.reference == pytest.approx(want)
    assert abs(res.values[-1] - want) < 1e-6
    assert res.kernel_dim == 1


def test_invertible_case_decays_to_zero():
    rng = np.random.default_rng(3)
    prob = RL.random_problem(rng, dim=12, kernel_dim=0)
    res = RL.limit_resolvent(prob)
    assert res.reference == 0
    mags = np.abs(res.values)
    slope = np.polyfit(np.log(prob.lam_list), np.log(mags), 1)[0]
    assert slope <= -0.9
    assert res.norm_bound_ok


def test_kernel_case_converges_to_projection():
    rng = np.random.default_rng(4)
    prob = RL.random_problem(rng, dim=20, kernel_dim=3)
    res = RL.limit_resolvent(prob)
    err = abs(res.values[-1] - res.reference)
    assert err < 1e-4 * (1 + abs(res.reference))
    assert res.kernel_dim == 3


def test_uniform_resolvent_norm_bound():
    rng = np.random.default_rng(5)
    for k in range(5):
        prob = RL.random_problem(rng, dim=15, kernel_dim=k % 3)
        res = RL.limit_resolvent(prob)
        assert res.norm_bound_ok
        assert res.max_norm_ratio <= 1.0 + 1e-9


def test_not_normal_rejected():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])  # nilpotent: not normal
    prob = RL.ResolventProblem(a=a, b=np.eye(2), phi=np.ones(2),
                               psi=np.ones(2), lam_list=np.array([1.0, 10.0]))
    with pytest.raises(NotNormal):
        RL.limit_resolvent(prob)


def test_not_accretive_rejected():
    prob = RL.ResolventProblem(a=np.diag([-1.0, 1.0]), b=np.eye(2),
                               phi=np.ones(2), psi=np.ones(2),
                               lam_list=np.array([1.0, 10.0]))
    with pytest.raises(NotAccretive):
        RL.limit_resolvent(prob)
    prob2 = RL.ResolventProblem(a=np.diag([1.0, 1.0]), b=-np.eye(2),
                                phi=np.ones(2), psi=np.ones(2),
                                lam_list=np.array([1.0, 10.0]))
    with pytest.raises(NotAccretive):
        RL.limit_resolvent(prob2)


def test_suite_smoke():
    rep = RL.run_randomized_suite(n_problems=10, dim=12, seed=7)
    assert rep["passed"]
    assert rep["worst_limit_error"] < 1e-4
    assert rep["worst_decay_slope"] <= -0.9
