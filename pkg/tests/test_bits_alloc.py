import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_instance
from scfcran.bits_alloc import (ThetaTensor, effective_theta, project_budget, relaxed_feasible,
                                relaxed_maxmin, round_bits)
from scfcran.maxmin_power import LinkContext, mmse_beamformers, sinr
from scfcran.numerics import ContractViolation

B = 10e6


def budgets_for(bits_per_rrh, n):
    return np.full(n, 2.0 * B * bits_per_rrh)


def theta_instance(rng, **kw):
    scenario, bank, _, _ = random_instance(rng, quantized=False, **kw)
    sigma2 = scenario.noise_power_w
    p = scenario.config.power_caps_w()
    D0 = np.full(bank.total_dims, 2.0)
    ctx = LinkContext.from_bank(bank, sigma2, D0, mode="continuous")
    W = mmse_beamformers(p, ctx)
    return scenario, bank, p, effective_theta(W, p, bank, sigma2)


@given(st.integers(0, 2**31 - 1))
def test_theta_model_matches_continuous_sinr(seed):
    rng = np.random.default_rng(seed)
    scenario, bank, _, _ = random_instance(rng, quantized=False)
    sigma2 = scenario.noise_power_w
    p = rng.uniform(0.01, 0.2, scenario.config.num_users)
    ctx = LinkContext.from_bank(bank, sigma2, np.full(bank.total_dims, 1.0), mode="continuous")
    W = mmse_beamformers(p, ctx)
    theta = effective_theta(W, p, bank, sigma2)
    D = rng.uniform(0, 6, bank.total_dims)
    ctx_D = LinkContext.from_bank(bank, sigma2, D, mode="continuous")
    np.testing.assert_allclose(theta.sinr(D), sinr(p, W, ctx_D), rtol=1e-9)


def test_theta_rejects_wrong_shape():
    rng = np.random.default_rng(0)
    scenario, bank, p, _ = theta_instance(rng)
    with pytest.raises(ContractViolation):
        effective_theta(np.ones((bank.total_dims + 1, p.size)), p, bank, 1.0)


def test_project_budget_hand_example():
    rrh = np.array([0, 0, 0, 1])
    out = project_budget([3.0, 1.0, -1.0, 2.0], rrh, [2.0, 5.0])
    np.testing.assert_allclose(out, [2.0, 0.0, 0.0, 2.0])
    out = project_budget([2.0, 2.0, 0.0, 9.0], rrh, [2.0, 5.0])
    np.testing.assert_allclose(out, [1.0, 1.0, 0.0, 5.0])
    # zero and denormal-sized budgets
    np.testing.assert_array_equal(project_budget([1.0, 2.0], [0, 0], [0.0]), 0.0)
    assert project_budget([1.0], [0], [2.75e-52])[0] <= 2.75e-52


@given(st.lists(st.floats(-5, 10), min_size=1, max_size=8), st.floats(0.0, 12.0))
def test_project_budget_properties(values, budget):
    D = np.array(values)
    rrh = np.zeros(D.size, dtype=int)
    out = project_budget(D, rrh, [budget])
    assert np.all(out >= 0)
    assert out.sum() <= budget + 1e-9
    np.testing.assert_allclose(project_budget(out, rrh, [budget]), out, atol=1e-12)
    # no feasible point is closer: compare against random feasible candidates
    rng = np.random.default_rng(len(values))
    for _ in range(20):
        y = rng.dirichlet(np.ones(D.size)) * budget * rng.uniform()
        assert np.linalg.norm(out - D) <= np.linalg.norm(y - D) + 1e-9


def test_relaxed_feasible_sign_and_trivial_cases():
    theta = ThetaTensor(theta=np.array([[1.0]]), signal=np.array([1.0]),
                        interference=np.array([0.5]), rrh_of_dim=np.array([0]))
    assert relaxed_feasible(2.5, theta, [2 * B * 3], B).method == "sign"
    zero = ThetaTensor(theta=np.zeros((1, 1)), signal=np.array([1.0]),
                       interference=np.array([0.5]), rrh_of_dim=np.array([0]))
    assert relaxed_feasible(1.0, zero, [2 * B * 3], B).feasible is True
    with pytest.raises(ContractViolation):
        relaxed_feasible(0.0, theta, [2 * B], B)


def test_relaxed_feasible_single_dim_closed_form():
    # SINR(D) = 1 / (0.1 + 4**-D): 3 bits give 1/(0.1 + 1/64)
    theta = ThetaTensor(theta=np.array([[1.0]]), signal=np.array([1.0]),
                        interference=np.array([0.1]), rrh_of_dim=np.array([0]))
    g3 = 1.0 / (0.1 + 4.0 ** -3)
    assert relaxed_feasible(g3 * 0.999, theta, [2 * B * 3], B).feasible is True
    assert relaxed_feasible(g3 * 1.01, theta, [2 * B * 3], B).feasible is False
    res = relaxed_maxmin(theta, [2 * B * 3], B, eps=1e-8)
    assert res.achieved_gamma == pytest.approx(g3, rel=1e-6)


def test_relaxed_feasible_agrees_with_grid_on_two_dims():
    rng = np.random.default_rng(3)
    for _ in range(5):
        theta = ThetaTensor(theta=rng.uniform(0, 1, (2, 2)), signal=np.array([1.0, 1.0]),
                            interference=rng.uniform(0.05, 0.2, 2),
                            rrh_of_dim=np.array([0, 0]))
        budget = [2 * B * 5]
        grid = np.linspace(0, 5, 2001)
        best = max(theta.sinr([a, 5 - a]).min() for a in grid)
        assert relaxed_feasible(best * 0.995, theta, budget, B).feasible is True
        assert relaxed_feasible(best * 1.005, theta, budget, B).feasible is False
        for method in ("slsqp", "pgd"):
            res = relaxed_maxmin(theta, budget, B, eps=1e-5, method=method)
            assert res.achieved_gamma == pytest.approx(best, rel=1e-3)


def test_slsqp_and_pgd_agree():
    rng = np.random.default_rng(4)
    for _ in range(5):
        scenario, bank, _, theta = theta_instance(rng, num_users=2)
        budgets = budgets_for(4.0, scenario.config.num_rrh)
        a = relaxed_maxmin(theta, budgets, B, eps=1e-4)
        b = relaxed_maxmin(theta, budgets, B, eps=1e-4, method="pgd")
        assert a.achieved_gamma == pytest.approx(b.achieved_gamma, rel=2e-3)


def test_round_bits_hand_example():
    # budget 5 bits: [1.6, 2.3, 1.1] -> floors sum 4, one extra bit to the largest fraction
    plan = round_bits([1.6, 2.3, 1.1], [3], [2 * B * 5], B)
    np.testing.assert_array_equal(plan.flat(), [2.0, 2.0, 1.0])
    plan = round_bits([1.6, 2.3, 1.1], [3], [2 * B * 4], B)
    np.testing.assert_array_equal(plan.flat(), [1.0, 2.0, 1.0])
    plan = round_bits([2.0, 1.9999999999], [2], [2 * B * 4], B)
    np.testing.assert_array_equal(plan.flat(), [2.0, 2.0])


def test_round_bits_rejects_over_budget():
    with pytest.raises(ContractViolation):
        round_bits([3.0, 3.0], [2], [2 * B * 5], B)


@given(st.integers(0, 2**31 - 1))
def test_round_bits_matches_alpha_grid(seed):
    rng = np.random.default_rng(seed)
    dims = rng.integers(1, 5)
    budget = rng.uniform(1, 12)
    D = project_budget(rng.uniform(0, 5, dims), np.zeros(dims, dtype=int), [budget])
    plan = round_bits(D, [dims], [2 * B * budget], B).flat()
    assert plan.sum() <= budget + 1e-9
    np.testing.assert_array_equal(plan, np.round(plan))
    assert np.all(plan >= np.floor(D - 1e-9)) and np.all(plan <= np.ceil(D + 1e-9))
    # oracle: among thresholds on a fine grid, the smallest feasible one
    floor, frac = np.floor(D), D - np.floor(D)
    for alpha in np.linspace(0, 1, 1001):
        cand = np.where(frac <= alpha, floor, np.ceil(D))
        if cand.sum() <= budget * (1 + 1e-12):
            break
    assert plan.sum() >= cand.sum()


def test_integer_enumeration_sandwich():
    rng = np.random.default_rng(6)
    for _ in range(5):
        scenario, bank, _, theta = theta_instance(rng, max_rrh=1, max_ant=3, num_users=2)
        budget = 6.0
        d = bank.total_dims
        best = 0.0
        for D in itertools.product(range(int(budget) + 1), repeat=d):
            if sum(D) <= budget:
                best = max(best, float(theta.sinr(np.array(D, float)).min()))
        relaxed = relaxed_maxmin(theta, [2 * B * budget], B, eps=1e-7)
        assert relaxed.achieved_gamma >= best * (1 - 1e-6)
        plan = round_bits(relaxed.D, bank.output_dims, [2 * B * budget], B)
        assert plan.flat().sum() <= budget
        assert theta.sinr(plan.flat()).min() <= best * (1 + 1e-12)
