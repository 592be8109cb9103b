import numpy as np
import pytest

from conftest import random_policy
from oracles import brute_force_constrained_optimum, series_occupancy, series_return
from offline_cmdp.core import Cmdp, OccupancyMeasure, Policy
from offline_cmdp.counterexamples import LEFT, RIGHT, always, spurious_occupancy
from offline_cmdp.generators import random_cmdp, random_feasible_cmdp
from offline_cmdp.oracle import (
    FEAS_TOL,
    batch_returns,
    bellman_flow_residual,
    concentrability,
    evaluate_policy,
    exact_lagrangian,
    exact_lagrangian_decomposed,
    occupancy_of_policy,
    optimal_policy,
    q_of_policy,
    slater_margin,
    solve_constrained_lp,
)


def test_figure1_values(fig1):
    vf = evaluate_policy(fig1, always(LEFT))
    assert np.allclose(vf.v, [1, 2, 2, 8, 0], atol=1e-14)
    assert vf.scalar_return == pytest.approx(1.0, abs=1e-14)


def test_zero_reward_zero_value(fig1):
    c = fig1.with_rewards(np.zeros((1, 5, 2)))
    assert np.all(evaluate_policy(c, Policy.uniform(5, 2)).v == 0)


def test_right_then_uniform_return(fig1):
    pi = np.full((5, 2), 0.5)
    pi[0] = [0, 1]
    j = evaluate_policy(fig1, pi).scalar_return
    assert j == pytest.approx(13 / 16, abs=1e-12)
    assert series_return(fig1, pi) == pytest.approx(13 / 16, abs=1e-12)


def test_reward_index_range(small_cmdp):
    with pytest.raises(IndexError):
        evaluate_policy(small_cmdp, Policy.uniform(6, 3), reward_index=2)


def test_figure1_occupancy(fig1):
    mu = occupancy_of_policy(fig1, always(LEFT)).values
    want = np.zeros((5, 2))
    want[:, LEFT] = [0.5, 0.25, 0.125, 1 / 16, 1 / 16]
    assert np.allclose(mu, want, atol=1e-15)


def test_single_absorbing_state():
    c = Cmdp(np.ones((1, 2, 1)), np.zeros((1, 2)), 0.5, 0)
    mu = occupancy_of_policy(c, Policy.uniform(1, 2)).values
    assert mu.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_occupancy_matches_power_series(seed):
    rng = np.random.default_rng(seed)
    c = random_cmdp(6, 3, gamma=0.9, seed=seed)
    pi = random_policy(rng, 6, 3)
    mu = occupancy_of_policy(c, pi).values
    assert np.abs(mu - series_occupancy(c, pi, horizon=400)).max() <= 1e-8
    assert mu.sum() == pytest.approx(1.0, abs=1e-10)


def test_residual_examples(fig1):
    mu = occupancy_of_policy(fig1, always(RIGHT))
    assert np.abs(bellman_flow_residual(fig1, mu)).max() <= 1e-10
    assert np.abs(bellman_flow_residual(fig1, spurious_occupancy())).max() > 0.1
    assert np.allclose(bellman_flow_residual(fig1, np.zeros((5, 2))), -0.5 * fig1.d0)


def test_lp_figure1(fig1):
    sol = solve_constrained_lp(fig1)
    assert sol.feasible and sol.objective == pytest.approx(0.5, abs=1e-12)
    assert np.allclose(sol.mu_star.values, occupancy_of_policy(fig1, always(LEFT)).values, atol=1e-12)
    assert np.allclose(sol.dual_v, [1, 2, 2, 8, 0], atol=1e-10)
    assert sol.dual_lambda.shape == (0,)
    assert sol.to_json()["lambda_star"] == []


def test_vacuous_constraint(fig1):
    c = fig1.with_rewards(np.stack([fig1.rewards[0], np.full((5, 2), 0.5)]), [0.0])
    sol = solve_constrained_lp(c)
    assert sol.objective == pytest.approx(0.5, abs=1e-12)
    assert np.all(sol.dual_lambda == 0)


@pytest.mark.parametrize("seed", range(6))
def test_lp_matches_brute_force(seed):
    c, _ = random_feasible_cmdp(5, 2, 1, gamma=0.8, seed=seed, min_margin=0.01)
    sol = solve_constrained_lp(c)
    assert sol.objective == pytest.approx(brute_force_constrained_optimum(c), abs=1e-7)


@pytest.mark.parametrize("seed", range(10))
def test_lp_solution_invariants(seed):
    c, _ = random_feasible_cmdp(5, 3, 2, gamma=0.85, seed=seed, min_margin=0.02, tightness=(0.7, 1.0))
    sol = solve_constrained_lp(c)
    mu = sol.mu_star.values
    assert np.abs(bellman_flow_residual(c, mu)).max() <= 1e-8
    achieved = np.einsum("isa,sa->i", c.rewards[1:], mu)
    assert np.all(achieved >= c.thresholds - 1e-8)
    assert np.all(sol.dual_lambda * (achieved - c.thresholds) <= 1e-6)
    # strong duality with the Lagrangian reward
    assert (1 - c.gamma) * sol.dual_v[c.initial_state] - sol.dual_lambda @ c.thresholds == pytest.approx(
        sol.objective, abs=1e-8)
    # the extracted policy attains the optimum
    J = batch_returns(c, sol.policy_star.probs)[0]
    assert (1 - c.gamma) * J[0] == pytest.approx(sol.objective, abs=1e-8)


def test_infeasible_reports_constraint(fig1):
    c = fig1.with_rewards(np.stack([fig1.rewards[0], fig1.rewards[0] / 4]), [0.2])
    sol = solve_constrained_lp(c)
    assert not sol.feasible and sol.violated == [1]
    doc = sol.to_json()
    assert doc["feasible"] is False and doc["violated_constraints"] == [1]
    with pytest.raises(ValueError):
        optimal_policy(c)


def test_lagrangian_examples(fig1):
    mu_star = occupancy_of_policy(fig1, always(LEFT))
    rng = np.random.default_rng(0)
    for _ in range(5):
        assert exact_lagrangian(fig1, mu_star, rng.normal(size=5)) == pytest.approx(0.5, abs=1e-12)
    v_star = evaluate_policy(fig1, always(LEFT)).v
    assert exact_lagrangian(fig1, spurious_occupancy(), v_star) == pytest.approx(0.5, abs=1e-12)
    v = rng.normal(size=5)
    assert exact_lagrangian(fig1, np.zeros((5, 2)), v) == pytest.approx(0.5 * v[0])


def test_decomposed_examples(fig1, small_cmdp):
    rng = np.random.default_rng(3)
    pi = random_policy(rng, 6, 3)
    c = small_cmdp
    mu = occupancy_of_policy(c, pi)
    q = q_of_policy(c, pi)
    J = evaluate_policy(c, pi).scalar_return
    assert exact_lagrangian_decomposed(c, mu, pi, q) == pytest.approx((1 - c.gamma) * J, abs=1e-12)
    mu_star = occupancy_of_policy(fig1, always(LEFT))
    q_star = evaluate_policy(fig1, always(LEFT)).q
    assert exact_lagrangian_decomposed(fig1, mu_star, always(LEFT), q_star) == pytest.approx(0.5)
    x = rng.random((6, 3))
    assert exact_lagrangian_decomposed(c, x, pi, q, np.zeros(1)) == exact_lagrangian_decomposed(c, x, pi, q)
    with pytest.raises(ValueError):
        exact_lagrangian_decomposed(c, x, pi, q, np.zeros(2))


def test_concentrability_examples(fig1):
    pi = always(LEFT)
    mu = occupancy_of_policy(fig1, pi).values
    assert concentrability(fig1, pi, mu) == pytest.approx(1.0)
    assert concentrability(fig1, pi, 0.5 * mu + 0.05) <= 2.0
    assert concentrability(fig1, pi, np.full((5, 2), 0.1)) == pytest.approx(5.0)
    hole = np.full((5, 2), 0.1)
    hole[0, 0] = 0
    assert concentrability(fig1, pi, hole) == np.inf


def test_slater_examples(fig1):
    c = fig1.with_rewards(np.stack([fig1.rewards[0], fig1.rewards[0] / 4]), [0.0])
    assert slater_margin(c) > 0
    # threshold at the best achievable value: zero margin
    top = solve_constrained_lp(c.with_rewards(c.rewards[[1]], [])).objective
    assert abs(slater_margin(c.with_thresholds([top]))) <= 1e-8
    # r_1 = r_0, threshold above the optimum: negative margin
    opt = solve_constrained_lp(fig1).objective / 4
    c2 = fig1.with_rewards(np.stack([fig1.rewards[0] / 4, fig1.rewards[0] / 4]), [opt + 0.1])
    assert slater_margin(c2) == pytest.approx(-0.1, abs=1e-9)
    with pytest.raises(ValueError):
        slater_margin(fig1)


@pytest.mark.parametrize("seed", range(10))
def test_admissible_lagrangian_constant_in_v(seed):
    rng = np.random.default_rng(seed)
    c = random_cmdp(5, 3, gamma=0.9, seed=seed)
    pi = random_policy(rng, 5, 3)
    mu = occupancy_of_policy(c, pi)
    J = evaluate_policy(c, pi).scalar_return
    for _ in range(3):
        assert exact_lagrangian(c, mu, rng.normal(size=5) * 10) == pytest.approx(0.1 * J, abs=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_bellman_consistency(seed):
    rng = np.random.default_rng(seed)
    c = random_cmdp(5, 3, 1, gamma=0.95, seed=seed)
    pi = random_policy(rng, 5, 3)
    for i in range(2):
        vf = evaluate_policy(c, pi, i)
        assert np.abs(vf.q - c.rewards[i] - c.gamma * c.transition @ vf.v).max() <= 1e-10
        assert np.abs(vf.v - (pi * vf.q).sum(axis=1)).max() <= 1e-10
        assert np.all(vf.v >= -1e-12) and np.all(vf.v <= 1 / (1 - c.gamma) + 1e-9)
    assert np.allclose(batch_returns(c, pi)[0], [evaluate_policy(c, pi, i).scalar_return for i in range(2)])


@pytest.mark.parametrize("seed", range(10))
def test_unconstrained_strong_duality(seed):
    c = random_cmdp(6, 3, gamma=0.9, seed=seed)
    sol = solve_constrained_lp(c)
    assert (1 - c.gamma) * sol.dual_v[0] == pytest.approx(sol.objective, abs=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_saddle_invariant_under_subclasses(seed):
    from oracles import double_loop_saddle

    rng = np.random.default_rng(seed)
    c = random_cmdp(4, 2, gamma=0.8, seed=seed)
    sol = solve_constrained_lp(c)
    us = [sol.mu_star.values] + [rng.random((4, 2)) * rng.random() for _ in range(6)]
    vs = [sol.dual_v] + [rng.normal(size=4) * 5 for _ in range(6)]
    keep_u = [0] + [k for k in range(1, 7) if rng.random() < 0.5]
    keep_v = [0] + [k for k in range(1, 7) if rng.random() < 0.5]
    ok, worst = double_loop_saddle(lambda m, v: exact_lagrangian(c, m, v),
                                   [us[k] for k in keep_u], [vs[k] for k in keep_v], 0, 0, 1e-9)
    assert ok, worst
