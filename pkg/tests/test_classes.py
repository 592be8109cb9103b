import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_policy
from offline_cmdp.classes import (
    QClassBox,
    SoftmaxPolicyClassDescriptor,
    WeightClassBox,
    argmin_linear_q,
    project_weights,
)
from offline_cmdp.counterexamples import LEFT, always
from offline_cmdp.data import build_mixture_distribution, sample_dataset
from offline_cmdp.generators import random_cmdp
from offline_cmdp.oracle import concentrability, occupancy_of_policy, optimal_policy, q_of_policy
from offline_cmdp.solvers import mirror_descent_update


def test_projection_examples():
    box = WeightClassBox(2.0, 3)
    v = np.array([0.1, 1.0, 2.0])
    assert np.array_equal(box.project(v), v)
    assert np.array_equal(box.project([-0.3, 7.0, 1.0]), [0.0, 2.0, 1.0])
    assert box.contains(box.midpoint()) and np.all(box.midpoint() == 1.0)
    with pytest.raises(ValueError):
        WeightClassBox(0.0, 3)


@settings(max_examples=50, deadline=None)
@given(arrays(float, 8, elements=st.floats(-10, 10)), st.floats(0.1, 5))
def test_projection_is_nearest_point(v, cap):
    p = project_weights(v, cap)
    grid = np.linspace(0, cap, 2001)
    for x, px in zip(v, p):
        best = grid[np.argmin(np.abs(grid - x))]
        assert abs(px - x) <= abs(best - x) + 1e-12


def test_argmin_orthants():
    assert np.all(argmin_linear_q(np.ones((3, 2)), 0.9) == 0)
    assert np.allclose(argmin_linear_q(-np.ones((3, 2)), 0.9), 10.0)
    assert np.all(argmin_linear_q(np.zeros((2, 2)), 0.5) == 0)
    with pytest.raises(TypeError):
        argmin_linear_q(np.ones(2))


def test_argmin_beats_random_box_points():
    rng = np.random.default_rng(0)
    c = rng.normal(size=(5, 3))
    q = argmin_linear_q(c, 0.8)
    samples = rng.random((10_000, 5, 3)) * 5.0
    assert (c * q).sum() <= np.einsum("sa,ksa->k", c, samples).min()


@pytest.mark.parametrize("seed", range(5))
def test_box_contains_every_value_function(seed):
    rng = np.random.default_rng(seed)
    c = random_cmdp(5, 3, 2, gamma=0.9, seed=seed)
    box = QClassBox.for_rewards(c.gamma)
    coef = rng.normal(size=(5, 3))
    greedy = (coef * box.argmin_linear(coef)).sum()
    for _ in range(10):
        pi = random_policy(rng, 5, 3)
        for i in range(3):
            q = q_of_policy(c, pi, c.rewards[i])
            assert box.contains(q)
            assert greedy <= (coef * q).sum() + 1e-12
    lam = np.array([2.0, 1.0])
    big = QClassBox.for_constrained(c.gamma, 3.0)
    mixed = c.rewards[0] + np.tensordot(lam, c.rewards[1:], axes=1)
    assert big.contains(q_of_policy(c, random_policy(rng, 5, 3), mixed))


def test_true_weights_in_box(fig1):
    pi = always(LEFT)
    d = build_mixture_distribution(fig1, pi, 0.5)
    cap = concentrability(fig1, pi, d.probs)
    w_star = occupancy_of_policy(fig1, pi).values / d.probs
    ds = sample_dataset(fig1, d, 500, 0)
    assert WeightClassBox(cap, 500).contains(w_star[ds.states, ds.actions], tol=1e-12)
    c = random_cmdp(5, 2, gamma=0.9, seed=4)
    pi = optimal_policy(c)
    d = build_mixture_distribution(c, pi, 0.3)
    cap = concentrability(c, pi, d.probs)
    assert np.all(occupancy_of_policy(c, pi).values / d.probs <= cap + 1e-12)


def test_mirror_iterates_live_in_softmax_class():
    rng = np.random.default_rng(1)
    box = QClassBox.for_rewards(0.9)
    alpha, t = 0.05, 30
    qs = [box.argmin_linear(rng.normal(size=(4, 3))) for _ in range(t)]
    pi = np.full((4, 3), 1 / 3)
    for q in qs:
        pi = mirror_descent_update(pi, q, alpha).probs
    desc = SoftmaxPolicyClassDescriptor.after_steps(box, alpha, t)
    # the iterate is softmax(cap * mean of box members), and the mean lies in the box
    mean_q = np.mean(qs, axis=0)
    assert box.contains(mean_q)
    e = np.exp(desc.cap * mean_q - (desc.cap * mean_q).max(axis=1, keepdims=True))
    assert np.allclose(pi, e / e.sum(axis=1, keepdims=True), atol=1e-12)
