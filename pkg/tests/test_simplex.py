import numpy as np
import pytest
from scipy.optimize import linprog

from offline_cmdp.simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, solve_standard_form


def _random_feasible_lp(rng, m, n):
    A = rng.normal(size=(m, n))
    x0 = rng.random(n)
    b = A @ x0
    c = rng.normal(size=n)
    # keep it bounded: add sum x <= big as an extra row with slack
    A = np.vstack([np.hstack([A, np.zeros((m, 1))]), np.ones((1, n + 1))])
    b = np.append(b, x0.sum() + 5)
    return np.append(c, 0.0), A, b


@pytest.mark.parametrize("seed", range(25))
def test_matches_highs(seed):
    rng = np.random.default_rng(seed)
    c, A, b = _random_feasible_lp(rng, 4, 9)
    res = solve_standard_form(c, A, b)
    ref = linprog(-c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    assert res.status == OPTIMAL and ref.status == 0
    assert res.objective == pytest.approx(-ref.fun, abs=1e-8)
    assert np.abs(A @ res.x - b).max() < 1e-8
    # strong duality
    assert res.duals @ b == pytest.approx(res.objective, abs=1e-8)
    assert np.all(c - res.duals @ A <= 1e-8)


def test_negative_rhs_rows():
    A = np.array([[-1.0, -1.0, 1.0]])
    res = solve_standard_form([1.0, 2.0, 0.0], A, [-3.0])
    # -x - y + s = -3 with s >= 0 means x + y >= 3; maximize unbounded
    assert res.status == UNBOUNDED
    res = solve_standard_form([-1.0, -2.0, 0.0], A, [-3.0])
    assert res.status == OPTIMAL and res.objective == pytest.approx(-3.0)
    assert res.duals @ np.array([-3.0]) == pytest.approx(-3.0)


def test_infeasible_certificate():
    A = np.array([[1.0, 1.0], [1.0, 1.0]])
    b = np.array([1.0, 2.0])
    res = solve_standard_form([1.0, 0.0], A, b)
    assert res.status == INFEASIBLE
    y = res.certificate
    assert np.all(y @ A <= 1e-9) and y @ b > 0


def test_redundant_rows():
    A = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 1.0, 1.0]])
    res = solve_standard_form([1.0, 2.0, 0.0], A, [1.0, 2.0, 1.0])
    assert res.status == OPTIMAL and res.objective == pytest.approx(2.0)


def test_degenerate_cycling_example():
    # Beale's example: cycles under the textbook largest-coefficient rule
    c = np.array([0.75, -150, 0.02, -6, 0, 0, 0])
    A = np.array([
        [0.25, -60, -0.04, 9, 1, 0, 0],
        [0.5, -90, -0.02, 3, 0, 1, 0],
        [0, 0, 1, 0, 0, 0, 1],
    ])
    res = solve_standard_form(c, A, [0, 0, 1])
    assert res.status == OPTIMAL and res.objective == pytest.approx(0.05)
