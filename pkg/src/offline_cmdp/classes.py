"""Tabular function classes used by the primal-dual solvers: the weight box,
the Q box, and the implicit softmax policy class."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WeightClassBox:
    """[0, upper_bound]^n, one coordinate per dataset point."""

    upper_bound: float
    dimension: int

    def __post_init__(self):
        if not self.upper_bound > 0:
            raise ValueError("weight cap must be positive")

    def project(self, v) -> np.ndarray:
        return project_weights(v, self.upper_bound)

    def midpoint(self) -> np.ndarray:
        return np.full(self.dimension, self.upper_bound / 2)

    def contains(self, v, tol: float = 0.0) -> bool:
        v = np.asarray(v)
        return bool(np.all(v >= -tol) and np.all(v <= self.upper_bound + tol))


@dataclass(frozen=True)
class QClassBox:
    """[0, upper]^{S x A}. With upper = r_max / (1 - gamma) it contains Q^pi of
    every policy for every reward bounded by r_max."""

    upper: float

    @classmethod
    def for_rewards(cls, gamma: float, reward_max: float = 1.0) -> "QClassBox":
        return cls(reward_max / (1 - gamma))

    @classmethod
    def for_constrained(cls, gamma: float, dual_bound: float, reward_max: float = 1.0) -> "QClassBox":
        # r_0 + sum_i lambda_i r_i with ||lambda||_1 <= B is bounded by (1 + B) r_max
        return cls((1 + dual_bound) * reward_max / (1 - gamma))

    def argmin_linear(self, coefficients) -> np.ndarray:
        return argmin_linear_q(coefficients, upper=self.upper)

    def contains(self, q, tol: float = 1e-12) -> bool:
        q = np.asarray(q)
        return bool(np.all(q >= -tol) and np.all(q <= self.upper + tol))


@dataclass(frozen=True)
class SoftmaxPolicyClassDescriptor:
    """Pi(Q, C): softmax policies exp(c Q(s, .)) with Q in the box, c in [0, C].

    After t mirror-descent steps from uniform with rate alpha the iterate is
    softmax(alpha * sum of t box members) = softmax(alpha t * mean), so it sits
    in Pi(Q, alpha t) since the box is convex.
    """

    base: QClassBox
    cap: float

    @classmethod
    def after_steps(cls, base: QClassBox, alpha: float, t: int) -> "SoftmaxPolicyClassDescriptor":
        return cls(base, alpha * t)


def project_weights(v, upper_bound: float) -> np.ndarray:
    """Euclidean projection onto [0, upper_bound]^n (coordinate clamp)."""
    return np.clip(np.asarray(v, dtype=float), 0.0, upper_bound)


def argmin_linear_q(coefficients, gamma: float | None = None, upper: float | None = None,
                    tie_tol: float = 0.0) -> np.ndarray:
    """Box vertex minimizing <coefficients, Q>: the top where the coefficient
    is negative, zero elsewhere (ties go to zero).

    Coefficients within ``tie_tol`` of zero count as ties, so that a zero
    computed with rounding noise does not flip the vertex.
    """
    if upper is None:
        if gamma is None:
            raise TypeError("need gamma or an explicit upper bound")
        upper = 1.0 / (1.0 - gamma)
    c = np.asarray(coefficients, dtype=float)
    return np.where(c < -tie_tol, upper, 0.0)
