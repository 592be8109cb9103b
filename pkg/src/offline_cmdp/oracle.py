"""Exact ground truth on small CMDPs.

Policy evaluation, occupancy measures, flow residuals, the (constrained)
occupancy LP and its duals, exact Lagrangians, concentrability and the
Slater margin. Everything downstream is measured against this module.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Cmdp, OccupancyMeasure, Policy, ValueFunctions, extract_policy_from_occupancy
from .simplex import INFEASIBLE, OPTIMAL, solve_standard_form

FEAS_TOL = 1e-8
GAP_TOL = 1e-6


class NumericalError(RuntimeError):
    pass


def _policy_kernel(cmdp: Cmdp, pi: np.ndarray) -> np.ndarray:
    return np.einsum("sa,sat->st", pi, cmdp.transition)


def evaluate_policy(cmdp: Cmdp, policy, reward_index: int = 0) -> ValueFunctions:
    """V, Q and J_i = V(s_0) of ``policy`` for reward ``r_i`` by a direct solve."""
    if not 0 <= reward_index <= cmdp.n_constraints:
        raise IndexError(f"reward index {reward_index} out of range 0..{cmdp.n_constraints}")
    pi = np.asarray(policy, dtype=float)
    r = cmdp.rewards[reward_index]
    P_pi = _policy_kernel(cmdp, pi)
    r_pi = (pi * r).sum(axis=1)
    M = np.eye(cmdp.n_states) - cmdp.gamma * P_pi
    v = np.linalg.solve(M, r_pi)
    resid = np.abs(M @ v - r_pi).max()
    if resid > FEAS_TOL:
        raise NumericalError(f"policy evaluation residual {resid:.3g}")
    q = r + cmdp.gamma * cmdp.transition @ v
    return ValueFunctions(v=v, q=q, scalar_return=float(v[cmdp.initial_state]))


def q_of_policy(cmdp: Cmdp, policy, reward=None) -> np.ndarray:
    """Q^pi for an arbitrary reward table (defaults to r_0)."""
    pi = np.asarray(policy, dtype=float)
    r = cmdp.rewards[0] if reward is None else np.asarray(reward, dtype=float)
    M = np.eye(cmdp.n_states) - cmdp.gamma * _policy_kernel(cmdp, pi)
    v = np.linalg.solve(M, (pi * r).sum(axis=1))
    return r + cmdp.gamma * cmdp.transition @ v


def batch_returns(cmdp: Cmdp, policies) -> np.ndarray:
    """Exact returns J_0..J_I for a stack of policies ``(K, S, A)`` -> ``(K, I+1)``."""
    pis = np.asarray(policies, dtype=float)
    if pis.ndim == 2:
        pis = pis[None]
    P_pi = np.einsum("ksa,sat->kst", pis, cmdp.transition)
    r_pi = np.einsum("ksa,isa->ksi", pis, cmdp.rewards)
    M = np.eye(cmdp.n_states)[None] - cmdp.gamma * P_pi
    v = np.linalg.solve(M, r_pi)
    return v[:, cmdp.initial_state, :]


def occupancy_of_policy(cmdp: Cmdp, policy) -> OccupancyMeasure:
    """mu^pi(s,a) = (1 - gamma) sum_t gamma^t P^pi(s_t = s, a_t = a)."""
    pi = np.asarray(policy, dtype=float)
    M = np.eye(cmdp.n_states) - cmdp.gamma * _policy_kernel(cmdp, pi).T
    rhs = (1 - cmdp.gamma) * cmdp.d0
    d = np.linalg.solve(M, rhs)
    mu = np.clip(d, 0.0, None)[:, None] * pi
    resid = np.abs(bellman_flow_residual(cmdp, mu)).max()
    if resid > FEAS_TOL:
        raise NumericalError(f"occupancy flow residual {resid:.3g}")
    return OccupancyMeasure(mu)


def inflow(cmdp: Cmdp, mu) -> np.ndarray:
    """(1 - gamma) d_0 + gamma P^T mu, per state."""
    mu = np.asarray(mu, dtype=float)
    return (1 - cmdp.gamma) * cmdp.d0 + cmdp.gamma * np.einsum("sa,sat->t", mu, cmdp.transition)


def bellman_flow_residual(cmdp: Cmdp, mu) -> np.ndarray:
    """E^T mu - (1 - gamma) d_0 - gamma P^T mu, per state."""
    mu = np.asarray(mu, dtype=float)
    return mu.sum(axis=1) - inflow(cmdp, mu)


@dataclass
class LpSolution:
    mu_star: OccupancyMeasure | None
    policy_star: Policy | None
    objective: float
    dual_v: np.ndarray | None
    dual_lambda: np.ndarray
    feasible: bool
    certificate: np.ndarray | None = None
    violated: list[int] = field(default_factory=list)

    def to_json(self, phi: float | None = None) -> dict:
        doc = {
            "feasible": self.feasible,
            "objective": self.objective if self.feasible else None,
            "mu_star": None if self.mu_star is None else self.mu_star.values.tolist(),
            "policy_star": None if self.policy_star is None else self.policy_star.probs.tolist(),
            "v_star": None if self.dual_v is None else self.dual_v.tolist(),
            "lambda_star": self.dual_lambda.tolist(),
        }
        if phi is not None:
            doc["phi"] = phi
        if not self.feasible:
            doc["violated_constraints"] = list(self.violated)
            doc["certificate"] = None if self.certificate is None else self.certificate.tolist()
        return doc


def _flow_matrix(cmdp: Cmdp) -> np.ndarray:
    S, A = cmdp.n_states, cmdp.n_actions
    E_T = np.repeat(np.eye(S), A, axis=1)
    P_T = cmdp.transition.reshape(S * A, S).T
    return E_T - cmdp.gamma * P_T


def solve_constrained_lp(cmdp: Cmdp) -> LpSolution:
    """max <mu, r_0> over admissible mu with <mu, r_i> >= tau_i.

    Columns are the S*A occupancy entries followed by one surplus variable
    per constraint. The flow-row duals are V* (for the Lagrangian reward
    r_0 + sum_i lambda_i r_i) and the constraint-row duals are -lambda*.
    """
    S, A, I = cmdp.n_states, cmdp.n_actions, cmdp.n_constraints
    n_mu = S * A
    A_eq = np.zeros((S + I, n_mu + I))
    A_eq[:S, :n_mu] = _flow_matrix(cmdp)
    A_eq[S:, :n_mu] = cmdp.rewards[1:].reshape(I, n_mu)
    A_eq[S:, n_mu:] = -np.eye(I)
    b = np.concatenate([(1 - cmdp.gamma) * cmdp.d0, cmdp.thresholds])
    c = np.concatenate([cmdp.rewards[0].reshape(n_mu), np.zeros(I)])
    res = solve_standard_form(c, A_eq, b)
    if res.status == INFEASIBLE:
        return LpSolution(
            None, None, float("nan"), None, np.zeros(I), False,
            certificate=res.certificate, violated=_violated_constraints(cmdp),
        )
    if res.status != OPTIMAL:
        raise NumericalError(f"occupancy LP returned status {res.status}")
    mu = res.x[:n_mu].reshape(S, A)
    lam = np.clip(-res.duals[S:], 0.0, None)
    return LpSolution(
        mu_star=OccupancyMeasure(mu),
        policy_star=extract_policy_from_occupancy(mu),
        objective=res.objective,
        dual_v=res.duals[:S].copy(),
        dual_lambda=lam,
        feasible=True,
    )


def _violated_constraints(cmdp: Cmdp) -> list[int]:
    """1-based indices of constraints unattainable on their own; all of them
    if only their combination is infeasible."""
    bad = []
    for i in range(1, cmdp.n_constraints + 1):
        single = cmdp.with_rewards(cmdp.rewards[[i]], [])
        if solve_constrained_lp(single).objective < cmdp.thresholds[i - 1] - FEAS_TOL:
            bad.append(i)
    return bad or list(range(1, cmdp.n_constraints + 1))


def optimal_policy(cmdp: Cmdp) -> Policy:
    sol = solve_constrained_lp(cmdp)
    if not sol.feasible:
        raise ValueError("CMDP is infeasible")
    return sol.policy_star


def exact_lagrangian(cmdp: Cmdp, mu, v, reward_index: int = 0) -> float:
    """L(mu, V) = <mu, r> + <V, (1 - gamma) d_0 + gamma P^T mu - E^T mu>."""
    mu = np.asarray(mu, dtype=float)
    v = np.asarray(v, dtype=float)
    r = cmdp.rewards[reward_index]
    return float((mu * r).sum() - v @ bellman_flow_residual(cmdp, mu))


def nu_of(cmdp: Cmdp, mu, policy) -> np.ndarray:
    """nu_{pi,mu}(s,a) = pi(a|s) ((1 - gamma) d_0(s) + gamma [P^T mu](s))."""
    return np.asarray(policy, dtype=float) * inflow(cmdp, mu)[:, None]


def exact_lagrangian_decomposed(cmdp: Cmdp, mu, policy, q, lam=None) -> float:
    """<mu, r_0> + <Q, nu_{pi,mu} - mu> [+ sum_i lam_i (<mu, r_i> - tau_i)]."""
    mu = np.asarray(mu, dtype=float)
    q = np.asarray(q, dtype=float)
    val = (mu * cmdp.rewards[0]).sum() + (q * (nu_of(cmdp, mu, policy) - mu)).sum()
    if lam is not None:
        lam = np.asarray(lam, dtype=float)
        if lam.shape[0] != cmdp.n_constraints:
            raise ValueError(f"lambda has {lam.shape[0]} entries, expected {cmdp.n_constraints}")
        if lam.shape[0]:
            val += lam @ (np.einsum("isa,sa->i", cmdp.rewards[1:], mu) - cmdp.thresholds)
    return float(val)


def concentrability(cmdp: Cmdp, policy_star, mu_d) -> float:
    """max over supp(mu^pi*) of mu^pi*(s,a) / mu_D(s,a); inf if mu_D misses
    part of that support."""
    mu = occupancy_of_policy(cmdp, policy_star).values
    mu_d = np.asarray(mu_d, dtype=float)
    supp = mu > 0
    if np.any(mu_d[supp] <= 0):
        return float("inf")
    return float((mu[supp] / mu_d[supp]).max())


def slater_margin(cmdp: Cmdp) -> float:
    """Largest phi with <mu, r_i> >= tau_i + phi for all i over admissible mu.

    Negative when the constraints are infeasible.
    """
    S, A, I = cmdp.n_states, cmdp.n_actions, cmdp.n_constraints
    if I < 1:
        raise ValueError("Slater margin needs at least one constraint")
    n_mu = S * A
    # columns: mu, t_plus, t_minus, surplus
    n = n_mu + 2 + I
    A_eq = np.zeros((S + I, n))
    A_eq[:S, :n_mu] = _flow_matrix(cmdp)
    A_eq[S:, :n_mu] = cmdp.rewards[1:].reshape(I, n_mu)
    A_eq[S:, n_mu] = -1.0
    A_eq[S:, n_mu + 1] = 1.0
    A_eq[S:, n_mu + 2:] = -np.eye(I)
    b = np.concatenate([(1 - cmdp.gamma) * cmdp.d0, cmdp.thresholds])
    c = np.zeros(n)
    c[n_mu], c[n_mu + 1] = 1.0, -1.0
    res = solve_standard_form(c, A_eq, b)
    if res.status != OPTIMAL:
        raise NumericalError(f"margin LP returned status {res.status}")
    return res.objective
