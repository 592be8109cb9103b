"""Spurious saddle points of restricted Lagrangians, and their repair.

The five-state example below has two actions L/R. From s0 (and from r1),
L moves to the left/right successor with probability 1/2 each and R with
1/4 and 3/4. States l1, l2 and r2 are absorbing; l1 pays 1 and l2 pays
``l2_reward`` per step. With only a few candidates in the primal and dual
classes, the restricted saddle problem can have saddle points whose
extracted policy is suboptimal. Adding the value function of that policy to
the dual class removes them.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import Cmdp, OccupancyMeasure, Policy, extract_policy_from_occupancy, validate_cmdp
from .oracle import (
    bellman_flow_residual,
    evaluate_policy,
    exact_lagrangian,
    exact_lagrangian_decomposed,
    nu_of,
    occupancy_of_policy,
    q_of_policy,
    solve_constrained_lp,
)

S0, L1, R1, L2, R2 = range(5)
LEFT, RIGHT = 0, 1
STATE_NAMES = ["s0", "l1", "r1", "l2", "r2"]

EXACT_TOL = 1e-12
VALUE_TOL = 1e-10


def build_figure1_mdp(l2_reward: float = 4.0) -> Cmdp:
    P = np.zeros((5, 2, 5))
    for s, (left, right) in ((S0, (L1, R1)), (R1, (L2, R2))):
        P[s, LEFT, left] = P[s, LEFT, right] = 0.5
        P[s, RIGHT, left], P[s, RIGHT, right] = 0.25, 0.75
    for s in (L1, L2, R2):
        P[s, :, s] = 1.0
    r = np.zeros((5, 2))
    r[L1] = 1.0
    r[L2] = l2_reward
    return Cmdp(P, r, 0.5, S0, reward_max=max(1.0, l2_reward))


def always(action: int) -> Policy:
    return Policy.deterministic([action] * 5, 2)


def spurious_occupancy() -> OccupancyMeasure:
    """Inadmissible measure: half its mass on (s0, R), the rest split on l1."""
    mu = np.zeros((5, 2))
    mu[S0, RIGHT] = 0.5
    mu[L1, LEFT] = mu[L1, RIGHT] = 0.25
    return OccupancyMeasure(mu)


def l1_occupancy() -> OccupancyMeasure:
    """Inadmissible measure with all mass on l1 (half per action)."""
    mu = np.zeros((5, 2))
    mu[L1] = 0.5
    return OccupancyMeasure(mu)


# ---------------------------------------------------------------------------
# brute-force saddle certification


@dataclass
class FiniteClassSaddleProblem:
    primal: Sequence
    dual: Sequence
    lagrangian: Callable
    # optional vectorized evaluator returning the full payoff matrix
    batch: Callable | None = None

    def __post_init__(self):
        if len(self.primal) == 0 or len(self.dual) == 0:
            raise ValueError("candidate lists must be nonempty")

    def payoff_matrix(self) -> np.ndarray:
        if self.batch is not None:
            return self.batch(self.primal, self.dual)
        return np.array([[self.lagrangian(x, y) for y in self.dual] for x in self.primal])


@dataclass
class SaddleCertificate:
    is_saddle: bool
    worst_violation: float
    value: float
    primal_gain: float
    dual_gain: float


def certify_saddle_point(problem: FiniteClassSaddleProblem, candidate: tuple[int, int],
                         tol: float = EXACT_TOL, payoff: np.ndarray | None = None) -> SaddleCertificate:
    """Check L(x, y_hat) <= L(x_hat, y_hat) <= L(x_hat, y) for every listed x, y.

    ``candidate`` indexes into the primal and dual lists. The primal player
    maximizes and the dual player minimizes.
    """
    i, j = candidate
    M = problem.payoff_matrix() if payoff is None else payoff
    val = M[i, j]
    primal_gain = max(0.0, float(M[:, j].max() - val))
    dual_gain = max(0.0, float(val - M[i, :].min()))
    worst = max(primal_gain, dual_gain)
    return SaddleCertificate(worst <= tol, worst, float(val), primal_gain, dual_gain)


def all_saddle_points(problem: FiniteClassSaddleProblem, tol: float = EXACT_TOL) -> list[tuple[int, int]]:
    M = problem.payoff_matrix()
    ok = (M >= M.max(axis=0, keepdims=True) - tol) & (M <= M.min(axis=1, keepdims=True) + tol)
    return [tuple(int(k) for k in idx) for idx in zip(*np.nonzero(ok))]


def _v_problem(cmdp, us, vs):
    def batch(us, vs):
        mus = np.array([np.asarray(mu) for mu in us])
        resid = np.array([bellman_flow_residual(cmdp, mu) for mu in mus])
        base = np.einsum("ksa,sa->k", mus, cmdp.rewards[0])
        return base[:, None] - resid @ np.array(vs).T

    return FiniteClassSaddleProblem(
        list(us), list(vs), lambda mu, v: exact_lagrangian(cmdp, mu, v), batch)


def _q_problem(cmdp, pairs, qs):
    def batch(pairs, qs):
        mus = np.array([np.asarray(x[0]) for x in pairs])
        gaps = np.array([nu_of(cmdp, x[0], x[1]) for x in pairs]) - mus
        base = np.einsum("ksa,sa->k", mus, cmdp.rewards[0])
        S, A = cmdp.n_states, cmdp.n_actions
        return base[:, None] + gaps.reshape(-1, S * A) @ np.array(qs).reshape(-1, S * A).T

    return FiniteClassSaddleProblem(
        list(pairs), list(qs), lambda x, q: exact_lagrangian_decomposed(cmdp, x[0], x[1], q), batch)


def _cert_json(c: SaddleCertificate) -> dict:
    return {"is_saddle": c.is_saddle, "worst_violation": c.worst_violation, "value": c.value}


# ---------------------------------------------------------------------------
# demonstrations


def demonstrate_prop1(l2_reward: float = 4.0) -> dict:
    """Spurious saddle of L(mu, V) over {mu*, mu~} x {V*}.

    Returns a JSON-ready report; ``report["passed"]`` is False with a list of
    failed checks when any expectation is not met.
    """
    cmdp = build_figure1_mdp(l2_reward)
    lp = solve_constrained_lp(cmdp)
    pi_star = always(LEFT)
    star = evaluate_policy(cmdp, pi_star)
    mu_star = occupancy_of_policy(cmdp, pi_star)
    mu_tilde = spurious_occupancy()
    problem = _v_problem(cmdp, [mu_star, mu_tilde], [star.v])
    cert_tilde = certify_saddle_point(problem, (1, 0))
    cert_star = certify_saddle_point(problem, (0, 0))
    pi_tilde = extract_policy_from_occupancy(mu_tilde)
    j_tilde = evaluate_policy(cmdp, pi_tilde).scalar_return
    j_opt = (lp.objective / (1 - cmdp.gamma)) if lp.feasible else float("nan")

    failures = []
    _expect(failures, "J(pi*) == 1", star.scalar_return, 1.0, VALUE_TOL)
    _expect(failures, "optimal LP return == 1", j_opt, 1.0, VALUE_TOL)
    _expect(failures, "V*", star.v, [1, 2, 2, 8, 0], VALUE_TOL)
    _expect(failures, "J(pi(mu~)) == 13/16", j_tilde, 13 / 16, VALUE_TOL)
    if not cert_tilde.is_saddle:
        failures.append({"check": "(mu~, V*) is a saddle point", "violation": cert_tilde.worst_violation})
    if not cert_star.is_saddle:
        failures.append({"check": "(mu*, V*) is a saddle point", "violation": cert_star.worst_violation})
    if not j_tilde < star.scalar_return:
        failures.append({"check": "J(pi(mu~)) < J(pi*)", "got": [j_tilde, star.scalar_return]})
    return {
        "name": "prop1",
        "l2_reward": l2_reward,
        "J_star": star.scalar_return,
        "J_extracted": j_tilde,
        "gap": star.scalar_return - j_tilde,
        "v_star": star.v.tolist(),
        "mu_star": mu_star.values.tolist(),
        "mu_tilde": mu_tilde.values.tolist(),
        "flow_residual_mu_tilde": bellman_flow_residual(cmdp, mu_tilde).tolist(),
        "extracted_policy": pi_tilde.probs.tolist(),
        "saddle_mu_tilde": _cert_json(cert_tilde),
        "saddle_mu_star": _cert_json(cert_star),
        "failures": failures,
        "passed": not failures,
    }


def demonstrate_prop2(l2_reward: float = 4.0) -> dict:
    """Spurious saddles of the decomposed Lagrangian L(mu, pi; Q).

    Two constructions are reported. ``literal`` uses U = {mu*}, Pi = {pi*,
    always-R}, Q = {Q*} and checks that both policies give value 1/2 and are
    saddle points. On this example L(mu*, pi; Q*) does depend on pi, so that
    check fails. ``repaired`` adds the inadmissible measure mu^ (all mass on
    l1) to U; L(mu^, pi; Q*) = 1/2 for every pi, so (mu^, always-R; Q*) is a
    genuine spurious saddle point. ``passed`` reflects the repaired
    construction; ``literal["holds"]`` records the literal one.
    """
    cmdp = build_figure1_mdp(l2_reward)
    pi_star, pi_r = always(LEFT), always(RIGHT)
    q_star = evaluate_policy(cmdp, pi_star).q
    mu_star = occupancy_of_policy(cmdp, pi_star)
    j_star = evaluate_policy(cmdp, pi_star).scalar_return
    j_r = evaluate_policy(cmdp, pi_r).scalar_return

    lit = _q_problem(cmdp, [(mu_star, pi_star), (mu_star, pi_r)], [q_star])
    lit_certs = [certify_saddle_point(lit, (k, 0)) for k in range(2)]
    lit_values = [c.value for c in lit_certs]
    expected_q = np.array([[1, 1], [2, 2], [2, 0], [8, 8], [0, 0]], dtype=float)
    q_mismatch = [
        {"state": STATE_NAMES[s], "action": "LR"[a], "expected": float(expected_q[s, a]),
         "got": float(q_star[s, a])}
        for s, a in zip(*np.nonzero(np.abs(q_star - expected_q) > VALUE_TOL))
    ]
    lit_holds = (all(c.is_saddle for c in lit_certs)
                 and all(abs(v - 0.5) <= EXACT_TOL for v in lit_values) and j_r < j_star)
    literal = {
        "values": lit_values,
        "saddles": [_cert_json(c) for c in lit_certs],
        "q_star": q_star.tolist(),
        "q_star_mismatch": q_mismatch,
        "holds": bool(lit_holds),
    }

    mu_hat = l1_occupancy()
    pairs = [(mu_star, pi_star), (mu_star, pi_r), (mu_hat, pi_star), (mu_hat, pi_r)]
    rep = _q_problem(cmdp, pairs, [q_star])
    rep_spurious = certify_saddle_point(rep, (3, 0))
    rep_star = certify_saddle_point(rep, (0, 0))
    failures = []
    if not rep_spurious.is_saddle:
        failures.append({"check": "(mu^, always-R; Q*) is a saddle point",
                         "violation": rep_spurious.worst_violation})
    if not rep_star.is_saddle:
        failures.append({"check": "(mu*, pi*; Q*) is a saddle point", "violation": rep_star.worst_violation})
    _expect(failures, "saddle value 1/2", rep_spurious.value, 0.5, EXACT_TOL)
    _expect(failures, "J(pi*) == 1", j_star, 1.0, VALUE_TOL)
    if not j_r < j_star:
        failures.append({"check": "J(always-R) < J(pi*)", "got": [j_r, j_star]})
    return {
        "name": "prop2",
        "l2_reward": l2_reward,
        "J_star": j_star,
        "J_spurious": j_r,
        "literal": literal,
        "repaired": {
            "mu_hat": mu_hat.values.tolist(),
            "values_mu_hat": [rep.lagrangian(pairs[2], q_star), rep.lagrangian(pairs[3], q_star)],
            "saddle_spurious": _cert_json(rep_spurious),
            "saddle_optimal": _cert_json(rep_star),
        },
        "failures": failures,
        "passed": not failures,
    }


def _expect(failures, name, got, want, tol):
    got_a, want_a = np.asarray(got, dtype=float), np.asarray(want, dtype=float)
    if got_a.shape != want_a.shape or not np.all(np.abs(got_a - want_a) <= tol):
        failures.append({"check": name, "expected": want_a.tolist(), "got": got_a.tolist()})


# ---------------------------------------------------------------------------
# realizability repair


def repair_prop1(l2_reward: float = 4.0) -> SaddleCertificate:
    """Certificate for (mu~, V*) once V^{pi(mu~)} joins the dual class."""
    cmdp = build_figure1_mdp(l2_reward)
    mu_star = occupancy_of_policy(cmdp, always(LEFT))
    mu_tilde = spurious_occupancy()
    v_star = evaluate_policy(cmdp, always(LEFT)).v
    v_tilde = evaluate_policy(cmdp, extract_policy_from_occupancy(mu_tilde)).v
    return certify_saddle_point(_v_problem(cmdp, [mu_star, mu_tilde], [v_star, v_tilde]), (1, 0))


def repair_prop2(l2_reward: float = 4.0) -> SaddleCertificate:
    """Certificate for (mu^, always-R; Q*) once Q^{always-R} joins the dual class."""
    cmdp = build_figure1_mdp(l2_reward)
    pi_star, pi_r = always(LEFT), always(RIGHT)
    mu_star = occupancy_of_policy(cmdp, pi_star)
    mu_hat = l1_occupancy()
    pairs = [(mu_star, pi_star), (mu_star, pi_r), (mu_hat, pi_star), (mu_hat, pi_r)]
    qs = [evaluate_policy(cmdp, pi_star).q, q_of_policy(cmdp, pi_r)]
    return certify_saddle_point(_q_problem(cmdp, pairs, qs), (3, 0))


def deterministic_policies(n_states: int, n_actions: int) -> list[Policy]:
    return [Policy.deterministic(acts, n_actions)
            for acts in itertools.product(range(n_actions), repeat=n_states)]


def _sweep_one(cmdp: Cmdp, rng: np.random.Generator, n_random: int, tol: float) -> dict:
    S, A = cmdp.n_states, cmdp.n_actions
    j_star = solve_constrained_lp(cmdp).objective / (1 - cmdp.gamma)
    grid = deterministic_policies(S, A) + [Policy.uniform(S, A)]
    # primal class: admissible vertices plus arbitrary nonnegative measures
    us = [occupancy_of_policy(cmdp, p) for p in grid]
    for _ in range(n_random):
        raw = rng.random((S, A)) * (rng.random((S, A)) < 0.6)
        us.append(OccupancyMeasure(raw / max(raw.sum(), 1e-12)))
    extracted = [extract_policy_from_occupancy(mu) for mu in us]
    policies = grid + extracted
    vs = [evaluate_policy(cmdp, p).v for p in policies]
    qs = [evaluate_policy(cmdp, p).q for p in policies]

    bad = []
    vp = _v_problem(cmdp, us, vs)
    v_saddles = all_saddle_points(vp, tol)
    for i, _ in v_saddles:
        j = evaluate_policy(cmdp, extracted[i]).scalar_return
        if abs(j - j_star) > 1e-6:
            bad.append({"kind": "V", "primal": i, "J": j, "J_star": j_star})

    pairs = [(mu, pi) for mu in us for pi in policies]
    qp = _q_problem(cmdp, pairs, qs)
    q_saddles = all_saddle_points(qp, tol)
    for i, _ in q_saddles:
        j = evaluate_policy(cmdp, pairs[i][1]).scalar_return
        if abs(j - j_star) > 1e-6:
            bad.append({"kind": "Q", "primal": i, "J": j, "J_star": j_star})
    return {"J_star": j_star, "v_saddles": len(v_saddles), "q_saddles": len(q_saddles), "bad": bad}


def verify_realizability_fix(trials: int = 20, n_states: int = 4, n_actions: int = 2,
                             seed: int = 0, n_random: int = 6, tol: float = 1e-10) -> dict:
    """Brute-force sweep over random MDPs whose dual classes contain the value
    functions of every candidate's extracted policy; any certified saddle
    point with a suboptimal extracted policy is reported as a counterexample."""
    from .generators import random_cmdp

    rng = np.random.Generator(np.random.PCG64(seed))
    p1 = repair_prop1()
    p2 = repair_prop2()
    runs = []
    for k in range(trials):
        cmdp = random_cmdp(n_states, n_actions, 0, gamma=0.9, seed=int(rng.integers(2**31)))
        assert not validate_cmdp(cmdp)
        runs.append(_sweep_one(cmdp, rng, n_random, tol))
    counterexamples = [b for r in runs for b in r["bad"]]
    return {
        "name": "realizability",
        "prop1_spurious_after_repair": _cert_json(p1),
        "prop2_spurious_after_repair": _cert_json(p2),
        "trials": trials,
        "saddles_checked": sum(r["v_saddles"] + r["q_saddles"] for r in runs),
        "counterexamples": counterexamples,
        "passed": (not p1.is_saddle) and (not p2.is_saddle) and not counterexamples,
    }
