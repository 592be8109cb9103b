"""Primal-dual offline solvers.

The w-player runs projected online gradient ascent over the weight box, the
policy player runs mirror descent (multiplicative weights), and the Q- and
lambda-players best-respond greedily. ``run_pdorl`` handles the unconstrained
problem and ``run_pdocrl`` the constrained one; both return the uniform
mixture of the policy iterates.

Identical (s, a, s') triples receive identical gradients at every step and
start from the same point, so their weights stay equal forever. The loop
therefore keeps one weight per distinct triple (with its multiplicity),
which is exact and makes an iteration cost O(#distinct triples + |S||A|).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .classes import QClassBox, WeightClassBox, argmin_linear_q, project_weights
from .core import Cmdp, Policy, softmax_rows
from .data import OfflineDataset
from .oracle import batch_returns

EVAL_BATCH = 1024
# Q-player coefficients closer to zero than this are exact ties up to rounding
Q_TIE_TOL = 1e-12
RESERVOIR_SIZE = 32


class SolverDivergence(FloatingPointError):
    """The estimated Lagrangian became non-finite."""


# ---------------------------------------------------------------------------
# players


@dataclass(frozen=True)
class OgdOracleState:
    current: np.ndarray
    step_size: float
    bound: float
    upper_bound: float

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step size must be positive")


def ogd_step(state: OgdOracleState, gradient) -> OgdOracleState:
    """One projected ascent step: project(current + eta * gradient)."""
    g = np.asarray(gradient, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient must be finite")
    nxt = project_weights(state.current + state.step_size * g, state.upper_bound)
    return OgdOracleState(nxt, state.step_size, state.bound, state.upper_bound)


def mirror_descent_update(policy, q, alpha: float) -> Policy:
    """pi'(.|s) proportional to pi(.|s) exp(alpha q(s, .)), at every state."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    p = np.asarray(policy, dtype=float)
    with np.errstate(divide="ignore"):
        logits = np.log(p) + alpha * np.asarray(q, dtype=float)
    return Policy(softmax_rows(logits))


def lambda_best_response(data_terms, dual_bound: float) -> np.ndarray:
    """Minimize <lam, c> over B * {lam >= 0, sum lam <= 1}.

    ``data_terms`` are c_i = (1/n) sum_j w_j r_i(s_j, a_j) - tau_i. Returns
    B e_i for the first index attaining min c if that minimum is negative,
    else zero.
    """
    if not dual_bound > 0:
        raise ValueError("dual bound must be positive")
    c = np.asarray(data_terms, dtype=float)
    lam = np.zeros_like(c)
    if c.size and c.min() < 0:
        lam[int(np.argmin(c))] = dual_bound
    return lam


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class SolverProblem:
    """What the solver may know about the CMDP: rewards, discount, initial
    state, thresholds. Transitions are only seen through the dataset."""

    rewards: np.ndarray
    gamma: float
    initial_state: int
    thresholds: np.ndarray
    reward_max: float = 1.0

    @classmethod
    def from_cmdp(cls, cmdp: Cmdp) -> "SolverProblem":
        return cls(cmdp.rewards, cmdp.gamma, cmdp.initial_state, cmdp.thresholds, cmdp.reward_max)

    @property
    def n_states(self) -> int:
        return self.rewards.shape[1]

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[2]

    @property
    def n_constraints(self) -> int:
        return self.rewards.shape[0] - 1


@dataclass(frozen=True)
class SolverClasses:
    weights: WeightClassBox
    q: QClassBox


def default_classes(problem: SolverProblem, weight_cap: float, n: int,
                    dual_bound: float | None = None) -> SolverClasses:
    if dual_bound is None:
        q = QClassBox.for_rewards(problem.gamma, problem.reward_max)
    else:
        q = QClassBox.for_constrained(problem.gamma, dual_bound, problem.reward_max)
    return SolverClasses(WeightClassBox(weight_cap, n), q)


@dataclass(frozen=True)
class SolverConfig:
    T: int
    alpha: float | None = None
    dual_bound: float | None = None
    seed: int = 0
    record_trace: bool = False
    eta: float | None = None
    tie_weights: bool = False

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.dual_bound is not None and not self.dual_bound > 0:
            raise ValueError("dual bound must be positive")
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")


def default_alpha(problem: SolverProblem, T: int) -> float:
    """(1 - gamma) sqrt(log |A|) / sqrt(T), divided by the reward scale."""
    log_a = math.log(problem.n_actions) if problem.n_actions > 1 else 1.0
    return (1 - problem.gamma) * math.sqrt(log_a) / (problem.reward_max * math.sqrt(T))


def dual_bound_from_margin(phi: float) -> float:
    if not phi > 0:
        raise ValueError(f"Slater margin {phi} must be positive")
    return 1.0 + 1.0 / phi


def gradient_bound(problem: SolverProblem, classes: SolverClasses) -> float:
    """Cap on |r + gamma Q(s', pi) - Q(s, a)| over the Q box: the reward scale
    of the box plus its height, (1 - gamma) * upper + upper."""
    return classes.q.upper * (2 - problem.gamma)


def default_eta(problem: SolverProblem, classes: SolverClasses, T: int) -> float:
    return classes.weights.upper_bound / (gradient_bound(problem, classes) * math.sqrt(T))


# ---------------------------------------------------------------------------
# results


@dataclass
class IterationRecord:
    t: int
    L_hat: float
    lam: np.ndarray
    w_norm_inf: float
    policy: np.ndarray
    q: np.ndarray
    group_weights: np.ndarray


@dataclass
class SolverResult:
    """Mixture Uniform(pi_1..pi_T) plus summaries.

    ``mixture`` holds all T iterates when the trace was recorded and a
    reservoir sample of them otherwise; ``mixture_returns`` (when an
    evaluator was supplied) is the exact average of the per-iterate returns.
    """

    T: int
    mixture: list[np.ndarray]
    mixture_complete: bool
    lambda_avg: np.ndarray
    L_hat: np.ndarray
    w_norm_inf: np.ndarray
    lambdas: np.ndarray
    returns: np.ndarray | None = None
    mixture_returns: np.ndarray | None = None
    records: list[IterationRecord] = field(default_factory=list)
    group_index: np.ndarray | None = None
    eta: float = 0.0
    alpha: float = 0.0

    def expand_weights(self, group_weights) -> np.ndarray:
        """Per-datapoint weight vector from the per-triple storage."""
        return np.asarray(group_weights)[self.group_index]

    def write_trace(self, path) -> None:
        n_ret = 0 if self.returns is None else self.returns.shape[1]
        I = self.lambdas.shape[1]
        header = ["t", "L_hat"] + [f"J{i}_exact" for i in range(n_ret)]
        header += [f"lambda_{i + 1}" for i in range(I)] + ["w_norm_inf"]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            for k in range(self.T):
                row = [k + 1, _fmt(self.L_hat[k])]
                if self.returns is not None:
                    row += [_fmt(x) for x in self.returns[k]]
                row += [_fmt(x) for x in self.lambdas[k]] + [_fmt(self.w_norm_inf[k])]
                w.writerow(row)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def evaluate_mixture(cmdp: Cmdp, mixture) -> np.ndarray:
    """J_0..J_I of Uniform(mixture): the average of the exact member returns."""
    pis = np.asarray([np.asarray(p, dtype=float) for p in mixture])
    if pis.shape[0] == 0:
        raise ValueError("mixture is empty")
    return batch_returns(cmdp, pis).mean(axis=0)


def make_evaluator(cmdp: Cmdp) -> Callable[[np.ndarray], np.ndarray]:
    return lambda pis: batch_returns(cmdp, pis)


# ---------------------------------------------------------------------------
# main loop


def _compress(dataset: OfflineDataset, S: int, A: int):
    key = (dataset.states * A + dataset.actions) * S + dataset.next_states
    uniq, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
    sa, nxt = np.divmod(uniq, S)
    s, a = np.divmod(sa, A)
    return s, a, nxt, counts.astype(float), inverse


def _primal_dual_loop(problem: SolverProblem, dataset: OfflineDataset, classes: SolverClasses,
                      config: SolverConfig, constrained: bool, evaluator=None) -> SolverResult:
    S, A, I = problem.n_states, problem.n_actions, problem.n_constraints
    n, T, gamma, s0 = len(dataset), config.T, problem.gamma, problem.initial_state
    if n < 1:
        raise ValueError("dataset is empty")
    alpha = config.alpha if config.alpha is not None else default_alpha(problem, T)
    eta = config.eta if config.eta is not None else default_eta(problem, classes, T)
    B = config.dual_bound if constrained else None
    if constrained and B is None:
        raise ValueError("constrained solver needs a dual bound")
    C_W, q_top = classes.weights.upper_bound, classes.q.upper
    tau = np.asarray(problem.thresholds, dtype=float)

    gs, ga, gn, counts, inverse = _compress(dataset, S, A)
    frac = counts / n
    sa_idx = gs * A + ga
    sa_counts = np.maximum(np.bincount(sa_idx, weights=counts, minlength=S * A), 1.0)
    r_groups = problem.rewards[:, gs, ga]  # (I+1, G)
    d0_head = np.zeros(S)
    d0_head[s0] = 1 - gamma

    w = np.full(gs.shape[0], C_W / 2)
    logits = np.zeros((S, A))
    pi = np.full((S, A), 1.0 / A)
    q = np.zeros((S, A))
    lam = np.zeros(I)
    lam_sum = np.zeros(I)

    L_hat = np.empty(T)
    w_inf = np.empty(T)
    lambdas = np.zeros((T, I))
    returns = None if evaluator is None else np.empty((T, I + 1))
    rng = np.random.Generator(np.random.PCG64(config.seed))
    reservoir: list[np.ndarray] = []
    every: list[np.ndarray] = []
    records: list[IterationRecord] = []
    pending: list[np.ndarray] = []
    pending_start = 0

    def flush():
        nonlocal pending, pending_start
        if pending:
            returns[pending_start:pending_start + len(pending)] = evaluator(np.stack(pending))
            pending_start += len(pending)
            pending = []

    def reward_now(lam_vec):
        if not constrained:
            return r_groups[0]
        return r_groups[0] + lam_vec @ r_groups[1:]

    for t in range(1, T + 1):
        if t > 1:
            q_pi = (pi * q).sum(axis=1)
            h = reward_now(lam) + gamma * q_pi[gn] - q[gs, ga]
            if config.tie_weights:
                h = (np.bincount(sa_idx, weights=counts * h, minlength=S * A) / sa_counts)[sa_idx]
            w = np.clip(w + eta * h, 0.0, C_W)
        logits = logits + alpha * q
        pi = softmax_rows(logits)
        # Q-player: coefficient of Q(s, a) is nu_w - mu_w
        mu_w = np.bincount(gs * A + ga, weights=frac * w, minlength=S * A).reshape(S, A)
        in_w = d0_head + gamma * np.bincount(gn, weights=frac * w, minlength=S)
        coef = pi * in_w[:, None] - mu_w
        q = argmin_linear_q(coef, upper=q_top, tie_tol=Q_TIE_TOL)
        if constrained:
            c = r_groups[1:] @ (frac * w) - tau
            lam = lambda_best_response(c, B)
            lam_sum += lam
        q_pi = (pi * q).sum(axis=1)
        val = (1 - gamma) * q_pi[s0] + np.sum(frac * w * (reward_now(lam) + gamma * q_pi[gn] - q[gs, ga]))
        if constrained:
            val -= lam @ tau
        if not math.isfinite(val):
            raise SolverDivergence(f"estimated Lagrangian is {val} at iteration {t}")
        L_hat[t - 1] = val
        w_inf[t - 1] = w.max()
        lambdas[t - 1] = lam

        if config.record_trace:
            every.append(pi)
            records.append(IterationRecord(t, val, lam.copy(), w.max(), pi, q, w.copy()))
        elif len(reservoir) < RESERVOIR_SIZE:
            reservoir.append(pi)
        else:
            j = int(rng.integers(t))
            if j < RESERVOIR_SIZE:
                reservoir[j] = pi
        if evaluator is not None:
            pending.append(pi)
            if len(pending) >= EVAL_BATCH:
                flush()
    if evaluator is not None:
        flush()

    return SolverResult(
        T=T,
        mixture=every if config.record_trace else reservoir,
        mixture_complete=config.record_trace,
        lambda_avg=lam_sum / T,
        L_hat=L_hat,
        w_norm_inf=w_inf,
        lambdas=lambdas,
        returns=returns,
        mixture_returns=None if returns is None else returns.mean(axis=0),
        records=records,
        group_index=inverse,
        eta=eta,
        alpha=alpha,
    )


def run_pdorl(problem: SolverProblem, dataset: OfflineDataset, classes: SolverClasses,
              config: SolverConfig, evaluator=None) -> SolverResult:
    """Unconstrained primal-dual offline RL; only r_0 is used."""
    return _primal_dual_loop(problem, dataset, classes, config, False, evaluator)


def run_pdocrl(problem: SolverProblem, dataset: OfflineDataset, classes: SolverClasses,
               config: SolverConfig, evaluator=None) -> SolverResult:
    """Constrained primal-dual offline RL with a greedy multiplier player."""
    if problem.n_constraints < 1:
        raise ValueError("constrained solver needs at least one constraint")
    return _primal_dual_loop(problem, dataset, classes, config, True, evaluator)
