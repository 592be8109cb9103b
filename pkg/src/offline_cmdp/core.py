"""Finite constrained MDPs, policies, occupancy measures and the pure
structural operations on them (policy extraction, softmax, distances).

States and actions are dense integer indices. Every map is a dense numpy
array: transitions ``(S, A, S)``, rewards ``(I + 1, S, A)``, policies and
occupancy measures ``(S, A)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROW_TOL = 1e-12


def _renormalize_rows(rows: np.ndarray) -> np.ndarray:
    # Only rows already within ROW_TOL of one are touched; anything else is
    # left as is so that validation can report it.
    sums = rows.sum(axis=-1, keepdims=True)
    close = np.abs(sums - 1.0) <= ROW_TOL
    safe = np.where(close, sums, 1.0)
    return np.where(close, rows / safe, rows)


@dataclass(frozen=True)
class Cmdp:
    """A finite discounted CMDP with a deterministic initial state.

    ``rewards[0]`` is the primary reward r_0 and ``rewards[1:]`` are the
    constraint rewards r_1..r_I, with ``thresholds[i - 1]`` the threshold of
    r_i on the normalized scale (1 - gamma) * J_i. With I = 0 this is an
    ordinary MDP.

    Rewards are expected in ``[0, reward_max]``; ``reward_max`` is 1 except
    for hand-built examples that use larger rewards.

    Construction does not validate; use :func:`validate_cmdp`. Rows within
    1e-12 of summing to one are renormalized.
    """

    transition: np.ndarray
    rewards: np.ndarray
    gamma: float
    initial_state: int
    thresholds: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reward_max: float = 1.0

    def __post_init__(self):
        P = _renormalize_rows(np.array(self.transition, dtype=float))
        R = np.array(self.rewards, dtype=float)
        if R.ndim == 2:
            R = R[None]
        tau = np.array(self.thresholds, dtype=float).reshape(-1)
        for arr in (P, R, tau):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "rewards", R)
        object.__setattr__(self, "thresholds", tau)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "initial_state", int(self.initial_state))
        object.__setattr__(self, "reward_max", float(self.reward_max))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.rewards.shape[0] - 1

    @property
    def d0(self) -> np.ndarray:
        d = np.zeros(self.n_states)
        d[self.initial_state] = 1.0
        return d

    def with_rewards(self, rewards, thresholds=None) -> "Cmdp":
        if thresholds is None:
            thresholds = self.thresholds
        return Cmdp(self.transition, rewards, self.gamma, self.initial_state, thresholds,
                    self.reward_max)

    def with_thresholds(self, thresholds) -> "Cmdp":
        return self.with_rewards(self.rewards, thresholds)

    def unconstrained(self) -> "Cmdp":
        """The same MDP with only the primary reward."""
        return self.with_rewards(self.rewards[:1], [])

    def to_json(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "initial_state": self.initial_state,
            "transition": self.transition.tolist(),
            "rewards": self.rewards.tolist(),
            "thresholds": self.thresholds.tolist(),
            "reward_max": self.reward_max,
        }


class CmdpFormatError(ValueError):
    """A CMDP document is missing a field or has the wrong shape."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def cmdp_from_json(doc: dict) -> Cmdp:
    """Parse the CMDP JSON schema; raises :class:`CmdpFormatError` naming the
    offending field."""
    if not isinstance(doc, dict):
        raise CmdpFormatError("<root>", "expected a JSON object")
    required = ["n_states", "n_actions", "gamma", "initial_state", "transition", "rewards"]
    for name in required:
        if name not in doc:
            raise CmdpFormatError(name, "missing field")
    try:
        S = int(doc["n_states"])
        A = int(doc["n_actions"])
    except (TypeError, ValueError) as exc:
        raise CmdpFormatError("n_states/n_actions", str(exc)) from None

    def array(name, shape_desc, ndim):
        try:
            arr = np.asarray(doc[name], dtype=float)
        except (TypeError, ValueError) as exc:
            raise CmdpFormatError(name, f"not a numeric array ({exc})") from None
        if arr.ndim != ndim:
            raise CmdpFormatError(name, f"expected shape {shape_desc}, got {arr.shape}")
        return arr

    P = array("transition", "[s][a][s']", 3)
    if P.shape != (S, A, S):
        raise CmdpFormatError("transition", f"expected shape {(S, A, S)}, got {P.shape}")
    R = array("rewards", "[i][s][a]", 3)
    if R.shape[1:] != (S, A) or R.shape[0] < 1:
        raise CmdpFormatError("rewards", f"expected shape (I+1, {S}, {A}), got {R.shape}")
    tau = np.asarray(doc.get("thresholds", []), dtype=float).reshape(-1)
    if tau.shape[0] != R.shape[0] - 1:
        raise CmdpFormatError(
            "thresholds", f"expected {R.shape[0] - 1} entries, got {tau.shape[0]}"
        )
    try:
        gamma = float(doc["gamma"])
        s0 = int(doc["initial_state"])
    except (TypeError, ValueError) as exc:
        raise CmdpFormatError("gamma/initial_state", str(exc)) from None
    if not 0 <= s0 < S:
        raise CmdpFormatError("initial_state", f"{s0} not in 0..{S - 1}")
    try:
        reward_max = float(doc.get("reward_max", 1.0))
    except (TypeError, ValueError) as exc:
        raise CmdpFormatError("reward_max", str(exc)) from None
    return Cmdp(P, R, gamma, s0, tau, reward_max)


@dataclass(frozen=True)
class Violation:
    field: str
    index: tuple
    message: str

    def __str__(self):
        where = f"{self.field}{list(self.index)}" if self.index else self.field
        return f"{where}: {self.message}"


def validate_cmdp(cmdp: Cmdp, tol: float = ROW_TOL) -> list[Violation]:
    """Return every invariant violation of ``cmdp`` (empty list if valid)."""
    out = []
    P = cmdp.transition
    if P.ndim != 3 or P.shape[0] != P.shape[2]:
        return [Violation("transition", (), f"bad shape {P.shape}")]
    S, A = P.shape[:2]
    for s in range(S):
        for a in range(A):
            row = P[s, a]
            if np.any(row < 0) or abs(row.sum() - 1.0) > tol:
                out.append(Violation(
                    "transition", (s, a),
                    f"row must be a probability vector (sum={row.sum():.15g}, min={row.min():.3g})",
                ))
    R = cmdp.rewards
    if R.shape[1:] != (S, A):
        out.append(Violation("rewards", (), f"bad shape {R.shape}"))
    else:
        bad = (R < 0) | (R > cmdp.reward_max) | ~np.isfinite(R)
        for idx in zip(*np.nonzero(bad)):
            out.append(Violation("rewards", tuple(int(i) for i in idx),
                                 f"value {R[idx]} outside [0, {cmdp.reward_max:g}]"))
    if not 0.0 < cmdp.gamma < 1.0:
        out.append(Violation("gamma", (), f"{cmdp.gamma} not in (0, 1)"))
    if not 0 <= cmdp.initial_state < S:
        out.append(Violation("initial_state", (), f"{cmdp.initial_state} not a state"))
    tau = cmdp.thresholds
    if tau.shape[0] != R.shape[0] - 1:
        out.append(Violation("thresholds", (), f"length {tau.shape[0]} != I = {R.shape[0] - 1}"))
    else:
        for i in np.nonzero((tau < 0) | (tau > 1))[0]:
            out.append(Violation("thresholds", (int(i),), f"{tau[i]} outside [0, 1]"))
    return out


@dataclass(frozen=True)
class Policy:
    """Stationary policy as an ``(S, A)`` row-stochastic array."""

    probs: np.ndarray

    def __post_init__(self):
        p = _renormalize_rows(np.array(self.probs, dtype=float))
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "Policy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions, n_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        p = np.zeros((actions.shape[0], n_actions))
        p[np.arange(actions.shape[0]), actions] = 1.0
        return cls(p)

    def is_valid(self, tol: float = ROW_TOL) -> bool:
        p = self.probs
        return bool(np.all(p >= 0) and np.all(np.abs(p.sum(axis=1) - 1.0) <= tol))


@dataclass(frozen=True)
class OccupancyMeasure:
    """Nonnegative ``(S, A)`` measure. Admissibility (flow balance, unit mass)
    is not enforced here: inadmissible measures are needed to build the
    counterexamples."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if np.any(v < 0):
            raise ValueError("occupancy measure must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def state_marginal(self) -> np.ndarray:
        return self.values.sum(axis=1)


@dataclass(frozen=True)
class ValueFunctions:
    v: np.ndarray
    q: np.ndarray
    scalar_return: float


def extract_policy_from_occupancy(mu, n_actions: int | None = None) -> Policy:
    """pi(a|s) = mu(s,a) / sum_a' mu(s,a'), uniform where the row is empty."""
    mu = np.asarray(mu, dtype=float)
    if n_actions is not None and mu.shape[1] != n_actions:
        raise ValueError(f"occupancy has {mu.shape[1]} actions, expected {n_actions}")
    A = mu.shape[1]
    rows = mu.sum(axis=1, keepdims=True)
    out = np.full(mu.shape, 1.0 / A)
    pos = rows[:, 0] > 0
    out[pos] = mu[pos] / rows[pos]
    return Policy(out)


def extract_policy_from_weights(w, mu_d) -> Policy:
    """Extraction through mu = w * mu_D; needs the data distribution."""
    w = np.asarray(w, dtype=float)
    mu_d = np.asarray(mu_d, dtype=float)
    return extract_policy_from_occupancy(w * mu_d)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_policy(q, c: float) -> Policy:
    """Member of the softmax class: pi(.|s) proportional to exp(c q(s, .))."""
    if c < 0:
        raise ValueError("inverse temperature must be nonnegative")
    return Policy(softmax_rows(c * np.asarray(q, dtype=float)))


def policy_distance_inf1(p1, p2) -> float:
    """sup_s sum_a |p1(a|s) - p2(a|s)|."""
    a, b = np.asarray(p1, dtype=float), np.asarray(p2, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"policy shapes differ: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum(axis=1).max())
