"""Seeded random CMDP instances."""
from __future__ import annotations

import numpy as np

from .core import Cmdp
from .oracle import solve_constrained_lp, slater_margin


def random_cmdp(n_states: int, n_actions: int, n_constraints: int = 0, gamma: float = 0.9,
                seed: int = 0, thresholds=None, concentration: float = 1.0) -> Cmdp:
    """Dirichlet transition rows, uniform [0, 1] rewards, state 0 initial."""
    rng = np.random.Generator(np.random.PCG64(seed))
    P = rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_actions))
    R = rng.random((n_constraints + 1, n_states, n_actions))
    tau = np.zeros(n_constraints) if thresholds is None else thresholds
    return Cmdp(P, R, gamma, 0, tau)


def constraint_range(cmdp: Cmdp, i: int) -> tuple[float, float]:
    """Smallest and largest normalized return (1 - gamma) J_i over all policies."""
    r = cmdp.rewards[i]
    hi = solve_constrained_lp(cmdp.with_rewards(r[None], [])).objective
    lo = -solve_constrained_lp(cmdp.with_rewards(-r[None], [])).objective
    return lo, hi


def random_feasible_cmdp(n_states: int, n_actions: int, n_constraints: int, gamma: float = 0.9,
                         seed: int = 0, min_margin: float = 0.1, max_tries: int = 200,
                         tightness=(0.5, 0.95)) -> tuple[Cmdp, float]:
    """Random CMDP whose thresholds leave a Slater margin of at least
    ``min_margin``; returns the instance and its margin.

    Thresholds are placed at a random fraction of each constraint's
    achievable range and the draw is rejected until the margin is large
    enough.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(max_tries):
        base = random_cmdp(n_states, n_actions, n_constraints, gamma, int(rng.integers(2**31)))
        tau = []
        for i in range(1, n_constraints + 1):
            lo, hi = constraint_range(base, i)
            tau.append(lo + rng.uniform(*tightness) * (hi - lo))
        cmdp = base.with_thresholds(np.clip(tau, 0.0, 1.0))
        phi = slater_margin(cmdp)
        if phi >= min_margin:
            return cmdp, phi
    raise RuntimeError(f"no CMDP with margin >= {min_margin} after {max_tries} draws")
