"""Empirical Lagrangians computed from an offline dataset.

Weights are per datapoint (an n-vector), so duplicate (s, a) pairs carry
independent coordinates. Sums go through ``np.sum`` which uses pairwise
summation on contiguous arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Cmdp
from .data import OfflineDataset


@dataclass(frozen=True)
class EstimatorInputs:
    cmdp: Cmdp
    dataset: OfflineDataset
    w: np.ndarray
    policy: np.ndarray | None = None
    q: np.ndarray | None = None
    v: np.ndarray | None = None
    lam: np.ndarray | None = None


def _w(inp: EstimatorInputs) -> np.ndarray:
    w = np.asarray(inp.w, dtype=float)
    if w.shape != (len(inp.dataset),):
        raise ValueError(f"weights have shape {w.shape}, expected ({len(inp.dataset)},)")
    return w


def _mixed_reward(inp: EstimatorInputs) -> np.ndarray:
    lam = np.asarray(inp.lam, dtype=float)
    if lam.shape != (inp.cmdp.n_constraints,):
        raise ValueError(f"lambda has shape {lam.shape}, expected ({inp.cmdp.n_constraints},)")
    return inp.cmdp.rewards[0] + np.tensordot(lam, inp.cmdp.rewards[1:], axes=1)


def _q_terms(inp: EstimatorInputs, reward: np.ndarray):
    """(1 - gamma) Q(s_0, pi) and per-datapoint r + gamma Q(s', pi) - Q(s, a)."""
    if inp.policy is None or inp.q is None:
        raise ValueError("policy and q are required")
    ds, g = inp.dataset, inp.cmdp.gamma
    q = np.asarray(inp.q, dtype=float)
    q_pi = (np.asarray(inp.policy, dtype=float) * q).sum(axis=1)
    h = reward[ds.states, ds.actions] + g * q_pi[ds.next_states] - q[ds.states, ds.actions]
    return (1 - g) * q_pi[inp.cmdp.initial_state], h


def estimate_L_wv(inp: EstimatorInputs, reward_index: int = 0) -> float:
    """(1 - gamma) v(s_0) + (1/n) sum_i w_i (r(s_i, a_i) + gamma v(s'_i) - v(s_i))."""
    if inp.v is None:
        raise ValueError("v is required")
    ds, g = inp.dataset, inp.cmdp.gamma
    v = np.asarray(inp.v, dtype=float)
    r = inp.cmdp.rewards[reward_index]
    h = r[ds.states, ds.actions] + g * v[ds.next_states] - v[ds.states]
    return float((1 - g) * v[inp.cmdp.initial_state] + np.sum(_w(inp) * h) / len(ds))


def estimate_L_wpq(inp: EstimatorInputs, reward_index: int = 0) -> float:
    """(1 - gamma) Q(s_0, pi) + (1/n) sum_i w_i (r + gamma Q(s'_i, pi) - Q(s_i, a_i))."""
    head, h = _q_terms(inp, inp.cmdp.rewards[reward_index])
    return float(head + np.sum(_w(inp) * h) / len(inp.dataset))


def estimate_L_constrained(inp: EstimatorInputs) -> float:
    """The decomposed estimator with reward r_0 + sum_i lam_i r_i, minus <lam, tau>."""
    head, h = _q_terms(inp, _mixed_reward(inp))
    lam = np.asarray(inp.lam, dtype=float)
    return float(head + np.sum(_w(inp) * h) / len(inp.dataset) - lam @ inp.cmdp.thresholds)


def lagrangian_gradient_wrt_w(inp: EstimatorInputs) -> np.ndarray:
    """Per-datapoint coefficient of w in the decomposed estimator (h_i / n).

    Uses the mixed reward when ``lam`` is given, r_0 otherwise.
    """
    reward = inp.cmdp.rewards[0] if inp.lam is None else _mixed_reward(inp)
    _, h = _q_terms(inp, reward)
    return h / len(inp.dataset)


def constraint_data_terms(inp: EstimatorInputs) -> np.ndarray:
    """c_i = (1/n) sum_j w_j r_i(s_j, a_j) - tau_i for i = 1..I."""
    ds = inp.dataset
    r = inp.cmdp.rewards[1:, ds.states, ds.actions]
    return np.sum(_w(inp)[None] * r, axis=1) / len(ds) - inp.cmdp.thresholds
