"""Independent reference computations used only by the tests. None of them
shares code with the package's linear solves or LP solver."""
import itertools

import numpy as np


def series_state_distributions(cmdp, pi, horizon):
    """P(s_t = .) for t < horizon by explicit forward propagation."""
    S = cmdp.n_states
    d = np.zeros(S)
    d[cmdp.initial_state] = 1.0
    out = []
    for _ in range(horizon):
        out.append(d)
        nxt = np.zeros(S)
        for s in range(S):
            for a in range(cmdp.n_actions):
                nxt += d[s] * pi[s, a] * cmdp.transition[s, a]
        d = nxt
    return out


def series_return(cmdp, pi, reward_index=0, horizon=400):
    r = cmdp.rewards[reward_index]
    total = 0.0
    for t, d in enumerate(series_state_distributions(cmdp, pi, horizon)):
        total += cmdp.gamma ** t * float(d @ (pi * r).sum(axis=1))
    return total


def series_occupancy(cmdp, pi, horizon=400):
    mu = np.zeros_like(pi)
    for t, d in enumerate(series_state_distributions(cmdp, pi, horizon)):
        mu += (1 - cmdp.gamma) * cmdp.gamma ** t * d[:, None] * pi
    return mu


def brute_force_constrained_optimum(cmdp):
    """Best normalized return over deterministic-policy occupancies and their
    pairwise mixtures (exact for I = 1): returns -inf if infeasible."""
    S, A = cmdp.n_states, cmdp.n_actions
    assert cmdp.n_constraints == 1
    tau = cmdp.thresholds[0]
    vals = []
    for acts in itertools.product(range(A), repeat=S):
        pi = np.zeros((S, A))
        pi[np.arange(S), acts] = 1.0
        mu = series_occupancy(cmdp, pi, horizon=int(np.ceil(np.log(1e-16) / np.log(cmdp.gamma))) + 5)
        vals.append(((mu * cmdp.rewards[0]).sum(), (mu * cmdp.rewards[1]).sum()))
    vals = np.array(vals)
    best = -np.inf
    for f0, f1 in vals:
        if f1 >= tau - 1e-12:
            best = max(best, f0)
    for (a0, a1), (b0, b1) in itertools.combinations(vals, 2):
        if (a1 - tau) * (b1 - tau) < 0:
            theta = (tau - b1) / (a1 - b1)
            best = max(best, theta * a0 + (1 - theta) * b0)
    return best


def double_loop_saddle(lagrangian, primal, dual, i, j, tol):
    """Saddle check written as plain nested loops."""
    ref = lagrangian(primal[i], dual[j])
    worst = 0.0
    for x in primal:
        worst = max(worst, lagrangian(x, dual[j]) - ref)
    for y in dual:
        worst = max(worst, ref - lagrangian(primal[i], y))
    return worst <= tol, worst


def estimator_unbiasedness(cmdp, dist, w_fn, estimate, exact, reps, n, seed0=0):
    """Mean of ``estimate`` over ``reps`` datasets against the exact value.

    ``w_fn`` is a per-(s, a) weight table; each dataset sees it evaluated at
    its points. Returns (|mean - exact|, standard error).
    """
    from offline_cmdp.data import sample_dataset

    vals = np.empty(reps)
    for k in range(reps):
        ds = sample_dataset(cmdp, dist, n, seed0 + k)
        vals[k] = estimate(ds, w_fn[ds.states, ds.actions])
    se = vals.std(ddof=1) / np.sqrt(reps)
    return abs(vals.mean() - exact), se
