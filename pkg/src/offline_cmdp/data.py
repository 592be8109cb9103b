"""Data distributions over state-action pairs and i.i.d. offline datasets.

Random streams come from numpy's PCG64 bit generator seeded with the integer
dataset seed. Each draw of (s, a) consumes one ``Generator.random()`` double
and each next state one more; both are mapped through the inverse CDF of the
relevant row (cumulative sums, ``searchsorted(..., side="right")``). All
(s, a) draws are taken first, then all next-state draws, so the stream
layout is: n uniforms for pairs followed by n uniforms for successors.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Cmdp
from .oracle import occupancy_of_policy


@dataclass(frozen=True)
class DataDistribution:
    probs: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("data distribution must be nonnegative and sum to one")
        p = p / p.sum()
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)


@dataclass(frozen=True)
class OfflineDataset:
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    seed: int
    source: DataDistribution | None = None

    def __len__(self):
        return self.states.shape[0]

    @property
    def triples(self) -> np.ndarray:
        return np.column_stack([self.states, self.actions, self.next_states])


def build_mixture_distribution(cmdp: Cmdp, anchor_policy, beta: float,
                               anchor_name: str = "custom") -> DataDistribution:
    """beta * mu^anchor + (1 - beta) * uniform over S x A."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta={beta} not in [0, 1]")
    S, A = cmdp.n_states, cmdp.n_actions
    uniform = np.full((S, A), 1.0 / (S * A))
    probs = (1 - beta) * uniform
    if beta > 0:
        probs = probs + beta * occupancy_of_policy(cmdp, anchor_policy).values
    return DataDistribution(probs / probs.sum(), {"beta": beta, "anchor": anchor_name})


def _inverse_cdf(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cdf, u * cdf[-1], side="right")
    return np.minimum(idx, cdf.shape[0] - 1)


def sample_dataset(cmdp: Cmdp, dist: DataDistribution, n: int, seed: int) -> OfflineDataset:
    """n i.i.d. pairs (s, a) ~ mu_D with s' ~ P(.|s, a)."""
    if n < 1:
        raise ValueError("dataset size must be at least 1")
    S, A = cmdp.n_states, cmdp.n_actions
    rng = np.random.Generator(np.random.PCG64(seed))
    u_pair = rng.random(n)
    u_next = rng.random(n)
    flat = _inverse_cdf(np.cumsum(dist.probs.reshape(-1)), u_pair)
    s, a = np.divmod(flat, A)
    cdf_rows = np.cumsum(cmdp.transition.reshape(S * A, S), axis=1)
    rows = cdf_rows[flat]
    nxt = (rows < (u_next * rows[:, -1])[:, None]).sum(axis=1)
    nxt = np.minimum(nxt, S - 1)
    # zero-probability successors at the end of a row are never picked
    return OfflineDataset(s.astype(np.int64), a.astype(np.int64), nxt.astype(np.int64), seed, dist)


def empirical_pair_frequencies(ds: OfflineDataset, n_states: int, n_actions: int) -> np.ndarray:
    counts = np.zeros((n_states, n_actions))
    np.add.at(counts, (ds.states, ds.actions), 1.0)
    return counts / len(ds)


def transition_frequency_flags(ds: OfflineDataset, cmdp: Cmdp, z: float = 4.0) -> list[tuple]:
    """Cells (s, a, s') whose empirical successor frequency deviates from P by
    more than z * sqrt(p (1 - p) / count). Diagnostic only."""
    S, A = cmdp.n_states, cmdp.n_actions
    counts = np.zeros((S, A, S))
    np.add.at(counts, (ds.states, ds.actions, ds.next_states), 1.0)
    flags = []
    for s in range(S):
        for a in range(A):
            total = counts[s, a].sum()
            if total == 0:
                continue
            p = cmdp.transition[s, a]
            freq = counts[s, a] / total
            band = z * np.sqrt(p * (1 - p) / total)
            for t in np.nonzero(np.abs(freq - p) > band + 1e-15)[0]:
                flags.append((s, a, int(t), float(freq[t]), float(p[t])))
    return flags


def save_dataset(ds: OfflineDataset, path, anchor: str | None = None) -> None:
    """CSV ``s,a,s_next`` plus a JSON sidecar ``<path>.json``."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["s", "a", "s_next"])
        w.writerows(ds.triples.tolist())
    prov = ds.source.provenance if ds.source is not None else {}
    meta = {
        "seed": ds.seed,
        "n": len(ds),
        "beta": prov.get("beta"),
        "anchor": anchor if anchor is not None else prov.get("anchor"),
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2))


def load_dataset(path) -> OfflineDataset:
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != ["s", "a", "s_next"]:
            raise ValueError(f"unexpected dataset header {header}")
        rows = np.array([[int(x) for x in row] for row in reader], dtype=np.int64).reshape(-1, 3)
    sidecar = path.with_suffix(path.suffix + ".json")
    seed = json.loads(sidecar.read_text())["seed"] if sidecar.exists() else -1
    return OfflineDataset(rows[:, 0], rows[:, 1], rows[:, 2], seed)
