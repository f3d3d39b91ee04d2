"""Exact transient analysis of the joint chain on desk-scale instances.

Enumerates every (network, behavior) state for a handful of actors,
assembles the generator matrix from the same candidate probabilities the
event-driven simulator uses, and solves the unit-period transient
distribution by uniformization. Exists purely as a ground-truth oracle
for tests; state spaces are capped hard.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .effects import EffectContext, EffectSpec
from .simulate import (
    ParameterVector,
    behavior_candidate_stats,
    choice_probabilities,
    network_candidate_stats,
)

__all__ = [
    "StateSpace",
    "build_intensity_matrix",
    "transition_distribution",
    "exact_expected_statistics",
]

MAX_STATES = 100_000


@dataclass
class StateSpace:
    """Deterministic enumeration of all joint states for N actors with
    levels 1..L. Networks are coded over the N(N-1)/2 unordered pairs in
    lexicographic order, behaviors as base-L digits per actor."""

    n_actors: int
    n_levels: int

    def __post_init__(self):
        n = self.n_actors
        self.pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        self.n_networks = 1 << len(self.pairs)
        self.n_behaviors = self.n_levels**n
        if self.size > MAX_STATES:
            raise ValueError(
                f"state space has {self.size} states, above the cap {MAX_STATES}; "
                f"the exact oracle is for desk-scale instances only"
            )

    @property
    def size(self) -> int:
        return self.n_networks * self.n_behaviors

    def index(self, network, behavior) -> int:
        net_code = 0
        for bit, (i, j) in enumerate(self.pairs):
            if network[i, j]:
                net_code |= 1 << bit
        beh_code = 0
        for i in range(self.n_actors - 1, -1, -1):
            beh_code = beh_code * self.n_levels + (int(behavior[i]) - 1)
        return net_code * self.n_behaviors + beh_code

    def state(self, index: int):
        net_code, beh_code = divmod(index, self.n_behaviors)
        n = self.n_actors
        network = np.zeros((n, n), dtype=np.uint8)
        for bit, (i, j) in enumerate(self.pairs):
            if net_code & (1 << bit):
                network[i, j] = 1
                network[j, i] = 1
        behavior = np.zeros(n, dtype=np.int64)
        for i in range(n):
            beh_code, digit = divmod(beh_code, self.n_levels)
            behavior[i] = digit + 1
        return network, behavior

    def tie_count(self, index: int) -> int:
        return bin(index // self.n_behaviors).count("1")


def build_intensity_matrix(
    space: StateSpace,
    params: ParameterVector,
    period: int,
    spec: EffectSpec,
    ctx: EffectContext,
) -> np.ndarray:
    """Generator matrix of the joint chain for one period.

    Off-diagonal entries cover single tie additions and single level
    moves, weighted by opportunity rate times choice probability; each
    diagonal entry is minus its row sum. No entry ever points to a state
    with a removed tie.
    """
    rate_net = float(params.rate_net[period])
    rate_beh = float(params.rate_beh[period])
    q = np.zeros((space.size, space.size))
    for s in range(space.size):
        network, behavior = space.state(s)
        for i in range(space.n_actors):
            if rate_net > 0:
                stay, cand, stats = network_candidate_stats(i, network, behavior, spec, ctx)
                if cand.shape[0]:
                    utilities = np.concatenate([[float(np.dot(params.beta_net, stay))], stats @ params.beta_net])
                    probs = choice_probabilities(utilities)
                    for c_idx, j in enumerate(cand):
                        network[i, j] = 1
                        network[j, i] = 1
                        q[s, space.index(network, behavior)] += rate_net * probs[c_idx + 1]
                        network[i, j] = 0
                        network[j, i] = 0
            if rate_beh > 0:
                deltas, stats = behavior_candidate_stats(i, network, behavior, spec, ctx)
                probs = choice_probabilities(stats @ params.beta_beh)
                for r, dl in enumerate(deltas):
                    if dl == 0:
                        continue
                    behavior[i] += dl
                    q[s, space.index(network, behavior)] += rate_beh * probs[r]
                    behavior[i] -= dl
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


def transition_distribution(q: np.ndarray, initial_state: int, horizon: float = 1.0, tol: float = 1e-12) -> np.ndarray:
    """State distribution after the horizon, by uniformization.

    The Poisson-weighted series over powers of the uniformized kernel is
    truncated once the remaining tail mass drops below tol.
    """
    n = q.shape[0]
    rate = float(np.max(-np.diagonal(q)))
    pi = np.zeros(n)
    pi[initial_state] = 1.0
    if rate <= 0.0:
        return pi
    kernel = np.eye(n) + q / rate
    mean_jumps = rate * horizon
    weight = math.exp(-mean_jumps)
    total = weight
    acc = weight * pi
    k = 0
    while total < 1.0 - tol:
        k += 1
        pi = pi @ kernel
        weight *= mean_jumps / k
        total += weight
        acc += weight * pi
        if k > 1000 * (1 + int(mean_jumps)):  # defensive; tail must have vanished
            break
    return acc


def exact_expected_statistics(
    distribution: np.ndarray,
    spec: EffectSpec,
    space: StateSpace,
    start_network,
    start_behavior,
    ctx: EffectContext,
) -> np.ndarray:
    """Expected one-period moment contributions under an end-state
    distribution: change volumes relative to the start wave followed by
    the per-effect sums, with the same cross-lagged convention as the
    panel moments (network effects against the start behavior, behavior
    effects on the start network). Matches the layout of one period's
    slice of the panel moment vector and is invariant to state
    enumeration order."""
    from .effects import behavior_effect_sums, network_effect_sums

    start_net = np.asarray(start_network, dtype=np.uint8)
    start_ties = int(start_net.sum()) // 2
    start_beh = np.asarray(start_behavior, dtype=np.int64)
    terms_rate_net = []
    terms_rate_beh = []
    terms_net = [[] for _ in range(spec.n_network)]
    terms_beh = [[] for _ in range(spec.n_behavior)]
    for s, prob in enumerate(distribution):
        if prob == 0.0:
            continue
        network, behavior = space.state(s)
        new_ties = int(network.sum()) // 2 - start_ties
        terms_rate_net.append(prob * (2.0 * new_ties))
        terms_rate_beh.append(prob * float(np.abs(behavior - start_beh).sum()))
        net_sums = network_effect_sums(network, start_beh, spec, ctx)
        beh_sums = behavior_effect_sums(start_net, behavior, spec, ctx)
        for k in range(spec.n_network):
            terms_net[k].append(prob * net_sums[k])
        for k in range(spec.n_behavior):
            terms_beh[k].append(prob * beh_sums[k])
    out = [math.fsum(terms_rate_net), math.fsum(terms_rate_beh)]
    out += [math.fsum(t) for t in terms_net]
    out += [math.fsum(t) for t in terms_beh]
    return np.array(out)
