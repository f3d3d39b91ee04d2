"""Event-driven simulation of the joint network-behavior chain.

Within one observation period (normalized to unit length) actors receive
change opportunities from a Poisson clock. At a network opportunity the
actor adds one tie to a non-friend or keeps the network as is; at a
behavior opportunity the actor moves one level up or down or stays.
Alternatives are chosen by a multinomial logit over the actor's linear
objective evaluated on each candidate state. Ties are never removed and
levels stay within bounds.

Candidate statistics in the event loop are computed through per-kind
delta formulas that are arithmetically identical to the full per-actor
recomputation in effects.py, so instrumented runs can assert exact
agreement between the two paths.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .effects import EffectContext, EffectSpec, moment_vector, wave_contexts
from .panel import PanelDataset

__all__ = [
    "ParameterVector",
    "ChainState",
    "PeriodRecord",
    "PanelSimulation",
    "choice_probabilities",
    "actor_rates",
    "next_event",
    "network_candidate_stats",
    "behavior_candidate_stats",
    "network_micro_step",
    "behavior_micro_step",
    "simulate_period",
    "simulate_panel",
    "simulate_moments",
    "replicated_moments",
]


@dataclass
class ParameterVector:
    """Model parameters: per-period opportunity rates for both sides plus
    one weight per effect, in catalog order."""

    rate_net: np.ndarray
    rate_beh: np.ndarray
    beta_net: np.ndarray
    beta_beh: np.ndarray

    def __post_init__(self):
        self.rate_net = np.asarray(self.rate_net, dtype=np.float64)
        self.rate_beh = np.asarray(self.rate_beh, dtype=np.float64)
        self.beta_net = np.asarray(self.beta_net, dtype=np.float64)
        self.beta_beh = np.asarray(self.beta_beh, dtype=np.float64)

    def validate(self, spec: EffectSpec, n_periods: int, require_positive_rates: bool = True):
        if self.rate_net.shape != (n_periods,) or self.rate_beh.shape != (n_periods,):
            raise ValueError(f"rate vectors must have one entry per period ({n_periods})")
        if self.beta_net.shape != (spec.n_network,) or self.beta_beh.shape != (spec.n_behavior,):
            raise ValueError("beta vectors must match the effect catalog")
        if np.any(self.rate_net < 0) or np.any(self.rate_beh < 0):
            raise ValueError("rates must be non-negative")
        if require_positive_rates and (np.any(self.rate_net <= 0) or np.any(self.rate_beh <= 0)):
            raise ValueError("rates must be strictly positive")

    @property
    def n_periods(self) -> int:
        return self.rate_net.shape[0]

    def vector(self) -> np.ndarray:
        return np.concatenate([self.rate_net, self.rate_beh, self.beta_net, self.beta_beh])

    @classmethod
    def from_vector(cls, vec, n_periods: int, spec: EffectSpec) -> "ParameterVector":
        vec = np.asarray(vec, dtype=np.float64)
        k1 = spec.n_network
        return cls(
            rate_net=vec[:n_periods].copy(),
            rate_beh=vec[n_periods : 2 * n_periods].copy(),
            beta_net=vec[2 * n_periods : 2 * n_periods + k1].copy(),
            beta_beh=vec[2 * n_periods + k1 :].copy(),
        )

    def names(self, spec: EffectSpec) -> list[str]:
        names = [f"network rate (period {m + 1})" for m in range(self.n_periods)]
        names += [f"behavior rate (period {m + 1})" for m in range(self.n_periods)]
        names += spec.network_labels()
        names += spec.behavior_labels()
        return names

    def to_config(self) -> dict:
        return {
            "rate_net": [float(x) for x in self.rate_net],
            "rate_beh": [float(x) for x in self.rate_beh],
            "beta_net": [float(x) for x in self.beta_net],
            "beta_beh": [float(x) for x in self.beta_beh],
        }

    @classmethod
    def from_config(cls, cfg) -> "ParameterVector":
        return cls(cfg["rate_net"], cfg["rate_beh"], cfg["beta_net"], cfg["beta_beh"])


@dataclass
class ChainState:
    """Joint state of one chain inside a period."""

    network: np.ndarray
    behavior: np.ndarray
    clock: float = 0.0


@dataclass
class PeriodRecord:
    """Outcome of one simulated period."""

    network: np.ndarray
    behavior: np.ndarray
    trace: list | None
    n_net_events: int
    n_beh_events: int
    n_net_changes: int
    n_beh_changes: int


@dataclass
class PanelSimulation:
    """Outcome of one conditional panel simulation: one record per period,
    each started from the observed wave."""

    records: list[PeriodRecord]

    def end_states(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(r.network, r.behavior) for r in self.records]


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (list, tuple)):
        return np.random.SeedSequence(list(seed))
    return np.random.SeedSequence(int(seed))


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(as_seed_sequence(seed))


def choice_probabilities(utilities) -> np.ndarray:
    """Multinomial-logit probabilities of the candidate utilities."""
    u = np.asarray(utilities, dtype=np.float64)
    z = np.exp(u - u.max())
    return z / z.sum()


def _draw(probabilities: np.ndarray, rng) -> int:
    c = np.cumsum(probabilities)
    idx = int(np.searchsorted(c, rng.random(), side="right"))
    return min(idx, probabilities.shape[0] - 1)


def actor_rates(params: ParameterVector, period: int, n_actors: int):
    """Per-actor opportunity rates for a period; constant across actors."""
    return (
        np.full(n_actors, params.rate_net[period]),
        np.full(n_actors, params.rate_beh[period]),
    )


def next_event(clock: float, n_actors: int, rate_net: float, rate_beh: float, rng):
    """Draw the next opportunity: (dt, actor, domain), or None when the
    drawn time would pass the end of the unit period."""
    total = n_actors * (rate_net + rate_beh)
    if total <= 0:
        raise ValueError("non-positive total event rate")
    dt = rng.exponential(1.0 / total)
    if clock + dt > 1.0:
        return None
    domain = "network" if rng.random() < rate_net / (rate_net + rate_beh) else "behavior"
    actor = int(rng.integers(n_actors))
    return dt, actor, domain


def network_candidate_stats(i: int, network, behavior, spec: EffectSpec, ctx: EffectContext):
    """Statistic vectors of actor i for keeping the network and for every
    feasible tie addition.

    Returns (stay, candidates, stats): stay is the actor's current
    statistic row and stats[k] the row after adding the tie to
    candidates[k]. Rows are computed by per-kind deltas from shared
    intermediates but round identically to a full recomputation on the
    modified network (effects.actor_network_stats).
    """
    row = network[i]
    neighbors = np.flatnonzero(row)
    cand = np.flatnonzero(row == 0)
    cand = cand[cand != i]
    d = neighbors.shape[0]
    n_cand = cand.shape[0]
    stay = np.empty(spec.n_network)
    stats = np.empty((n_cand, spec.n_network))

    rng_levels = ctx.level_range
    nbr_rows = network[neighbors] if d else None
    beh_sim = None  # (stay similarity, candidate similarity vector)
    for k, e in enumerate(spec.network):
        if e.kind == "out_degree":
            stay[k] = float(d)
            stats[:, k] = float(d + 1)
        elif e.kind == "transitivity":
            base = int(nbr_rows[:, neighbors].sum()) if d else 0
            stay[k] = float(base) if d else 0.0
            if n_cand:
                common = nbr_rows[:, cand].sum(axis=0).astype(np.int64) if d else np.zeros(n_cand, dtype=np.int64)
                stats[:, k] = (base + 2 * common).astype(np.float64)
        elif e.kind in ("behavior_similarity", "map_x_similarity", "lap_x_similarity"):
            if beh_sim is None:
                base_dist = int(np.abs(behavior[neighbors] - behavior[i]).sum()) if d else 0
                stay_sim = 1.0 - base_dist / (rng_levels * d) if d else 0.0
                dist = base_dist + np.abs(behavior[cand] - behavior[i])
                beh_sim = (stay_sim, 1.0 - dist / (rng_levels * (d + 1)))
            if e.kind == "behavior_similarity":
                gate = 1.0
            elif e.kind == "map_x_similarity":
                gate = ctx.high_dummy[i]
            else:
                gate = ctx.low_dummy[i]
            stay[k] = gate * beh_sim[0]
            stats[:, k] = gate * beh_sim[1]
        elif e.kind == "covariate_similarity":
            if e.covariate == "gender":
                g = ctx.covariates.gender
                base = int(np.sum(g[neighbors] == g[i])) if d else 0
                stay[k] = base / d if d else 0.0
                matches = base + (g[cand] == g[i]).astype(np.int64)
                stats[:, k] = matches / (d + 1)
            else:
                col = ctx.covariates.column(e.covariate)
                cov_rng = ctx.cov_range[e.covariate]
                if cov_rng == 0.0:
                    stay[k] = 1.0 if d else 0.0
                    stats[:, k] = 1.0
                else:
                    base_terms = [abs(float(col[j]) - float(col[i])) for j in neighbors]
                    stay[k] = 1.0 - math.fsum(base_terms) / (cov_rng * d) if d else 0.0
                    for c_idx, j in enumerate(cand):
                        dist = math.fsum(base_terms + [abs(float(col[j]) - float(col[i]))])
                        stats[c_idx, k] = 1.0 - dist / (cov_rng * (d + 1))
        elif e.kind == "covariate_ego":
            x_i = float(ctx.covariates.column(e.covariate)[i])
            stay[k] = d * x_i
            stats[:, k] = (d + 1) * x_i
        else:  # pragma: no cover
            raise AssertionError(e.kind)
    return stay, cand, stats


def behavior_candidate_stats(i: int, network, behavior, spec: EffectSpec, ctx: EffectContext):
    """Statistic vectors of actor i for every feasible level move.

    Returns (deltas, stats); deltas always contains 0 and whichever of
    -1/+1 stay inside [1, n_levels].
    """
    p = int(behavior[i])
    deltas = [dl for dl in (-1, 0, 1) if 1 <= p + dl <= ctx.n_levels]
    neighbors = np.flatnonzero(network[i])
    d = neighbors.shape[0]
    rng_levels = ctx.level_range
    stats = np.empty((len(deltas), spec.n_behavior))
    nbr_levels = behavior[neighbors]
    for r, dl in enumerate(deltas):
        p_new = p + dl
        infl = None
        for k, e in enumerate(spec.behavior):
            if e.kind == "linear_tendency":
                stats[r, k] = float(p_new)
            elif e.kind in ("influence_similarity", "map_x_influence", "lap_x_influence"):
                if infl is None:
                    if d == 0:
                        infl = 0.0
                    else:
                        dist = int(np.abs(nbr_levels - p_new).sum())
                        infl = 1.0 - dist / (rng_levels * d)
                if e.kind == "influence_similarity":
                    stats[r, k] = infl
                elif e.kind == "map_x_influence":
                    stats[r, k] = ctx.high_dummy[i] * infl
                else:
                    stats[r, k] = ctx.low_dummy[i] * infl
            elif e.kind == "covariate_on_behavior":
                stats[r, k] = float(p_new) * float(ctx.covariates.column(e.covariate)[i])
            else:  # pragma: no cover
                raise AssertionError(e.kind)
    return np.array(deltas, dtype=np.int64), stats


def _network_event(i, network, behavior, beta_net, spec, ctx, rng):
    """Resolve one network opportunity in place; returns the partner added
    or -1 for no change."""
    stay, cand, stats = network_candidate_stats(i, network, behavior, spec, ctx)
    if cand.shape[0] == 0:
        return -1
    utilities = np.concatenate([[float(np.dot(beta_net, stay))], stats @ beta_net])
    choice = _draw(choice_probabilities(utilities), rng)
    if choice == 0:
        return -1
    j = int(cand[choice - 1])
    network[i, j] = 1
    network[j, i] = 1
    return j


def _behavior_event(i, network, behavior, beta_beh, spec, ctx, rng):
    """Resolve one behavior opportunity in place; returns the applied
    level change (-1, 0, or +1)."""
    deltas, stats = behavior_candidate_stats(i, network, behavior, spec, ctx)
    utilities = stats @ beta_beh
    choice = _draw(choice_probabilities(utilities), rng)
    dl = int(deltas[choice])
    behavior[i] += dl
    return dl


def network_micro_step(actor, network, behavior, beta_net, ctx, spec, rng):
    """One network micro-step on a copy of the state; returns the new
    (network, behavior) pair."""
    a = np.array(network, dtype=np.uint8)
    p = np.array(behavior, dtype=np.int64)
    _network_event(actor, a, p, np.asarray(beta_net, dtype=np.float64), spec, ctx, rng)
    return a, p


def behavior_micro_step(actor, network, behavior, beta_beh, ctx, spec, rng):
    """One behavior micro-step on a copy of the state."""
    a = np.array(network, dtype=np.uint8)
    p = np.array(behavior, dtype=np.int64)
    _behavior_event(actor, a, p, np.asarray(beta_beh, dtype=np.float64), spec, ctx, rng)
    return a, p


def simulate_period(
    network,
    behavior,
    params: ParameterVector,
    period: int,
    spec: EffectSpec,
    context: EffectContext,
    seed,
    collect_trace: bool = False,
) -> PeriodRecord:
    """Run the chain over one unit-length period from the given start state.

    Deterministic for a fixed seed. Ties are only added and levels stay in
    bounds by construction of the candidate sets.
    """
    rng = _as_generator(seed)
    a = np.array(network, dtype=np.uint8)
    p = np.array(behavior, dtype=np.int64)
    n = a.shape[0]
    rate_net = float(params.rate_net[period])
    rate_beh = float(params.rate_beh[period])
    trace = [] if collect_trace else None
    n_net_events = n_beh_events = n_net_changes = n_beh_changes = 0

    clock = 0.0
    if n * (rate_net + rate_beh) > 0:
        while True:
            ev = next_event(clock, n, rate_net, rate_beh, rng)
            if ev is None:
                break
            dt, actor, domain = ev
            clock += dt
            if domain == "network":
                n_net_events += 1
                choice = _network_event(actor, a, p, params.beta_net, spec, ctx=context, rng=rng)
                if choice >= 0:
                    n_net_changes += 1
            else:
                n_beh_events += 1
                choice = _behavior_event(actor, a, p, params.beta_beh, spec, ctx=context, rng=rng)
                if choice != 0:
                    n_beh_changes += 1
            if collect_trace:
                trace.append((clock, actor, domain, choice))

    return PeriodRecord(
        network=a,
        behavior=p,
        trace=trace,
        n_net_events=n_net_events,
        n_beh_events=n_beh_events,
        n_net_changes=n_net_changes,
        n_beh_changes=n_beh_changes,
    )


def simulate_panel(
    dataset: PanelDataset,
    params: ParameterVector,
    spec: EffectSpec,
    seed,
    contexts: Sequence[EffectContext] | None = None,
    collect_trace: bool = False,
) -> PanelSimulation:
    """Simulate every period conditionally: period m starts from the
    observed wave m, matching the period-wise structure of the targets."""
    if contexts is None:
        contexts = wave_contexts(dataset)
    params.validate(spec, dataset.n_periods, require_positive_rates=False)
    rng_seq = as_seed_sequence(seed)
    rng = np.random.default_rng(rng_seq)
    records = []
    for m in range(dataset.n_periods):
        records.append(
            simulate_period(
                dataset.networks[m],
                dataset.behaviors[m],
                params,
                m,
                spec,
                contexts[m],
                seed=rng,
                collect_trace=collect_trace,
            )
        )
    return PanelSimulation(records=records)


def simulate_moments(dataset, params, spec, seed, contexts=None) -> np.ndarray:
    """Moment statistics of one conditional panel simulation."""
    if contexts is None:
        contexts = wave_contexts(dataset)
    sim = simulate_panel(dataset, params, spec, seed, contexts=contexts)
    return moment_vector(dataset, spec, end_states=sim.end_states(), contexts=contexts)


def _moments_for_rep(rep: int, dataset=None, params=None, spec=None, seed_root=None, contexts=None):
    seed = np.random.SeedSequence(list(seed_root) + [rep])
    return simulate_moments(dataset, params, spec, seed, contexts=contexts)


def replicated_moments(
    dataset: PanelDataset,
    params: ParameterVector,
    spec: EffectSpec,
    seed_root: Sequence[int],
    n_reps: int,
    threads: int = 1,
    contexts=None,
) -> np.ndarray:
    """Moment statistics of n_reps independent panel simulations.

    Replication r uses the stream derived from (*seed_root, r), and rows
    are assembled by replication index, so the result is bit-identical
    for any thread count.
    """
    if contexts is None:
        contexts = wave_contexts(dataset)
    seed_root = [int(x) for x in seed_root]
    task = partial(
        _moments_for_rep,
        dataset=dataset,
        params=params,
        spec=spec,
        seed_root=seed_root,
        contexts=contexts,
    )
    if threads <= 1 or n_reps == 1:
        rows = [task(r) for r in range(n_reps)]
    else:
        chunk = max(1, n_reps // (4 * threads))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(task, range(n_reps), chunksize=chunk))
    return np.stack(rows)
