"""Per-actor effect statistics and moment targets.

Each effect maps an actor's local network-behavior configuration to one
number. An ordered catalog of effects (one list for tie decisions, one
for level decisions) defines both the actors' linear objective functions
and the method-of-moments target vector.

Similarity-type statistics are means over an actor's current friends of
1 - distance/range; isolates score 0 by convention so objectives stay
finite. All level-based statistics are computed through exact integer
sums, so independently coded evaluation paths agree bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .panel import LABEL_HIGH, LABEL_LOW, COVARIATE_NAMES, CovariateTable, PanelDataset, classify_activity

__all__ = [
    "Effect",
    "EffectSpec",
    "EffectContext",
    "TargetStatistics",
    "NETWORK_KINDS",
    "BEHAVIOR_KINDS",
    "behavior_range",
    "actor_network_stats",
    "actor_behavior_stats",
    "network_stats_matrix",
    "behavior_stats_matrix",
    "evaluate_network_objective",
    "evaluate_behavior_objective",
    "wave_contexts",
    "moment_vector",
    "moment_names",
    "target_statistics",
]

NETWORK_KINDS = (
    "out_degree",
    "transitivity",
    "behavior_similarity",
    "covariate_similarity",
    "covariate_ego",
    "map_x_similarity",
    "lap_x_similarity",
)

BEHAVIOR_KINDS = (
    "linear_tendency",
    "influence_similarity",
    "covariate_on_behavior",
    "map_x_influence",
    "lap_x_influence",
)

_COVARIATE_KINDS = {"covariate_similarity", "covariate_ego", "covariate_on_behavior"}


@dataclass(frozen=True)
class Effect:
    """One effect: a kind plus, for covariate kinds, the covariate name."""

    kind: str
    covariate: str | None = None

    def __post_init__(self):
        if self.kind in _COVARIATE_KINDS:
            if self.covariate not in COVARIATE_NAMES:
                raise ValueError(
                    f"{self.kind} needs a covariate from {COVARIATE_NAMES}, "
                    f"got {self.covariate!r}"
                )
        elif self.covariate is not None:
            raise ValueError(f"{self.kind} does not take a covariate")

    @property
    def label(self) -> str:
        return f"{self.kind}:{self.covariate}" if self.covariate else self.kind

    @classmethod
    def parse(cls, text: str) -> "Effect":
        kind, sep, cov = text.partition(":")
        return cls(kind.strip(), cov.strip() if sep else None)


def _check_side(effects: tuple[Effect, ...], kinds, base_pairs, side: str):
    seen = set()
    for e in effects:
        if e.kind not in kinds:
            raise ValueError(f"unknown {side} effect kind {e.kind!r}")
        key = (e.kind, e.covariate)
        if key in seen:
            raise ValueError(f"duplicate {side} effect {e.label}")
        seen.add(key)
    present = {e.kind for e in effects}
    for interaction, base in base_pairs:
        if interaction in present and base not in present:
            raise ValueError(f"{interaction} requires {base} in the {side} effects")


@dataclass(frozen=True)
class EffectSpec:
    """Ordered effect catalog for the tie side and the level side."""

    network: tuple[Effect, ...] = ()
    behavior: tuple[Effect, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "network", tuple(self.network))
        object.__setattr__(self, "behavior", tuple(self.behavior))
        _check_side(
            self.network,
            NETWORK_KINDS,
            [("map_x_similarity", "behavior_similarity"), ("lap_x_similarity", "behavior_similarity")],
            "network",
        )
        _check_side(
            self.behavior,
            BEHAVIOR_KINDS,
            [("map_x_influence", "influence_similarity"), ("lap_x_influence", "influence_similarity")],
            "behavior",
        )

    @property
    def n_network(self) -> int:
        return len(self.network)

    @property
    def n_behavior(self) -> int:
        return len(self.behavior)

    def network_labels(self) -> list[str]:
        return [e.label for e in self.network]

    def behavior_labels(self) -> list[str]:
        return [e.label for e in self.behavior]

    def to_config(self) -> dict:
        return {
            "network": [e.label for e in self.network],
            "behavior": [e.label for e in self.behavior],
        }

    @classmethod
    def from_config(cls, cfg) -> "EffectSpec":
        return cls(
            network=tuple(Effect.parse(s) for s in cfg.get("network", [])),
            behavior=tuple(Effect.parse(s) for s in cfg.get("behavior", [])),
        )


def behavior_range(n_levels: int) -> int:
    """Range of the level scale, fixed at n_levels - 1."""
    if n_levels < 2:
        raise ValueError("n_levels must be at least 2")
    return n_levels - 1


@dataclass
class EffectContext:
    """Wave-constant inputs to the statistics: covariates, their observed
    ranges, the level range, and the period's frozen activity dummies."""

    n_levels: int
    covariates: CovariateTable
    cov_range: dict[str, float]
    high_dummy: np.ndarray
    low_dummy: np.ndarray

    @property
    def level_range(self) -> int:
        return self.n_levels - 1

    @classmethod
    def build(cls, covariates: CovariateTable, n_levels: int, labels: np.ndarray) -> "EffectContext":
        labels = np.asarray(labels)
        rng = {}
        for name in ("age", "tenure"):
            col = covariates.column(name)
            rng[name] = float(col.max() - col.min()) if col.size else 0.0
        return cls(
            n_levels=n_levels,
            covariates=covariates,
            cov_range=rng,
            high_dummy=(labels == LABEL_HIGH).astype(np.float64),
            low_dummy=(labels == LABEL_LOW).astype(np.float64),
        )


def _mean_sim_from_int(dist_sum: int, degree: int, value_range: int) -> float:
    # 1 - dist/(range*degree), all operands integers: one float division,
    # so every evaluation path rounds identically.
    if degree == 0:
        return 0.0
    return 1.0 - dist_sum / (value_range * degree)


def _behavior_similarity(i, neighbors, behavior, value_range) -> float:
    d = neighbors.shape[0]
    if d == 0:
        return 0.0
    dist = int(np.abs(behavior[neighbors] - behavior[i]).sum())
    return _mean_sim_from_int(dist, d, value_range)


def _covariate_similarity(i, neighbors, name, ctx) -> float:
    d = neighbors.shape[0]
    if d == 0:
        return 0.0
    if name == "gender":
        g = ctx.covariates.gender
        matches = int(np.sum(g[neighbors] == g[i]))
        return matches / d
    col = ctx.covariates.column(name)
    rng = ctx.cov_range[name]
    if rng == 0.0:
        return 1.0
    dist = math.fsum(abs(float(col[j]) - float(col[i])) for j in neighbors)
    return 1.0 - dist / (rng * d)


def actor_network_stats(i, network, behavior, spec: EffectSpec, ctx: EffectContext) -> np.ndarray:
    """Network-side statistic vector for actor i, in catalog order.

    out_degree is the row sum; transitivity counts ordered friend pairs
    that are themselves tied (twice the triangles at i); similarity kinds
    average 1 - distance/range over friends; covariate_ego multiplies the
    degree by the actor's own covariate; the map_x/lap_x kinds gate the
    behavior similarity by the actor's activity dummy.
    """
    neighbors = np.flatnonzero(network[i])
    d = neighbors.shape[0]
    out = np.empty(spec.n_network)
    beh_sim = None
    for k, e in enumerate(spec.network):
        if e.kind == "out_degree":
            out[k] = float(d)
        elif e.kind == "transitivity":
            out[k] = float(int(network[np.ix_(neighbors, neighbors)].sum())) if d else 0.0
        elif e.kind == "behavior_similarity":
            if beh_sim is None:
                beh_sim = _behavior_similarity(i, neighbors, behavior, ctx.level_range)
            out[k] = beh_sim
        elif e.kind == "covariate_similarity":
            out[k] = _covariate_similarity(i, neighbors, e.covariate, ctx)
        elif e.kind == "covariate_ego":
            out[k] = d * float(ctx.covariates.column(e.covariate)[i])
        elif e.kind == "map_x_similarity":
            if beh_sim is None:
                beh_sim = _behavior_similarity(i, neighbors, behavior, ctx.level_range)
            out[k] = ctx.high_dummy[i] * beh_sim
        elif e.kind == "lap_x_similarity":
            if beh_sim is None:
                beh_sim = _behavior_similarity(i, neighbors, behavior, ctx.level_range)
            out[k] = ctx.low_dummy[i] * beh_sim
        else:  # pragma: no cover - kinds validated by EffectSpec
            raise AssertionError(e.kind)
    return out


def actor_behavior_stats(i, network, behavior, spec: EffectSpec, ctx: EffectContext) -> np.ndarray:
    """Level-side statistic vector for actor i, in catalog order."""
    neighbors = np.flatnonzero(network[i])
    out = np.empty(spec.n_behavior)
    infl = None
    for k, e in enumerate(spec.behavior):
        if e.kind == "linear_tendency":
            out[k] = float(behavior[i])
        elif e.kind == "influence_similarity":
            if infl is None:
                infl = _behavior_similarity(i, neighbors, behavior, ctx.level_range)
            out[k] = infl
        elif e.kind == "covariate_on_behavior":
            out[k] = float(behavior[i]) * float(ctx.covariates.column(e.covariate)[i])
        elif e.kind == "map_x_influence":
            if infl is None:
                infl = _behavior_similarity(i, neighbors, behavior, ctx.level_range)
            out[k] = ctx.high_dummy[i] * infl
        elif e.kind == "lap_x_influence":
            if infl is None:
                infl = _behavior_similarity(i, neighbors, behavior, ctx.level_range)
            out[k] = ctx.low_dummy[i] * infl
        else:  # pragma: no cover
            raise AssertionError(e.kind)
    return out


def network_stats_matrix(network, behavior, spec, ctx) -> np.ndarray:
    n = network.shape[0]
    return np.stack([actor_network_stats(i, network, behavior, spec, ctx) for i in range(n)]) \
        if spec.n_network else np.zeros((n, 0))


def behavior_stats_matrix(network, behavior, spec, ctx) -> np.ndarray:
    n = network.shape[0]
    return np.stack([actor_behavior_stats(i, network, behavior, spec, ctx) for i in range(n)]) \
        if spec.n_behavior else np.zeros((n, 0))


def evaluate_network_objective(i, candidate_network, behavior, beta_net, ctx, spec) -> float:
    """Linear tie-side objective of actor i on a candidate state."""
    stats = actor_network_stats(i, candidate_network, behavior, spec, ctx)
    return float(np.dot(np.asarray(beta_net, dtype=np.float64), stats))


def evaluate_behavior_objective(i, network, candidate_behavior, beta_beh, ctx, spec) -> float:
    """Linear level-side objective of actor i on a candidate state."""
    stats = actor_behavior_stats(i, network, candidate_behavior, spec, ctx)
    return float(np.dot(np.asarray(beta_beh, dtype=np.float64), stats))


# ---------------------------------------------------------------------------
# Moment targets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetStatistics:
    """Observed moment targets: per-period change volumes and one summed
    statistic per effect."""

    rate_net: np.ndarray
    rate_beh: np.ndarray
    net_effects: np.ndarray
    beh_effects: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.rate_net, self.rate_beh, self.net_effects, self.beh_effects])


def moment_names(spec: EffectSpec, n_periods: int) -> list[str]:
    names = [f"network rate (period {m + 1})" for m in range(n_periods)]
    names += [f"behavior rate (period {m + 1})" for m in range(n_periods)]
    names += spec.network_labels()
    names += spec.behavior_labels()
    return names


def wave_contexts(dataset: PanelDataset, cutoff_low: float = 0.10, cutoff_high: float = 0.90) -> list[EffectContext]:
    """One context per period, with activity dummies frozen at the
    period's observed start wave."""
    out = []
    for m in range(dataset.n_periods):
        labels = classify_activity(dataset.behaviors[m], cutoff_low, cutoff_high)
        out.append(EffectContext.build(dataset.covariates, dataset.n_levels, labels))
    return out


def network_effect_sums(network, behavior, spec, ctx) -> np.ndarray:
    """Network-side statistic sums over actors for one wave.

    Aggregated per unordered tie: the actor sum counts every tie from
    both endpoints, so it is halved to make the degree entry equal the
    wave's tie count. Within-wave actor sums use exact summation so they
    do not depend on actor order.
    """
    if not spec.n_network:
        return np.zeros(0)
    n = network.shape[0]
    cols = [[] for _ in range(spec.n_network)]
    for i in range(n):
        row = actor_network_stats(i, network, behavior, spec, ctx)
        for k in range(spec.n_network):
            cols[k].append(row[k])
    return np.array([math.fsum(c) / 2.0 for c in cols])


def behavior_effect_sums(network, behavior, spec, ctx) -> np.ndarray:
    """Behavior-side statistic sums over actors for one wave."""
    if not spec.n_behavior:
        return np.zeros(0)
    n = network.shape[0]
    cols = [[] for _ in range(spec.n_behavior)]
    for i in range(n):
        row = actor_behavior_stats(i, network, behavior, spec, ctx)
        for k in range(spec.n_behavior):
            cols[k].append(row[k])
    return np.array([math.fsum(c) for c in cols])


def moment_vector(dataset: PanelDataset, spec: EffectSpec, end_states=None, contexts=None) -> np.ndarray:
    """Moment statistics for the panel, observed or simulated.

    end_states is one (network, behavior) pair per period, defaulting to
    the observed waves 2..T; each period is measured against its observed
    start wave. Per-period change volumes come first (tie changes count
    both directed variables, level changes sum absolute jumps), then one
    entry per effect.

    Effect statistics are cross-lagged: network-side effects are
    evaluated on the end-of-period network paired with the start-of-period
    behavior, behavior-side effects on the start-of-period network paired
    with the end-of-period behavior. Tie choices are thereby measured
    against the behavior that preceded them and level moves against the
    pre-existing network, which is what separates the two sides: summing
    both on the same wave would make the tie-side similarity statistic an
    exact multiple of the level-side one, and the two weights would be
    indistinguishable.
    """
    if contexts is None:
        contexts = wave_contexts(dataset)
    n_periods = dataset.n_periods
    if end_states is None:
        end_states = [(dataset.networks[m + 1], dataset.behaviors[m + 1]) for m in range(n_periods)]
    if len(end_states) != n_periods:
        raise ValueError("need one end state per period")

    rate_net = np.zeros(n_periods)
    rate_beh = np.zeros(n_periods)
    net_eff = np.zeros(spec.n_network)
    beh_eff = np.zeros(spec.n_behavior)
    for m in range(n_periods):
        net_end, beh_end = end_states[m]
        net_start = dataset.networks[m]
        beh_start = dataset.behaviors[m]
        new_ties = (int(net_end.sum()) - int(net_start.sum())) // 2
        rate_net[m] = 2.0 * new_ties
        rate_beh[m] = float(np.abs(beh_end - beh_start).sum())
        net_eff += network_effect_sums(net_end, beh_start, spec, contexts[m])
        beh_eff += behavior_effect_sums(net_start, beh_end, spec, contexts[m])
    return np.concatenate([rate_net, rate_beh, net_eff, beh_eff])


def target_statistics(dataset: PanelDataset, spec: EffectSpec, contexts=None) -> TargetStatistics:
    """Observed moment targets over waves 2..T, conditioning on wave 1."""
    vec = moment_vector(dataset, spec, end_states=None, contexts=contexts)
    p = dataset.n_periods
    k1 = spec.n_network
    return TargetStatistics(
        rate_net=vec[:p],
        rate_beh=vec[p : 2 * p],
        net_effects=vec[2 * p : 2 * p + k1],
        beh_effects=vec[2 * p + k1 :],
    )
