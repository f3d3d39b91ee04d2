"""Synthetic panel generation with known parameters.

Draws a sparse random starting wave, then lets the simulator evolve the
chain forward period by period. Unlike estimation-time simulation, the
generated waves are chained (each period starts from the previous
synthetic wave), producing one coherent trajectory whose true parameters
are known, for recovery experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .effects import EffectContext, EffectSpec
from .panel import CovariateTable, DataError, PanelDataset, classify_activity
from .simulate import ParameterVector, as_seed_sequence, simulate_period

__all__ = ["SynthesisConfig", "synthesize_dataset"]


@dataclass(frozen=True)
class SynthesisConfig:
    n_actors: int
    n_waves: int
    n_levels: int
    density: float
    spec: EffectSpec
    params: ParameterVector
    level_mode: str = "uniform"  # "uniform" | "skewed"
    cutoff_low: float = 0.10
    cutoff_high: float = 0.90

    def __post_init__(self):
        if self.n_actors < 2:
            raise DataError("need at least two actors")
        if self.n_waves < 2:
            raise DataError("need at least two waves")
        if not (0.0 <= self.density < 1.0):
            raise DataError("density must lie in [0, 1)")
        if self.level_mode not in ("uniform", "skewed"):
            raise DataError("level_mode must be 'uniform' or 'skewed'")
        if self.params.n_periods != self.n_waves - 1:
            raise DataError("params must carry one rate per period (n_waves - 1)")


def _start_levels(cfg: SynthesisConfig, rng) -> np.ndarray:
    if cfg.level_mode == "uniform":
        return rng.integers(1, cfg.n_levels + 1, size=cfg.n_actors)
    # Skewed: geometric-style decay over levels, most actors at the bottom.
    weights = 0.5 ** np.arange(cfg.n_levels)
    return 1 + rng.choice(cfg.n_levels, size=cfg.n_actors, p=weights / weights.sum())


def synthesize_dataset(cfg: SynthesisConfig, seed) -> PanelDataset:
    """Generate a full panel: random wave 1, simulated waves 2..T.

    Deterministic for a fixed seed; ties only accumulate, so the panel
    always satisfies the monotonicity contract.
    """
    rng = np.random.default_rng(as_seed_sequence(seed))
    n = cfg.n_actors
    covariates = CovariateTable(
        gender=rng.integers(0, 2, size=n),
        age=rng.integers(20, 27, size=n).astype(np.float64),
        tenure=rng.integers(800, 2600, size=n).astype(np.float64),
    )

    network = np.zeros((n, n), dtype=np.uint8)
    iu = np.triu_indices(n, k=1)
    draw = rng.random(iu[0].shape[0]) < cfg.density
    network[iu[0][draw], iu[1][draw]] = 1
    network |= network.T
    behavior = _start_levels(cfg, rng).astype(np.int64)

    networks = [network]
    behaviors = [behavior]
    for m in range(cfg.n_waves - 1):
        labels = classify_activity(behaviors[-1], cfg.cutoff_low, cfg.cutoff_high)
        ctx = EffectContext.build(covariates, cfg.n_levels, labels)
        rec = simulate_period(networks[-1], behaviors[-1], cfg.params, m, cfg.spec, ctx, seed=rng)
        networks.append(rec.network)
        behaviors.append(rec.behavior)

    return PanelDataset(
        networks=np.stack(networks),
        behaviors=np.stack(behaviors),
        n_levels=cfg.n_levels,
        covariates=covariates,
    )
