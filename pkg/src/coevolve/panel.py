"""Longitudinal network-behavior panel data.

A panel is a fixed set of actors observed at discrete waves. Each wave
carries a symmetric binary friendship network and an integer activity
level per actor, plus wave-constant actor covariates. Ties never
dissolve across waves, so the network grows monotonically.

This module loads and validates panels from plain CSV files, discretizes
raw activity counts into levels, and produces the standard descriptive
tables (density, tie turnover and Jaccard stability, level histograms,
activity-class labels).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "DataError",
    "CovariateTable",
    "PanelDataset",
    "LoadConfig",
    "LABEL_HIGH",
    "LABEL_MID",
    "LABEL_LOW",
    "load_dataset",
    "bin_counts_to_levels",
    "describe_network",
    "network_change_table",
    "behavior_change_table",
    "classify_activity",
]

# Activity classes: top decile, bottom decile, everyone else.
LABEL_HIGH = "high"
LABEL_MID = "mid"
LABEL_LOW = "low"

COVARIATE_NAMES = ("gender", "age", "tenure")


class DataError(ValueError):
    """Raised when an input file or array violates the panel contract."""


@dataclass(frozen=True)
class CovariateTable:
    """Wave-constant actor covariates.

    gender is a categorical code (arbitrary non-negative integers, not
    necessarily binary); age and tenure are numeric.
    """

    gender: np.ndarray
    age: np.ndarray
    tenure: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gender", np.asarray(self.gender, dtype=np.int64))
        object.__setattr__(self, "age", np.asarray(self.age, dtype=np.float64))
        object.__setattr__(self, "tenure", np.asarray(self.tenure, dtype=np.float64))
        n = self.gender.shape[0]
        if self.age.shape != (n,) or self.tenure.shape != (n,):
            raise DataError("covariate columns must have one row per actor")

    @property
    def n_actors(self) -> int:
        return self.gender.shape[0]

    def column(self, name: str) -> np.ndarray:
        if name not in COVARIATE_NAMES:
            raise KeyError(f"unknown covariate {name!r}")
        return getattr(self, name)

    @classmethod
    def zeros(cls, n_actors: int) -> "CovariateTable":
        z = np.zeros(n_actors)
        return cls(gender=z.astype(np.int64), age=z.copy(), tenure=z.copy())


@dataclass
class PanelDataset:
    """Validated panel of networks, behavior levels, and covariates.

    networks has shape (T, N, N) with symmetric 0/1 entries and zero
    diagonal; behaviors has shape (T, N) with levels in [1, n_levels].
    raw_counts optionally keeps the pre-binning activity counts, needed
    by the regression baselines.
    """

    networks: np.ndarray
    behaviors: np.ndarray
    n_levels: int
    covariates: CovariateTable
    raw_counts: np.ndarray | None = None

    def __post_init__(self):
        self.networks = np.asarray(self.networks, dtype=np.uint8)
        self.behaviors = np.asarray(self.behaviors, dtype=np.int64)
        if self.raw_counts is not None:
            self.raw_counts = np.asarray(self.raw_counts, dtype=np.int64)
        self.validate()

    @property
    def n_waves(self) -> int:
        return self.networks.shape[0]

    @property
    def n_actors(self) -> int:
        return self.networks.shape[1]

    @property
    def n_periods(self) -> int:
        return self.n_waves - 1

    def validate(self) -> None:
        nets, beh = self.networks, self.behaviors
        if nets.ndim != 3 or nets.shape[1] != nets.shape[2]:
            raise DataError("networks must have shape (n_waves, N, N)")
        t, n = nets.shape[0], nets.shape[1]
        if t < 2:
            raise DataError("a panel needs at least two waves")
        if n < 1:
            raise DataError("a panel needs at least one actor")
        if beh.shape != (t, n):
            raise DataError("behaviors must have shape (n_waves, N)")
        if self.n_levels < 2:
            raise DataError("n_levels must be at least 2")
        if self.covariates.n_actors != n:
            raise DataError("covariate table does not match the actor count")
        if self.raw_counts is not None and self.raw_counts.shape != (t, n):
            raise DataError("raw_counts must have shape (n_waves, N)")
        for w in range(t):
            a = nets[w]
            if np.any(np.diagonal(a) != 0):
                i = int(np.flatnonzero(np.diagonal(a))[0])
                raise DataError(f"self-loop: actor {i} at wave {w + 1}")
            if not np.array_equal(a, a.T):
                i, j = np.argwhere(a != a.T)[0]
                raise DataError(f"asymmetric tie ({i}, {j}) at wave {w + 1}")
            bad = (beh[w] < 1) | (beh[w] > self.n_levels)
            if np.any(bad):
                i = int(np.flatnonzero(bad)[0])
                raise DataError(
                    f"level out of [1, {self.n_levels}]: actor {i}, wave {w + 1}, "
                    f"value {int(beh[w, i])}"
                )
        for w in range(t - 1):
            lost = (nets[w] == 1) & (nets[w + 1] == 0)
            if np.any(lost):
                i, j = np.argwhere(lost)[0]
                raise DataError(
                    f"tie dissolution: pair ({i}, {j}) present at wave {w + 1}, "
                    f"absent at wave {w + 2}"
                )

    def tie_count(self, wave: int) -> int:
        """Number of undirected ties at a wave (0-indexed)."""
        return int(self.networks[wave].sum()) // 2


@dataclass(frozen=True)
class LoadConfig:
    """Ingestion settings.

    behavior_value selects whether the behavior file carries already
    discretized levels or raw counts to be binned; binning picks pooled
    breakpoints (one set over all waves) or per-wave breakpoints.
    """

    n_levels: int
    behavior_value: str = "level"  # "level" | "count"
    binning: str = "pooled"  # "pooled" | "per_wave"
    cutoff_low: float = 0.10
    cutoff_high: float = 0.90

    def __post_init__(self):
        if self.n_levels < 2:
            raise DataError("n_levels must be at least 2")
        if self.behavior_value not in ("level", "count"):
            raise DataError("behavior_value must be 'level' or 'count'")
        if self.binning not in ("pooled", "per_wave"):
            raise DataError("binning must be 'pooled' or 'per_wave'")
        if not (0.0 < self.cutoff_low < self.cutoff_high < 1.0):
            raise DataError("cutoffs must satisfy 0 < low < high < 1")

    @classmethod
    def from_mapping(cls, m: Mapping) -> "LoadConfig":
        known = {"n_levels", "behavior_value", "binning", "cutoff_low", "cutoff_high"}
        kwargs = {k: m[k] for k in known if k in m}
        if "n_levels" not in kwargs:
            raise DataError("config is missing n_levels")
        kwargs["n_levels"] = int(kwargs["n_levels"])
        return cls(**kwargs)


def _read_rows(path, expected_header: Sequence[str], kind: str):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {kind} file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{kind} file {path} is empty") from None
        if [h.strip() for h in header] != list(expected_header):
            raise DataError(
                f"{kind} file {path}: expected header {','.join(expected_header)}, "
                f"got {','.join(header)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(expected_header):
                raise DataError(f"{kind} file {path} line {lineno}: malformed row")
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                raise DataError(
                    f"{kind} file {path} line {lineno}: non-numeric field"
                ) from None
        return rows


def load_dataset(edge_file, behavior_file, covariate_file, config) -> PanelDataset:
    """Load a panel from the three CSV files.

    Edge rows are `wave,src,dst` with src < dst and each wave listing its
    full cumulative tie set; behavior rows are `wave,actor,value`;
    covariate rows are `actor,gender,age,tenure_days`. Every malformed or
    contradictory record is rejected with the offending record named.
    """
    if not isinstance(config, LoadConfig):
        config = LoadConfig.from_mapping(config)

    cov_rows = _read_rows(covariate_file, ("actor", "gender", "age", "tenure_days"), "covariates")
    if not cov_rows:
        raise DataError(f"covariates file {covariate_file} has no rows")
    n = len(cov_rows)
    seen = set()
    gender = np.zeros(n, dtype=np.int64)
    age = np.zeros(n)
    tenure = np.zeros(n)
    for actor, g, a, tn in cov_rows:
        i = int(actor)
        if i < 0 or i >= n or i in seen:
            raise DataError(
                f"covariates: actor ids must be dense in [0, {n}) without repeats; "
                f"offending id {i}"
            )
        seen.add(i)
        gender[i], age[i], tenure[i] = int(g), a, tn
    covariates = CovariateTable(gender=gender, age=age, tenure=tenure)

    edge_rows = _read_rows(edge_file, ("wave", "src", "dst"), "edges")
    beh_rows = _read_rows(behavior_file, ("wave", "actor", "value"), "behavior")
    if not beh_rows:
        raise DataError(f"behavior file {behavior_file} has no rows")
    waves = sorted({int(r[0]) for r in beh_rows} | {int(r[0]) for r in edge_rows})
    t = max(waves) if waves else 0
    if t < 2:
        raise DataError("behavior file must cover at least two waves")
    if waves != list(range(1, t + 1)):
        raise DataError(f"waves must be numbered 1..T without gaps, got {waves}")

    networks = np.zeros((t, n, n), dtype=np.uint8)
    for wave, src, dst in edge_rows:
        w, i, j = int(wave), int(src), int(dst)
        if not (1 <= w <= t):
            raise DataError(f"edges: wave {w} out of range 1..{t}")
        for actor in (i, j):
            if actor < 0 or actor >= n:
                raise DataError(f"edges: unknown actor id {actor} (wave {w})")
        if i == j:
            raise DataError(f"edges: self-loop ({i}, {j}) at wave {w}")
        if i > j:
            raise DataError(f"edges: expected src < dst, got ({i}, {j}) at wave {w}")
        if networks[w - 1, i, j]:
            raise DataError(f"edges: duplicate edge ({i}, {j}) at wave {w}")
        networks[w - 1, i, j] = 1
        networks[w - 1, j, i] = 1

    values = np.full((t, n), -1, dtype=np.int64)
    for wave, actor, value in beh_rows:
        w, i = int(wave), int(actor)
        if not (1 <= w <= t):
            raise DataError(f"behavior: wave {w} out of range 1..{t}")
        if i < 0 or i >= n:
            raise DataError(f"behavior: unknown actor id {i} (wave {w})")
        if values[w - 1, i] != -1:
            raise DataError(f"behavior: duplicate record for actor {i} at wave {w}")
        v = int(value)
        if v != value:
            raise DataError(f"behavior: non-integer value for actor {i} at wave {w}")
        values[w - 1, i] = v
    missing = np.argwhere(values < 0)
    if config.behavior_value == "level" and missing.size:
        w, i = missing[0]
        raise DataError(f"behavior: missing record for actor {int(i)} at wave {int(w) + 1}")
    if config.behavior_value == "count":
        if missing.size:
            w, i = missing[0]
            raise DataError(f"behavior: missing count for actor {int(i)} at wave {int(w) + 1}")
        if np.any(values < 0):
            raise DataError("behavior: counts must be non-negative")
        levels, _ = bin_counts_to_levels(values, config.n_levels, mode=config.binning)
        raw = values
    else:
        levels = values
        raw = None

    return PanelDataset(
        networks=networks,
        behaviors=levels,
        n_levels=config.n_levels,
        covariates=covariates,
        raw_counts=raw,
    )


def _quantile_breakpoints(values: np.ndarray, n_levels: int) -> np.ndarray:
    distinct = np.unique(values)
    if distinct.size == 1:
        # Degenerate distribution: everything collapses to the lowest level.
        return np.full(n_levels - 1, float(distinct[0]))
    if distinct.size < n_levels:
        raise DataError(
            f"only {distinct.size} distinct count values; cannot form {n_levels} "
            f"levels, use a smaller n_levels"
        )
    qs = np.arange(1, n_levels) / n_levels
    return np.quantile(values.astype(np.float64), qs)


def bin_counts_to_levels(raw_counts, n_levels: int, mode: str = "pooled"):
    """Discretize non-negative activity counts into levels 1..n_levels.

    Breakpoints are upper quantile bounds: level(c) = 1 + #{breakpoints
    strictly below c}. In pooled mode one breakpoint set is computed from
    all actor-waves and applied everywhere; in per_wave mode each wave
    gets its own set. Returns (levels, breakpoints).
    """
    counts = np.asarray(raw_counts, dtype=np.int64)
    if n_levels < 2:
        raise DataError("n_levels must be at least 2")
    if np.any(counts < 0):
        raise DataError("counts must be non-negative")
    if mode == "pooled":
        breaks = _quantile_breakpoints(counts.ravel(), n_levels)
        levels = 1 + (counts[..., None] > breaks).sum(axis=-1)
    elif mode == "per_wave":
        if counts.ndim != 2:
            raise DataError("per_wave binning needs a (n_waves, N) count array")
        breaks = np.stack([_quantile_breakpoints(row, n_levels) for row in counts])
        levels = 1 + (counts[..., None] > breaks[:, None, :]).sum(axis=-1)
    else:
        raise DataError("mode must be 'pooled' or 'per_wave'")
    return levels.astype(np.int64), breaks


def describe_network(dataset: PanelDataset) -> list[dict]:
    """Per-wave tie count, density, and average degree."""
    n = dataset.n_actors
    pairs = n * (n - 1) // 2
    out = []
    for w in range(dataset.n_waves):
        ties = dataset.tie_count(w)
        out.append(
            {
                "wave": w + 1,
                "tie_count": ties,
                "density": ties / pairs if pairs else 0.0,
                "average_degree": 2.0 * ties / n,
            }
        )
    return out


def network_change_table(dataset: PanelDataset) -> list[dict]:
    """Per-period tie-change counts over unordered pairs and Jaccard stability.

    jaccard is None when a period has no ties in either wave (empty
    union), which is reported as undefined rather than zero.
    """
    out = []
    n = dataset.n_actors
    pairs = n * (n - 1) // 2
    iu = np.triu_indices(n, k=1)
    for m in range(dataset.n_periods):
        a = dataset.networks[m][iu]
        b = dataset.networks[m + 1][iu]
        n11 = int(np.sum((a == 1) & (b == 1)))
        n01 = int(np.sum((a == 0) & (b == 1)))
        n10 = int(np.sum((a == 1) & (b == 0)))
        n00 = pairs - n11 - n01 - n10
        union = n01 + n10 + n11
        out.append(
            {
                "period": m + 1,
                "n00": n00,
                "n01": n01,
                "n10": n10,
                "n11": n11,
                "jaccard": n11 / union if union else None,
            }
        )
    return out


def behavior_change_table(dataset: PanelDataset):
    """Per-period level-change counts and the per-wave level histogram.

    Returns (changes, histogram) where changes is a list of dicts with
    n_decrease/n_increase/n_constant summing to N, and histogram has
    shape (n_levels, n_waves) with columns summing to N.
    """
    beh = dataset.behaviors
    changes = []
    for m in range(dataset.n_periods):
        diff = beh[m + 1] - beh[m]
        changes.append(
            {
                "period": m + 1,
                "n_decrease": int(np.sum(diff < 0)),
                "n_increase": int(np.sum(diff > 0)),
                "n_constant": int(np.sum(diff == 0)),
            }
        )
    hist = np.zeros((dataset.n_levels, dataset.n_waves), dtype=np.int64)
    for w in range(dataset.n_waves):
        counts = np.bincount(beh[w], minlength=dataset.n_levels + 1)
        hist[:, w] = counts[1:]
    return changes, hist


def classify_activity(levels, cutoff_low: float = 0.10, cutoff_high: float = 0.90) -> np.ndarray:
    """Label each actor of one wave as high, low, or mid activity.

    Nearest-rank cutoffs: an actor is high iff its level is >= the k-th
    largest level and low iff <= the k-th smallest, with k = ceil(share *
    N) for the respective decile share. Actors qualifying for both (a
    dispersion-free wave) fall back to mid, because extremes are
    meaningless without spread.
    """
    lv = np.asarray(levels, dtype=np.int64)
    n = lv.shape[0]
    order = np.sort(lv)
    k_low = max(1, math.ceil(cutoff_low * n))
    k_high = max(1, math.ceil((1.0 - cutoff_high) * n))
    low_cut = order[k_low - 1]
    high_cut = order[n - k_high]
    is_low = lv <= low_cut
    is_high = lv >= high_cut
    labels = np.full(n, LABEL_MID, dtype="U4")
    labels[is_high] = LABEL_HIGH
    labels[is_low] = LABEL_LOW
    labels[is_high & is_low] = LABEL_MID
    return labels
