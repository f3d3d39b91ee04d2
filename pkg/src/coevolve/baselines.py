"""Discrete-time aggregated-network regression baselines.

Collapses the panel into per-actor-per-period rows (lagged new-tie count,
lagged friends' activity total, demographics, time dummies) and fits a
within-transformed linear model and a conditional fixed-effects Poisson
model of the activity count. Time-invariant regressors are absorbed by
the actor effects and reported as omitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .panel import CovariateTable, DataError

__all__ = [
    "RegressionPanel",
    "RegressionResult",
    "build_regression_panel",
    "fe_ols",
    "fe_poisson",
]


@dataclass
class RegressionPanel:
    """One row per (actor, period) with period >= 2; lag construction
    drops the first wave."""

    actor: np.ndarray
    wave: np.ndarray  # 1-indexed target wave, 2..T
    y: np.ndarray
    new_ties_lag: np.ndarray
    friend_posts_lag: np.ndarray
    age: np.ndarray
    tenure: np.ndarray
    gender: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.y.shape[0]


def build_regression_panel(raw_counts, networks, covariates: CovariateTable) -> RegressionPanel:
    """Assemble the regression rows from counts and cumulative networks.

    For a row targeting wave t (1-indexed, t >= 2): y is the actor's
    count at wave t, new_ties_lag counts the actor's ties created between
    waves t-1 and t, and friend_posts_lag sums the wave-(t-1) counts of
    the actor's wave-(t-1) friends.
    """
    counts = np.asarray(raw_counts, dtype=np.float64)
    nets = np.asarray(networks, dtype=np.uint8)
    if counts.ndim != 2 or nets.ndim != 3 or counts.shape[0] != nets.shape[0] or counts.shape[1] != nets.shape[1]:
        raise DataError(
            f"misaligned waves: counts cover {counts.shape} but networks cover "
            f"{nets.shape[:2]}"
        )
    t_waves, n = counts.shape
    if t_waves < 2:
        raise DataError("need at least two waves to build lagged rows")
    if covariates.n_actors != n:
        raise DataError("covariate table does not match the actor count")

    rows_actor, rows_wave, ys, d_lag, fp_lag = [], [], [], [], []
    degrees = nets.sum(axis=2).astype(np.int64)
    for w in range(1, t_waves):
        friend_posts = nets[w - 1].astype(np.float64) @ counts[w - 1]
        for i in range(n):
            rows_actor.append(i)
            rows_wave.append(w + 1)
            ys.append(counts[w, i])
            d_lag.append(float(degrees[w, i] - degrees[w - 1, i]))
            fp_lag.append(friend_posts[i])
    actor = np.array(rows_actor, dtype=np.int64)
    return RegressionPanel(
        actor=actor,
        wave=np.array(rows_wave, dtype=np.int64),
        y=np.array(ys),
        new_ties_lag=np.array(d_lag),
        friend_posts_lag=np.array(fp_lag),
        age=covariates.age[actor],
        tenure=covariates.tenure[actor],
        gender=covariates.gender[actor],
    )


def _design(panel: RegressionPanel):
    """Regressor matrix and names: lagged network terms, demographics,
    gender dummies (lowest code is the baseline), time dummies (first
    retained wave is the baseline)."""
    cols, names = [], []
    cols += [panel.new_ties_lag, panel.friend_posts_lag, panel.age, panel.tenure]
    names += ["new_ties_lag", "friend_posts_lag", "age", "tenure"]
    gender_codes = np.unique(panel.gender)
    for g in gender_codes[1:]:
        cols.append((panel.gender == g).astype(np.float64))
        names.append(f"gender={int(g)}")
    waves = np.unique(panel.wave)
    for w in waves[1:]:
        cols.append((panel.wave == w).astype(np.float64))
        names.append(f"wave={int(w)}")
    return np.column_stack(cols), names


def _demean_by(values: np.ndarray, groups: np.ndarray) -> np.ndarray:
    out = np.asarray(values, dtype=np.float64).copy()
    for g in np.unique(groups):
        mask = groups == g
        out[mask] -= out[mask].mean(axis=0)
    return out


@dataclass
class RegressionResult:
    """Fit summary: coefficient table plus omitted-variable markers."""

    kind: str
    names: list[str]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    omitted: list[str]
    n_obs: int
    n_actors: int
    r_squared: float | None = None
    dropped_actors: list[int] = field(default_factory=list)

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def se(self, name: str) -> float:
        return float(self.standard_errors[self.names.index(name)])

    def format_table(self) -> str:
        from .estimate import significance_stars

        order = [n for n in (["new_ties_lag", "friend_posts_lag", "age", "tenure"])]
        order += sorted(n for n in set(self.names) | set(self.omitted) if n.startswith("gender="))
        width = max(len(n) for n in order + ["time dummies", "sample size"]) + 2
        lines = [f"  {'variable':<{width}}{self.kind}"]
        for name in order:
            if name in self.omitted:
                lines.append(f"  {name:<{width}}(omitted)")
            elif name in self.names:
                c, s = self.coefficient(name), self.se(name)
                lines.append(f"  {name:<{width}}{c:.4g}{significance_stars(c, s)} ({s:.4g})")
        lines.append(f"  {'time dummies':<{width}}present")
        lines.append(f"  {'sample size':<{width}}{self.n_obs}")
        if self.r_squared is not None:
            lines.append(f"  {'r-squared':<{width}}{self.r_squared:.3f}")
        if self.dropped_actors:
            lines.append(f"  dropped all-zero actors: {len(self.dropped_actors)}")
        return "\n".join(lines) + "\n"


def _split_by_within_variance(x: np.ndarray, names: list[str], groups: np.ndarray):
    xd = _demean_by(x, groups)
    scale = np.maximum(np.abs(x).max(axis=0), 1.0)
    keep = np.abs(xd).max(axis=0) > 1e-10 * scale
    kept_names = [n for n, k in zip(names, keep) if k]
    omitted = [n for n, k in zip(names, keep) if not k]
    return xd[:, keep], x[:, keep], kept_names, omitted


def fe_ols(panel: RegressionPanel) -> RegressionResult:
    """Within-transformed least squares with time dummies.

    Actor means are swept from the response and every regressor; columns
    with no within-actor variance (the time-invariant demographics) are
    reported omitted rather than fit. Standard errors are conventional,
    with degrees of freedom charged for the absorbed actor effects.
    """
    x, names = _design(panel)
    xd, _, kept, omitted = _split_by_within_variance(x, names, panel.actor)
    yd = _demean_by(panel.y, panel.actor)
    n_actors = np.unique(panel.actor).shape[0]
    k = xd.shape[1]
    if k == 0:
        raise DataError("no regressor has within-actor variance")
    coef, _, rank, _ = np.linalg.lstsq(xd, yd, rcond=None)
    if rank < k:
        raise DataError("within-transformed design is rank deficient")
    resid = yd - xd @ coef
    dof = panel.n_rows - n_actors - k
    if dof <= 0:
        raise DataError("not enough observations for the fixed-effects fit")
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(xd.T @ xd)
    tss = float(yd @ yd)
    r2 = 1.0 - float(resid @ resid) / tss if tss > 0 else 0.0
    return RegressionResult(
        kind="fe_ols",
        names=kept,
        coefficients=coef,
        standard_errors=np.sqrt(np.diagonal(cov)),
        omitted=omitted,
        n_obs=panel.n_rows,
        n_actors=n_actors,
        r_squared=r2,
    )


def fe_poisson(panel: RegressionPanel, max_iter: int = 100, grad_tol: float = 1e-8) -> RegressionResult:
    """Conditional fixed-effects Poisson fit by Newton iteration.

    Actors whose counts are zero in every retained wave carry no
    information (their effect diverges) and are dropped with notice.
    Convergence requires the gradient's max norm below grad_tol;
    otherwise the last iterate is reported in the error.
    """
    y = np.asarray(panel.y, dtype=np.float64)
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise DataError("fe_poisson needs non-negative integer counts")
    x, names = _design(panel)
    _, x_kept, kept, omitted = _split_by_within_variance(x, names, panel.actor)
    k = x_kept.shape[1]
    if k == 0:
        raise DataError("no regressor has within-actor variance")

    groups = []
    dropped = []
    for g in np.unique(panel.actor):
        mask = panel.actor == g
        if y[mask].sum() == 0:
            dropped.append(int(g))
        else:
            groups.append((y[mask], x_kept[mask]))
    if not groups:
        raise DataError("every actor has all-zero counts")
    n_obs = sum(yg.shape[0] for yg, _ in groups)

    beta = np.zeros(k)
    for _ in range(max_iter):
        grad = np.zeros(k)
        hess = np.zeros((k, k))
        for yg, xg in groups:
            eta = xg @ beta
            eta -= eta.max()
            w = np.exp(eta)
            pi = w / w.sum()
            total = yg.sum()
            grad += xg.T @ (yg - total * pi)
            xbar = xg.T @ pi
            hess -= total * ((xg.T * pi) @ xg - np.outer(xbar, xbar))
        if np.abs(grad).max() < grad_tol:
            cov = np.linalg.inv(-hess)
            return RegressionResult(
                kind="fe_poisson",
                names=kept,
                coefficients=beta,
                standard_errors=np.sqrt(np.diagonal(cov)),
                omitted=omitted,
                n_obs=n_obs,
                n_actors=len(groups),
                dropped_actors=dropped,
            )
        beta = beta - np.linalg.solve(hess, grad)
    raise DataError(
        f"fe_poisson did not converge in {max_iter} iterations; "
        f"last iterate {np.array2string(beta, precision=4)}"
    )
