"""Method-of-moments estimation by stochastic approximation.

The estimator searches for parameters at which the expected simulated
moment statistics equal their observed targets. It runs three phases:

1. pilot: simulations at the starting point measure each statistic's
   spread, giving the diagonal scaling for the updates (raw statistics
   span several orders of magnitude, so unscaled identity steps diverge);
2. main: decreasing-gain iterations theta <- theta - step * scaled
   deviation, with one (or a configured number of) conditional panel
   simulations per iteration; the estimate is the average of the final
   quarter of iterates;
3. check: independent simulations at the estimate produce per-statistic
   deviation means, spreads, and t-ratios; the fit converged when every
   stochastic t-ratio is small.

Standard errors use the delta method: the Jacobian of expected
statistics with respect to the parameters is estimated by
common-random-number finite differences and combined with the simulated
statistic covariance. A growing-network panel makes the degree moment an
exact affine function of the per-period tie-change moments, so that
Jacobian is structurally rank-deficient whenever a model carries both a
degree effect and the full set of network rates; the solver therefore
works through the SVD, reports the collinear combination, and restricts
the variance to the identified subspace (strict mode raises instead).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .effects import EffectSpec, moment_names, target_statistics, wave_contexts
from .panel import PanelDataset
from .simulate import ParameterVector, replicated_moments

__all__ = [
    "EstimationConfig",
    "EstimationDiverged",
    "CollinearStatisticsError",
    "CheckRow",
    "CheckResult",
    "EstimationResult",
    "step_size",
    "rm_step",
    "initial_parameters",
    "robbins_monro",
    "convergence_check",
    "delta_method_se",
    "standard_errors",
    "estimate",
    "significance_stars",
]

logger = logging.getLogger(__name__)

_PHASE_PILOT = 1
_PHASE_MAIN = 2
_PHASE_CHECK = 3
_PHASE_JACOBIAN = 4


class EstimationDiverged(RuntimeError):
    """A parameter left the configured bounds during the main phase."""


class CollinearStatisticsError(RuntimeError):
    """The moment Jacobian is singular; carries the involved statistics."""

    def __init__(self, combinations: list[list[str]]):
        self.combinations = combinations
        parts = ["{" + ", ".join(c) + "}" for c in combinations]
        super().__init__("collinear statistics: " + "; ".join(parts))


@dataclass(frozen=True)
class EstimationConfig:
    """Tuning knobs for the three estimation phases.

    The gain sequence is gain_a / (gain_b + t). deviation_clip truncates
    scaled deviations (0 disables) so early wild draws cannot throw the
    iterates; divergence_bound aborts runaway parameter paths.
    """

    base_seed: int = 0
    gain_a: float = 1.0
    gain_b: float = 9.0
    n_pilot: int = 50
    n_main: int = 500
    n_check: int = 1000
    replications: int = 1
    tau: float = 0.1
    rate_floor: float = 1e-4
    deviation_clip: float = 4.0
    divergence_bound: float = 1000.0
    jacobian_replications: int = 50
    jacobian_rel_step: float = 0.05
    jacobian_abs_step: float = 0.05
    threads: int = 1

    def __post_init__(self):
        if self.gain_a <= 0 or self.gain_b < 0:
            raise ValueError("need gain_a > 0 and gain_b >= 0")
        if min(self.n_pilot, self.n_main, self.n_check) < 1:
            raise ValueError("phase lengths must be at least 1")
        if self.replications < 1 or self.jacobian_replications < 1:
            raise ValueError("replication counts must be at least 1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    @classmethod
    def from_mapping(cls, m) -> "EstimationConfig":
        fields = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in dict(m).items() if k in fields})


def step_size(config: EstimationConfig, t: int) -> float:
    """Gain at iteration t (1-based): gain_a / (gain_b + t)."""
    return config.gain_a / (config.gain_b + t)


def rm_step(theta: np.ndarray, scaled_deviation: np.ndarray, step: float) -> np.ndarray:
    """One stochastic-approximation update; a zero deviation returns theta
    unchanged, exactly."""
    return theta - step * np.asarray(scaled_deviation, dtype=np.float64)


def initial_parameters(dataset: PanelDataset, spec: EffectSpec, rate_floor: float = 1e-4) -> ParameterVector:
    """Starting point: per-period change targets divided by the actor
    count for the rates (floored when a period shows no change), zeros
    for every effect weight."""
    targets = target_statistics(dataset, spec)
    n = dataset.n_actors
    return ParameterVector(
        rate_net=np.maximum(targets.rate_net / n, rate_floor),
        rate_beh=np.maximum(targets.rate_beh / n, rate_floor),
        beta_net=np.zeros(spec.n_network),
        beta_beh=np.zeros(spec.n_behavior),
    )


def _clamp_rates(vec: np.ndarray, n_periods: int, floor: float) -> np.ndarray:
    vec = vec.copy()
    vec[: 2 * n_periods] = np.maximum(vec[: 2 * n_periods], floor)
    return vec


def robbins_monro(
    dataset: PanelDataset,
    spec: EffectSpec,
    config: EstimationConfig,
    theta0: ParameterVector,
    targets: np.ndarray,
    scale: np.ndarray,
    contexts=None,
):
    """Main-phase iteration; returns (path, theta_hat).

    path has one row per visited parameter vector (n_main + 1 rows);
    theta_hat averages the final quarter of post-update iterates. Rates
    are clamped positive after every step.
    """
    if contexts is None:
        contexts = wave_contexts(dataset)
    n_periods = dataset.n_periods
    theta = theta0.vector()
    path = [theta.copy()]
    names = moment_names(spec, n_periods)
    for t in range(1, config.n_main + 1):
        params = ParameterVector.from_vector(theta, n_periods, spec)
        sims = replicated_moments(
            dataset,
            params,
            spec,
            seed_root=[config.base_seed, _PHASE_MAIN, t],
            n_reps=config.replications,
            threads=config.threads,
            contexts=contexts,
        )
        deviation = (sims.mean(axis=0) - targets) / scale
        if config.deviation_clip > 0:
            deviation = np.clip(deviation, -config.deviation_clip, config.deviation_clip)
        theta = rm_step(theta, deviation, step_size(config, t))
        theta = _clamp_rates(theta, n_periods, config.rate_floor)
        too_big = np.abs(theta) > config.divergence_bound
        if np.any(too_big):
            k = int(np.flatnonzero(too_big)[0])
            raise EstimationDiverged(
                f"iteration {t}: parameter {names[k]} reached {theta[k]:.3g} "
                f"(bound {config.divergence_bound:g}); last scaled deviation "
                f"{deviation[k]:.3g}"
            )
        path.append(theta.copy())
        if t % 50 == 0:
            logger.debug("main %d: max |scaled dev| %.3f", t, float(np.abs(deviation).max()))
    path = np.array(path)
    tail = max(1, config.n_main // 4)
    theta_hat = path[1:][-tail:].mean(axis=0)
    return path, ParameterVector.from_vector(theta_hat, n_periods, spec)


@dataclass
class CheckRow:
    name: str
    target: float
    mean_deviation: float
    sd_deviation: float
    t_ratio: float
    non_stochastic: bool


@dataclass
class CheckResult:
    rows: list[CheckRow]
    converged: bool
    max_abs_t: float
    moments: np.ndarray  # (n_check, P) simulated statistics

    def covariance(self) -> np.ndarray:
        return np.atleast_2d(np.cov(self.moments, rowvar=False, ddof=1))


def convergence_check(
    theta_hat: ParameterVector,
    dataset: PanelDataset,
    spec: EffectSpec,
    n_check: int,
    seed,
    tau: float = 0.1,
    threads: int = 1,
    contexts=None,
    targets: np.ndarray | None = None,
) -> CheckResult:
    """Simulate independently at the estimate and compare per-statistic
    deviations from the targets.

    A statistic with zero spread is flagged non-stochastic (its t-ratio
    is meaningless); convergence requires every stochastic |t-ratio| to
    stay at or below tau and no non-stochastic statistic to sit off its
    target.
    """
    if n_check < 2:
        raise ValueError("n_check must be at least 2")
    if contexts is None:
        contexts = wave_contexts(dataset)
    if targets is None:
        targets = target_statistics(dataset, spec, contexts=contexts).vector()
    seed_root = [int(seed), _PHASE_CHECK] if np.isscalar(seed) else list(seed)
    sims = replicated_moments(
        dataset, theta_hat, spec, seed_root=seed_root, n_reps=n_check, threads=threads, contexts=contexts
    )
    names = moment_names(spec, dataset.n_periods)
    rows = deviation_rows(sims, targets, names)
    stochastic_ts = [abs(r.t_ratio) for r in rows if not r.non_stochastic]
    off_target = any(r.non_stochastic and r.mean_deviation != 0 for r in rows)
    max_abs_t = max(stochastic_ts) if stochastic_ts else 0.0
    converged = (max_abs_t <= tau) and not off_target
    return CheckResult(rows=rows, converged=converged, max_abs_t=float(max_abs_t), moments=sims)


def deviation_rows(sims: np.ndarray, targets: np.ndarray, names) -> list[CheckRow]:
    """Per-statistic deviation summaries: mean, spread, and their ratio.

    A statistic whose deviations never vary is flagged non-stochastic;
    its t-ratio is 0 when it sits on the target and infinite otherwise.
    """
    deviations = np.atleast_2d(sims) - np.asarray(targets, dtype=np.float64)
    means = deviations.mean(axis=0)
    sds = deviations.std(axis=0, ddof=1)
    rows = []
    for k, name in enumerate(names):
        if sds[k] > 0:
            rows.append(
                CheckRow(name, float(targets[k]), float(means[k]), float(sds[k]),
                         float(means[k] / sds[k]), False)
            )
        else:
            t = math.inf if means[k] != 0 else 0.0
            rows.append(CheckRow(name, float(targets[k]), float(means[k]), float(sds[k]), t, True))
    return rows


def delta_method_se(jacobian: np.ndarray, covariance: np.ndarray, names=None, strict: bool = False):
    """Parameter standard errors sqrt(diag(D^-1 Sigma D^-T)).

    Statistic rows are rescaled by their own spread before the rank
    decision, since raw statistics differ by orders of magnitude. Exactly
    dependent rows (which arise structurally for degree-plus-rates models
    on growing networks) are projected out and reported, unless strict,
    in which case they raise CollinearStatisticsError naming the
    statistics involved.
    """
    d = np.asarray(jacobian, dtype=np.float64)
    sigma = np.atleast_2d(np.asarray(covariance, dtype=np.float64))
    p = d.shape[0]
    if names is None:
        names = [f"statistic {k}" for k in range(p)]
    row_scale = np.sqrt(np.clip(np.diagonal(sigma), 0.0, None))
    row_scale = np.where(row_scale > 0, row_scale, 1.0)
    d_scaled = d / row_scale[:, None]
    sigma_scaled = sigma / np.outer(row_scale, row_scale)
    u, sv, vt = np.linalg.svd(d_scaled)
    tol = sv.max() * 1e-8 if sv.size else 0.0
    null_idx = np.flatnonzero(sv <= tol)
    combinations = []
    member_idx = set()
    for idx in null_idx:
        load = u[:, idx]
        members = np.flatnonzero(np.abs(load) > 0.05 * np.abs(load).max())
        member_idx.update(int(k) for k in members)
        combinations.append([names[k] for k in members])
    if combinations and strict:
        raise CollinearStatisticsError(combinations)
    inv_sv = np.where(sv > tol, 1.0 / np.where(sv > tol, sv, 1.0), 0.0)
    d_pinv = vt.T @ np.diag(inv_sv) @ u.T
    cov_theta = d_pinv @ sigma_scaled @ d_pinv.T
    se = np.sqrt(np.clip(np.diagonal(cov_theta), 0.0, None))
    # An exactly dependent statistic combination spans an unidentified
    # parameter direction: the sampling variance of the parameters paired
    # with those statistics is unbounded along it, not zero, so they get
    # infinite standard errors rather than the projected (understated)
    # ones. The statistic support is used because it is exact in the
    # presence of simulation noise, and this estimator pairs moment k
    # with parameter k.
    unidentified = np.zeros(p, dtype=bool)
    unidentified[sorted(member_idx)] = True
    se = np.where(unidentified, np.inf, se)
    return se, combinations


def estimate_jacobian(
    theta_hat: ParameterVector,
    dataset: PanelDataset,
    spec: EffectSpec,
    config: EstimationConfig,
    contexts=None,
) -> np.ndarray:
    """Finite-difference Jacobian d E[S] / d theta at the estimate, using
    common random numbers: every perturbed batch replays the seed streams
    of the base batch."""
    if contexts is None:
        contexts = wave_contexts(dataset)
    n_periods = dataset.n_periods
    theta = theta_hat.vector()
    p = theta.shape[0]
    seed_root = [config.base_seed, _PHASE_JACOBIAN]
    base = replicated_moments(
        dataset, theta_hat, spec, seed_root=seed_root, n_reps=config.jacobian_replications,
        threads=config.threads, contexts=contexts,
    ).mean(axis=0)
    jac = np.zeros((p, p))
    for k in range(p):
        delta = max(config.jacobian_rel_step * abs(theta[k]), config.jacobian_abs_step)
        pert = theta.copy()
        pert[k] += delta
        pert_params = ParameterVector.from_vector(pert, n_periods, spec)
        pert_mean = replicated_moments(
            dataset, pert_params, spec, seed_root=seed_root, n_reps=config.jacobian_replications,
            threads=config.threads, contexts=contexts,
        ).mean(axis=0)
        jac[:, k] = (pert_mean - base) / delta
    return jac


def standard_errors(
    theta_hat: ParameterVector,
    dataset: PanelDataset,
    spec: EffectSpec,
    config: EstimationConfig,
    covariance: np.ndarray | None = None,
    contexts=None,
    strict: bool = False,
):
    """Delta-method standard errors at the estimate.

    covariance defaults to a fresh batch of simulations at theta_hat (the
    check phase's statistic covariance can be passed in to reuse it).
    Returns (se, jacobian, collinear_combinations).
    """
    if contexts is None:
        contexts = wave_contexts(dataset)
    if covariance is None:
        sims = replicated_moments(
            dataset, theta_hat, spec, seed_root=[config.base_seed, _PHASE_CHECK],
            n_reps=max(config.n_check, 2), threads=config.threads, contexts=contexts,
        )
        covariance = np.atleast_2d(np.cov(sims, rowvar=False, ddof=1))
    names = moment_names(spec, dataset.n_periods)
    jac = estimate_jacobian(theta_hat, dataset, spec, config, contexts=contexts)
    se, combos = delta_method_se(jac, covariance, names=names, strict=strict)
    return se, jac, combos


def significance_stars(estimate_value: float, se: float) -> str:
    if not (se > 0) or not math.isfinite(se):
        return ""
    z = abs(estimate_value / se)
    p = math.erfc(z / math.sqrt(2.0))
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


@dataclass
class EstimationResult:
    """Estimates, uncertainty, and diagnostics of one estimation run."""

    spec: EffectSpec
    config: EstimationConfig
    parameter_names: list[str]
    theta_hat: ParameterVector
    standard_errors: np.ndarray
    targets: np.ndarray
    check: CheckResult
    converged: bool
    theta_path: np.ndarray
    scale: np.ndarray
    collinear: list[list[str]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def max_abs_t(self) -> float:
        return self.check.max_abs_t

    def to_dict(self) -> dict:
        est = self.theta_hat.vector()
        return {
            "converged": bool(self.converged),
            "max_abs_t_ratio": self.check.max_abs_t,
            "parameters": [
                {
                    "name": name,
                    "estimate": float(est[k]),
                    "se": float(self.standard_errors[k]) if math.isfinite(self.standard_errors[k]) else None,
                    "stars": significance_stars(est[k], self.standard_errors[k]),
                }
                for k, name in enumerate(self.parameter_names)
            ],
            "statistics": [
                {
                    "name": r.name,
                    "target": r.target,
                    "mean_deviation": r.mean_deviation,
                    "sd_deviation": r.sd_deviation,
                    "t_ratio": r.t_ratio if math.isfinite(r.t_ratio) else None,
                    "non_stochastic": r.non_stochastic,
                }
                for r in self.check.rows
            ],
            "collinear_statistics": self.collinear,
            "notes": list(self.notes),
            "effects": self.spec.to_config(),
        }

    def format_report(self) -> str:
        """Two-block text table: one row per parameter, estimate with
        significance stars and the standard error in parentheses."""
        est = self.theta_hat.vector()
        p = self.theta_hat.n_periods
        k1 = self.spec.n_network
        net_idx = list(range(p)) + list(range(2 * p, 2 * p + k1))
        beh_idx = list(range(p, 2 * p)) + list(range(2 * p + k1, est.shape[0]))
        width = max((len(self.parameter_names[k]) for k in net_idx + beh_idx), default=10) + 2

        def block(title, idx):
            lines = [title]
            for k in idx:
                se = self.standard_errors[k]
                if math.isfinite(se):
                    tail = f"{significance_stars(est[k], se):<3} ({se:.3f})"
                else:
                    tail = "    (not identified)"
                lines.append(f"  {self.parameter_names[k]:<{width}}{est[k]:>10.3f}{tail}")
            return lines

        lines = block("network parameters", net_idx)
        lines.append("")
        lines += block("behavior parameters", beh_idx)
        lines.append("")
        lines.append("significance: *** p<0.01, ** p<0.05, * p<0.1")
        lines.append(f"converged: {'yes' if self.converged else 'NO'} "
                     f"(max |t-ratio| {self.check.max_abs_t:.3f})")
        return "\n".join(lines) + "\n"

    def format_check_table(self) -> str:
        """Per-statistic convergence diagnostics table."""
        width = max(len(r.name) for r in self.check.rows) + 2
        lines = [f"  {'statistic':<{width}}{'target':>14}{'mean dev':>12}{'sd dev':>12}{'t-ratio':>10}"]
        for r in self.check.rows:
            t_txt = "n/a" if r.non_stochastic and r.t_ratio == 0.0 else (
                "inf" if not math.isfinite(r.t_ratio) else f"{r.t_ratio:.3f}")
            lines.append(
                f"  {r.name:<{width}}{r.target:>14.3f}{r.mean_deviation:>12.3f}"
                f"{r.sd_deviation:>12.3f}{t_txt:>10}"
            )
        return "\n".join(lines) + "\n"


def estimate(dataset: PanelDataset, spec: EffectSpec, config: EstimationConfig) -> EstimationResult:
    """Full estimation pipeline: starting point, pilot scaling, main
    stochastic-approximation phase, convergence check, standard errors.

    Non-convergence is reported through the result, never silently
    accepted; a diverging main phase raises EstimationDiverged.
    """
    contexts = wave_contexts(dataset)
    targets_vec = target_statistics(dataset, spec, contexts=contexts).vector()
    names = moment_names(spec, dataset.n_periods)
    theta0 = initial_parameters(dataset, spec, rate_floor=config.rate_floor)

    logger.info("pilot phase: %d simulations", config.n_pilot)
    pilot = replicated_moments(
        dataset, theta0, spec, seed_root=[config.base_seed, _PHASE_PILOT],
        n_reps=config.n_pilot, threads=config.threads, contexts=contexts,
    )
    scale = pilot.std(axis=0, ddof=1) if config.n_pilot > 1 else np.zeros(targets_vec.shape)
    notes = []
    flat = scale == 0
    if np.any(flat):
        for k in np.flatnonzero(flat):
            notes.append(f"statistic '{names[k]}' showed no variation in the pilot phase")
        scale = np.where(flat, 1.0, scale)

    logger.info("main phase: %d iterations x %d replications", config.n_main, config.replications)
    path, theta_hat = robbins_monro(dataset, spec, config, theta0, targets_vec, scale, contexts=contexts)

    logger.info("check phase: %d simulations", config.n_check)
    check = convergence_check(
        theta_hat, dataset, spec, config.n_check,
        seed=[config.base_seed, _PHASE_CHECK], tau=config.tau,
        threads=config.threads, contexts=contexts, targets=targets_vec,
    )
    for r in check.rows:
        if r.non_stochastic:
            notes.append(f"statistic '{r.name}' is non-stochastic at the estimate; "
                         "its parameter is not identified by these moments")

    se, _, combos = standard_errors(
        theta_hat, dataset, spec, config,
        covariance=check.covariance(), contexts=contexts, strict=False,
    )
    for combo in combos:
        notes.append("exactly dependent statistics (their parameters are not "
                     "separately identified): " + ", ".join(combo))
    for k in np.flatnonzero(~np.isfinite(se)):
        notes.append(f"parameter '{names[k]}' lies in an unidentified direction; "
                     "no finite standard error exists")

    result = EstimationResult(
        spec=spec,
        config=config,
        parameter_names=names,
        theta_hat=theta_hat,
        standard_errors=se,
        targets=targets_vec,
        check=check,
        converged=check.converged,
        theta_path=path,
        scale=scale,
        collinear=combos,
        notes=notes,
    )
    logger.info("converged: %s (max |t| %.3f)", check.converged, check.max_abs_t)
    return result
