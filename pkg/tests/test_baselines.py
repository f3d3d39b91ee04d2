import numpy as np
import pytest

from coevolve.baselines import RegressionPanel, build_regression_panel, fe_ols, fe_poisson
from coevolve.panel import CovariateTable, DataError


def growing_networks(rng, n, waves, start_density=0.1, add_prob=0.1):
    nets = [np.zeros((n, n), dtype=np.uint8)]
    iu = np.triu_indices(n, k=1)
    mask = rng.random(iu[0].shape[0]) < start_density
    nets[0][iu[0][mask], iu[1][mask]] = 1
    nets[0] |= nets[0].T
    for _ in range(waves - 1):
        nxt = nets[-1].copy()
        free = np.argwhere(np.triu(nxt == 0, k=1))
        add = free[rng.random(free.shape[0]) < add_prob]
        for i, j in add:
            nxt[i, j] = nxt[j, i] = 1
        nets.append(nxt)
    return np.stack(nets)


def covs(n, rng=None):
    rng = rng or np.random.default_rng(0)
    return CovariateTable(
        gender=rng.integers(0, 3, size=n),
        age=rng.integers(20, 27, size=n).astype(float),
        tenure=rng.uniform(800, 2600, size=n),
    )


class TestBuildPanel:
    def test_one_row_per_actor_per_retained_period(self):
        rng = np.random.default_rng(1)
        n, waves = 7, 5
        counts = rng.integers(0, 20, size=(waves, n))
        panel = build_regression_panel(counts, growing_networks(rng, n, waves), covs(n))
        assert panel.n_rows == n * (waves - 1)
        assert panel.wave.min() == 2 and panel.wave.max() == waves

    def test_isolate_has_zero_friend_posts(self):
        n, waves = 4, 2
        nets = np.zeros((waves, n, n), dtype=np.uint8)
        counts = np.array([[5, 7, 9, 11], [1, 1, 1, 1]])
        panel = build_regression_panel(counts, nets, covs(n))
        assert np.all(panel.friend_posts_lag == 0.0)

    def test_friend_posts_sum_lagged_counts(self):
        n = 3
        nets = np.zeros((2, n, n), dtype=np.uint8)
        for i, j in [(0, 1), (0, 2)]:
            nets[0, i, j] = nets[0, j, i] = 1
        nets[1] = nets[0]
        counts = np.array([[0, 10, 20], [3, 3, 3]])
        panel = build_regression_panel(counts, nets, covs(n))
        row0 = (panel.actor == 0) & (panel.wave == 2)
        assert panel.friend_posts_lag[row0][0] == 30.0

    def test_new_tie_count_is_degree_gain(self):
        n = 3
        nets = np.zeros((2, n, n), dtype=np.uint8)
        nets[1, 0, 1] = nets[1, 1, 0] = 1
        nets[1, 0, 2] = nets[1, 2, 0] = 1
        counts = np.ones((2, n), dtype=int)
        panel = build_regression_panel(counts, nets, covs(n))
        gains = {int(a): g for a, g in zip(panel.actor, panel.new_ties_lag)}
        assert gains == {0: 2.0, 1: 1.0, 2: 1.0}

    def test_misaligned_waves_rejected(self):
        n = 4
        nets = np.zeros((3, n, n), dtype=np.uint8)
        counts = np.ones((2, n), dtype=int)
        with pytest.raises(DataError, match="misaligned"):
            build_regression_panel(counts, nets, covs(n))


def staggered_fixture():
    """Three actors, four waves, tie creations in different periods, so
    the lagged regressors are not within-collinear with the wave dummies."""
    n, waves = 3, 4
    nets = np.zeros((waves, n, n), dtype=np.uint8)
    nets[1, 0, 1] = nets[1, 1, 0] = 1  # (0,1) created in period 1
    nets[2] = nets[1]
    nets[2, 0, 2] = nets[2, 2, 0] = 1  # (0,2) created in period 2
    nets[3] = nets[2]
    counts = np.array([[1.0, 2.0, 1.0], [4.0, 1.0, 2.0], [5.0, 3.0, 1.0], [2.0, 4.0, 3.0]])
    return build_regression_panel(counts, nets, covs(n)), counts


def demeaned_design(panel, kept_names):
    """Actor-demeaned design restricted to the columns the fit kept."""
    col_map = {
        "new_ties_lag": panel.new_ties_lag,
        "friend_posts_lag": panel.friend_posts_lag,
        "wave=3": (panel.wave == 3).astype(float),
        "wave=4": (panel.wave == 4).astype(float),
    }
    x = np.column_stack([col_map[name] for name in kept_names])
    xd = x.copy()
    yd = panel.y.astype(float).copy()
    for g in np.unique(panel.actor):
        m = panel.actor == g
        xd[m] -= xd[m].mean(axis=0)
        yd[m] -= yd[m].mean()
    return xd, yd, kept_names


def planted_panel(rng, n=30, waves=4, slope=2.0, noise=0.0):
    """Counts built so the response is slope * new_ties_lag plus actor and
    wave effects (plus optional noise); returns the regression panel."""
    nets = growing_networks(rng, n, waves, start_density=0.1, add_prob=0.12)
    actor_effect = rng.uniform(10, 50, size=n)
    wave_effect = rng.uniform(0, 5, size=waves)
    counts = np.zeros((waves, n))
    counts[0] = rng.integers(0, 5, size=n)
    degrees = nets.sum(axis=2)
    for w in range(1, waves):
        d_lag = degrees[w] - degrees[w - 1]
        counts[w] = slope * d_lag + actor_effect + wave_effect[w]
        if noise:
            counts[w] += rng.normal(scale=noise, size=n)
    return build_regression_panel(counts, nets, covs(n, rng))


class TestFixedEffectsOLS:
    def test_recovers_planted_slope_exactly(self):
        rng = np.random.default_rng(7)
        panel = planted_panel(rng, slope=2.0, noise=0.0)
        result = fe_ols(panel)
        assert result.coefficient("new_ties_lag") == pytest.approx(2.0, abs=1e-8)
        assert result.coefficient("friend_posts_lag") == pytest.approx(0.0, abs=1e-8)

    def test_time_invariant_covariates_omitted(self):
        rng = np.random.default_rng(8)
        result = fe_ols(planted_panel(rng, noise=1.0))
        assert "age" in result.omitted and "tenure" in result.omitted
        assert any(name.startswith("gender=") for name in result.omitted)
        assert "age" not in result.names

    def test_pure_noise_slope_small(self):
        rng = np.random.default_rng(9)
        tstats = []
        for rep in range(10):
            rng2 = np.random.default_rng(100 + rep)
            panel = planted_panel(rng2, slope=0.0, noise=1.0)
            result = fe_ols(panel)
            tstats.append(result.coefficient("new_ties_lag") / result.se("new_ties_lag"))
        assert np.mean(np.abs(tstats)) < 2.5

    def test_invariant_to_per_actor_shift(self):
        rng = np.random.default_rng(10)
        panel = planted_panel(rng, noise=1.0)
        result = fe_ols(panel)
        shifted = RegressionPanel(
            actor=panel.actor,
            wave=panel.wave,
            y=panel.y + 1000.0 * panel.actor,
            new_ties_lag=panel.new_ties_lag,
            friend_posts_lag=panel.friend_posts_lag,
            age=panel.age,
            tenure=panel.tenure,
            gender=panel.gender,
        )
        result2 = fe_ols(shifted)
        assert np.allclose(result.coefficients, result2.coefficients, atol=1e-9)

    def test_matches_textbook_within_formula_on_tiny_fixture(self):
        # Three actors, four waves, tie creations staggered across
        # periods: the within estimator is (x'x)^-1 x'y on actor-demeaned
        # data; compare against the explicit formula.
        panel, _ = staggered_fixture()
        result = fe_ols(panel)
        xd, yd, kept_cols = demeaned_design(panel, result.names)
        beta_hand = np.linalg.solve(xd.T @ xd, xd.T @ yd)
        assert np.allclose(result.coefficients, beta_hand, atol=1e-10)

    def test_table_marks_omitted(self):
        rng = np.random.default_rng(11)
        table = fe_ols(planted_panel(rng, noise=1.0)).format_table()
        assert "(omitted)" in table
        assert "time dummies" in table and "present" in table


class TestFixedEffectsPoisson:
    def simulate_poisson_panel(self, rng, n=200, waves=5, slope=0.5):
        nets = growing_networks(rng, n, waves, start_density=0.05, add_prob=0.04)
        degrees = nets.sum(axis=2)
        actor_effect = rng.normal(0.0, 0.3, size=n)
        counts = np.zeros((waves, n), dtype=np.int64)
        counts[0] = rng.poisson(np.exp(1.0 + actor_effect))
        for w in range(1, waves):
            d_lag = (degrees[w] - degrees[w - 1]).astype(float)
            z = (d_lag - d_lag.mean()) / max(d_lag.std(), 1.0)
            counts[w] = rng.poisson(np.exp(1.0 + slope * z + actor_effect))
        return counts, nets, z_scale(degrees)

    def test_recovers_planted_log_slope(self):
        rng = np.random.default_rng(21)
        n, waves, slope = 200, 5, 0.5
        nets = growing_networks(rng, n, waves, start_density=0.05, add_prob=0.04)
        degrees = nets.sum(axis=2)
        actor_effect = rng.normal(0.0, 0.3, size=n)
        counts = np.zeros((waves, n), dtype=np.int64)
        counts[0] = rng.poisson(np.exp(1.0 + actor_effect))
        scale = max(float(np.std(degrees[1:] - degrees[:-1])), 1.0)
        for w in range(1, waves):
            d_lag = (degrees[w] - degrees[w - 1]).astype(float)
            counts[w] = rng.poisson(np.exp(1.0 + slope * d_lag / scale + actor_effect))
        panel = build_regression_panel(counts, nets, covs(n, rng))
        result = fe_poisson(panel)
        # The design uses the raw tie gain, so the planted slope is slope/scale.
        est = result.coefficient("new_ties_lag")
        se = result.se("new_ties_lag")
        assert abs(est - slope / scale) <= 3 * se

    def test_all_zero_actor_dropped_with_notice(self):
        rng = np.random.default_rng(0)
        n, waves = 8, 4
        nets = growing_networks(rng, n, waves, start_density=0.2, add_prob=0.2)
        counts = rng.integers(1, 6, size=(waves, n))
        counts[:, 3] = 0
        panel = build_regression_panel(counts, nets, covs(n))
        result = fe_poisson(panel)
        assert result.dropped_actors == [3]
        assert result.n_actors == n - 1

    def test_time_invariants_omitted(self):
        rng = np.random.default_rng(31)
        counts = rng.integers(0, 8, size=(4, 25))
        nets = growing_networks(rng, 25, 4)
        result = fe_poisson(build_regression_panel(counts, nets, covs(25, rng)))
        assert "age" in result.omitted and "tenure" in result.omitted

    def test_global_response_scaling_leaves_slopes(self):
        rng = np.random.default_rng(41)
        counts = rng.integers(0, 8, size=(4, 30))
        nets = growing_networks(rng, 30, 4, add_prob=0.08)
        panel = build_regression_panel(counts, nets, covs(30, rng))
        base = fe_poisson(panel)
        scaled_panel = RegressionPanel(
            actor=panel.actor,
            wave=panel.wave,
            y=panel.y * 3.0,
            new_ties_lag=panel.new_ties_lag,
            friend_posts_lag=panel.friend_posts_lag,
            age=panel.age,
            tenure=panel.tenure,
            gender=panel.gender,
        )
        scaled = fe_poisson(scaled_panel)
        assert np.allclose(base.coefficients, scaled.coefficients, atol=1e-7)

    def test_matches_independent_maximizer_on_tiny_fixture(self):
        scipy_opt = pytest.importorskip("scipy.optimize")
        panel, _ = staggered_fixture()
        result = fe_poisson(panel)
        col_map = {
            "new_ties_lag": panel.new_ties_lag,
            "friend_posts_lag": panel.friend_posts_lag,
            "wave=3": (panel.wave == 3).astype(float),
            "wave=4": (panel.wave == 4).astype(float),
        }
        xk = np.column_stack([col_map[name] for name in result.names])

        def negll(beta):
            total = 0.0
            for g in np.unique(panel.actor):
                m = panel.actor == g
                eta = xk[m] @ beta
                eta = eta - eta.max()
                total -= float(panel.y[m] @ (eta - np.log(np.exp(eta).sum())))
            return total

        opt = scipy_opt.minimize(negll, np.zeros(xk.shape[1]), method="Nelder-Mead",
                                 options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 50000})
        assert np.allclose(result.coefficients, opt.x, atol=1e-5)


def z_scale(degrees):
    return max(float(np.std(degrees[1:] - degrees[:-1])), 1.0)
