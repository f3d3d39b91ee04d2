import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coevolve.panel import (
    CovariateTable,
    DataError,
    LoadConfig,
    PanelDataset,
    behavior_change_table,
    bin_counts_to_levels,
    classify_activity,
    describe_network,
    load_dataset,
    network_change_table,
)


def make_dataset(networks, behaviors, n_levels=8):
    networks = np.asarray(networks, dtype=np.uint8)
    return PanelDataset(
        networks=networks,
        behaviors=np.asarray(behaviors, dtype=np.int64),
        n_levels=n_levels,
        covariates=CovariateTable.zeros(networks.shape[1]),
    )


def nets_from_edges(n, waves_edges):
    out = []
    for edges in waves_edges:
        a = np.zeros((n, n), dtype=np.uint8)
        for i, j in edges:
            a[i, j] = a[j, i] = 1
        out.append(a)
    return np.stack(out)


def write_files(tmp_path, edge_rows, beh_rows, cov_rows, config):
    edges = tmp_path / "edges.csv"
    edges.write_text("wave,src,dst\n" + "".join(f"{w},{i},{j}\n" for w, i, j in edge_rows))
    beh = tmp_path / "behavior.csv"
    beh.write_text("wave,actor,value\n" + "".join(f"{w},{i},{v}\n" for w, i, v in beh_rows))
    cov = tmp_path / "covariates.csv"
    cov.write_text("actor,gender,age,tenure_days\n" + "".join(f"{i},{g},{a},{t}\n" for i, g, a, t in cov_rows))
    return edges, beh, cov, config


def full_behavior(n, waves, value=1):
    return [(w, i, value) for w in range(1, waves + 1) for i in range(n)]


COVS3 = [(0, 0, 20, 900), (1, 1, 21, 1000), (2, 0, 22, 1100)]


class TestLoadDataset:
    def test_minimal_wellformed(self, tmp_path):
        edges = [(1, 1, 2), (2, 1, 2), (2, 0, 1)]
        ds = load_dataset(*write_files(tmp_path, edges, full_behavior(3, 2), COVS3, LoadConfig(n_levels=2)))
        assert ds.n_actors == 3 and ds.n_waves == 2
        assert [ds.tie_count(0), ds.tie_count(1)] == [1, 2]

    def test_self_loop_rejected(self, tmp_path):
        files = write_files(tmp_path, [(1, 2, 2), (2, 2, 2)], full_behavior(3, 2), COVS3, LoadConfig(n_levels=2))
        with pytest.raises(DataError, match="self-loop"):
            load_dataset(*files)

    def test_tie_dissolution_rejected(self, tmp_path):
        files = write_files(tmp_path, [(1, 0, 1)], full_behavior(3, 2), COVS3, LoadConfig(n_levels=2))
        with pytest.raises(DataError, match="dissolution"):
            load_dataset(*files)

    def test_duplicate_edge_rejected(self, tmp_path):
        files = write_files(
            tmp_path, [(1, 0, 1), (1, 0, 1), (2, 0, 1)], full_behavior(3, 2), COVS3, LoadConfig(n_levels=2)
        )
        with pytest.raises(DataError, match="duplicate"):
            load_dataset(*files)

    def test_unknown_actor_rejected(self, tmp_path):
        files = write_files(tmp_path, [(1, 0, 7), (2, 0, 7)], full_behavior(3, 2), COVS3, LoadConfig(n_levels=2))
        with pytest.raises(DataError, match="unknown actor"):
            load_dataset(*files)

    def test_level_out_of_range_rejected(self, tmp_path):
        beh = full_behavior(3, 2)[:-1] + [(2, 2, 9)]
        files = write_files(tmp_path, [(1, 0, 1), (2, 0, 1)], beh, COVS3, LoadConfig(n_levels=2))
        with pytest.raises(DataError, match="out of"):
            load_dataset(*files)

    def test_counts_are_binned(self, tmp_path):
        beh = [(1, 0, 0), (1, 1, 10), (1, 2, 20), (2, 0, 30), (2, 1, 0), (2, 2, 10)]
        files = write_files(
            tmp_path, [(1, 0, 1), (2, 0, 1)], beh, COVS3, LoadConfig(n_levels=2, behavior_value="count")
        )
        ds = load_dataset(*files)
        assert ds.raw_counts is not None
        assert ds.behaviors.min() == 1 and ds.behaviors.max() == 2

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(DataError, match="cannot open"):
            load_dataset(tmp_path / "nope.csv", tmp_path / "nope2.csv", tmp_path / "nope3.csv",
                         LoadConfig(n_levels=2))


class TestBinning:
    def test_all_zero_counts_collapse_to_lowest_level(self):
        levels, _ = bin_counts_to_levels(np.zeros((2, 5), dtype=int), 3)
        assert np.all(levels == 1)

    def test_median_breakpoint_splits_in_half(self):
        levels, breaks = bin_counts_to_levels(np.array([[0, 10, 20, 30]]), 2)
        assert list(levels[0]) == [1, 1, 2, 2]
        assert breaks[0] == 15.0

    def test_too_few_distinct_values(self):
        with pytest.raises(DataError, match="smaller n_levels"):
            bin_counts_to_levels(np.array([[0, 7, 0, 7]]), 3)

    def test_per_wave_mode(self):
        counts = np.array([[0, 10, 20, 30], [100, 110, 120, 130]])
        levels, breaks = bin_counts_to_levels(counts, 2, mode="per_wave")
        assert list(levels[0]) == [1, 1, 2, 2]
        assert list(levels[1]) == [1, 1, 2, 2]
        assert breaks.shape == (2, 1)

    @given(
        counts=st.lists(st.integers(min_value=0, max_value=50), min_size=8, max_size=24),
        n_levels=st.integers(min_value=2, max_value=4),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_and_permutation_equivariant(self, counts, n_levels):
        arr = np.array([counts])
        try:
            levels, _ = bin_counts_to_levels(arr, n_levels)
        except DataError:
            return
        order = np.argsort(arr[0])
        assert np.all(np.diff(levels[0][order]) >= 0)
        assert levels.min() >= 1 and levels.max() <= n_levels
        perm = np.random.default_rng(0).permutation(arr.shape[1])
        permuted, _ = bin_counts_to_levels(arr[:, perm], n_levels)
        assert np.array_equal(permuted[0], levels[0][perm])


class TestDescriptives:
    def test_reported_density_and_degree(self):
        # One wave with 79317 ties among 2507 actors, built by filling the
        # lexicographically first pairs.
        n, ties = 2507, 79317
        a = np.zeros((n, n), dtype=np.uint8)
        iu = np.triu_indices(n, k=1)
        a[iu[0][:ties], iu[1][:ties]] = 1
        a |= a.T
        ds = make_dataset([a, a], np.ones((2, n)), n_levels=2)
        row = describe_network(ds)[0]
        assert row["tie_count"] == ties
        assert round(row["density"], 3) == 0.025
        assert round(row["average_degree"], 3) == 63.276

    def test_empty_and_complete(self):
        empty = np.zeros((4, 4), dtype=np.uint8)
        complete = np.ones((4, 4), dtype=np.uint8) - np.eye(4, dtype=np.uint8)
        ds = make_dataset([empty, complete], np.ones((2, 4)), n_levels=2)
        rows = describe_network(ds)
        assert rows[0]["density"] == 0.0 and rows[0]["average_degree"] == 0.0
        assert rows[1]["density"] == 1.0 and rows[1]["average_degree"] == 3.0

    def test_change_table_jaccard_matches_hand_value(self):
        # 79317 stable ties, 4874 created, none dissolved.
        n = 2507
        iu = np.triu_indices(n, k=1)
        a = np.zeros((n, n), dtype=np.uint8)
        a[iu[0][:79317], iu[1][:79317]] = 1
        a |= a.T
        b = np.zeros((n, n), dtype=np.uint8)
        b[iu[0][: 79317 + 4874], iu[1][: 79317 + 4874]] = 1
        b |= b.T
        ds = make_dataset([a, b], np.ones((2, n)), n_levels=2)
        row = network_change_table(ds)[0]
        assert (row["n01"], row["n10"], row["n11"]) == (4874, 0, 79317)
        assert round(row["jaccard"], 3) == 0.942
        pairs = n * (n - 1) // 2
        assert row["n00"] + row["n01"] + row["n10"] + row["n11"] == pairs

    def test_identical_waves_jaccard_one(self):
        nets = nets_from_edges(4, [[(0, 1), (2, 3)], [(0, 1), (2, 3)]])
        ds = make_dataset(nets, np.ones((2, 4)), n_levels=2)
        row = network_change_table(ds)[0]
        assert row["n01"] == row["n10"] == 0 and row["n11"] == 2
        assert row["jaccard"] == 1.0

    def test_empty_then_five_ties(self):
        nets = nets_from_edges(5, [[], [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2)]])
        ds = make_dataset(nets, np.ones((2, 5)), n_levels=2)
        row = network_change_table(ds)[0]
        assert row["n01"] == 5 and row["jaccard"] == 0.0

    def test_empty_union_is_undefined_not_zero(self):
        nets = nets_from_edges(3, [[], []])
        ds = make_dataset(nets, np.ones((2, 3)), n_levels=2)
        assert network_change_table(ds)[0]["jaccard"] is None


class TestBehaviorChanges:
    def test_constant_panel(self):
        nets = nets_from_edges(3, [[], []])
        ds = make_dataset(nets, [[2, 2, 2], [2, 2, 2]], n_levels=3)
        changes, hist = behavior_change_table(ds)
        assert changes[0] == {"period": 1, "n_decrease": 0, "n_increase": 0, "n_constant": 3}
        assert hist[:, 0].sum() == 3

    def test_mixed_moves(self):
        nets = nets_from_edges(3, [[], []])
        ds = make_dataset(nets, [[1, 2, 3], [2, 2, 2]], n_levels=3)
        changes, _ = behavior_change_table(ds)
        assert changes[0] == {"period": 1, "n_decrease": 1, "n_increase": 1, "n_constant": 1}

    def test_histogram(self):
        nets = nets_from_edges(3, [[], []])
        ds = make_dataset(nets, [[1, 1, 2], [1, 2, 2]], n_levels=2)
        _, hist = behavior_change_table(ds)
        assert list(hist[:, 0]) == [2, 1]
        assert hist.sum(axis=0).tolist() == [3, 3]


class TestClassifyActivity:
    def test_ten_distinct_levels(self):
        labels = classify_activity(np.arange(1, 11))
        assert labels[9] == "high" and labels[0] == "low"
        assert all(l == "mid" for l in labels[1:9])

    def test_constant_wave_all_mid(self):
        labels = classify_activity(np.full(12, 5))
        assert all(l == "mid" for l in labels)

    def test_ties_at_top_both_high(self):
        levels = np.concatenate([np.arange(1, 19), [20, 20]])
        labels = classify_activity(levels)
        assert labels[18] == "high" and labels[19] == "high"
        assert sum(l == "high" for l in labels) == 2

    def test_high_count_bounded_when_distinct(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(5, 40))
            levels = rng.permutation(n) + 1
            labels = classify_activity(levels)
            assert sum(l == "high" for l in labels) <= int(np.ceil(0.1 * n))


class TestValidation:
    def test_asymmetric_rejected(self):
        a = np.zeros((2, 3, 3), dtype=np.uint8)
        a[0, 0, 1] = 1
        with pytest.raises(DataError, match="asymmetric"):
            make_dataset(a, np.ones((2, 3)), n_levels=2)

    def test_diagonal_rejected(self):
        a = np.zeros((2, 3, 3), dtype=np.uint8)
        a[1, 2, 2] = 1
        with pytest.raises(DataError, match="self-loop"):
            make_dataset(a, np.ones((2, 3)), n_levels=2)

    def test_dissolution_rejected(self):
        nets = nets_from_edges(3, [[(0, 1)], []])
        with pytest.raises(DataError, match="dissolution"):
            make_dataset(nets, np.ones((2, 3)), n_levels=2)
