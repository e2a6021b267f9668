import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from monotone_pwl.errors import ConfigurationError, UndefinedMetricError
from monotone_pwl.loss import MonotoneFeature, MonotoneSpec
from monotone_pwl.metrics import (
    SweepGrid,
    auc,
    conditioned_trends,
    monotonicity_metric,
    pearson_correlation,
    write_delta_csv,
    write_mk_csv,
    write_trends_csv,
)
from monotone_pwl.model import InitSpec, forward, init_model, scores

from conftest import linear_model
from oracles import brute_force_deltas, pairwise_auc


def random_net(d, seed, scale=1.0):
    m = init_model([d, 8, 4, 1], init=InitSpec(seed=seed))
    noise = np.random.default_rng(seed).normal(0, scale, m.n_params)
    return m.with_flat_params(m.flat_params() + noise)


class TestMonotonicityMetric:
    spec = MonotoneSpec((MonotoneFeature(1, 1, -1.0, 1.0),))

    def test_identity_in_feature(self, rng):
        r = monotonicity_metric(lambda X: X[:, 1], rng.normal(size=(30, 3)), self.spec)
        assert r.mk == {1: 1.0}

    def test_negated_feature(self, rng):
        r = monotonicity_metric(lambda X: -X[:, 1], rng.normal(size=(30, 3)), self.spec)
        assert r.mk == {1: 0.0}
        assert len(r.features[1].violations) == 30 * 19

    def test_direction_fold(self, rng):
        down = MonotoneSpec((MonotoneFeature(1, -1, -1.0, 1.0),))
        assert monotonicity_metric(lambda X: -X[:, 1], rng.normal(size=(5, 3)), down).mk == {1: 1.0}

    def test_constant_model_counts_as_monotone(self, rng):
        r = monotonicity_metric(lambda X: np.zeros(len(X)), rng.normal(size=(5, 3)), self.spec)
        assert r.mk == {1: 1.0}

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        m = random_net(3, seed)
        X = rng.uniform(-1, 1, size=(20, 3))
        spec = MonotoneSpec((MonotoneFeature(0, 1, -1.0, 1.0), MonotoneFeature(2, -1, -0.5, 2.0)))
        r = monotonicity_metric(m, X, spec, resolution=16)
        for e in spec.entries:
            ref = brute_force_deltas(lambda z: forward(m, z)[0], X, e.index, e.low, e.high, 16, e.direction)
            np.testing.assert_array_equal(r.features[e.index].delta, ref)

    def test_negated_model_with_flipped_direction(self, rng):
        m = random_net(3, 21)
        X = rng.uniform(-1, 1, size=(40, 3))
        up = MonotoneSpec((MonotoneFeature(0, 1, -1.0, 1.0),))
        down = MonotoneSpec((MonotoneFeature(0, -1, -1.0, 1.0),))
        a = monotonicity_metric(m, X, up)
        b = monotonicity_metric(lambda Z: -scores(m, Z), X, down)
        np.testing.assert_array_equal(a.features[0].delta, b.features[0].delta)

    def test_invariant_under_increasing_transform(self, rng):
        m = random_net(2, 4, scale=0.3)
        X = rng.uniform(-1, 1, size=(50, 2))
        spec = MonotoneSpec((MonotoneFeature(0, 1, -1.0, 1.0),))
        a = monotonicity_metric(m, X, spec, tolerance=0.0)
        b = monotonicity_metric(lambda Z: np.exp(scores(m, Z)), X, spec, tolerance=0.0)
        np.testing.assert_array_equal(a.features[0].delta, b.features[0].delta)

    def test_mean(self, rng):
        spec = MonotoneSpec((MonotoneFeature(0, 1, 0, 1), MonotoneFeature(1, 1, 0, 1)))
        r = monotonicity_metric(lambda X: X[:, 0] - X[:, 1], rng.normal(size=(4, 2)), spec)
        assert r.mk == {0: 1.0, 1: 0.0} and r.mean_mk == 0.5

    def test_grid_excludes_high(self):
        g = SweepGrid.even(0, 0.0, 1.0, 4)
        np.testing.assert_array_equal(g.points, [0.0, 0.25, 0.5, 0.75])

    def test_bad_resolution(self):
        with pytest.raises(ConfigurationError):
            SweepGrid.even(0, 0.0, 1.0, 1)

    def test_chunked_sweep_matches(self, rng, monkeypatch):
        import monotone_pwl.metrics as metrics
        m = random_net(3, 2)
        X = rng.normal(size=(37, 3))
        spec = MonotoneSpec((MonotoneFeature(1, 1, -2.0, 2.0),))
        a = monotonicity_metric(m, X, spec)
        monkeypatch.setattr(metrics, "_CHUNK_ELEMS", 50)
        b = monotonicity_metric(m, X, spec)
        np.testing.assert_array_equal(a.features[1].delta, b.features[1].delta)


class TestAuc:
    def test_perfect(self):
        assert auc([0.1, 0.9], [0, 1]) == 1.0

    def test_all_tied(self):
        assert auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5

    def test_reversed(self):
        assert auc([0.9, 0.1], [0, 1]) == 0.0

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError):
            auc([0.1, 0.2], [1, 1])

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_pairwise_oracle_with_ties(self, seed):
        rng = np.random.default_rng(seed)
        s = np.round(rng.normal(size=200), 1)  # coarse rounding forces ties
        y = (rng.random(200) < 0.4).astype(int)
        assert abs(auc(s, y) - pairwise_auc(s, y)) < 1e-12

    def test_rank_invariance(self, rng):
        s = rng.normal(size=100)
        y = (rng.random(100) < 0.5).astype(int)
        assert auc(np.exp(3 * s) + 1, y) == pytest.approx(auc(s, y), abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=40))
def test_auc_property(pairs):
    s = [p[0] for p in pairs]
    y = [int(p[1]) for p in pairs]
    if len(set(y)) < 2:
        return
    assert abs(auc(s, y) - pairwise_auc(s, y)) < 1e-12


class TestTrends:
    def test_linear_model_gives_straight_lines(self, rng):
        m = linear_model([0.5, -1.5, 2.0], b=0.25)
        grid = np.linspace(0, 1, 11)
        c = conditioned_trends(m, rng.normal(size=(4, 3)), 1, grid)
        slopes = np.diff(c.values, axis=1) / np.diff(grid)
        np.testing.assert_allclose(slopes, -1.5, rtol=1e-12)

    def test_identical_anchors(self, rng):
        x = rng.normal(size=3)
        c = conditioned_trends(random_net(3, 1), np.stack([x, x]), 0, np.linspace(-1, 1, 7))
        assert c.values[0].tobytes() == c.values[1].tobytes()

    def test_match_direct_forward(self, rng):
        m = random_net(2, 6, scale=0.3)
        anchors = rng.uniform(0, 1, size=(10, 2))
        grid = np.linspace(0, 1, 20, endpoint=False)
        c = conditioned_trends(m, anchors, 1, grid)
        for i, a in enumerate(anchors):
            for j, g in enumerate(grid):
                z = a.copy()
                z[1] = g
                assert abs(c.values[i, j] - forward(m, z)[0]) < 1e-12

    def test_zero_weight_feature_is_flat(self, rng):
        c = conditioned_trends(linear_model([0.0, 1.0]), rng.normal(size=(3, 2)), 0, [0.0, 0.5, 1.0])
        assert np.all(np.diff(c.values, axis=1) == 0.0)


class TestPearson:
    def test_equal(self):
        y = np.array([0, 1, 1, 0, 1.0])
        assert pearson_correlation(y, y) == 1.0

    def test_negated(self):
        y = np.array([0, 1, 1, 0, 1.0])
        assert pearson_correlation(-y, y) == -1.0

    def test_zero_variance(self):
        with pytest.raises(UndefinedMetricError):
            pearson_correlation([1, 1, 1], [0, 1, 0])

    def test_matches_numpy(self, rng):
        a, b = rng.normal(size=50), rng.normal(size=50)
        assert pearson_correlation(a, b) == pytest.approx(np.corrcoef(a, b)[0, 1], abs=1e-14)


class TestCsv:
    def test_headers(self, tmp_path, rng):
        spec = MonotoneSpec((MonotoneFeature(0, 1, 0, 1),))
        r = monotonicity_metric(lambda X: X[:, 0], rng.normal(size=(3, 2)), spec)
        write_mk_csv(tmp_path / "mk.csv", r, names=["a", "b"])
        write_delta_csv(tmp_path / "d.csv", r.features[0])
        c = conditioned_trends(linear_model([1.0, 0.0]), rng.normal(size=(2, 2)), 0, [0.0, 1.0])
        write_trends_csv(tmp_path / "t.csv", c, "a")
        assert (tmp_path / "mk.csv").read_text().splitlines() == ["feature,mk", "a,1.0"]
        assert (tmp_path / "d.csv").read_text().splitlines()[0] == "sample_id,delta"
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "sample_id,feature,grid_value,score" and len(lines) == 5
