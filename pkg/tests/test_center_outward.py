import json
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from oodcombine.center_outward import (
    CenterOutwardCombiner,
    SinkhornWarning,
    SphereCloud,
    TransportPlan,
    center_outward_fit,
    estimate_quantiles,
    fit_knn_quantiles,
    predict_quantile,
    rank_transform_apply,
    rank_transform_fit,
    sample_spheres,
    sinkhorn,
    squared_distances,
)
from oodcombine.combiners import model_from_dict
from oodcombine.metrics import default_grid

from .conftest import make_matrix


def _plan(p):
    p = np.asarray(p, dtype=float)
    return TransportPlan(p, 0.01, 1, 0.0, True)


class TestRankTransform:
    def test_interpolation(self):
        tr = rank_transform_fit(np.array([[1.0], [2.0], [3.0], [4.0]]))
        assert rank_transform_apply(tr, [2.5]) == pytest.approx([0.5])
        assert rank_transform_apply(tr, [0.0])[0] == 0.0
        assert rank_transform_apply(tr, [9.0])[0] == 1.0

    def test_median_near_half(self, rng):
        col = rng.normal(size=(501, 2))
        tr = rank_transform_fit(col)
        assert_allclose(tr.apply(np.median(col, axis=0)), 0.5, atol=1e-3)

    def test_ties_share_position(self):
        tr = rank_transform_fit(np.array([[1.0], [1.0], [2.0], [3.0]]))
        assert tr.apply([1.0])[0] == pytest.approx((0.125 + 0.375) / 2)

    def test_errors(self):
        with pytest.raises(ValueError, match="constant"):
            rank_transform_fit(np.array([[1.0, 2.0], [1.0, 3.0]]))
        with pytest.raises(ValueError, match="at least 2"):
            rank_transform_fit(np.array([[1.0]]))


class TestSpheres:
    def test_radii_set(self):
        c = sample_spheres(500, 5, 3, seed=1)
        assert set(np.round(c.radii, 12)) == {0.2, 0.4, 0.6, 0.8, 1.0}
        assert np.all(c.points >= 0)
        assert_allclose(np.linalg.norm(c.points, axis=1), c.radii, atol=1e-12)

    def test_d1(self):
        c = sample_spheres(50, 5, 1, seed=2)
        assert_allclose(c.points[:, 0], c.radii)

    def test_deterministic(self):
        a, b = sample_spheres(40, 10, 2, 7), sample_spheres(40, 10, 2, 7)
        assert_array_equal(a.points, b.points)
        assert not np.array_equal(a.points, sample_spheres(40, 10, 2, 8).points)

    def test_errors(self):
        with pytest.raises(ValueError):
            sample_spheres(0, 5, 2)


class TestSinkhorn:
    def test_trivial(self):
        assert_allclose(sinkhorn(np.array([[3.0]])).coupling, [[1.0]])
        assert_allclose(sinkhorn(np.zeros((2, 2))).coupling, 0.25)

    def test_random_marginals(self, rng):
        cost = rng.random((50, 60))
        plan = sinkhorn(cost, epsilon=0.01)
        assert plan.converged and plan.marginal_residual <= 1e-6
        assert np.all(plan.coupling >= 0)
        assert_allclose(plan.coupling.sum(axis=1), 1 / 50, atol=1e-6)
        assert_allclose(plan.coupling.sum(axis=0), 1 / 60, atol=1e-6)

    def test_offset_cost_does_not_underflow(self, rng):
        cost = rng.random((30, 40))
        shifted = cost + 50.0
        assert np.exp(-shifted.min() / 0.01) == 0.0  # a plain Gibbs kernel is all zeros
        plan = sinkhorn(shifted, epsilon=0.01)
        assert plan.converged
        assert_allclose(plan.coupling, sinkhorn(cost, epsilon=0.01).coupling, atol=1e-9)

    def test_non_convergence_is_reported(self, rng):
        plan = sinkhorn(rng.random((20, 20)), epsilon=1e-3, max_iter=3)
        assert not plan.converged and plan.iterations == 3
        assert plan.marginal_residual > 1e-6

    def test_validation(self):
        with pytest.raises(ValueError, match="nonnegative"):
            sinkhorn(np.array([[-1.0]]))
        with pytest.raises(ValueError, match="sum to 1"):
            sinkhorn(np.zeros((2, 2)), a=[0.5, 0.6])
        with pytest.raises(ValueError, match="epsilon"):
            sinkhorn(np.zeros((2, 2)), epsilon=0)


class TestQuantiles:
    def test_permutation_plan(self):
        cloud = sample_spheres(6, 5, 2, seed=3)
        perm = np.array([2, 0, 5, 1, 4, 3])
        p = np.zeros((6, 6))
        p[np.arange(6), perm] = 1 / 6
        q = estimate_quantiles(_plan(p), cloud)
        assert_allclose(q[perm], cloud.radii)

    def test_even_split(self):
        cloud = SphereCloud(np.zeros((2, 2)), np.array([1, 2]), 5)
        assert_allclose(estimate_quantiles(_plan([[0.5], [0.5]]), cloud), [0.3])

    def test_all_from_radius_one(self):
        cloud = SphereCloud(np.zeros((3, 1)), np.array([5, 5, 1]), 5)
        q = estimate_quantiles(_plan([[0.25, 0.0], [0.25, 0.0], [0.0, 0.5]]), cloud)
        assert_allclose(q, [1.0, 0.2])

    def test_dimension_mismatch(self):
        cloud = sample_spheres(4, 5, 2)
        with pytest.raises(ValueError, match="rows"):
            estimate_quantiles(_plan(np.full((3, 2), 1 / 6)), cloud)


class TestKnn:
    def test_examples(self, rng):
        pts = rng.random((10, 2))
        q = rng.random(10)
        gen = fit_knn_quantiles(pts, q, 1)
        assert predict_quantile(gen, pts[3]) == q[3]
        assert predict_quantile(fit_knn_quantiles(pts, q, 10), [5.0, 5.0]) == pytest.approx(q.mean())
        gen = fit_knn_quantiles([[0.0], [0.1], [1.0]], [0.2, 0.4, 0.6], 2)
        assert predict_quantile(gen, [0.05]) == pytest.approx(0.3)

    def test_k_too_large(self):
        with pytest.raises(ValueError, match="k_neighbors"):
            fit_knn_quantiles(np.zeros((3, 1)), np.zeros(3), 4)


class TestCombiner:
    def test_defaults(self):
        m = CenterOutwardCombiner()
        assert (m.variant, m.k_neighbors, m.epsilon, m.n_spheres, m.seed) == ("knn", 5, 0.01, 100, 42)

    def test_fit_records(self, rng):
        m = center_outward_fit(make_matrix(rng.normal(size=(60, 2))))
        assert m.sinkhorn_info["n_reference"] == 240 and m.sinkhorn_info["converged"]
        assert np.all((m.q >= 0.01) & (m.q <= 1.0))

    def test_1d_ranking(self, rng):
        x = rng.normal(size=(200, 1))
        m = center_outward_fit(make_matrix(x))
        assert stats.spearmanr(m.q, x[:, 0]).statistic == pytest.approx(1.0)
        grid = np.sort(rng.normal(size=400) * 1.5)
        assert np.all(np.diff(m.level(grid[:, None])) >= 0)

    def test_uniform_calibration_coverage(self, rng):
        m = center_outward_fit(make_matrix(rng.random((400, 2))))
        for level in (0.2, 0.4, 0.6, 0.8, 1.0):
            assert abs(np.mean(m.q <= level + 1e-12) - level) <= 0.05

    def test_deterministic(self, rng):
        cal = make_matrix(rng.normal(size=(80, 2)))
        x = rng.normal(size=(30, 2))
        assert_array_equal(center_outward_fit(cal).level(x), center_outward_fit(cal).level(x))

    @pytest.mark.parametrize("variant", ["knn", "hull"])
    def test_round_trip(self, variant, rng):
        m = center_outward_fit(make_matrix(rng.normal(size=(50, 2))), variant=variant)
        back = model_from_dict(json.loads(json.dumps(m.to_dict())))
        x = rng.normal(size=(15, 2))
        assert_array_equal(back.level(x), m.level(x))

    def test_warns_when_sinkhorn_stops_early(self, rng):
        with pytest.warns(SinkhornWarning):
            CenterOutwardCombiner(max_iter=2).fit(make_matrix(rng.normal(size=(20, 2))))

    def test_hull_rejects_high_d(self, rng):
        with pytest.raises(ValueError, match="d <= 4"):
            CenterOutwardCombiner("hull").fit(make_matrix(rng.normal(size=(20, 5))))
        with pytest.raises(ValueError, match="variant"):
            CenterOutwardCombiner("delaunay")


class TestHullVariant:
    @pytest.fixture
    def model(self, rng):
        return center_outward_fit(make_matrix(rng.normal(size=(60, 2))), variant="hull")

    def test_level_matches_direct_test(self, model, rng):
        x = rng.normal(size=(12, 2)) * 1.5
        levels = model.level(x)
        for row, lv in zip(x, levels):
            for t in (0.1, 0.3, 0.5, 0.7, 0.9):
                assert model.in_hull(row, t) == (lv <= t)

    def test_regions_nested(self, model, rng):
        x = rng.normal(size=(40, 2)) * 1.5
        mem = model.member_grid(x, default_grid(21))
        assert np.all(mem[:, 1:] <= mem[:, :-1])

    def test_monotone_in_scores(self, model, rng):
        x = rng.normal(size=(40, 2))
        y = x + rng.random((40, 2))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert np.all(model.level(y) >= model.level(x))

    def test_far_point_outside_every_hull(self, model):
        assert model.level([[50.0, 50.0]])[0] == np.inf

    def test_knn_only_in_hull_guard(self, rng):
        m = center_outward_fit(make_matrix(rng.normal(size=(30, 2))))
        with pytest.raises(ValueError, match="hull variant"):
            m.in_hull([0.0, 0.0], 0.5)


def test_squared_distances(rng):
    a, b = rng.random((4, 3)), rng.random((5, 3))
    assert_allclose(squared_distances(a, b), ((a[:, None] - b[None]) ** 2).sum(-1))
