import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from oodcombine.combiners import EcdfCombiner, NotFittedError
from oodcombine.metrics import (
    RocCurve,
    auroc_family,
    auroc_scalar,
    close_curve,
    curve_fpr_at_tpr,
    curve_tpr_at_fpr,
    default_grid,
    family_roc,
    fpr_at_tpr,
    tpr_at_fpr,
)
from oodcombine.synth import brute_force_auroc

from .conftest import make_matrix

small = st.lists(st.integers(-5, 5).map(float), min_size=1, max_size=30)


class TestScalarAuroc:
    @pytest.mark.parametrize(
        "id_, ood, want",
        [([0.1, 0.2], [0.8, 0.9], 1.0), ([0.5, 0.5], [0.5, 0.5], 0.5), ([1, 3, 5], [2, 4, 6], 6 / 9)],
    )
    def test_examples(self, id_, ood, want):
        assert auroc_scalar(id_, ood) == pytest.approx(want, abs=1e-15)
        assert brute_force_auroc(id_, ood) == pytest.approx(want, abs=1e-15)

    @given(small, small)
    def test_matches_pair_count(self, a, b):
        assert abs(auroc_scalar(a, b) - brute_force_auroc(a, b)) <= 1e-12

    @given(small, small)
    def test_complement(self, a, b):
        assert auroc_scalar(a, b) + auroc_scalar(b, a) == pytest.approx(1.0, abs=1e-12)

    def test_monotone_transform_invariance(self, rng):
        a, b = rng.normal(size=40), rng.normal(0.5, 1, size=30)
        assert auroc_scalar(np.exp(a), np.exp(b)) == pytest.approx(auroc_scalar(a, b), abs=1e-15)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError, match="empty"):
            auroc_scalar([], [1.0])
        with pytest.raises(ValueError, match="non-finite"):
            auroc_scalar([np.nan], [1.0])


class TestThresholdMetrics:
    def test_perfect(self):
        assert fpr_at_tpr([0.1, 0.2], [0.8, 0.9]) == 0.0
        assert tpr_at_fpr([0.1, 0.2], [0.8, 0.9]) == 1.0

    def test_identical(self, rng):
        x = rng.normal(size=1000)
        assert fpr_at_tpr(x, x, 0.95) >= 0.95
        assert tpr_at_fpr(x, x, 0.05) == pytest.approx(0.05, abs=0.002)

    def test_enumerated_example(self):
        # thresholds just below 4 keep TPR = 3/4 and flag ID score 4 only
        assert fpr_at_tpr([1, 2, 3, 4], [3, 4, 5, 6], 0.75) == 0.25
        # FPR <= 0.25 allows one ID sample above tau: tau = 3, TPR = #{4,5,6}/4
        assert tpr_at_fpr([1, 2, 3, 4], [3, 4, 5, 6], 0.25) == 0.75

    @given(small, small, st.floats(0.01, 1.0))
    def test_fpr_at_tpr_enumeration(self, a, b, level):
        # best FPR over every threshold whose TPR reaches the level
        a, b = np.array(a), np.array(b)
        cands = np.concatenate([a, b, [-np.inf]])
        best = min(np.mean(a > t) for t in cands if np.mean(b > t) >= level - 1e-9)
        # thresholds between data points: the supremum is approached from below
        eps_best = min(np.mean(a >= t) for t in np.unique(b) if np.mean(b >= t) >= level - 1e-9)
        assert fpr_at_tpr(a, b, level) == pytest.approx(min(best, eps_best))

    @given(small, small, st.floats(0.0, 0.99))
    def test_tpr_at_fpr_enumeration(self, a, b, level):
        if level == 0.0:
            level = 1e-3
        a, b = np.array(a), np.array(b)
        cands = np.concatenate([a, b, [np.inf]])
        best = max(np.mean(b > t) for t in cands if np.mean(a > t) <= level + 1e-9)
        assert tpr_at_fpr(a, b, level) == pytest.approx(best)

    @pytest.mark.parametrize("lvl", [0.0, 1.5, -0.1])
    def test_bad_level(self, lvl):
        with pytest.raises(ValueError):
            fpr_at_tpr([1.0], [2.0], lvl)


class TestFamilyCurves:
    def test_area_examples(self):
        assert auroc_family(close_curve([], [])) == 0.5
        assert auroc_family(close_curve([0.0], [1.0])) == 1.0
        assert auroc_family(close_curve([0.5], [0.75])) == pytest.approx(0.625)

    def test_closure_points(self, rng):
        cal = make_matrix(rng.normal(size=(20, 2)))
        curve = family_roc(EcdfCombiner().fit(cal), cal, make_matrix(rng.normal(size=(10, 2)), "far"), [0.0, 1.0])
        assert curve.points[0] == (0.0, 0.0) and curve.points[-1] == (1.0, 1.0)

    def test_rates_nonincreasing_in_t(self, rng):
        cal = make_matrix(rng.normal(size=(100, 2)))
        model = EcdfCombiner().fit(cal)
        grid = default_grid(101)
        for m in (cal, make_matrix(rng.normal(1, 1, size=(50, 2)), "far")):
            assert np.all(np.diff(model.region_rates(m, grid)) <= 0)

    def test_scalar_reduction(self, rng):
        cal = make_matrix(rng.normal(size=(400, 1)))
        idm = make_matrix(rng.normal(size=(300, 1)))
        ood = make_matrix(rng.normal(1.0, 1.0, size=(300, 1)), "far")
        fam = auroc_family(family_roc(EcdfCombiner().fit(cal), idm, ood))
        assert fam == pytest.approx(auroc_scalar(idm.values[:, 0], ood.values[:, 0]), abs=1e-3)

    def test_errors(self, rng):
        m = make_matrix(rng.normal(size=(5, 1)))
        with pytest.raises(NotFittedError):
            family_roc(EcdfCombiner(), m, m)
        with pytest.raises(TypeError):
            family_roc(object(), m, m)
        with pytest.raises(ValueError, match="sorted"):
            family_roc(EcdfCombiner().fit(m), m, m, [0.5, 0.1])

    def test_curve_thresholds_and_csv(self):
        c = close_curve([0.5, 0.2, 0.02], [1.0, 0.96, 0.4], [0.1, 0.5, 0.9])
        assert curve_fpr_at_tpr(c, 0.95) == 0.2
        assert curve_tpr_at_fpr(c, 0.05) == 0.4
        lines = c.to_csv().splitlines()
        assert lines[0] == "t,fpr,tpr"
        assert lines[1] == ",0.0,0.0"
        assert lines[2] == "0.9,0.02,0.4"

    def test_default_grid(self):
        g = default_grid()
        assert len(g) == 1001 and g[0] == 0.0 and g[-1] == 1.0
        assert_allclose(np.diff(g), 1e-3)

    def test_roc_curve_lengths(self):
        with pytest.raises(ValueError):
            RocCurve(np.zeros(2), np.zeros(3), np.zeros(2))
