import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from oodcombine.combiners import (
    EcdfCombiner,
    NotFittedError,
    VoteCombiner,
    VoteRule,
    ecdf_fit,
    ecdf_level,
    model_from_dict,
    quantile_index,
    vote_fit,
    vote_member,
)

from .conftest import make_matrix

GRID11 = np.linspace(0, 1, 11)


@pytest.fixture
def ramp2():
    # two columns 0..99: the t = 0.5 threshold is 49 in each
    return make_matrix(np.column_stack([np.arange(100.0), np.arange(100.0)]))


class TestVote:
    def test_fit_shapes(self, rng):
        m = vote_fit(make_matrix(rng.normal(size=(100, 3))), "loose")
        assert m.sorted_cal.shape == (100, 3)
        assert np.all(np.diff(m.sorted_cal, axis=0) >= 0)

    @pytest.mark.parametrize("text", ["loose", "LOOSE", " Loose "])
    def test_rule_parse(self, text):
        assert VoteRule.parse(text) is VoteRule.LOOSE

    def test_rule_parse_error(self):
        with pytest.raises(ValueError, match="unknown vote rule"):
            VoteRule.parse("most")

    def test_tie_goes_to_ood_under_loose(self, ramp2):
        x = np.array([60.0, 10.0])
        assert vote_fit(ramp2, "loose").votes(x, 0.5).tolist() == [[1, 0]]
        assert vote_member(vote_fit(ramp2, "loose"), x, 0.5) is True
        assert vote_member(vote_fit(ramp2, "strict"), x, 0.5) is False

    def test_no_votes_is_id(self, rng):
        cal = make_matrix(rng.normal(size=(50, 3)))
        for rule in VoteRule:
            assert not vote_member(vote_fit(cal, rule), [-10.0, -10.0, -10.0], 0.5)

    def test_quantile_index(self):
        assert_array_equal(quantile_index([0.0, 0.01, 0.5, 0.999, 1.0], 100), [0, 0, 49, 99, 99])

    def test_thresholds_nondecreasing_in_t(self, rng):
        m = vote_fit(make_matrix(rng.normal(size=(37, 2))))
        assert np.all(np.diff(m.thresholds(GRID11), axis=1) >= 0)

    @given(
        d=st.integers(1, 5),
        votes=st.lists(st.integers(0, 5), min_size=1, max_size=20),
    )
    def test_rule_equivalences(self, d, votes):
        v = np.minimum(np.array(votes), d)
        dec = {r: r.decide(v, d) for r in VoteRule}
        if d == 2:
            assert_array_equal(dec[VoteRule.ALL], dec[VoteRule.STRICT])
            assert_array_equal(dec[VoteRule.ANY], dec[VoteRule.LOOSE])
        if d % 2:
            assert_array_equal(dec[VoteRule.LOOSE], dec[VoteRule.STRICT])
        else:
            differ = dec[VoteRule.LOOSE] != dec[VoteRule.STRICT]
            assert_array_equal(differ, 2 * v == d)

    @pytest.mark.parametrize("rule", list(VoteRule))
    def test_nested_in_t(self, rule, rng):
        m = vote_fit(make_matrix(rng.normal(size=(80, 3))), rule)
        mem = m.member_grid(rng.normal(size=(60, 3)) * 2, GRID11)
        assert np.all(mem[:, 1:] <= mem[:, :-1])

    def test_round_trip(self, rng):
        m = vote_fit(make_matrix(rng.normal(size=(30, 2))), "strict")
        back = model_from_dict(json.loads(json.dumps(m.to_dict())))
        x = rng.normal(size=(40, 2))
        assert_array_equal(back.member_grid(x, GRID11), m.member_grid(x, GRID11))
        assert back.rule is VoteRule.STRICT

    def test_unfitted(self):
        with pytest.raises(NotFittedError):
            VoteCombiner().member([0.0], 0.5)

    def test_dimension_mismatch(self, rng):
        m = vote_fit(make_matrix(rng.normal(size=(30, 2))))
        with pytest.raises(ValueError, match="dimension 2"):
            m.member([0.0, 1.0, 2.0], 0.5)

    def test_calibration_must_be_id(self):
        with pytest.raises(ValueError, match="non-ID"):
            vote_fit(make_matrix([[1.0], [2.0]], origin="far"))


class TestEcdf:
    def test_fit(self):
        m = ecdf_fit(make_matrix([[0.0, 0.0], [1.0, 1.0]]))
        assert m.cal.shape == (2, 2)

    def test_refit_identical(self, rng):
        cal = make_matrix(rng.normal(size=(20, 2)))
        assert ecdf_fit(cal).to_dict() == ecdf_fit(cal).to_dict()

    @pytest.mark.parametrize(
        "cal, x, want",
        [
            ([[0, 0], [1, 1]], [2, 2], 1.0),
            ([[0, 0], [1, 1]], [-1, -1], 0.0),
            ([[0, 1], [1, 0], [0.5, 0.5]], [0.6, 0.6], 1 / 3),
            ([[0, 0], [1, 1]], [1, 1], 1.0),  # inclusive dominance
        ],
    )
    def test_level_examples(self, cal, x, want):
        assert ecdf_level(ecdf_fit(make_matrix(cal)), x) == pytest.approx(want)

    def test_d1_is_univariate_ecdf(self, rng):
        col = rng.integers(0, 10, 50).astype(float)
        m = ecdf_fit(make_matrix(col[:, None]))
        q = np.linspace(-1, 11, 49)
        want = np.searchsorted(np.sort(col), q, side="right") / 50
        assert_allclose(m.level(q[:, None]), want)

    def test_levels_on_lattice_and_monotone(self, rng):
        m = ecdf_fit(make_matrix(rng.normal(size=(40, 2))))
        x = rng.normal(size=(100, 2))
        lv = m.level(x)
        assert_allclose(lv * 40, np.round(lv * 40))
        bumped = x.copy()
        bumped[:, 0] += rng.random(100)
        assert np.all(m.level(bumped) >= lv)

    def test_member_is_strict(self):
        m = ecdf_fit(make_matrix([[0.0], [1.0]]))
        assert not m.member([0.5], 0.5)  # level exactly 0.5 stays ID
        assert m.member([1.5], 0.5)

    def test_round_trip(self, rng):
        m = ecdf_fit(make_matrix(rng.normal(size=(15, 3))))
        back = model_from_dict(json.loads(json.dumps(m.to_dict())))
        x = rng.normal(size=(10, 3))
        assert_array_equal(back.level(x), m.level(x))

    def test_selects_named_columns(self, rng):
        vals = rng.normal(size=(20, 3))
        m = EcdfCombiner().fit(make_matrix(vals[:, [2, 0]], names=("s3", "s1")))
        full = make_matrix(vals)
        assert_allclose(m.level(full), m.level(vals[:, [2, 0]]))


class TestRegistry:
    def test_bad_version(self):
        with pytest.raises(ValueError, match="schema_version"):
            model_from_dict({"schema_version": 99, "kind": "ecdf"})

    def test_bad_kind(self):
        with pytest.raises(ValueError, match="unknown model kind"):
            model_from_dict({"schema_version": 1, "kind": "magic"})
