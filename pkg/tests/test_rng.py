import numpy as np
from numpy.testing import assert_array_equal

from oodcombine._rng import SplitMix64

MASK = (1 << 64) - 1


def _splitmix_scalar(seed, count):
    """Textbook SplitMix64 on Python ints."""
    state = seed
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


def test_reference_first_output():
    # widely published first output of SplitMix64 seeded with 0
    assert int(SplitMix64(0).next_uint64(1)[0]) == 0xE220A8397B1DCDAF


def test_matches_scalar_reference_across_calls():
    gen = SplitMix64(1234567)
    got = np.concatenate([gen.next_uint64(3), gen.next_uint64(5)])
    assert [int(x) for x in got] == _splitmix_scalar(1234567, 8)


def test_uniforms_in_unit_interval():
    u = SplitMix64(7).random(10000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01


def test_integers_bounds_and_coverage():
    x = SplitMix64(3).integers(5, 5000)
    assert x.min() == 0 and x.max() == 4
    assert set(np.bincount(x)) and np.all(np.bincount(x) > 900)


def test_permutation_is_permutation_and_deterministic():
    p1 = SplitMix64(42).permutation(50)
    p2 = SplitMix64(42).permutation(50)
    assert_array_equal(p1, p2)
    assert_array_equal(np.sort(p1), np.arange(50))


def test_normals_moments():
    z = SplitMix64(11).standard_normal(20001)
    assert len(z) == 20001
    assert abs(z.mean()) < 0.03
    assert abs(z.std() - 1.0) < 0.03
