import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from galikit import rope


def complex_pairs_logit(q, k, dist, theta):
    """Independent oracle: the rotated inner product as the real part of
    a complex-pair sum over the rotate-half lane pairing (j, j + d/2)."""
    d = q.shape[0]
    half = d // 2
    zq = q[:half] + 1j * q[half:]
    zk = k[:half] + 1j * k[half:]
    return float(np.real(np.sum(zq * np.conj(zk) * np.exp(1j * dist * theta)))
                 / math.sqrt(d))


class TestTheta:
    def test_d4_default_base(self):
        params = rope.rope_theta(4)
        np.testing.assert_allclose(params.theta, [1.0, 0.01], rtol=1e-15)

    def test_d2_single_frequency(self):
        for base in (7.0, 10000.0, 123456.0):
            assert np.array_equal(rope.rope_theta(2, base).theta, [1.0])

    def test_d8_decade_ladder(self):
        params = rope.rope_theta(8)
        np.testing.assert_allclose(params.theta, [1.0, 1e-1, 1e-2, 1e-3],
                                   rtol=1e-15)

    def test_strictly_decreasing_first_one(self):
        params = rope.rope_theta(64)
        assert params.theta[0] == 1.0
        assert np.all(np.diff(params.theta) < 0)

    def test_odd_dim_rejected(self):
        with pytest.raises(ValueError, match="even"):
            rope.rope_theta(5)

    def test_nonpositive_base_rejected(self):
        with pytest.raises(ValueError, match="base"):
            rope.rope_theta(4, 0.0)


class TestTables:
    def test_position_zero(self):
        tables = rope.rotary_tables([0.0], rope.rope_theta(8))
        assert np.array_equal(tables.cos[0], np.ones(8))
        assert np.array_equal(tables.sin[0], np.zeros(8))

    def test_d2_duplicated_frequency(self):
        p = 1.7
        tables = rope.rotary_tables([p], rope.rope_theta(2))
        np.testing.assert_allclose(tables.cos[0], [math.cos(p)] * 2, rtol=1e-15)
        np.testing.assert_allclose(tables.sin[0], [math.sin(p)] * 2, rtol=1e-15)

    def test_direct_trig_oracle(self):
        params = rope.rope_theta(4)
        tables = rope.rotary_tables([0.0, 1.0, 2.0], params)
        for pi, pos in enumerate((0.0, 1.0, 2.0)):
            for j, th in enumerate(params.theta):
                for lane in (j, j + 2):
                    assert abs(tables.cos[pi, lane] - math.cos(pos * th)) < 1e-15
                    assert abs(tables.sin[pi, lane] - math.sin(pos * th)) < 1e-15

    def test_pythagorean_identity(self, gen):
        positions = gen.uniform(-50, 50, size=9)
        tables = rope.rotary_tables(positions, rope.rope_theta(16))
        np.testing.assert_allclose(tables.cos**2 + tables.sin**2, 1.0, atol=1e-12)

    def test_nonfinite_positions_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            rope.rotary_tables([np.inf], rope.rope_theta(4))


class TestApplyRotary:
    def test_position_zero_is_identity(self, gen):
        x = gen.standard_normal((3, 8))
        tables = rope.rotary_tables(np.zeros(3), rope.rope_theta(8))
        assert np.array_equal(rope.apply_rotary(x, tables), x)

    def test_quarter_turn_d2(self):
        tables = rope.rotary_tables([math.pi / 2], rope.rope_theta(2, 10.0))
        out = rope.apply_rotary(np.array([[1.0, 0.0]]), tables)
        np.testing.assert_allclose(out, [[0.0, 1.0]], atol=1e-12)

    @given(st.integers(min_value=0, max_value=2**32))
    @settings(max_examples=30, deadline=None)
    def test_isometry(self, seed):
        gen = np.random.default_rng(seed)
        x = gen.standard_normal((4, 16))
        positions = gen.uniform(-100, 100, size=4)
        rot = rope.apply_rotary(x, rope.rotary_tables(positions, rope.rope_theta(16)))
        np.testing.assert_allclose(np.linalg.norm(rot, axis=1),
                                   np.linalg.norm(x, axis=1), atol=1e-12)

    def test_dimension_mismatch_rejected(self, gen):
        tables = rope.rotary_tables([0.0, 1.0], rope.rope_theta(8))
        with pytest.raises(ValueError, match="rows"):
            rope.apply_rotary(gen.standard_normal((3, 8)), tables)
        with pytest.raises(ValueError, match="width"):
            rope.apply_rotary(gen.standard_normal((2, 4)), tables)


class TestExactLogits:
    def test_zero_distance_is_unrotated_dot(self, gen):
        params = rope.rope_theta(8)
        q = gen.standard_normal((1, 8))
        k = gen.standard_normal((1, 8))
        out = rope.exact_logits(q, k, [5], params)
        expected = float(np.dot(q[0], k[0])) / math.sqrt(8)
        assert abs(out[0, 0] - expected) < 1e-12

    def test_shift_invariance(self, gen):
        params = rope.rope_theta(8)
        q = gen.standard_normal((6, 8))
        k = gen.standard_normal((6, 8))
        base = rope.exact_logits(q, k, np.arange(6), params)
        for shift in (17, -4, 1000):
            shifted = rope.exact_logits(q, k, np.arange(6) + shift, params)
            np.testing.assert_allclose(base, shifted, atol=1e-9)

    def test_complex_pairs_oracle(self, gen):
        params = rope.rope_theta(16)
        q = gen.standard_normal((4, 16))
        k = gen.standard_normal((4, 16))
        positions = np.array([3, 10, 11, 40])
        out = rope.exact_logits(q, k, positions, params)
        for m in range(4):
            for n in range(4):
                want = complex_pairs_logit(q[m], k[n],
                                           positions[m] - positions[n],
                                           params.theta)
                assert abs(out[m, n] - want) < 1e-9

    def test_decode_suffix_convention(self, gen):
        params = rope.rope_theta(8)
        q = gen.standard_normal((1, 8))
        k = gen.standard_normal((5, 8))
        out = rope.exact_logits(q, k, np.arange(5), params)
        full = rope.exact_logits(np.vstack([np.zeros((4, 8)), q]), k,
                                 np.arange(5), params)
        assert np.array_equal(out[0], full[4])

    def test_fractional_positions_rejected(self, gen):
        params = rope.rope_theta(4)
        with pytest.raises(ValueError, match="integer"):
            rope.exact_logits(gen.standard_normal((2, 4)),
                              gen.standard_normal((2, 4)), [0.0, 0.5], params)

    def test_dimension_mismatch_rejected(self, gen):
        params = rope.rope_theta(8)
        with pytest.raises(ValueError, match="head_dim"):
            rope.exact_logits(gen.standard_normal((2, 4)),
                              gen.standard_normal((2, 4)), [0, 1], params)


class TestDecayShape:
    """The decay trend facts that are mathematically true at this scale.

    The window-50 monotonicity claim at d=64 is false (see the
    acceptance suite and the project notes); d=256 does satisfy it.
    """

    @staticmethod
    def _abs_logits(d, max_dist):
        from galikit import analysis

        params = rope.rope_theta(d)
        ones = np.ones(d)
        return np.abs(analysis.decay_curve(ones, ones, params, max_dist).logits)

    def test_peak_at_distance_zero(self):
        a = self._abs_logits(64, 819)
        assert int(np.argmax(a)) == 0
        assert a[0] == pytest.approx(2 * 32 / math.sqrt(64))

    def test_window_max_nonincreasing_d256(self):
        a = self._abs_logits(256, 819)
        wins = [a[i : i + 50].max() for i in range(0, 820, 50)]
        assert all(wins[i] >= wins[i + 1] for i in range(len(wins) - 1))

    def test_deterministic(self):
        assert np.array_equal(self._abs_logits(64, 200), self._abs_logits(64, 200))
