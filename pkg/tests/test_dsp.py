"""Unit and property tests for the complex-block primitives."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from twrsim.dsp import (
    add_cp,
    apply_cyclic_delay,
    circular_convolve,
    conj_time_reverse,
    delay_phases,
    dft,
    idft,
    remove_cp,
)


def random_block(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def dft_matrix(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


complex_blocks = st.integers(min_value=0, max_value=2**32 - 1).map(
    lambda seed: random_block(np.random.default_rng(seed).integers(2, 65), seed)
)


class TestDft:
    def test_impulse(self):
        assert_allclose(dft(np.array([1.0, 0, 0, 0])), np.full(4, 0.5), atol=1e-15)

    def test_idft_impulse_duality(self):
        assert_allclose(idft(np.ones(4)), np.array([2.0, 0, 0, 0]), atol=1e-15)

    @settings(max_examples=25, deadline=None)
    @given(complex_blocks)
    def test_round_trip(self, x):
        assert_allclose(idft(dft(x)), x, atol=1e-12)
        assert_allclose(dft(idft(x)), x, atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(complex_blocks)
    def test_unitarity(self, x):
        assert np.linalg.norm(dft(x)) == pytest.approx(np.linalg.norm(x), rel=1e-12)
        assert np.linalg.norm(idft(x)) == pytest.approx(np.linalg.norm(x), rel=1e-12)

    def test_matches_matrix_product(self):
        x = random_block(8, seed=3)
        assert_allclose(dft(x), dft_matrix(8) @ x, atol=1e-10)
        assert_allclose(idft(x), dft_matrix(8).conj().T @ x, atol=1e-10)

    def test_batched_rows(self):
        x = np.stack([random_block(16, s) for s in range(5)])
        assert_allclose(dft(x)[2], dft(x[2]), atol=1e-14)


class TestConjTimeReverse:
    def test_definition(self):
        a, b, c, d = 1 + 2j, 3 - 1j, -2 + 0.5j, 0.25j
        out = conj_time_reverse(np.array([a, b, c, d]))
        assert_allclose(out, np.conj([a, d, c, b]))

    def test_real_symmetric_fixed_point(self):
        x = np.array([1.0, 2.0, 3.0, 2.0])
        assert_allclose(conj_time_reverse(x), x)

    @settings(max_examples=25, deadline=None)
    @given(complex_blocks)
    def test_frequency_conjugation(self, x):
        assert_allclose(dft(conj_time_reverse(x)), np.conj(dft(x)), atol=1e-12)

    @settings(max_examples=10, deadline=None)
    @given(complex_blocks)
    def test_involution(self, x):
        assert_allclose(conj_time_reverse(conj_time_reverse(x)), x)


class TestCyclicDelay:
    def test_zero_is_identity(self):
        x = random_block(6)
        assert_allclose(apply_cyclic_delay(x, 0), x)

    def test_shift_by_one(self):
        out = apply_cyclic_delay(np.array([1.0, 2.0, 3.0, 4.0]), 1)
        assert_allclose(out, [4.0, 1.0, 2.0, 3.0])

    @pytest.mark.parametrize("delay", [-1, 8, 100])
    def test_out_of_range(self, delay):
        with pytest.raises(ValueError):
            apply_cyclic_delay(random_block(8), delay)

    @settings(max_examples=25, deadline=None)
    @given(complex_blocks, st.integers(min_value=0, max_value=63))
    def test_delay_phase_duality(self, x, delay):
        delay = delay % x.size
        shifted = dft(apply_cyclic_delay(x, delay))
        assert_allclose(shifted, delay_phases(x.size, delay) * dft(x), atol=1e-12)


class TestCyclicPrefix:
    def test_example(self):
        block = add_cp(np.array([1.0, 2.0, 3.0, 4.0]), 2)
        assert_allclose(block.samples, [3.0, 4.0, 1.0, 2.0, 3.0, 4.0])
        assert block.cp_len == 2
        assert block.payload_len == 4

    def test_zero_length(self):
        x = random_block(5)
        block = add_cp(x, 0)
        assert_allclose(block.samples, x)
        assert_allclose(remove_cp(block), x)

    @settings(max_examples=25, deadline=None)
    @given(complex_blocks, st.integers(min_value=0, max_value=64))
    def test_round_trip(self, x, cp_len):
        cp_len = min(cp_len, x.size)
        assert_allclose(remove_cp(add_cp(x, cp_len)), x)

    def test_prefix_property(self):
        x = random_block(10, seed=9)
        block = add_cp(x, 4)
        assert_allclose(block.samples[:4], block.samples[-4:])

    def test_too_long_rejected(self):
        with pytest.raises(ValueError):
            add_cp(random_block(4), 5)
        with pytest.raises(ValueError):
            add_cp(random_block(4), -1)


class TestCircularConvolve:
    def test_single_tap_identity(self):
        x = random_block(8)
        assert_allclose(circular_convolve(x, np.array([1.0])), x, atol=1e-12)

    def test_two_tap_equals_delay(self):
        x = random_block(8, seed=5)
        out = circular_convolve(x, np.array([0.0, 1.0]))
        assert_allclose(out, apply_cyclic_delay(x, 1), atol=1e-12)

    def test_matches_direct_sum(self):
        rng = np.random.default_rng(11)
        x = random_block(16, seed=11)
        taps = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        direct = np.zeros(16, dtype=complex)
        for i in range(16):
            for lag in range(4):
                direct[i] += taps[lag] * x[(i - lag) % 16]
        assert_allclose(circular_convolve(x, taps), direct, atol=1e-10)

    def test_commutes_with_cyclic_delay(self):
        x = random_block(12, seed=2)
        taps = random_block(3, seed=4)
        lhs = circular_convolve(apply_cyclic_delay(x, 5), taps)
        rhs = apply_cyclic_delay(circular_convolve(x, taps), 5)
        assert_allclose(lhs, rhs, atol=1e-12)

    def test_too_many_taps(self):
        with pytest.raises(ValueError):
            circular_convolve(random_block(4), random_block(5))
        with pytest.raises(ValueError):
            circular_convolve(random_block(4), np.array([]))
