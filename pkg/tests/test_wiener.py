import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact.acceptance import counterexample, smooth_random_kernel
from artifact.wiener import (CoverTooCoarse, SingularSymbol, TimeKernel, block_circulant, causality_check,
                             convolve, invert, invert_by_localization, neumann_inverse, symbol, symbol_at)


def test_two_point_inverse():
    a = TimeKernel(np.array([[[0.0]], [[0.5]]]), 1.0, np.eye(1))
    for inv in (invert(a), invert_by_localization(a, 2)):
        assert inv.blocks[0, 0, 0] == pytest.approx(1 / 3, abs=1e-12)
        assert inv.blocks[1, 0, 0] == pytest.approx(-2 / 3, abs=1e-12)


@pytest.mark.parametrize("d,m", [(1, 64), (2, 32), (4, 16)])
def test_inverse_is_dense_inverse(d, m):
    a = smooth_random_kernel(np.random.default_rng(d), m, d, 0.5)
    inv = invert(a)
    assert np.max(np.abs(np.linalg.inv(block_circulant(a)) - block_circulant(inv))) < 1e-10
    assert convolve(a, inv).max_block_difference(TimeKernel.eye(m, d, 0.5)) < 1e-12
    assert inv.max_block_difference(invert_by_localization(a, 8)) < 1e-8


def test_convolution_with_delta_shifts():
    rng = np.random.default_rng(0)
    a = TimeKernel(rng.standard_normal((8, 2, 2)), 0.5)
    shifted = convolve(TimeKernel.delta(8, 2, 0.5, 3), a)
    assert np.allclose(shifted.blocks, np.roll(a.blocks, 3, axis=0))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_mass_norm_is_submultiplicative(seed):
    rng = np.random.default_rng(seed)
    a = smooth_random_kernel(rng, 16, 2, 0.5)
    b = smooth_random_kernel(rng, 16, 2, 0.5)
    assert convolve(a, b).mass_norm() <= a.mass_norm() * b.mass_norm() * (1 + 1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_symbol_is_multiplicative(seed):
    rng = np.random.default_rng(seed)
    a = smooth_random_kernel(rng, 16, 2, 0.5)
    b = smooth_random_kernel(rng, 16, 2, 0.5)
    lhs = symbol(convolve(a, b)).values
    rhs = symbol(a).values @ symbol(b).values
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_symbol_at_matches_sampled_symbol():
    a = smooth_random_kernel(np.random.default_rng(4), 16, 2, 0.5)
    s = symbol(a)
    assert np.max(np.abs(symbol_at(a, s.frequencies) - s.values)) < 1e-12


def test_singular_symbol_raises():
    # 1 + L with symbol 1 - exp(-i lam) vanishing at lam = 0
    a = TimeKernel.eye(8, 1, 1.0) - TimeKernel.delta(8, 1, 1.0, 1)
    with pytest.raises(SingularSymbol):
        invert(a)


def test_coarse_cover_is_reported():
    a = smooth_random_kernel(np.random.default_rng(1), 32, 2, 0.5, amplitude=3.0)
    with pytest.raises(CoverTooCoarse):
        invert_by_localization(a, 1)


def test_neumann_oracle_for_causal_kernel():
    m, tau = 256, 0.25
    k = np.arange(m)
    bl = np.where((k >= 1) & (k < m // 2), 0.3 * np.exp(-k * tau), 0.0)[:, None, None]
    a = TimeKernel(bl, tau, np.eye(1))
    assert neumann_inverse(a).max_block_difference(invert(a)) < 1e-9
    rep = causality_check(a)
    assert rep.is_causal and rep.inverse_causal


def test_counterexample_has_noncausal_inverse():
    a, zero = counterexample()
    rep = causality_check(a)
    assert rep.is_causal and not rep.inverse_causal
    assert rep.offending is not None
    assert rep.offending.imag == pytest.approx(zero.imag, abs=1e-9)
    vals = symbol_at(a, np.array([zero]))
    assert abs(vals[0, 0, 0]) < 1e-12


def test_anticausal_kernel_detected():
    m = 64
    anti = np.zeros((m, 1, 1))
    anti[-1] = 0.3
    rep = causality_check(TimeKernel(anti, 1.0, np.eye(1)))
    assert not rep.is_causal
