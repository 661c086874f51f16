import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact.grid import Grid3, GridFunction, lp_norm
from artifact.lorentz import (atomic_decompose, interpolation_norm, k_functional, lorentz_norm, rearrange,
                              reconstruct)

G = Grid3(16, 4.0)


def indicator(k: int, value: float = 1.0) -> GridFunction:
    v = np.zeros(G.size, dtype=np.complex128)
    v[:k] = value
    return GridFunction(G, v.reshape((1,) + G.shape))


@pytest.mark.parametrize("k", [1, 7, 100, 4096])
@pytest.mark.parametrize("p", [1.2, 2.0, 6.0])
def test_indicator_closed_forms(k, p):
    m = k * G.cell_volume
    f = indicator(k)
    assert lorentz_norm(f, p, 1.0) == pytest.approx(p * m ** (1 / p), rel=1e-12)
    assert lorentz_norm(f, p, math.inf) == pytest.approx(m ** (1 / p), rel=1e-12)


def test_diagonal_lorentz_space_is_lebesgue():
    rng = np.random.default_rng(3)
    f = GridFunction(G, rng.standard_normal((1,) + G.shape).astype(np.complex128))
    for p in (1.5, 2.0, 3.0):
        assert lorentz_norm(f, p, p) == pytest.approx(lp_norm(f, p), rel=1e-10)


def test_rearrangement_of_two_level_function():
    v = np.zeros(G.size)
    v[:3], v[3:10] = 2.0, 1.0
    prof = rearrange(GridFunction(G, v.reshape((1,) + G.shape).astype(np.complex128)))
    assert prof.heights[:2].tolist() == [2.0, 1.0]
    assert prof.measures[:2] * (1 / G.cell_volume) == pytest.approx([3, 7])
    assert prof.distribution(1.5) == pytest.approx(3 * G.cell_volume)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10.0), st.sampled_from([1.2, 2.0, 6.0]), st.sampled_from([1.0, 2.0, math.inf]))
def test_norm_is_homogeneous_and_rearrangement_invariant(seed, scale, p, q):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(G.size) * (rng.random(G.size) < 0.3)
    f = GridFunction(G, v.reshape((1,) + G.shape).astype(np.complex128))
    g = GridFunction(G, (scale * rng.permutation(v)).reshape((1,) + G.shape).astype(np.complex128))
    assert lorentz_norm(g, p, q) == pytest.approx(scale * lorentz_norm(f, p, q), rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1.2, 2.0]))
def test_decomposition_reconstructs_exactly(seed, p):
    rng = np.random.default_rng(seed)
    v = (rng.standard_normal(G.shape) + 1j * rng.standard_normal(G.shape)) * (rng.random(G.shape) < 0.5)
    f = GridFunction(G, v[None])
    d = atomic_decompose(f, p)
    assert np.array_equal(reconstruct(d, G).values, f.values)
    assert np.max(d.normalization_residuals(), initial=0.0) < 1e-12
    for q in (1.0, 2.0):
        r = d.coefficient_norm(q) / lorentz_norm(f, p, q)
        assert 1 / 8 <= r <= 8


def test_atom_supports_are_disjoint():
    rng = np.random.default_rng(5)
    f = GridFunction(G, rng.random((1,) + G.shape).astype(np.complex128))
    d = atomic_decompose(f, 2.0)
    sup = np.concatenate([e.support for e in d.entries])
    assert len(sup) == len(np.unique(sup))


def test_k_functional_of_indicator():
    """For chi_E the optimal split is at a constant level: K(t) = min(m, t sqrt(m))."""
    k = 50
    m = k * G.cell_volume
    f = indicator(k)
    for t in (0.1, 0.5, math.sqrt(m), 10.0):
        assert k_functional(f, t) == pytest.approx(min(m, t * math.sqrt(m)), rel=1e-10)


def test_k_functional_limits():
    rng = np.random.default_rng(1)
    f = GridFunction(G, rng.random((1,) + G.shape).astype(np.complex128))
    assert k_functional(f, 1e-8) == pytest.approx(1e-8 * lp_norm(f, 2), rel=1e-6)
    assert k_functional(f, 1e8) == pytest.approx(lp_norm(f, 1), rel=1e-10)


def test_interpolation_norm_of_indicator():
    """int t^{-1/3} min(m, t sqrt m) dt/t = m^{5/6} (3/2 + 3) for theta = 1/3."""
    k = 64
    m = k * G.cell_volume
    assert interpolation_norm(indicator(k)) == pytest.approx(4.5 * m ** (5 / 6), rel=1e-4)


def test_interpolation_norm_comparable_to_lorentz():
    rng = np.random.default_rng(2)
    for _ in range(5):
        f = GridFunction(G, rng.random((1,) + G.shape).astype(np.complex128) ** 4)
        r = interpolation_norm(f) / lorentz_norm(f, 1.2, 1.0)
        assert 0.1 < r < 10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1.2, 2.0]))
def test_shell_sizes_are_dyadic(seed, p):
    """Interior shells satisfy 2^(k-2) < measure <= 2^k with strictly increasing k."""
    rng = np.random.default_rng(seed)
    f = GridFunction(G, (rng.random((1,) + G.shape) ** rng.uniform(0.5, 6)).astype(np.complex128))
    d = atomic_decompose(f, p)
    levels = [e.level for e in d.entries]
    assert all(a < b for a, b in zip(levels, levels[1:]))
    for e in d.entries[:-1]:
        assert 2.0 ** (e.level - 2) < e.measure <= 2.0**e.level * (1 + 1e-12)


def test_k_functional_against_convex_program():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(11)
    g = Grid3(4, 2.0)
    v = rng.random(g.shape) ** 2
    f = GridFunction(g, v[None].astype(np.complex128))
    w = g.cell_volume
    for t in (0.3, 1.0, 2.5):
        a = cp.Variable(v.size)
        obj = w * cp.norm1(a) + t * math.sqrt(w) * cp.norm2(v.ravel() - a)
        cp.Problem(cp.Minimize(obj)).solve()
        assert k_functional(f, t) == pytest.approx(obj.value, abs=1e-6)
