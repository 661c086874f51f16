import math

import numpy as np
import pytest

from artifact.grid import Grid3, GridFunction
from artifact.propagator import HamiltonianSpec
from artifact.resolvent import (LATTICE_DIAGONAL_CONSTANT, SINGULAR_CELL_CONSTANT, ResolventQuery,
                                apply_free_resolvent, fourier_limit_check, free_resolvent_kernel,
                                singular_cell_constant_mc)

from conftest import gaussian

H = HamiltonianSpec()


def test_cell_constant_against_monte_carlo():
    value, err = singular_cell_constant_mc(200_000, seed=7)
    assert abs(value - SINGULAR_CELL_CONSTANT) < 4 * err


def test_lattice_constant_value():
    assert LATTICE_DIAGONAL_CONSTANT == pytest.approx(0.22578, abs=1e-5)


def test_kernel_is_decaying_branch():
    q = ResolventQuery(-4.0)
    k = free_resolvent_kernel(np.array([[1.0, 0.0, 0.0]]), q, H)
    assert k[0, 0, 0] == pytest.approx(math.exp(-2.0) / (4 * math.pi))


def test_kernel_singular_at_origin():
    with pytest.raises(ValueError):
        free_resolvent_kernel(np.zeros(3), ResolventQuery(-1.0), H)


def test_resolvent_inverts_shifted_laplacian():
    g = Grid3(64, 16.0)
    f = gaussian(g, 1.0)
    lam = -1.0 - 0.5j
    u = apply_free_resolvent(f, ResolventQuery(lam), H)
    uh = np.fft.fftn(u.values[0])
    back = np.fft.ifftn((g.xi_squared - lam) * uh)
    assert np.max(np.abs(back - f.values[0])) < 1e-3


def test_direct_and_spectral_agree_for_smooth_data():
    g = Grid3(32, 16.0)
    f = gaussian(g, 1.5)
    q = ResolventQuery(-1.0)
    a = apply_free_resolvent(f, q, H, "spectral")
    b = apply_free_resolvent(f, q, H, "direct")
    assert np.linalg.norm(a.values - b.values) / np.linalg.norm(a.values) < 2e-2


def test_resolvent_identity():
    g = Grid3(64, 16.0)
    f = gaussian(g)
    a, b = -1.0 - 0.5j, -2.0 - 1.0j
    Ra = apply_free_resolvent(f, ResolventQuery(a), H).values
    Rb = apply_free_resolvent(f, ResolventQuery(b), H)
    RaRb = apply_free_resolvent(Rb, ResolventQuery(a), H).values
    lhs = Ra - Rb.values
    assert np.linalg.norm(lhs - (a - b) * RaRb) / np.linalg.norm(lhs) < 1e-2


def test_fourier_limit_at_damped_parameter():
    g = Grid3(64, 16.0)
    f = gaussian(g)
    res = fourier_limit_check(f, -1j, 8.0, H)
    assert not res.flagged
    assert res.discrepancy < 1e-3 * res.scale


def test_fourier_limit_rejects_upper_half_plane():
    g = Grid3(16, 8.0)
    with pytest.raises(ValueError):
        fourier_limit_check(gaussian(g), 1j, 1.0, H)
