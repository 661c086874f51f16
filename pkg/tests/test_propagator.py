import math

import numpy as np
import pytest

from artifact.grid import FrameSpec, Grid3, GridFunction, lp_norm, well_scenario
from artifact.propagator import (DISPERSIVE_CONSTANT, HamiltonianSpec, TimeDependentFrame, dispersive_ratio,
                                 duhamel_solve, dyadic_sum, free_evolve, pairing_crossover)

from conftest import gaussian

H = HamiltonianSpec()


def exact_gaussian(grid: Grid3, s: float, t: float) -> np.ndarray:
    """exp(i t H0) exp(-|x|^2 / (2 s^2)) with H0 = -Laplacian."""
    w = s * s - 2j * t
    return (s * s / w) ** 1.5 * np.exp(-grid.radius() ** 2 / (2 * w))


def test_free_evolution_matches_closed_form():
    g = Grid3(64, 32.0)
    out = free_evolve(gaussian(g, 1.0), 0.7, H)
    assert np.max(np.abs(out.values[0] - exact_gaussian(g, 1.0, 0.7))) < 1e-8


def test_free_evolution_is_unitary_group():
    g = Grid3(32, 16.0)
    f = gaussian(g, 1.0, (0.5, 0, 0))
    a = free_evolve(free_evolve(f, 0.3, H), 0.4, H)
    b = free_evolve(f, 0.7, H)
    assert np.max(np.abs(a.values - b.values)) < 1e-12
    assert lp_norm(b, 2) == pytest.approx(lp_norm(f, 2), rel=1e-12)
    back = free_evolve(b, -0.7, H)
    assert np.max(np.abs(back.values - f.values)) < 1e-12


def test_dispersive_ratio_of_wide_gaussian_approaches_constant():
    g = Grid3(64, 32.0)
    r = dispersive_ratio(gaussian(g, 0.6), 1.0, H)
    assert not r.flagged
    # closed form for this Gaussian: (1 + s^4 / (4 t^2))^{-3/4} times the constant
    assert r.value == pytest.approx(DISPERSIVE_CONSTANT * (1 + 0.6**4 / 4) ** -0.75, rel=1e-3)


def test_dispersive_ratio_flags_wraparound():
    g = Grid3(32, 8.0)
    assert dispersive_ratio(gaussian(g, 0.6), 8.0, H).flagged


def test_matrix_evolution_separates_components():
    g = Grid3(32, 16.0)
    h = HamiltonianSpec("matrix", 1.0)
    f = gaussian(g, 1.0, components=2)
    out = free_evolve(f, 0.5, h)
    # the first component has symbol -(xi^2 + mu)
    expected = free_evolve(gaussian(g, 1.0), -0.5, H).values[0] * np.exp(-0.5j)
    assert np.max(np.abs(out.values[0] - expected)) < 1e-12
    assert np.max(np.abs(out.values[1])) == 0


def test_dyadic_sum_is_finite_and_positive():
    g = Grid3(32, 16.0)
    res = dyadic_sum(gaussian(g, 1.0), H, (-4, 1), samples_per_octave=4)
    assert math.isfinite(res.total) and res.total > 0
    assert len(res.terms) == 6


def test_crossover_prediction_is_the_bound_crossing():
    g = Grid3(32, 8.0)
    v = np.zeros((1,) + g.shape, dtype=np.complex128)
    v[0, 14:18, 14:18, 14:18] = 1
    a = GridFunction(g, v)
    res = pairing_crossover(a, a, H, (-6, 1), samples_per_octave=8)
    m = 64 * g.cell_volume
    assert res.predicted_scale_free == pytest.approx(2 / 3 * math.log2(m * m / m))
    # the bounds cross at the predicted octave
    n = res.predicted
    decay = 2**n * (4 * math.pi * 2**n) ** -1.5 * m * m
    assert decay == pytest.approx(2**n * m, rel=1e-10)
    # before periodic images arrive, the measured terms respect both bounds
    early = res.octaves <= -2
    assert np.all(res.measured[early] <= np.minimum(res.decay_bound, res.energy_bound)[early] * (1 + 1e-9))


def test_duhamel_without_potential_is_free_evolution():
    scn = well_scenario(0.0, n=32, L=16.0)
    f = gaussian(scn.grid, 1.0)
    tr = duhamel_solve(scn, f, None, 0.5, 1 / 32)
    assert np.max(np.abs(tr.states[-1].values - free_evolve(f, 0.5, H).values)) < 1e-12


def test_duhamel_forcing_matches_integral():
    """A constant forcing F = g gives Z(t) = -i int_0^t exp(i(t-s)H0) g ds (two-point check in Fourier)."""
    scn = well_scenario(0.0, n=32, L=16.0)
    g = gaussian(scn.grid, 1.0)
    T, dt = 0.5, 1 / 256
    tr = duhamel_solve(scn, GridFunction.zeros(scn.grid), lambda t: g, T, dt)
    sym = scn.grid.xi_squared
    gh = np.fft.fftn(g.values[0], norm="ortho")
    with np.errstate(divide="ignore", invalid="ignore"):
        mult = np.where(sym > 0, (np.exp(1j * T * sym) - 1) / (1j * sym), T)
        exact = np.fft.ifftn(-1j * mult * gh, norm="ortho")
    assert np.max(np.abs(tr.states[-1].values[0] - exact)) < 1e-4


def _well_error(dt, scheme):
    scn = well_scenario(4.0, n=32, L=16.0)
    f = gaussian(scn.grid, 1.0)
    ref = duhamel_solve(scn, f, None, 0.5, 1 / 1024, scheme="yoshida4").states[-1].values
    out = duhamel_solve(scn, f, None, 0.5, dt, scheme=scheme).states[-1].values
    return np.linalg.norm(out - ref) / np.linalg.norm(ref)


def test_strang_is_second_order():
    e1, e2 = _well_error(1 / 32, "strang"), _well_error(1 / 64, "strang")
    assert 3.0 < e1 / e2 < 5.0


def test_yoshida_beats_strang():
    assert _well_error(1 / 32, "yoshida4") < _well_error(1 / 32, "strang")


def test_potential_step_conserves_norm():
    scn = well_scenario(4.0, n=32, L=16.0)
    f = gaussian(scn.grid, 1.0)
    tr = duhamel_solve(scn, f, None, 1.0, 1 / 32, record_every=8)
    norms = [lp_norm(s, 2) for s in tr.states]
    assert np.allclose(norms, lp_norm(f, 2), rtol=1e-12)


def test_frame_accumulates_trapezoid_integrals():
    spec = FrameSpec((1.0, 0.0, 0.0), 2.0, 0.5)
    fr = TimeDependentFrame.from_spec(spec, 4.0, 1 / 64)
    y, theta = fr.at(4.0)
    assert y[0] == pytest.approx(math.sin(2.0) / 0.5, rel=1e-5)
    assert theta == pytest.approx(2.0 * math.sin(2.0) / 0.5, rel=1e-5)


def test_non_multiple_horizon_rejected():
    scn = well_scenario(0.0, n=16, L=8.0)
    with pytest.raises(ValueError):
        duhamel_solve(scn, gaussian(scn.grid), None, 0.3, 0.25)
