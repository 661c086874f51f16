import math
import warnings

import numpy as np
import pytest

from artifact.birman_schwinger import ExceptionalScan, grid_eigen_oracle
from artifact.grid import FrameSpec, GridFunction, lp_norm, well_scenario
from artifact.propagator import HamiltonianSpec, TimeDependentFrame, duhamel_solve
from artifact.strichartz import (ExceptionalInSpectrum, FrameMarginError, apply_frame, check_no_embedded,
                                 empty_projection, frame_property_checks, gauge_equivalence, grid_projection,
                                 interpolated_exponent, mixed_norm, projection_invariance, scale_invariance,
                                 strichartz_quotients, time_norm)

from conftest import gaussian

FRAME = FrameSpec((1.0, 0.5, 0.0), 1.0, 0.5)


@pytest.fixture(scope="module")
def small_projection(small_well):
    scn, _, _, proj = small_well
    return scn, proj, grid_projection(scn, proj, step_dt=1 / 32)


def test_time_norm_of_constant():
    t = np.linspace(0, 4, 33)
    assert time_norm(t, np.full(33, 2.0), 2.0) == pytest.approx(2.0 * 2.0)
    assert time_norm(t, np.full(33, 2.0), math.inf) == 2.0


def test_interpolated_exponent_lies_between_endpoints():
    for p, q in ((1.0, 1.2), (2.0, 2.0)):
        assert interpolated_exponent(p) == pytest.approx(q)
    q = interpolated_exponent(1.5)
    assert 3 / (2 * q) == pytest.approx(1 / 1.5 + 1 / 4)


def test_mixed_norm_of_free_flow():
    scn = well_scenario(0.0, n=32, L=16.0)
    f = gaussian(scn.grid)
    tr = duhamel_solve(scn, f, None, 1.0, 1 / 16)
    assert mixed_norm(tr, math.inf, (2, 2)) == pytest.approx(lp_norm(f, 2), rel=1e-12)
    assert mixed_norm(tr, 2.0, (2, 2)) == pytest.approx(lp_norm(f, 2), rel=1e-12)


def test_mixed_norm_warns_about_flagged_samples():
    scn = well_scenario(0.0, n=16, L=4.0)
    tr = duhamel_solve(scn, gaussian(scn.grid, 0.5), None, 2.0, 1 / 8)
    assert tr.flags.any()
    with pytest.warns(RuntimeWarning, match="flagged"):
        mixed_norm(tr, 2.0, (2, 2))


def test_mixed_norm_needs_states():
    scn = well_scenario(0.0, n=16, L=8.0)
    tr = duhamel_solve(scn, gaussian(scn.grid), None, 0.5, 1 / 8, keep_states=False)
    with pytest.raises(ValueError):
        mixed_norm(tr, 2.0, (2, 2))


def test_frame_is_isometric_and_invertible():
    scn = well_scenario(0.0, n=32, L=16.0)
    fr = TimeDependentFrame.from_spec(FRAME, 2.0, 1 / 16)
    f = gaussian(scn.grid, 1.0, (0.3, 0, 0))
    g = apply_frame(f, fr, 1.3)
    assert lp_norm(g, 2) == pytest.approx(lp_norm(f, 2), rel=1e-12)
    back = apply_frame(g, fr, 1.3, inverse=True)
    assert np.max(np.abs(back.values - f.values)) < 1e-12


def test_frame_margin_enforced():
    scn = well_scenario(0.0, n=16, L=4.0)
    fr = TimeDependentFrame.from_spec(FrameSpec((2.0, 0.0, 0.0), 0.0, 0.0), 2.0, 1 / 16)
    with pytest.raises(FrameMarginError):
        apply_frame(gaussian(scn.grid), fr, 2.0)


def test_embedded_exceptional_value_refused():
    h = HamiltonianSpec()
    scan = ExceptionalScan(np.array([0.5 + 0j]), np.array([0.01]), [(0.5, 0.01)], 0.05)
    with pytest.raises(ExceptionalInSpectrum):
        check_no_embedded(scan, None, h)
    check_no_embedded(ExceptionalScan(np.array([-0.5 + 0j]), np.array([0.01]), [(-0.5, 0.01)], 0.05), None, h)


def test_grid_projection_algebra(small_projection):
    scn, _, gp = small_projection
    assert gp.rank == 1
    g = gaussian(scn.grid)
    once = gp.apply_pc(g.values)
    assert np.max(np.abs(gp.apply_pc(once) - once)) < 1e-10 * np.max(np.abs(once))
    assert np.max(np.abs(gp.coefficients(gp.phis[0]) - 1)) < 1e-10
    # the grid eigenvalue belongs to the spectral discretization, which the LOBPCG oracle also uses
    assert gp.eigenvalues[0].real == pytest.approx(grid_eigen_oracle(4.0, n=32, L=16.0), rel=0.02)
    assert abs(gp.eigenvalues[0].imag) < 1e-10


def test_step_projection_is_invariant(small_projection):
    scn, _, gp = small_projection
    z0 = gaussian(scn.grid, 1.0, (0.5, 0, 0))
    assert projection_invariance(scn, gp, z0, 2.0, 1 / 32) < 1e-10


def test_gauge_and_moving_frames_agree():
    scn = well_scenario(4.0, n=32, L=16.0)
    fr = TimeDependentFrame.from_spec(FRAME.scaled(0.1), 1.0, 1 / 64)
    assert gauge_equivalence(scn, fr, gaussian(scn.grid), 1.0, 1 / 64) < 1e-2


def test_quotients_are_scale_invariant(small_projection):
    scn, _, gp = small_projection
    assert scale_invariance(scn, gp, (gaussian(scn.grid), None), 1.0, 1 / 32) < 1e-10


def test_projected_quotient_is_stable(small_projection):
    scn, _, gp = small_projection
    z = gaussian(scn.grid, 1.0, (0.5, 0, 0))
    rep = strichartz_quotients(scn, gp, [(z, None)], 4.0, 1 / 32)
    assert abs(rep.horizon_change("Q1", 0, True)) < 0.1
    assert rep.horizon_change("Q2", 0, False) > rep.horizon_change("Q2", 0, True)
    d = rep.to_dict()
    assert {e["name"] for e in d["entries"]} >= {"Q1", "Q2"}


def test_free_quotients_without_projection():
    scn = well_scenario(0.0, n=32, L=16.0)
    rep = strichartz_quotients(scn, empty_projection(scn.grid), [(gaussian(scn.grid), None)], 2.0, 1 / 32)
    q = rep.quotient("Q1", 0, 2.0)
    assert math.isfinite(q) and q > 0


def test_frame_properties_on_small_grid(small_projection):
    scn, _, gp = small_projection
    fr = TimeDependentFrame.from_spec(FRAME.scaled(0.1), 4.0, 1 / 32)
    rep = frame_property_checks(fr, scn, gp, scales=(1.0, 0.5, 0.25), p3_grid_n=16, p3_window=(0.5, 2.0))
    assert rep.isometry < 1e-12 and rep.inverse < 1e-12 and rep.commutation < 1e-12
    assert rep.p3_monotone
    assert all(0.4 <= r <= 0.6 for r in rep.p4_halving)
