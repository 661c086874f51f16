import numpy as np
import pytest

from artifact.grid import (FrameSpec, Grid3, GridFunction, ScenarioError, ShapeSpec, boundary_mass, format_float,
                           load_scenario, lp_norm, make_scenario, parse_scenario_text, read_raw_samples,
                           well_scenario, write_raw_samples)

from conftest import gaussian


@pytest.mark.parametrize("n", [16, 24, 32, 48, 64])
def test_supported_sizes(n):
    assert Grid3(n, 8.0).h == pytest.approx(8.0 / n)


@pytest.mark.parametrize("n", [10, 20, 7])
def test_unsupported_sizes(n):
    with pytest.raises(ValueError):
        Grid3(n, 8.0)


def test_constant_norms():
    g = Grid3(16, 4.0)
    f = GridFunction(g, np.full((1,) + g.shape, 2.0, dtype=np.complex128))
    assert lp_norm(f, 1) == pytest.approx(2.0 * 64.0)
    assert lp_norm(f, 2) == pytest.approx(2.0 * 8.0)
    assert lp_norm(f, np.inf) == pytest.approx(2.0)


def test_two_component_modulus_is_euclidean():
    g = Grid3(16, 4.0)
    vals = np.zeros((2,) + g.shape, dtype=np.complex128)
    vals[0], vals[1] = 3.0, 4.0j
    assert np.allclose(GridFunction(g, vals).modulus(), 5.0)


def test_boundary_mass_of_centred_gaussian_is_small():
    g = Grid3(32, 16.0)
    assert boundary_mass(gaussian(g, 1.0)) < 1e-6
    assert boundary_mass(gaussian(g, 4.0)) > 1e-3


def test_format_float_round_trips():
    for x in (0.1, 1 / 3, -2.5e-17, 12345.678):
        assert float(format_float(x)) == x


def test_raw_samples_round_trip(tmp_path):
    g = Grid3(16, 4.0)
    rng = np.random.default_rng(0)
    f = GridFunction(g, rng.standard_normal((2,) + g.shape) + 1j * rng.standard_normal((2,) + g.shape))
    write_raw_samples(tmp_path / "f.raw", f)
    back = read_raw_samples(tmp_path / "f.raw", L=4.0)
    assert np.array_equal(back.values, f.values.astype(np.complex64))  # the format stores single precision


def test_scenario_text_round_trip(tmp_path):
    scn = make_scenario(32, 16.0, "matrix", mu=1.0,
                        shapes={"W1": ShapeSpec("ball", amplitude=2.0, radius=1.0),
                                "W2": ShapeSpec("gaussian", amplitude=0.5, width=0.5, radius=2.0)},
                        frame=FrameSpec((0.1, 0.0, 0.0), 0.2, 0.5), scan={"window": (-0.9, 0.9), "resolution": 10})
    path = tmp_path / "m.scn"
    path.write_text(scn.to_text())
    back = load_scenario(path)
    assert back.kind == "matrix" and back.mu == 1.0
    assert back.frame == scn.frame
    assert np.array_equal(back.potential.values, scn.potential.values)
    assert back.scan["window"] == (-0.9, 0.9)


def test_matrix_potential_structure():
    scn = make_scenario(32, 16.0, "matrix", mu=1.0,
                        shapes={"W1": ShapeSpec("ball", amplitude=2.0), "W2": ShapeSpec("ball", amplitude=1.0j)})
    v = scn.potential.values
    assert np.allclose(v[:, 1, 0], -np.conj(v[:, 0, 1]))
    assert np.allclose(v[:, 1, 1], -v[:, 0, 0])


def test_ball_samples_carry_volume_fractions():
    scn = well_scenario(1.0, n=64, L=16.0)
    vol = -scn.potential.values[:, 0, 0].real.sum() * scn.grid.cell_volume
    assert vol == pytest.approx(4 * np.pi / 3, rel=1e-3)


@pytest.mark.parametrize("text,match", [
    ("[grid]\nn = 32\n", "L"),
    ("[grid]\nn = 32\nL = 16\n[hamiltonian]\nkind = matrix\n", "mu"),
    ("[grid]\nn = 32\nL = 16\n[hamiltonian]\nkind = matrix\nmu = -1\n", "mu"),
    ("[grid]\nn = 32\nL = 16\n[potential.V]\nshape = ball\namplitude = 1\nradius = 5\n", "margin"),
    ("[grid]\nn = 32\nL = 16\n[potential.W1]\nshape = ball\namplitude = 1\n", "not valid"),
    ("[grid]\nn = 32\nn = 32\n", "duplicate"),
    ("n = 32\n", "outside"),
])
def test_scenario_errors(text, match):
    from artifact.grid import Scenario
    with pytest.raises(ScenarioError, match=match):
        Scenario.from_sections(parse_scenario_text(text))
