import math

import numpy as np
import pytest

from app.services.ensemble import EnsembleService, band_params
from core.errors import DomainError, ParameterError, ResolutionError
from models.fields import CircleField, PlaneWaveField, SphericalField, field_from_json


def test_monochromatic_planar_wavevectors_have_unit_norm():
    field = EnsembleService.sample_planar(alpha=1.0, J=256, seed=3)
    assert np.allclose(np.linalg.norm(field.wavevectors, axis=1), 1.0)


def test_planar_wavevectors_stay_in_the_annulus():
    field = EnsembleService.sample_planar(alpha=0.5, J=2048, seed=3)
    norms = np.linalg.norm(field.wavevectors, axis=1)
    assert norms.min() >= 0.5 - 1e-12
    assert norms.max() <= 1.0 + 1e-12


@pytest.mark.parametrize("alpha, J", [(1.5, 256), (-0.1, 256), (0.5, 10)])
def test_sample_planar_rejects_bad_parameters(alpha, J):
    with pytest.raises(ParameterError):
        EnsembleService.sample_planar(alpha=alpha, J=J)


def test_same_seed_gives_identical_coefficients():
    a = EnsembleService.sample_planar(0.3, 128, seed=11)
    b = EnsembleService.sample_planar(0.3, 128, seed=11)
    c = EnsembleService.sample_planar(0.3, 128, seed=12)
    assert np.array_equal(a.wavevectors, b.wavevectors)
    assert np.array_equal(a.cos_amps, b.cos_amps)
    assert not np.array_equal(a.cos_amps, c.cos_amps)


def test_pointwise_variance_is_one():
    point = np.array([[0.3, 0.7]])
    values = [EnsembleService.evaluate(EnsembleService.sample_planar(0.0, 256, seed=s), point)[0]
              for s in range(400)]
    assert np.var(values) == pytest.approx(1.0, abs=0.25)


def test_sphere_monochromatic_window_selects_one_degree():
    T = math.sqrt(80 * 81)
    assert EnsembleService.sphere_degrees(band_params(1.0, T, eta=0.5)).tolist() == [80]
    assert EnsembleService.sphere_degrees(band_params(1.0, T)).tolist() == [80]


def test_sphere_full_band_has_every_degree():
    degrees = EnsembleService.sphere_degrees(band_params(0.0, math.sqrt(80 * 81)))
    assert degrees.tolist() == list(range(1, 81))


def test_sphere_coefficient_count_matches_degrees():
    field = EnsembleService.sample_sphere(band_params(1.0, math.sqrt(20 * 21)), seed=0)
    assert (field.ell_min, field.ell_max) == (20, 20)
    assert field.coeffs.shape == (41,)


def test_torus_full_band_lattice_count():
    freqs = EnsembleService.lattice_frequencies(band_params(0.0, 2 * math.pi * 10))
    assert freqs.shape == (158, 2)
    assert len({tuple(m) for m in freqs} | {tuple(-m) for m in freqs}) == 316
    assert np.all((freqs ** 2).sum(axis=1) <= 100)


def test_torus_monochromatic_shell():
    freqs = EnsembleService.lattice_frequencies(band_params(1.0, 2 * math.pi * 10))
    both = {tuple(m) for m in freqs} | {tuple(-m) for m in freqs}
    expected = {(10, 0), (-10, 0), (0, 10), (0, -10)}
    expected |= {(sx * a, sy * b) for a, b in [(6, 8), (8, 6)] for sx in (1, -1) for sy in (1, -1)}
    assert both == expected


def test_circle_frequencies():
    full = EnsembleService.sample_circle(band_params(0.0, 100.0))
    assert full.freqs.tolist() == list(range(1, 101))
    thin = EnsembleService.sample_circle(band_params(1.0, 100.0, eta=10.0))
    assert thin.freqs.tolist() == list(range(90, 101))


def test_empty_spectral_window_is_an_error():
    with pytest.raises(ParameterError):
        EnsembleService.sample_torus(band_params(1.0, 1.0))


def test_zero_amplitudes_evaluate_to_zero():
    J = 64
    field = PlaneWaveField(wavevectors=np.ones((J, 2)) / math.sqrt(2), cos_amps=np.zeros(J),
                           sin_amps=np.zeros(J), normalization=1.0)
    values = EnsembleService.evaluate(field, np.random.default_rng(0).uniform(-5, 5, (20, 2)))
    assert np.all(values == 0.0)


def test_y20_at_the_north_pole():
    field = SphericalField(ell_min=2, ell_max=2, coeffs=[0, 0, 1, 0, 0])
    value = EnsembleService.evaluate(field, [[0.0, 0.0]])[0]
    assert value == pytest.approx(math.sqrt(5.0 / (4.0 * math.pi)), abs=1e-12)


def test_colatitude_outside_the_sphere_is_a_domain_error():
    field = SphericalField(ell_min=1, ell_max=1, coeffs=[1, 0, 0])
    with pytest.raises(DomainError):
        EnsembleService.evaluate(field, [[4.0, 0.0]])


def test_circle_field_matches_its_closed_form():
    field = CircleField(freqs=[3], cos_amps=[2.0], sin_amps=[0.0], normalization=1.0)
    x = np.linspace(0, 2 * np.pi, 7)
    assert np.allclose(EnsembleService.evaluate(field, x), 2.0 * np.cos(3 * x))


def test_under_resolved_grid_needs_the_override():
    field = EnsembleService.sample_torus(band_params(0.0, 2 * math.pi * 3), seed=0)
    with pytest.raises(ResolutionError):
        EnsembleService.evaluate_grid(field, "flat-torus", resolution=6.0)
    grid = EnsembleService.evaluate_grid(field, "flat-torus", resolution=6.0, allow_under_resolved=True)
    assert grid.samples_per_wavelength == 6.0


def test_zero_field_samples_to_an_all_zero_grid():
    J = 64
    field = PlaneWaveField(wavevectors=np.tile([[1.0, 0.0]], (J, 1)), cos_amps=np.zeros(J),
                           sin_amps=np.zeros(J), normalization=1.0)
    grid = EnsembleService.evaluate_grid(field, "planar-rect", window=(0, 10, 0, 10))
    assert np.all(grid.values == 0.0)


def test_sphere_grid_has_single_valued_poles():
    field = EnsembleService.sample_sphere(band_params(1.0, math.sqrt(6 * 7)), seed=2)
    grid = EnsembleService.evaluate_grid(field, "sphere-lonlat")
    assert np.all(grid.values[0] == grid.values[0, 0])
    assert np.all(grid.values[-1] == grid.values[-1, 0])


def test_three_torus_grid_shape():
    field = EnsembleService.sample_torus3(band_params(0.0, 2 * math.pi * 2), seed=0)
    grid = EnsembleService.evaluate_grid(field, "3-torus")
    n = math.ceil(12.0 * field.max_norm)
    assert grid.shape == (n, n, n)


def test_evaluate_circle_sample_count():
    field = EnsembleService.sample_circle(band_params(0.0, 100.0), seed=0)
    assert EnsembleService.evaluate_circle(field).shape == (1200,)


def test_fields_rebuild_from_json():
    field = EnsembleService.sample_sphere(band_params(0.0, math.sqrt(5 * 6)), seed=4)
    again = field_from_json(field.model_dump_json())
    assert isinstance(again, SphericalField)
    assert np.array_equal(again.coeffs, field.coeffs)
