import math

import numpy as np
import pytest

from app.services.ensemble import EnsembleService, band_params
from app.services.nodal3d import Nodal3DService
from app.services.stats import StatsService
from core.errors import ParameterError


def sphere(p, center=(0.0, 0.0, 0.0), radius=1.0):
    return ((p - np.asarray(center)) ** 2).sum(axis=1) - radius ** 2


def torus(p, cx=0.0, R=1.0, r=0.35):
    rho = np.sqrt((p[:, 0] - cx) ** 2 + p[:, 1] ** 2)
    return (rho - R) ** 2 + p[:, 2] ** 2 - r * r


def components_of(func, bounds, n):
    grid = Nodal3DService.box_grid(func, bounds, (n, n, n))
    return Nodal3DService.split_components(Nodal3DService.marching_cubes(grid))


def test_sphere_is_genus_zero():
    comps = components_of(sphere, [(-1.37, 1.41)] * 3, 64)
    assert len(comps) == 1
    assert comps[0].genus == 0
    assert comps[0].euler == 2
    assert comps[0].area == pytest.approx(4 * math.pi, rel=0.03)


def test_torus_is_genus_one():
    comps = components_of(torus, [(-1.53, 1.57)] * 3, 72)
    assert [c.genus for c in comps] == [1]


def test_two_holed_surface_is_genus_two():
    def blend(p):
        return np.minimum(torus(p, cx=-0.9), torus(p, cx=0.9))

    grid = Nodal3DService.box_grid(blend, [(-2.47, 2.51), (-1.53, 1.57), (-0.61, 0.63)], (160, 100, 40))
    comps = Nodal3DService.split_components(Nodal3DService.marching_cubes(grid))
    assert len(comps) == 1
    assert comps[0].euler == -2
    assert comps[0].genus == 2


def test_two_spheres_are_two_components():
    def pair(p):
        return np.minimum(sphere(p, (-1.5, 0, 0), 0.8), sphere(p, (1.5, 0, 0), 0.8))

    grid = Nodal3DService.box_grid(pair, [(-2.83, 2.87), (-1.13, 1.17), (-1.13, 1.17)], (100, 40, 40))
    comps = Nodal3DService.split_components(Nodal3DService.marching_cubes(grid))
    assert sorted(c.genus for c in comps) == [0, 0]
    assert Nodal3DService.euler_sum(comps) == 4


def test_sign_constant_grid_has_no_surface():
    grid = Nodal3DService.box_grid(lambda p: np.ones(p.shape[0]), [(0, 1)] * 3, (8, 8, 8))
    mesh = Nodal3DService.marching_cubes(grid)
    assert mesh.is_empty
    assert Nodal3DService.split_components(mesh) == []


def test_surface_cut_by_the_box_touches_the_boundary():
    comps = components_of(lambda p: sphere(p, (0.9, 0.0, 0.0)), [(-1.37, 1.41)] * 3, 48)
    assert len(comps) == 1
    assert comps[0].touches_boundary
    assert not comps[0].watertight
    assert comps[0].genus is None


def test_three_torus_surfaces_are_closed():
    field = EnsembleService.sample_torus3(band_params(0.0, 2 * math.pi * 2), seed=3)
    grid = EnsembleService.evaluate_grid(field, "3-torus")
    mesh = Nodal3DService.marching_cubes(grid)
    comps = Nodal3DService.split_components(mesh)
    assert comps
    assert all(c.watertight for c in comps)
    assert sum(c.F for c in comps) == mesh.faces.shape[0]


def test_export_off(tmp_path):
    grid = Nodal3DService.box_grid(sphere, [(-1.37, 1.41)] * 3, (24, 24, 24))
    mesh = Nodal3DService.marching_cubes(grid)
    path = Nodal3DService.export_off(mesh, str(tmp_path / "sphere.off"))
    with open(path) as fh:
        assert fh.readline().strip() == "OFF"
        V, F, _ = map(int, fh.readline().split())
    assert (V, F) == (mesh.vertices.shape[0], mesh.faces.shape[0])


def test_genus_distribution_report():
    report = Nodal3DService.genus_distribution(band_params(0.0, 2 * math.pi * 2), num_samples=3, seed=0)
    assert report.num_samples == 3
    assert report.measure is not None
    assert report.mean_genus is not None and report.mean_genus >= 0.0


def test_genus_distribution_on_a_planar_box():
    report = Nodal3DService.genus_distribution(band_params(0.0, 2 * math.pi), num_samples=2, seed=0,
                                               geometry="planar-box", side=1.5, J=128)
    assert report.num_samples == 2
    assert report.excluded_components >= 1
    assert report.euler_per_volume is not None


def test_genus_distribution_rejects_other_geometries():
    with pytest.raises(ParameterError):
        Nodal3DService.genus_distribution(band_params(0.0, 2 * math.pi), num_samples=1, geometry="sphere")


@pytest.mark.slow
def test_low_frequency_components_are_mostly_spheres():
    report = Nodal3DService.genus_distribution(band_params(0.0, 2 * math.pi * 2), num_samples=20, seed=0,
                                               geometry="planar-box", side=4.0, J=512)
    assert report.measure.mass(0) > 0.5


@pytest.mark.slow
def test_genus_measure_survives_resolution_doubling():
    params = band_params(0.0, 2 * math.pi * 3)
    coarse = Nodal3DService.genus_distribution(params, num_samples=10, seed=3, resolution=12.0,
                                               geometry="planar-box", J=512)
    fine = Nodal3DService.genus_distribution(params, num_samples=10, seed=3, resolution=24.0,
                                             geometry="planar-box", J=512)
    assert StatsService.discrepancy(coarse.measure, fine.measure) <= 0.05


@pytest.mark.slow
def test_mean_genus_survives_sample_doubling():
    params = band_params(0.0, 2 * math.pi * 3)
    half = Nodal3DService.genus_distribution(params, num_samples=10, seed=5, geometry="planar-box", J=512)
    full = Nodal3DService.genus_distribution(params, num_samples=20, seed=5, geometry="planar-box", J=512)
    assert abs(full.mean_genus - half.mean_genus) <= 3 * math.hypot(full.stderr, half.stderr) + 0.05


@pytest.mark.slow
def test_genus_exact_at_128():
    comps = components_of(sphere, [(-1.37, 1.41)] * 3, 128)
    assert [c.genus for c in comps] == [0]
    assert comps[0].area == pytest.approx(4 * math.pi, rel=0.02)
    assert [c.genus for c in components_of(torus, [(-1.53, 1.57)] * 3, 128)] == [1]
