import json
import math

import numpy as np
import pytest

from app.services.ensemble import EnsembleService, band_params
from app.services.nodal2d import Nodal2DService
from core.errors import ParameterError
from models.grids import ScalarGrid


def _domain_at(grid, components, x, y):
    y0, x0 = grid.origin
    dy, dx = grid.spacing
    return int(components.label_grid[int(round((y - y0) / dy)), int(round((x - x0) / dx))])


def test_all_positive_grid_is_one_domain_without_curves():
    grid = ScalarGrid(geometry="planar-rect", values=np.ones((8, 8)), spacing=(1.0, 1.0))
    components = Nodal2DService.label_domains(grid)
    assert components.count == 1
    assert components.components[0].sign == 1
    assert Nodal2DService.extract_nodal_curves(grid, components).count == 0


def test_checkerboard_cells_stay_apart():
    values = np.where(np.add.outer(np.arange(6), np.arange(6)) % 2 == 0, 1.0, -1.0)
    grid = ScalarGrid(geometry="planar-rect", values=values, spacing=(1.0, 1.0))
    components = Nodal2DService.label_domains(grid, resolve_saddles=False)
    assert components.count == 36


def test_grid_function_on_the_torus_has_four_domains():
    # [0, 2)^2 sampled off the integer lines; the unit-torus spacing is irrelevant to the labels
    n = 64
    axis = 2.0 * (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(axis, axis)
    values = np.sin(np.pi * X) * np.sin(np.pi * Y)
    grid = ScalarGrid(geometry="flat-torus", values=values, spacing=(1.0 / n, 1.0 / n))
    components = Nodal2DService.label_domains(grid, resolve_saddles=False)
    assert components.count == 4
    assert sorted(c.sign for c in components.components) == [-1, -1, 1, 1]


def test_unit_circle_length(square_grid):
    grid = square_grid(lambda x, y: x * x + y * y - 1.0, 2.0, 256)
    components = Nodal2DService.label_domains(grid)
    curves = Nodal2DService.extract_nodal_curves(grid, components, trace=True)
    assert curves.count == 1
    assert curves.curves[0].length == pytest.approx(2 * math.pi, rel=0.01)
    assert curves.curves[0].points.shape[1] == 2


def test_circle_domains_are_simply_connected(square_grid):
    grid = square_grid(lambda x, y: x * x + y * y - 1.0, 2.0, 128)
    components = Nodal2DService.label_domains(grid)
    curves = Nodal2DService.extract_nodal_curves(grid, components)
    connectivity = Nodal2DService.connectivity(components, curves)
    assert sorted(connectivity.counts.values()) == [1, 1]
    view = Nodal2DService.filter_boundary(components, curves)
    assert [c.sign for c in view.components] == [-1]
    assert view.filtered_curves == 1


def test_annulus_domain_has_connectivity_two(square_grid):
    grid = square_grid(lambda x, y: (x * x + y * y - 1.0) * (x * x + y * y - 4.0), 3.0, 190)
    components = Nodal2DService.label_domains(grid)
    curves = Nodal2DService.extract_nodal_curves(grid, components)
    connectivity = Nodal2DService.connectivity(components, curves)
    ring = _domain_at(grid, components, 1.5, 0.0)
    assert connectivity.counts[ring] == 2
    assert connectivity.counts[_domain_at(grid, components, 0.0, 0.0)] == 1


def test_curve_crossing_the_window_edge_is_dropped(square_grid):
    grid = square_grid(lambda x, y: (x - 2.0) ** 2 + y * y - 1.0, 2.0, 128)
    components = Nodal2DService.label_domains(grid)
    curves = Nodal2DService.extract_nodal_curves(grid, components)
    assert curves.count == 0
    assert curves.discarded_open == 1
    view = Nodal2DService.filter_boundary(components, curves)
    assert view.filtered_domains == 0
    assert view.raw_curves == 1


def test_filter_boundary_needs_a_planar_window():
    field = EnsembleService.sample_torus(band_params(0.0, 2 * math.pi * 3), seed=0)
    grid = EnsembleService.evaluate_grid(field, "flat-torus")
    components = Nodal2DService.label_domains(grid)
    curves = Nodal2DService.extract_nodal_curves(grid, components)
    with pytest.raises(ParameterError):
        Nodal2DService.filter_boundary(components, curves)


def test_curves_separate_domains_of_opposite_sign():
    field = EnsembleService.sample_sphere(band_params(1.0, math.sqrt(12 * 13)), seed=5)
    grid = EnsembleService.evaluate_grid(field, "sphere-lonlat")
    components = Nodal2DService.label_domains(grid)
    curves = Nodal2DService.extract_nodal_curves(grid, components)
    signs = {c.id: c.sign for c in components.components}
    assert curves.count > 0
    for curve in curves.curves:
        assert signs[curve.domain_left] == 1
        assert signs[curve.domain_right] == -1


def test_labeling_is_deterministic():
    field = EnsembleService.sample_planar(1.0, 256, seed=9)
    grid = EnsembleService.evaluate_grid(field, "planar-rect", window=(0, 30, 0, 30))
    first = Nodal2DService.label_domains(grid)
    second = Nodal2DService.label_domains(grid)
    assert np.array_equal(first.label_grid, second.label_grid)
    a = Nodal2DService.extract_nodal_curves(grid, first)
    b = Nodal2DService.extract_nodal_curves(grid, second)
    assert a.model_dump() == b.model_dump()


def test_components_from_another_grid_are_rejected():
    small = ScalarGrid(geometry="planar-rect", values=np.ones((4, 4)), spacing=(1.0, 1.0))
    large = ScalarGrid(geometry="planar-rect", values=np.ones((5, 5)), spacing=(1.0, 1.0))
    with pytest.raises(ParameterError):
        Nodal2DService.extract_nodal_curves(large, Nodal2DService.label_domains(small))


def test_resolution_convergence_reports_both_counts():
    field = EnsembleService.sample_torus(band_params(0.0, 2 * math.pi * 3), seed=1)
    report = Nodal2DService.resolution_convergence(field, "flat-torus")
    assert set(report) == {"base", "doubled", "changed"}
    assert report["base"] > 0


def test_exports(tmp_path, square_grid):
    grid = square_grid(lambda x, y: x * x + y * y - 1.0, 2.0, 64)
    components = Nodal2DService.label_domains(grid)
    curves = Nodal2DService.extract_nodal_curves(grid, components, trace=True)
    document = json.loads(Nodal2DService.export_curves_json(curves))
    assert len(document["curves"]) == 1
    path = Nodal2DService.export_labels_pgm(components, str(tmp_path / "labels.pgm"))
    with open(path, "rb") as fh:
        assert fh.read(2) == b"P5"
