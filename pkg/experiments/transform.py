from typing import List, Optional, Tuple
import logging
import numpy as np

from app.services.nesting import NestingService
from app.services.nodal2d import Nodal2DService
from app.services.nodal3d import Nodal3DService
from core.errors import ConsistencyError, ExtractionError
from models.experiment import ExperimentConfig, SampleRecord
from models.grids import ScalarGrid, ScalarGrid3

logger = logging.getLogger(__name__)


class SampleTransformer:
    """Turns one sampled grid into the atoms the experiment aggregates."""

    @staticmethod
    def connectivity_atoms(grid: ScalarGrid, include_sub_resolution: bool = False) -> Tuple[List[str], int]:
        components = Nodal2DService.label_domains(grid)
        curves = Nodal2DService.extract_nodal_curves(grid, components)
        connectivity = Nodal2DService.connectivity(components, curves)
        domains = components.components
        if grid.geometry == "planar-rect":
            domains = Nodal2DService.filter_boundary(components, curves).components
        atoms = [str(connectivity.counts[d.id]) for d in domains if include_sub_resolution or not d.sub_resolution]
        return atoms, components.count

    @staticmethod
    def end_atoms(grid: ScalarGrid, cutoff: int) -> Tuple[List[Optional[str]], dict]:
        components = Nodal2DService.label_domains(grid)
        curves = Nodal2DService.extract_nodal_curves(grid, components)
        graph = NestingService.build_nesting_graph(components, curves)
        ends = NestingService.all_ends(graph, cutoff)
        atoms = [r.tree.canonical_code if r.kind == "tree" else None for r in ends.results.values()]
        extras = {
            "is_tree": float(NestingService.is_tree(graph)),
            "domains": float(graph.vertex_count),
        }
        if grid.geometry.startswith("sphere"):
            degree_sum, expected = NestingService.degree_identity_check(graph)
            extras["degree_sum"] = float(degree_sum)
            extras["two_v_minus_2"] = float(expected)
        return atoms, extras

    @staticmethod
    def genus_atoms(grid: ScalarGrid3) -> Tuple[List[Optional[str]], dict]:
        mesh = Nodal3DService.marching_cubes(grid)
        components = Nodal3DService.split_components(mesh)
        interior = [c for c in components if not c.touches_boundary]
        atoms = [str(c.genus) if c.genus is not None else None for c in interior]
        extras = {
            "euler_sum": float(Nodal3DService.euler_sum(interior)),
            "boundary_components": float(len(components) - len(interior)),
        }
        return atoms, extras

    @staticmethod
    def zero_count(values: np.ndarray) -> int:
        """Sign changes around a closed loop of samples, sign(0) = +."""
        positive = np.asarray(values) >= 0.0
        return int(np.count_nonzero(positive != np.roll(positive, 1)))

    @staticmethod
    def component_count(grid: ScalarGrid) -> int:
        components = Nodal2DService.label_domains(grid)
        curves = Nodal2DService.extract_nodal_curves(grid, components)
        if grid.geometry == "planar-rect":
            return Nodal2DService.filter_boundary(components, curves).filtered_curves
        return curves.count

    @staticmethod
    def transform(config: ExperimentConfig, index: int, seed: int, sampled) -> SampleRecord:
        record = SampleRecord(index=index, seed=seed)
        try:
            if config.experiment == "measure-omega-2d":
                atoms, record.components = SampleTransformer.connectivity_atoms(sampled, config.include_sub_resolution)
                record.atoms = atoms
            elif config.experiment == "measure-ends-2d":
                atoms, record.extras = SampleTransformer.end_atoms(sampled, config.cutoff)
                record.atoms = [a for a in atoms if a is not None]
                record.unresolved = sum(1 for a in atoms if a is None)
            elif config.experiment == "genus-3d":
                atoms, record.extras = SampleTransformer.genus_atoms(sampled)
                record.atoms = [a for a in atoms if a is not None]
                record.unresolved = sum(1 for a in atoms if a is None)
            elif config.experiment in ("kacrice-1d", "ns-constant"):
                if isinstance(sampled, np.ndarray):
                    record.components = SampleTransformer.zero_count(sampled)
                else:
                    record.components = SampleTransformer.component_count(sampled)
        except (ConsistencyError, ExtractionError) as e:
            logger.warning("TRANSFORM: sample %d flagged: %s", index, e)
            record.flagged = True
            record.atoms = []
            record.unresolved = 0
        return record
