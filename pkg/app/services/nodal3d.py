from typing import Callable, List, Optional, Sequence, Tuple
import logging
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from skimage import measure

from core.errors import ExtractionError, ParameterError
from models.fields import BandParams
from models.grids import ScalarGrid3
from models.measures import GenusReport
from models.topology import SurfaceComponent, TriangleMesh
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

_WELD_DIGITS = 6


def _edge_table(faces: np.ndarray):
    """Undirected edges of a triangle list with, per face corner, the index into the unique edges."""
    corners = np.stack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=1).reshape(-1, 2)
    undirected = np.sort(corners, axis=1)
    unique, inverse, counts = np.unique(undirected, axis=0, return_inverse=True, return_counts=True)
    return corners, unique, inverse.ravel(), counts


def _face_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a, b, c = vertices[faces[:, 0]], vertices[faces[:, 1]], vertices[faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


class Nodal3DService:
    @staticmethod
    def box_grid(evaluator: Callable[[np.ndarray], np.ndarray], bounds: Sequence[Tuple[float, float]],
                 shape: Sequence[int]) -> ScalarGrid3:
        """Sample an evaluator on a planar box; bounds per axis, shape samples per axis (ends included)."""
        axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(bounds, shape)]
        X, Y, Z = np.meshgrid(*axes, indexing="ij")
        values = evaluator(np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)).reshape(X.shape)
        spacing = tuple(float(ax[1] - ax[0]) for ax in axes)
        origin = tuple(float(lo) for lo, _ in bounds)
        return ScalarGrid3(geometry="planar-box", values=values, spacing=spacing, origin=origin)

    @staticmethod
    def marching_cubes(grid: ScalarGrid3) -> TriangleMesh:
        """
        Zero level set by the Lewiner marching cubes (MC33 tables with face and interior deciders).

        The 3-torus is wrap-padded one layer on the high side and seam vertices are welded,
        so the result is closed. Non-manifold or inconsistently oriented output raises
        ExtractionError.
        """
        values = np.where(grid.values == 0.0, np.finfo(float).tiny, grid.values)  # sign(0) = +
        periodic = grid.geometry == "3-torus"
        if values.min() > 0.0 or values.max() < 0.0:
            return TriangleMesh(vertices=np.zeros((0, 3)), faces=np.zeros((0, 3), dtype=np.int64), periodic=periodic)

        volume = np.pad(values, ((0, 1), (0, 1), (0, 1)), mode="wrap") if periodic else values
        verts, faces, _, _ = measure.marching_cubes(volume, level=0.0, method="lewiner", allow_degenerate=False)
        faces = faces.astype(np.int64)
        spacing = np.asarray(grid.spacing)
        origin = np.asarray(grid.origin)

        if periodic:
            n = np.asarray(grid.shape, dtype=float)
            keys = np.round(np.mod(verts, n), _WELD_DIGITS)
            keys = np.where(np.isclose(keys, n), 0.0, keys)
            welded, remap = np.unique(keys, axis=0, return_inverse=True)
            faces = remap.ravel()[faces]
            verts = welded
            distinct = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
            faces = faces[distinct]
            boundary = None
        else:
            top = np.asarray(grid.shape, dtype=float) - 1.0
            on_face = np.any(np.isclose(verts, 0.0) | np.isclose(verts, top), axis=1)
            boundary = np.flatnonzero(on_face)

        corners, _, _, counts = _edge_table(faces)
        if np.any(counts > 2) or (periodic and np.any(counts != 2)):
            bad = int(np.sum(counts > 2)) if np.any(counts > 2) else int(np.sum(counts != 2))
            raise ExtractionError(f"{bad} non-manifold edge(s); the grid is likely under-resolved")
        _, directed_counts = np.unique(corners, axis=0, return_counts=True)
        if np.any(directed_counts > 1):
            raise ExtractionError("inconsistent triangle orientation")

        period = tuple(float(v) for v in np.asarray(grid.shape) * spacing) if periodic else None
        return TriangleMesh(vertices=origin + verts * spacing, faces=faces, periodic=periodic, period=period,
                            boundary_vertices=boundary)

    @staticmethod
    def split_components(mesh: TriangleMesh) -> List[SurfaceComponent]:
        """Edge-connected pieces of a mesh with their Euler characteristic and genus."""
        if mesh.is_empty:
            return []
        faces = mesh.faces
        F = faces.shape[0]
        _, unique, inverse, counts = _edge_table(faces)
        E = unique.shape[0]
        face_of = np.repeat(np.arange(F), 3)
        graph = coo_matrix((np.ones(3 * F, dtype=np.int8), (face_of, F + inverse)), shape=(F + E, F + E))
        _, labels = connected_components(graph, directed=False)
        face_comp = labels[:F]
        ids, face_comp = np.unique(face_comp, return_inverse=True)
        k = ids.size
        edge_comp = np.empty(E, dtype=np.int64)
        edge_comp[inverse] = face_comp[face_of]

        f_count = np.bincount(face_comp, minlength=k)
        e_count = np.bincount(edge_comp, minlength=k)
        pairs = np.unique(np.stack([faces.ravel(), face_comp[face_of]], axis=1), axis=0)
        v_count = np.bincount(pairs[:, 1], minlength=k)
        open_edges = np.bincount(edge_comp[counts == 1], minlength=k)

        touches = np.zeros(k, dtype=bool)
        if mesh.boundary_vertices is not None and mesh.boundary_vertices.size:
            on_boundary = np.zeros(mesh.vertices.shape[0], dtype=bool)
            on_boundary[mesh.boundary_vertices] = True
            touches[pairs[on_boundary[pairs[:, 0]], 1]] = True

        areas = np.zeros(k)
        if not mesh.periodic:
            np.add.at(areas, face_comp, _face_areas(mesh.vertices, faces))
        else:
            # seam-crossing triangles: unwrap each edge to its shortest periodic image
            a, b, c = (mesh.vertices[faces[:, i]] for i in range(3))
            box = np.asarray(mesh.period)
            ab = (b - a + box / 2) % box - box / 2
            ac = (c - a + box / 2) % box - box / 2
            np.add.at(areas, face_comp, 0.5 * np.linalg.norm(np.cross(ab, ac), axis=1))

        components = []
        for i in range(k):
            euler = int(v_count[i] - e_count[i] + f_count[i])
            watertight = bool(open_edges[i] == 0)
            genus = (2 - euler) // 2 if watertight and euler % 2 == 0 and euler <= 2 else None
            components.append(SurfaceComponent(
                V=int(v_count[i]), E=int(e_count[i]), F=int(f_count[i]), euler=euler, genus=genus,
                watertight=watertight, touches_boundary=bool(touches[i]), area=float(areas[i]),
            ))
        return components

    @staticmethod
    def euler_sum(components: Sequence[SurfaceComponent]) -> int:
        """Sum of 2(1 - g) over watertight components, i.e. their total Euler characteristic."""
        return sum(c.euler for c in components if c.watertight and not c.touches_boundary)

    @staticmethod
    def export_off(mesh: TriangleMesh, path: str) -> str:
        with open(path, "w") as fh:
            fh.write("OFF\n")
            fh.write(f"{mesh.vertices.shape[0]} {mesh.faces.shape[0]} 0\n")
            np.savetxt(fh, mesh.vertices, fmt="%.9g")
            np.savetxt(fh, np.hstack([np.full((mesh.faces.shape[0], 1), 3), mesh.faces]), fmt="%d")
        return path

    @staticmethod
    def genus_distribution(params: BandParams, num_samples: int, seed: int = 0, resolution: float = 12.0,
                           allow_under_resolved: bool = False, geometry: str = "3-torus",
                           side: Optional[float] = None, J: int = 1024) -> GenusReport:
        """
        Genus histogram of watertight nodal components over independent samples.

        On the 3-torus every component is closed. On a planar box of `side` wavelengths
        (default T / 2 pi, the same scale as the unit torus) the field is a 3-D plane-wave
        sum with J waves and components touching the box are excluded. Samples whose mesh
        fails extraction are flagged and skipped.
        """
        from app.services.ensemble import EnsembleService
        from app.services.stats import StatsService

        if num_samples < 1:
            raise ParameterError("num_samples must be at least 1")
        if geometry not in ("3-torus", "planar-box"):
            raise ParameterError(f"genus needs the 3-torus or a planar box, got {geometry!r}")
        side = params.T / (2.0 * np.pi) if side is None else side
        if side <= 0.0:
            raise ParameterError("box side must be positive")
        window = (0.0, 2.0 * np.pi * side) * 3
        volume = 1.0 if geometry == "3-torus" else window[1] ** 3

        per_sample: List[List[str]] = []
        flagged = excluded = 0
        euler_total = 0
        for index in range(num_samples):
            sample_seed = derive_seed(seed, index)
            if geometry == "3-torus":
                field = EnsembleService.sample_torus3(params, sample_seed)
                grid = EnsembleService.evaluate_grid(field, geometry, resolution,
                                                     allow_under_resolved=allow_under_resolved)
            else:
                field = EnsembleService.sample_planar(params.alpha, J, sample_seed, dim=3)
                grid = EnsembleService.evaluate_grid(field, geometry, resolution, window=window,
                                                     allow_under_resolved=allow_under_resolved)
            try:
                mesh = Nodal3DService.marching_cubes(grid)
            except ExtractionError as e:
                logger.warning("Sample %d flagged: %s", index, e)
                flagged += 1
                continue
            comps = Nodal3DService.split_components(mesh)
            good = [c for c in comps if c.watertight and c.genus is not None and not c.touches_boundary]
            excluded += len(comps) - len(good)
            per_sample.append([str(c.genus) for c in good])
            euler_total += Nodal3DService.euler_sum(good)

        report = GenusReport(num_samples=num_samples, flagged_samples=flagged, excluded_components=excluded)
        kept = len(per_sample)
        if kept:
            report.euler_per_volume = euler_total / kept / volume
        if any(per_sample):
            measure_ = StatsService.accumulate(per_sample, kind="genus")
            report.measure = measure_
            report.mean_genus, report.stderr = StatsService.mean(measure_)
        return report
