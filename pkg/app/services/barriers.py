from itertools import count
from typing import Dict, Iterator, List, Optional, Sequence, Tuple
import logging
import networkx as nx
import numpy as np
from pydantic import ValidationError
from scipy.cluster.hierarchy import DisjointSet
from scipy.optimize import linprog

from app.services.ensemble import EnsembleService
from app.services.nesting import NestingService
from app.services.nodal2d import Nodal2DService
from core.errors import ConsistencyError, ConstructionError, ParameterError, StructuralError
from models.barriers import BARRIER_SCALE, BarrierFunction, BaseTag, PerturbationSpec, TreeRealization
from models.fields import PlaneWaveField
from models.grids import ScalarGrid
from models.topology import RootedTree
from utils.seeding import derive_seed, sample_rng

logger = logging.getLogger(__name__)

MAX_REDRAWS = 10
RESIDUAL_TOL = 1e-8
DEFAULT_EPSILON = 0.1
DEFAULT_TREE_BOUND = 64
CELLS_PER_UNIT = 16
MAX_ATTEMPTS = 4
SEPARATION_WAVES = 128
# unit cells between the layout and the edge of its block
_MARGIN = 2
# margin constraints closer than this to 1 count as attained
_TIGHT_TOL = 1e-6
# the saddle at k shifts by eps^2 |grad psi|^2 / pi^2 and |grad psi| <= BARRIER_SCALE * peak
_SADDLE_SAFETY = 0.5
_PEAK_SPACING = 0.25

Nested = List["Nested"]


def _parse_tree(code: str) -> Nested:
    try:
        RootedTree.from_code(code)
    except ValidationError as e:
        raise ParameterError(f"invalid tree code {code!r}: {e.errors()[0]['msg']}") from e
    stack: List[Nested] = [[]]
    for ch in code:
        if ch == "(":
            stack.append([])
        else:
            node = stack.pop()
            stack[-1].append(node)
    if len(stack[0]) != 1:
        raise ParameterError(f"tree code {code!r} describes a forest")
    return stack[0][0]


def _canonical(node: Nested) -> str:
    return "(" + "".join(sorted(_canonical(child) for child in node)) + ")"


def _layout(node: Nested, ids: Iterator[int]) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    """
    Site labels for a positive domain and everything nested in it.

    Sites are positive cells in rotated coordinates, 4-adjacent when the cells share a corner.
    The domain is a frame with one compartment per child; a leaf child is the single
    enclosed cell of a 2x2 block, returned as its top-left site. Grandchildren sit side by
    side in their compartment, top-aligned, with the domain's own label filling below.
    """
    own = next(ids)
    if not node:
        return np.full((1, 1), own, dtype=np.int64), []
    contents = [[_layout(child, ids) for child in hole] for hole in node]
    inner = max((max(block.shape[0] for block, _ in blocks) for blocks in contents if blocks), default=0)
    widths = [sum(block.shape[1] for block, _ in blocks) for blocks in contents]
    labels = np.full((inner + 2, 1 + sum(w + 1 for w in widths)), own, dtype=np.int64)
    holes: List[Tuple[int, int]] = []
    col = 1
    for blocks, width in zip(contents, widths):
        if not blocks:
            holes.append((0, col - 1))
        c = col
        for block, block_holes in blocks:
            h, w = block.shape
            labels[1:1 + h, c:c + w] = block
            holes.extend((r + 1, cc + c) for r, cc in block_holes)
            c += w
        col += width + 1
    return labels, holes


class _SignPlan:
    """
    Signs at the corners of the unit cells that realize a layout.

    Cell (i, j) is positive when i + j is even. A sign of +1 at a lattice point joins its two
    positive cells, -1 its two negative ones. Only corners of layout cells are planned; the
    rest of the block is left to whatever the perturbation does there.
    """

    def __init__(self, layout: np.ndarray, holes: Sequence[Tuple[int, int]]):
        H, W = layout.shape
        off_i = H + 1 + (H - 1) % 2  # lands layout sites on positive cells
        off_j = _MARGIN
        self.shape = (W + off_i + _MARGIN, W + H - 1 + 2 * _MARGIN)
        self.cells = self._cells(layout, self.shape, off_i, off_j)
        self.root_cell = (off_i, off_j)
        self.outer_cell = (off_i, off_j - 1)
        self.hole_cells = {(c - r + off_i, c + r + off_j + 1) for r, c in holes}
        self.points, self.signs = self._plan_signs()

    @staticmethod
    def _cells(layout: np.ndarray, shape: Tuple[int, int], off_i: int, off_j: int) -> np.ndarray:
        """Layout label of every positive cell in the block, -1 for everything else."""
        H, W = layout.shape
        ii, jj = np.indices(shape)
        positive = (ii + jj) % 2 == 0
        r = ((jj - off_j) - (ii - off_i)) // 2
        c = ((jj - off_j) + (ii - off_i)) // 2
        inside = positive & (r >= 0) & (r < H) & (c >= 0) & (c < W)
        cells = np.full(shape, -1, dtype=np.int64)
        cells[inside] = layout[r[inside], c[inside]]
        return cells

    def _plan_signs(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Cells of different labels are always kept apart. Within a label, a negative cell whose
        four positive neighbours all carry that label would be a stray disc, so such cells are
        linked one corner at a time to a negative domain that already borders another label,
        never joining two of those. Corners that keep rows of positive cells intact are tried
        first. Designated holes are left enclosed.
        """
        Ni, Nj = self.shape
        cells = self.cells
        a, b = np.meshgrid(np.arange(1, Ni), np.arange(1, Nj), indexing="ij")
        even = (a + b) % 2 == 0
        p = np.where(even, cells[a - 1, b - 1], cells[a, b - 1])
        q = np.where(even, cells[a, b], cells[a - 1, b])
        n1 = np.where(even, a * Nj + b - 1, (a - 1) * Nj + b - 1)
        n2 = np.where(even, (a - 1) * Nj + b, a * Nj + b)
        planned = (p >= 0) | (q >= 0)
        same = (p == q) & (p >= 0)
        signs = np.where(same, 1, -1)

        ii, jj = np.indices(self.shape)
        negative = ((ii + jj) % 2 == 1).ravel()
        sets = DisjointSet(np.flatnonzero(negative).tolist())
        apart = planned & ~same
        for x, y in zip(n1[apart].tolist(), n2[apart].tolist()):
            sets.merge(x, y)

        padded = np.pad(cells, 1, constant_values=-2)
        around = np.stack([padded[:-2, 1:-1], padded[2:, 1:-1], padded[1:-1, :-2], padded[1:-1, 2:]])
        enclosed = (np.all(around == around[0], axis=0) & (around[0] >= 0)).ravel() & negative
        holes = {i * Nj + j for i, j in self.hole_cells}
        bordered = {sets[x] for x in np.flatnonzero(negative & ~enclosed).tolist() if x not in holes}

        order = [np.flatnonzero((same & ~even).ravel()), np.flatnonzero((same & even).ravel())]
        flat_n1, flat_n2, flat_signs = n1.ravel(), n2.ravel(), signs.ravel()
        for k in np.concatenate(order).tolist():
            x, y = int(flat_n1[k]), int(flat_n2[k])
            if x in holes or y in holes:
                continue
            rx, ry = sets[x], sets[y]
            if rx == ry or (rx in bordered and ry in bordered):
                continue
            sets.merge(x, y)
            if rx in bordered or ry in bordered:
                bordered.add(sets[x])
            flat_signs[k] = -1

        stray = [x for x in np.flatnonzero(negative).tolist() if x not in holes and sets[x] not in bordered]
        if stray:
            raise ConstructionError("layout leaves enclosed cells unattached",
                                    {"cells": [divmod(x, Nj) for x in stray[:10]]})
        mask = planned.ravel()
        points = np.stack([a.ravel(), b.ravel()], axis=1)[mask]
        return points, flat_signs[mask]

    @staticmethod
    def cell_center(i: int, j: int) -> Tuple[float, float]:
        return i + 0.5, j + 0.5


def _unit_vectors(rng: np.random.Generator, count_: int, dim: int) -> np.ndarray:
    if dim == 2:
        theta = rng.uniform(0.0, 2.0 * np.pi, count_)
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    v = rng.standard_normal((count_, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _label_at(grid: ScalarGrid, labels: np.ndarray, x: float, y: float) -> int:
    y0, x0 = grid.origin
    dy, dx = grid.spacing
    row = int(round((y - y0) / dy))
    col = int(round((x - x0) / dx))
    return int(labels[row, col])


class BarriersService:
    @staticmethod
    def grid_function_2d(x) -> np.ndarray:
        """sin(pi x1) sin(pi x2); its nodal set is the integer grid."""
        x = np.asarray(x, dtype=float)
        return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])

    @staticmethod
    def boxes_function_3d(x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = np.sin(np.pi * x)
        return s[..., 0] * s[..., 1] + s[..., 0] * s[..., 2] + s[..., 1] * s[..., 2]

    @staticmethod
    def evaluate(barrier: BarrierFunction, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        base = (BarriersService.grid_function_2d if barrier.base == "grid2d"
                else BarriersService.boxes_function_3d)(pts)
        if barrier.epsilon == 0.0:
            return base
        return base + barrier.epsilon * EnsembleService.evaluate(barrier.perturbation, barrier.scale * pts)

    @staticmethod
    def interpolate_signs(spec: PerturbationSpec, num_waves: Optional[int] = None, seed: int = 0) -> PlaneWaveField:
        """
        Unit-frequency plane waves taking the value sign_k at every scaled lattice point k.

        Amplitudes are the minimum-norm least-squares solution; the wavevectors are redrawn
        when the system is rank deficient or the residual exceeds 1e-8.
        """
        n = spec.K.shape[0]
        J = 2 * n if num_waves is None else int(num_waves)
        if J < 2 * n:
            raise ParameterError(f"num_waves must be at least 2|K| = {2 * n}, got {J}")
        points = BARRIER_SCALE * spec.K.astype(float)
        target = spec.signs.astype(float)
        condition = residual = float("inf")
        for attempt in range(MAX_REDRAWS):
            wavevectors = _unit_vectors(sample_rng(seed, attempt), J, spec.dim)
            phase = points @ wavevectors.T
            A = np.hstack([np.cos(phase), np.sin(phase)])
            coef, _, rank, singular = np.linalg.lstsq(A, target, rcond=None)
            condition = float(singular[0] / singular[n - 1]) if singular[n - 1] > 0 else float("inf")
            residual = float(np.max(np.abs(A @ coef - target)))
            if rank == n and residual <= RESIDUAL_TOL:
                return PlaneWaveField(alpha=1.0, wavevectors=wavevectors, cos_amps=coef[:J], sin_amps=coef[J:],
                                      normalization=1.0)
            logger.debug("Redraw %d: rank %d of %d, residual %.3g, condition %.3g", attempt, rank, n, residual, condition)
        raise ConstructionError(
            f"sign interpolation failed after {MAX_REDRAWS} draws (condition number {condition:.3g})",
            {"condition_number": condition, "residual": residual, "points": n, "num_waves": J},
        )

    @staticmethod
    def separate_signs(K: np.ndarray, signs: np.ndarray, num_waves: Optional[int] = None,
                       seed: int = 0) -> Tuple[PlaneWaveField, np.ndarray]:
        """
        Unit-frequency plane waves with sign_k * psi(k) >= 1 on every scaled lattice point k,
        of least total amplitude.

        A linear program over the cosine and sine amplitudes; large K that no exact fit can
        reach are usually still separable. The returned mask marks the points where psi(k)
        equals sign_k, polished to the least-squares tolerance.
        """
        K = np.asarray(K)
        target = np.asarray(signs, dtype=float)
        n = K.shape[0]
        J = max(SEPARATION_WAVES, 2 * n) if num_waves is None else int(num_waves)
        if J < 1:
            raise ParameterError("num_waves must be positive")
        wavevectors = _unit_vectors(sample_rng(seed, 0), J, K.shape[1])
        phase = (BARRIER_SCALE * K.astype(float)) @ wavevectors.T
        A = np.hstack([np.cos(phase), np.sin(phase)])
        signed = target[:, None] * A
        # amplitudes split into positive and negative parts, so the objective is their L1 norm
        result = linprog(np.ones(4 * J), A_ub=np.hstack([-signed, signed]), b_ub=-np.ones(n),
                         bounds=(0, None), method="highs")
        if result.status != 0:
            raise ConstructionError(f"signs are not separable by {J} waves: {result.message}",
                                    {"points": n, "num_waves": J, "status": int(result.status)})
        coef = result.x[:2 * J] - result.x[2 * J:]
        tight = target * (A @ coef) <= 1.0 + _TIGHT_TOL
        correction, *_ = np.linalg.lstsq(A[tight], target[tight] - A[tight] @ coef, rcond=None)
        coef = coef + correction
        residual = float(np.max(np.abs(A[tight] @ coef - target[tight]), initial=0.0))
        if residual > RESIDUAL_TOL:
            logger.warning("Separation residual %.3g on %d attained points", residual, int(tight.sum()))
        logger.debug("Separated %d points with %d waves, L1 amplitude %.3g, %d attained",
                     n, J, float(np.abs(coef).sum()), int(tight.sum()))
        psi = PlaneWaveField(alpha=1.0, wavevectors=wavevectors, cos_amps=coef[:J], sin_amps=coef[J:],
                             normalization=1.0)
        return psi, tight

    @staticmethod
    def resolve_singularities(base: BaseTag, spec: PerturbationSpec, num_waves: Optional[int] = None,
                              seed: int = 0) -> BarrierFunction:
        """
        f0 + epsilon psi with psi(k) = sign_k on K.

        In 2-D a positive sign joins the two positive cells meeting at k, a negative sign the
        two negative ones. In 3-D a positive sign gives the one-sheeted local model.
        """
        expected = 2 if base == "grid2d" else 3
        if spec.dim != expected:
            raise ParameterError(f"{base} needs {expected}-D lattice points, got {spec.dim}-D")
        psi = BarriersService.interpolate_signs(spec, num_waves, seed)
        return BarrierFunction(base=base, perturbation=psi, epsilon=spec.epsilon)

    @staticmethod
    def lattice_window(extent: Tuple[int, int], cells_per_unit: int = CELLS_PER_UNIT) -> Tuple[float, float, float, float]:
        """
        Window over the unit cells [0, ni] x [0, nj], trimmed by half a cell on every side.

        Grid nodes sit at k + (m + 1/2)/q, so lattice points fall on cell centers and no node
        lies on an integer line.
        """
        if cells_per_unit < 2 or cells_per_unit % 2:
            raise ParameterError("cells_per_unit must be an even integer >= 2")
        ni, nj = extent
        shift = 0.5 + 0.5 / cells_per_unit
        return shift, shift + ni - 1, shift, shift + nj - 1

    @staticmethod
    def verification_grid(barrier: BarrierFunction, window: Sequence[float],
                          cells_per_unit: int = CELLS_PER_UNIT) -> ScalarGrid:
        if barrier.base != "grid2d":
            raise ParameterError("only 2-D barriers are sampled on planar grids")
        return EnsembleService.planar_grid(lambda p: BarriersService.evaluate(barrier, p), window,
                                           1.0 / cells_per_unit)

    @staticmethod
    def safe_epsilon(psi: PlaneWaveField, window: Sequence[float], epsilon: float) -> float:
        """epsilon, lowered until eps * peak^2 stays below the saddle safety factor on the window."""
        xmin, xmax, ymin, ymax = window
        X, Y = np.meshgrid(np.arange(xmin, xmax + 1e-9, _PEAK_SPACING), np.arange(ymin, ymax + 1e-9, _PEAK_SPACING))
        nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
        peak = float(np.max(np.abs(EnsembleService.evaluate(psi, BARRIER_SCALE * nodes))))
        return min(epsilon, _SADDLE_SAFETY / max(peak, 1.0) ** 2)

    @staticmethod
    def realize_tree(target: str, bound: int = DEFAULT_TREE_BOUND, epsilon: float = DEFAULT_EPSILON,
                     seed: int = 0, cells_per_unit: int = CELLS_PER_UNIT) -> TreeRealization:
        """
        Signs at the corners of a cell layout whose resolved grid has `target` inside the
        outer curve of a positive root domain.

        The perturbation keeps every planned sign with margin; K is the set of corners where
        it takes the sign exactly. Every candidate is checked by the full pipeline (grid,
        domains, curves, nesting). A failed check is retried with half the amplitude and
        fresh wavevectors; when all attempts fail a ConstructionError carries what each
        attempt saw.
        """
        tree = _parse_tree(target)
        code = _canonical(tree)
        size = len(code) // 2
        if size > bound:
            raise ParameterError(f"target has {size} vertices, above the bound of {bound}")
        if not (0.0 < epsilon < 0.5):
            raise ParameterError("epsilon must lie in (0, 0.5)")

        layout, holes = _layout(tree, count())
        plan = _SignPlan(layout, holes)
        window = BarriersService.lattice_window(plan.shape, cells_per_unit)
        root_xy = plan.cell_center(*plan.root_cell)
        outer_xy = plan.cell_center(*plan.outer_cell)
        logger.info("Realizing %s: %d planned lattice points on a %dx%d block", code, plan.points.shape[0],
                    *plan.shape)

        attempts: List[Dict[str, object]] = []
        for attempt in range(MAX_ATTEMPTS):
            attempt_seed = derive_seed(seed, attempt)
            try:
                psi, tight = BarriersService.separate_signs(plan.points, plan.signs, seed=attempt_seed)
            except ConstructionError as e:
                attempts.append({"epsilon": None, "seed": attempt_seed, "found": None, "note": str(e)})
                logger.warning("Attempt %d for %s: %s", attempt + 1, code, e)
                continue
            eps = BarriersService.safe_epsilon(psi, window, epsilon) / 2 ** attempt
            spec = PerturbationSpec(K=plan.points[tight], signs=plan.signs[tight], epsilon=eps)
            barrier = BarrierFunction(base="grid2d", perturbation=psi, epsilon=eps)
            found, note = BarriersService._end_at_root(barrier, window, cells_per_unit, root_xy, outer_xy)
            attempts.append({"epsilon": eps, "seed": attempt_seed, "found": found, "note": note})
            if found == code:
                logger.info("Verified %s on attempt %d (epsilon %.4g)", code, attempt + 1, eps)
                return TreeRealization(target=target, canonical_code=code, spec=spec, barrier=barrier,
                                       window=window, cells_per_unit=cells_per_unit, seed=attempt_seed,
                                       attempts=attempt + 1, end_size=size, root=root_xy, outer=outer_xy)
            logger.warning("Attempt %d for %s found %s (%s)", attempt + 1, code, found, note)
        raise ConstructionError(f"could not verify a realization of {code}", {"target": code, "attempts": attempts})

    @staticmethod
    def verify(realization: TreeRealization, epsilon: Optional[float] = None) -> Optional[str]:
        """Code of the tree inside the root curve, rechecked at another amplitude when given."""
        barrier = realization.barrier
        if epsilon is not None:
            barrier = barrier.model_copy(update={"epsilon": float(epsilon)})
        found, note = BarriersService._end_at_root(barrier, realization.window, realization.cells_per_unit,
                                                   realization.root, realization.outer)
        if found is None:
            logger.info("Recheck of %s failed: %s", realization.canonical_code, note)
        return found

    @staticmethod
    def _end_at_root(barrier: BarrierFunction, window: Sequence[float], cells_per_unit: int,
                     root_xy: Tuple[float, float], outer_xy: Tuple[float, float]) -> Tuple[Optional[str], str]:
        """
        The side of the root curve holding the root. It must stay clear of the window edge,
        which makes it the bounded side, and so the end, in the plane.
        """
        grid = BarriersService.verification_grid(barrier, window, cells_per_unit)
        components = Nodal2DService.label_domains(grid)
        try:
            curves = Nodal2DService.extract_nodal_curves(grid, components)
        except ConsistencyError as e:
            return None, f"extraction failed: {e}"
        graph = NestingService.build_nesting_graph(components, curves)
        root = _label_at(grid, components.label_grid, *root_xy)
        outer = _label_at(grid, components.label_grid, *outer_xy)
        between = [e for e, (u, v) in graph.edges.items() if {u, v} == {root, outer}]
        if len(between) != 1:
            return None, f"{len(between)} curves between the root and the outer domain"
        G = graph.to_networkx().copy()
        G.remove_edge(root, outer, key=between[0])
        inside = nx.node_connected_component(G, root)
        if outer in inside:
            return None, "root curve does not separate"
        if any(c.touches_boundary for c in components.components if c.id in inside):
            return None, "root side reaches the window edge"
        try:
            end = NestingService.canonical_encode(G, root, inside)
        except StructuralError as e:
            return None, f"root side is not a tree: {e}"
        return end.canonical_code, "ok"

    @staticmethod
    def export_field_pgm(grid: ScalarGrid, path: str) -> str:
        """8-bit PGM of the sampled values, zero mapped to mid-grey."""
        values = grid.values
        peak = float(np.max(np.abs(values))) or 1.0
        image = np.clip(np.round(127.5 + 127.5 * values / peak), 0, 255).astype(np.uint8)
        R, C = image.shape
        with open(path, "wb") as fh:
            fh.write(f"P5\n{C} {R}\n255\n".encode("ascii"))
            fh.write(image[::-1].tobytes())
        return path
