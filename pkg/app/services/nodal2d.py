from typing import Dict, List, Optional, Sequence, Tuple
import logging
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from core.errors import ConsistencyError, ParameterError
from models.grids import ScalarGrid
from models.topology import (
    DomainComponent,
    DomainConnectivity,
    FilteredView,
    NodalCurve,
    NodalCurveSet,
    SignedComponents,
)

logger = logging.getLogger(__name__)

SUB_RESOLUTION_CELLS = 4
# saddle decided by a value this small relative to its corners is a degenerate crossing
DEGENERATE_SADDLE = 1e-9


class _CellFrame:
    """Corner vertex ids, edge ids and saddle decisions for every cell of a grid."""

    def __init__(self, grid: ScalarGrid):
        R, C = grid.shape
        rows, cols = grid.cell_shape
        self.R, self.C = R, C
        flat = grid.values.ravel()
        self.positive = flat >= 0.0  # sign(0) = +

        i = np.repeat(np.arange(rows), cols)
        j = np.tile(np.arange(cols), rows)
        i1, j1 = (i + 1) % R, (j + 1) % C
        self.v = (i * C + j, i * C + j1, i1 * C + j1, i1 * C + j)
        # top, right, bottom, left
        self.edges = (i * C + j, R * C + i * C + j1, i1 * C + j, R * C + i * C + j)

        s = [self.positive[v] for v in self.v]
        self.saddle = (s[0] == s[2]) & (s[1] == s[3]) & (s[0] != s[1])
        if grid.centers is not None:
            center = grid.centers.ravel()
        else:
            center = sum(flat[v] for v in self.v) / 4.0
        self.join02 = (center >= 0.0) == s[0]
        scale = np.max(np.abs(np.stack([flat[v] for v in self.v])), axis=0)
        self.degenerate = self.saddle & (np.abs(center) <= DEGENERATE_SADDLE * scale)

    def edge_endpoints(self, edge_ids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        R, C = self.R, self.C
        horizontal = edge_ids < R * C
        local = np.where(horizontal, edge_ids, edge_ids - R * C)
        i, j = local // C, local % C
        a = i * C + j
        b = np.where(horizontal, i * C + (j + 1) % C, ((i + 1) % R) * C + j)
        return a, b


def _pair_graph(n: int, a: np.ndarray, b: np.ndarray):
    data = np.ones(a.size, dtype=np.int8)
    return coo_matrix((data, (a, b)), shape=(n, n))


class Nodal2DService:
    @staticmethod
    def label_domains(grid: ScalarGrid, resolve_saddles: bool = True) -> SignedComponents:
        """
        Connected components of the sign grid under 4-adjacency, wrapping where the geometry wraps.

        With resolve_saddles the two same-sign corners of a saddle cell on the side of the
        cell-center sign are also joined, so labels agree with the extracted curves.
        """
        R, C = grid.shape
        frame = _CellFrame(grid)
        pos = frame.positive
        idx = np.arange(R * C).reshape(R, C)

        src: List[np.ndarray] = [idx[:, :-1].ravel(), idx[:-1, :].ravel()]
        dst: List[np.ndarray] = [idx[:, 1:].ravel(), idx[1:, :].ravel()]
        if grid.wraps_cols:
            src.append(idx[:, -1])
            dst.append(idx[:, 0])
        if grid.wraps_rows:
            src.append(idx[-1, :])
            dst.append(idx[0, :])
        if resolve_saddles:
            v0, v1, v2, v3 = frame.v
            join02 = frame.saddle & frame.join02
            join13 = frame.saddle & ~frame.join02
            src += [v0[join02], v1[join13]]
            dst += [v2[join02], v3[join13]]
        a, b = np.concatenate(src), np.concatenate(dst)
        keep = pos[a] == pos[b]
        count, labels = connected_components(_pair_graph(R * C, a[keep], b[keep]), directed=False)

        sizes = np.bincount(labels, minlength=count)
        if grid.geometry == "sphere-lonlat":
            # each pole row is a single point
            sizes[labels[0]] -= C - 1
            sizes[labels[(R - 1) * C]] -= C - 1
        signs = np.empty(count, dtype=bool)
        signs[labels] = pos
        touches = np.zeros(count, dtype=bool)
        if grid.geometry == "planar-rect":
            border = np.concatenate([idx[0], idx[-1], idx[:, 0], idx[:, -1]])
            touches[labels[border]] = True

        components = [
            DomainComponent(
                id=k,
                sign=1 if signs[k] else -1,
                cell_count=int(sizes[k]),
                touches_boundary=bool(touches[k]),
                sub_resolution=bool(sizes[k] < SUB_RESOLUTION_CELLS),
            )
            for k in range(count)
        ]
        return SignedComponents(geometry=grid.geometry, label_grid=labels.reshape(R, C), components=components)

    @staticmethod
    def extract_nodal_curves(grid: ScalarGrid, components: SignedComponents, trace: bool = False) -> NodalCurveSet:
        """
        Marching squares over every cell; curves are connected components of the crossing edges.

        Curves leaving a planar window are dropped and counted in ``discarded_open``.
        With trace, each curve also carries its ordered interpolated points and length.
        """
        if components.label_grid.shape != grid.shape:
            raise ParameterError("components were not computed from this grid")
        R, C = grid.shape
        frame = _CellFrame(grid)
        if frame.degenerate.any():
            cells = np.flatnonzero(frame.degenerate)
            raise ConsistencyError(f"{cells.size} degenerate crossing(s), first at cell "
                                   f"{divmod(int(cells[0]), grid.cell_shape[1])}")
        pos = frame.positive
        flat = grid.values.ravel()

        # crossing flags over the full edge id space (horizontal block, then vertical)
        crossing = np.zeros(2 * R * C, dtype=bool)
        for e in frame.edges:
            a, b = frame.edge_endpoints(e)
            crossing[e] = pos[a] != pos[b]
        top, right, bottom, left = frame.edges
        ct, cr, cb, cl = (crossing[e] for e in frame.edges)
        hits = ct.astype(int) + cr + cb + cl

        seg_a: List[np.ndarray] = []
        seg_b: List[np.ndarray] = []
        two = hits == 2
        for (ea, ca), (eb, cbb) in [
            ((top, ct), (right, cr)), ((top, ct), (bottom, cb)), ((top, ct), (left, cl)),
            ((right, cr), (bottom, cb)), ((right, cr), (left, cl)), ((bottom, cb), (left, cl)),
        ]:
            mask = two & ca & cbb
            seg_a.append(ea[mask])
            seg_b.append(eb[mask])
        four = hits == 4
        j02 = four & frame.join02
        j13 = four & ~frame.join02
        seg_a += [top[j02], bottom[j02], left[j13], right[j13]]
        seg_b += [right[j02], left[j02], top[j13], bottom[j13]]
        seg_a_ids, seg_b_ids = np.concatenate(seg_a), np.concatenate(seg_b)

        nodes = np.flatnonzero(crossing)
        if nodes.size == 0:
            return NodalCurveSet(curves=[])
        lookup = np.full(2 * R * C, -1, dtype=np.int64)
        lookup[nodes] = np.arange(nodes.size)
        sa, sb = lookup[seg_a_ids], lookup[seg_b_ids]
        n_curves, curve_of = connected_components(_pair_graph(nodes.size, sa, sb), directed=False)
        degree = np.bincount(np.concatenate([sa, sb]), minlength=nodes.size)
        open_curve = np.zeros(n_curves, dtype=bool)
        open_curve[curve_of[degree < 2]] = True

        # domain on each side of each crossing edge
        a, b = frame.edge_endpoints(nodes)
        labels = components.label_grid.ravel()
        plus = np.where(pos[a], labels[a], labels[b])
        minus = np.where(pos[a], labels[b], labels[a])
        big = np.iinfo(np.int64).max
        plus_lo = np.full(n_curves, big)
        plus_hi = np.full(n_curves, -1)
        minus_lo = np.full(n_curves, big)
        minus_hi = np.full(n_curves, -1)
        np.minimum.at(plus_lo, curve_of, plus)
        np.maximum.at(plus_hi, curve_of, plus)
        np.minimum.at(minus_lo, curve_of, minus)
        np.maximum.at(minus_hi, curve_of, minus)
        bad = (plus_lo != plus_hi) | (minus_lo != minus_hi)
        if bad.any():
            raise ConsistencyError(f"{int(bad.sum())} curve(s) border three or more domains; "
                                   "the grid is likely under-resolved")

        # interpolated crossing positions in grid index units
        t = flat[a] / (flat[a] - flat[b])
        horizontal = nodes < R * C
        local = np.where(horizontal, nodes, nodes - R * C)
        row = local // C + np.where(horizontal, 0.0, t)
        col = local % C + np.where(horizontal, t, 0.0)
        bbox = np.empty((n_curves, 4))
        bbox[:, 0] = np.inf
        bbox[:, 1] = -np.inf
        bbox[:, 2] = np.inf
        bbox[:, 3] = -np.inf
        np.minimum.at(bbox[:, 0], curve_of, row)
        np.maximum.at(bbox[:, 1], curve_of, row)
        np.minimum.at(bbox[:, 2], curve_of, col)
        np.maximum.at(bbox[:, 3], curve_of, col)
        sizes = np.bincount(curve_of, minlength=n_curves)

        orders: Dict[int, np.ndarray] = {}
        if trace:
            orders = _walk_curves(nodes.size, sa, sb, curve_of, degree)

        curves: List[NodalCurve] = []
        discarded = 0
        for k in range(n_curves):
            if open_curve[k]:
                discarded += 1
                continue
            points = length = None
            if trace:
                order = orders[k]
                points = _physical(grid, row[order], col[order])
                length = _polyline_length(grid, points, closed=True)
            curves.append(NodalCurve(
                id=len(curves),
                domain_left=int(plus_lo[k]),
                domain_right=int(minus_lo[k]),
                closed=True,
                n_points=int(sizes[k]),
                bbox=tuple(float(v) for v in bbox[k]),
                points=points,
                length=length,
            ))
        if discarded:
            logger.debug("Dropped %d open curve(s) at the window boundary", discarded)
        return NodalCurveSet(curves=curves, discarded_open=discarded)

    @staticmethod
    def connectivity(components: SignedComponents, curves: NodalCurveSet) -> DomainConnectivity:
        counts = {c.id: 0 for c in components.components}
        for curve in curves.curves:
            counts[curve.domain_left] += 1
            counts[curve.domain_right] += 1
        return DomainConnectivity(counts=counts)

    @staticmethod
    def filter_boundary(components: SignedComponents, curves: NodalCurveSet, margin: float = 0.0) -> FilteredView:
        """
        Keep what lies strictly inside a planar window, `margin` grid cells away from its edges.

        A domain goes if it touches the window or borders a curve that was removed.
        """
        if components.geometry != "planar-rect":
            raise ParameterError("boundary filtering applies to planar windows only")
        R, C = components.label_grid.shape
        lo_r, hi_r, lo_c, hi_c = margin, R - 1 - margin, margin, C - 1 - margin

        kept_curves, dropped_domains = [], set()
        for curve in curves.curves:
            r0, r1, c0, c1 = curve.bbox
            if r0 > lo_r and r1 < hi_r and c0 > lo_c and c1 < hi_c:
                kept_curves.append(curve)
            else:
                dropped_domains.update((curve.domain_left, curve.domain_right))
        kept = [c for c in components.components if not c.touches_boundary and c.id not in dropped_domains]
        return FilteredView(
            components=kept,
            curves=kept_curves,
            raw_domains=components.count,
            raw_curves=curves.count + curves.discarded_open,
        )

    @staticmethod
    def count_components(grid: ScalarGrid) -> int:
        labels = Nodal2DService.label_domains(grid)
        return Nodal2DService.extract_nodal_curves(grid, labels).count

    @staticmethod
    def resolution_convergence(field, geometry: str, resolution: float = 12.0,
                               window: Optional[Sequence[float]] = None) -> Dict[str, int]:
        """|C(f)| at a resolution and at its double."""
        from app.services.ensemble import EnsembleService

        counts = []
        for factor in (1.0, 2.0):
            grid = EnsembleService.evaluate_grid(field, geometry, resolution * factor, window=window)
            counts.append(Nodal2DService.count_components(grid))
        return {"base": counts[0], "doubled": counts[1], "changed": int(counts[0] != counts[1])}

    # --- Export ---

    @staticmethod
    def export_curves_json(curves: NodalCurveSet) -> str:
        return curves.model_dump_json()

    @staticmethod
    def export_labels_pgm(components: SignedComponents, path: str) -> str:
        """Binary 16-bit PGM of the label grid (labels wrap modulo 65536)."""
        labels = components.label_grid % 65536
        R, C = labels.shape
        with open(path, "wb") as fh:
            fh.write(f"P5\n{C} {R}\n65535\n".encode("ascii"))
            fh.write(labels.astype(">u2").tobytes())
        return path


def _walk_curves(n: int, sa: np.ndarray, sb: np.ndarray, curve_of: np.ndarray,
                 degree: np.ndarray) -> Dict[int, np.ndarray]:
    ends = np.concatenate([sa, sb])
    others = np.concatenate([sb, sa])
    order = np.argsort(ends, kind="stable")
    others = others[order]
    starts = np.concatenate([[0], np.cumsum(degree)[:-1]])
    first = np.where(degree > 0, others[np.minimum(starts, others.size - 1)], -1)
    second = np.where(degree > 1, others[np.minimum(starts + 1, others.size - 1)], -1)

    walks: Dict[int, np.ndarray] = {}
    visited = np.zeros(n, dtype=bool)
    # start open curves at an end, closed ones anywhere
    starts_at = sorted(range(n), key=lambda v: (degree[v] != 1, v))
    for start in starts_at:
        k = int(curve_of[start])
        if k in walks:
            continue
        path, prev, node = [], -1, start
        while node != -1 and not visited[node]:
            visited[node] = True
            path.append(node)
            nxt = first[node] if first[node] != prev else second[node]
            if nxt == prev and first[node] == second[node]:
                nxt = -1
            prev, node = node, nxt
        walks[k] = np.asarray(path, dtype=np.int64)
    return walks


def _physical(grid: ScalarGrid, row: np.ndarray, col: np.ndarray) -> np.ndarray:
    dy, dx = grid.spacing
    if grid.geometry == "planar-rect":
        return np.stack([grid.origin[1] + col * dx, grid.origin[0] + row * dy], axis=1)
    if grid.geometry == "flat-torus":
        return np.stack([(col * dx) % 1.0, (row * dy) % 1.0], axis=1)
    return np.stack([row * dy, (col * dx) % (2.0 * np.pi)], axis=1)


def _polyline_length(grid: ScalarGrid, points: np.ndarray, closed: bool) -> float:
    pts = np.vstack([points, points[:1]]) if closed else points
    if grid.geometry == "sphere-lonlat":
        theta, phi = pts[:, 0], pts[:, 1]
        xyz = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=1)
        chord = np.linalg.norm(np.diff(xyz, axis=0), axis=1)
        return float(np.sum(2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))))
    step = np.diff(pts, axis=0)
    if grid.geometry == "flat-torus":
        step = (step + 0.5) % 1.0 - 0.5
    return float(np.linalg.norm(step, axis=1).sum())
