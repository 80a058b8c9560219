from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator
from typing import Dict, List, Literal, Optional, Tuple
import networkx as nx
import numpy as np

from models.arrays import FloatArray, IntArray

# --- 2-D nodal structure ---

class DomainComponent(BaseModel):
    id: int
    sign: int  # +1 or -1
    cell_count: int
    touches_boundary: bool = False
    sub_resolution: bool = False


class SignedComponents(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    geometry: str
    label_grid: IntArray
    components: List[DomainComponent]

    @property
    def count(self) -> int:
        return len(self.components)


class NodalCurve(BaseModel):
    """A component of the extracted nodal set; domain_left is the positive side."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    id: int
    domain_left: int
    domain_right: int
    closed: bool = True
    n_points: int
    bbox: Tuple[float, float, float, float]  # row_min, row_max, col_min, col_max in grid index units
    points: Optional[FloatArray] = None  # (P, 2) physical coordinates in traversal order
    length: Optional[float] = None


class NodalCurveSet(BaseModel):
    curves: List[NodalCurve]
    discarded_open: int = 0  # curves that exit a planar window

    @property
    def count(self) -> int:
        return len(self.curves)


class DomainConnectivity(BaseModel):
    counts: Dict[int, int]


class FilteredView(BaseModel):
    components: List[DomainComponent]
    curves: List[NodalCurve]
    raw_domains: int
    raw_curves: int

    @property
    def filtered_domains(self) -> int:
        return len(self.components)

    @property
    def filtered_curves(self) -> int:
        return len(self.curves)

# --- Nesting ---

class NestingGraph(BaseModel):
    """Vertices are nodal domains, edges are nodal curves joining the two domains they separate."""
    geometry: str
    vertex_signs: Dict[int, int]
    edges: Dict[int, Tuple[int, int]]
    _graph: Optional[nx.MultiGraph] = PrivateAttr(default=None)

    def to_networkx(self) -> nx.MultiGraph:
        if self._graph is None:
            graph = nx.MultiGraph()
            for vertex, sign in self.vertex_signs.items():
                graph.add_node(vertex, sign=sign)
            for curve_id, (u, v) in self.edges.items():
                graph.add_edge(u, v, key=curve_id)
            self._graph = graph
        return self._graph

    @property
    def vertex_count(self) -> int:
        return len(self.vertex_signs)

    @property
    def edge_count(self) -> int:
        return len(self.edges)


class RootedTree(BaseModel):
    """Balanced-parenthesis AHU code; children codes are sorted before concatenation."""
    model_config = ConfigDict(frozen=True)

    canonical_code: str
    size: int

    @model_validator(mode="after")
    def _check(self):
        depth = 0
        for ch in self.canonical_code:
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
            else:
                raise ValueError(f"invalid character {ch!r} in tree code")
            if depth < 0:
                raise ValueError("unbalanced tree code")
        if depth != 0 or not self.canonical_code:
            raise ValueError("unbalanced tree code")
        if self.size * 2 != len(self.canonical_code):
            raise ValueError("size must equal half the code length")
        return self

    @classmethod
    def from_code(cls, code: str) -> "RootedTree":
        return cls(canonical_code=code, size=len(code) // 2)


EndKind = Literal["tree", "non_separating", "tie", "cyclic", "overflow"]


class EndResult(BaseModel):
    kind: EndKind
    tree: Optional[RootedTree] = None
    size: Optional[int] = None  # vertex count of the smaller side when known


class EndAssignment(BaseModel):
    results: Dict[int, EndResult]

    def resolved(self) -> Dict[int, RootedTree]:
        return {e: r.tree for e, r in self.results.items() if r.kind == "tree"}

    def count(self, kind: EndKind) -> int:
        return sum(1 for r in self.results.values() if r.kind == kind)

# --- 3-D surfaces ---

class TriangleMesh(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    vertices: FloatArray  # (V, 3) physical coordinates
    faces: IntArray  # (F, 3)
    periodic: bool = False
    period: Optional[Tuple[float, float, float]] = None  # box side lengths on the 3-torus
    boundary_vertices: Optional[IntArray] = None  # vertex ids lying on an open box face

    @property
    def is_empty(self) -> bool:
        return self.faces.size == 0


class SurfaceComponent(BaseModel):
    V: int
    E: int
    F: int
    euler: int
    genus: Optional[int] = Field(default=None, ge=0)
    watertight: bool
    touches_boundary: bool = False
    area: float = 0.0
