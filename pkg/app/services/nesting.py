from collections import deque
from typing import Dict, Hashable, Iterable, List, Optional, Set, Tuple
import logging
import networkx as nx

from core.errors import ParameterError, StructuralError
from models.topology import (
    EndAssignment,
    EndResult,
    NestingGraph,
    NodalCurveSet,
    RootedTree,
    SignedComponents,
)

logger = logging.getLogger(__name__)

DEFAULT_CUTOFF = 64


def _side(graph: nx.MultiGraph, start: Hashable, skip_key: int) -> Set[Hashable]:
    """Vertices reachable from start without crossing the edge keyed skip_key."""
    seen = {start}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for nbr, keys in graph.adj[node].items():
            if nbr in seen:
                continue
            if all(k == skip_key for k in keys):
                continue
            seen.add(nbr)
            queue.append(nbr)
    return seen


class NestingService:
    @staticmethod
    def build_nesting_graph(components: SignedComponents, curves: NodalCurveSet) -> NestingGraph:
        vertex_signs = {c.id: c.sign for c in components.components}
        edges: Dict[int, Tuple[int, int]] = {}
        for curve in curves.curves:
            if curve.domain_left not in vertex_signs or curve.domain_right not in vertex_signs:
                raise ParameterError(f"curve {curve.id} refers to an unknown domain")
            edges[curve.id] = (curve.domain_left, curve.domain_right)
        return NestingGraph(geometry=components.geometry, vertex_signs=vertex_signs, edges=edges)

    @staticmethod
    def is_tree(graph: NestingGraph) -> bool:
        if graph.vertex_count == 0:
            return False
        if graph.edge_count != graph.vertex_count - 1:
            return False
        return nx.is_connected(graph.to_networkx())

    @staticmethod
    def canonical_encode(tree: nx.Graph, root: Hashable, nodes: Optional[Iterable[Hashable]] = None) -> RootedTree:
        """
        AHU code of the tree hanging from root: "(" + sorted child codes + ")".

        Only `nodes` (default: everything reachable) take part. Cycles and parallel
        edges raise StructuralError.
        """
        allowed = set(nodes) if nodes is not None else None
        if root not in tree or (allowed is not None and root not in allowed):
            raise ParameterError(f"root {root!r} is not in the tree")
        multigraph = tree.is_multigraph()
        parent: Dict[Hashable, Optional[Hashable]] = {root: None}
        order: List[Hashable] = []
        stack = [root]
        while stack:
            node = stack.pop()
            order.append(node)
            for nbr in tree.adj[node]:
                if allowed is not None and nbr not in allowed:
                    continue
                if multigraph and len(tree.adj[node][nbr]) > 1:
                    raise StructuralError(f"parallel edges between {node!r} and {nbr!r}")
                if nbr == parent[node]:
                    continue
                if nbr in parent:
                    raise StructuralError(f"cycle through {nbr!r}")
                parent[nbr] = node
                stack.append(nbr)

        children: Dict[Hashable, List[str]] = {node: [] for node in order}
        code = ""
        for node in reversed(order):
            code = "(" + "".join(sorted(children[node])) + ")"
            if parent[node] is not None:
                children[parent[node]].append(code)
        return RootedTree(canonical_code=code, size=len(order))

    @staticmethod
    def tree_end(graph: NestingGraph, edge: int, cutoff: Optional[int] = None) -> EndResult:
        """
        The smaller side after deleting one curve, rooted at the endpoint on that side.

        Sizes count vertices. Equal sides give a tie; sides larger than cutoff give overflow.
        """
        if edge not in graph.edges:
            raise ParameterError(f"unknown edge {edge}")
        G = graph.to_networkx()
        u, v = graph.edges[edge]
        if u == v or G.number_of_edges(u, v) > 1:
            return EndResult(kind="non_separating")
        side_u = _side(G, u, edge)
        if v in side_u:
            return EndResult(kind="non_separating")
        side_v = _side(G, v, edge)
        if len(side_u) == len(side_v):
            return EndResult(kind="tie", size=len(side_u))
        root, side = (u, side_u) if len(side_u) < len(side_v) else (v, side_v)
        if cutoff is not None and len(side) > cutoff:
            return EndResult(kind="overflow", size=len(side))
        try:
            tree = NestingService.canonical_encode(G, root, side)
        except StructuralError:
            return EndResult(kind="cyclic", size=len(side))
        return EndResult(kind="tree", tree=tree, size=len(side))

    @staticmethod
    def all_ends(graph: NestingGraph, cutoff: Optional[int] = DEFAULT_CUTOFF) -> EndAssignment:
        G = graph.to_networkx()
        simple = nx.Graph(G)
        if graph.edge_count and simple.number_of_edges() == graph.edge_count and nx.is_forest(simple):
            return EndAssignment(results=_forest_ends(G, graph, cutoff))
        return EndAssignment(results={e: NestingService.tree_end(graph, e, cutoff) for e in graph.edges})

    @staticmethod
    def degree_identity_check(graph: NestingGraph) -> Tuple[int, int]:
        """(sum of vertex degrees, 2|V| - 2) for a nesting graph on the sphere."""
        if not graph.geometry.startswith("sphere"):
            raise ParameterError(f"degree identity only holds on the sphere, got {graph.geometry!r}")
        degree_sum = sum(degree for _, degree in graph.to_networkx().degree())
        return int(degree_sum), 2 * graph.vertex_count - 2

    @staticmethod
    def mean_connectivity(graph: NestingGraph) -> float:
        if graph.vertex_count == 0:
            raise ParameterError("empty nesting graph")
        return 2.0 * graph.edge_count / graph.vertex_count

    @staticmethod
    def end_size_profile(assignments: Iterable[EndAssignment], cutoffs: Iterable[int]) -> Dict[int, float]:
        """Fraction of separating curves whose end has more than k vertices, for each cutoff k."""
        sizes = [r.size for a in assignments for r in a.results.values()
                 if r.kind != "non_separating" and r.size is not None]
        if not sizes:
            return {int(k): 0.0 for k in cutoffs}
        return {int(k): sum(1 for s in sizes if s > k) / len(sizes) for k in cutoffs}


def _forest_ends(G: nx.MultiGraph, graph: NestingGraph, cutoff: Optional[int]) -> Dict[int, EndResult]:
    parent: Dict[Hashable, Optional[Hashable]] = {}
    component_size: Dict[Hashable, int] = {}
    order: List[Hashable] = []
    for start in G.nodes:
        if start in parent:
            continue
        parent[start] = None
        members = [start]
        stack = [start]
        while stack:
            node = stack.pop()
            for nbr in G.adj[node]:
                if nbr not in parent:
                    parent[nbr] = node
                    members.append(nbr)
                    stack.append(nbr)
        order.extend(members)
        for node in members:
            component_size[node] = len(members)

    subtree = {node: 1 for node in order}
    children: Dict[Hashable, List[str]] = {node: [] for node in order}
    codes: Dict[Hashable, Optional[str]] = {}
    for node in reversed(order):
        # a subtree within the cutoff has only children within it
        if cutoff is None or subtree[node] <= cutoff:
            codes[node] = "(" + "".join(sorted(children[node])) + ")"
        else:
            codes[node] = None
        p = parent[node]
        if p is not None:
            subtree[p] += subtree[node]
            if codes[node] is not None:
                children[p].append(codes[node])

    results: Dict[int, EndResult] = {}
    for edge, (u, v) in graph.edges.items():
        child, up = (u, v) if parent.get(u) == v else (v, u)
        below = subtree[child]
        above = component_size[child] - below
        if below == above:
            results[edge] = EndResult(kind="tie", size=below)
        elif below < above:
            if codes[child] is None:
                results[edge] = EndResult(kind="overflow", size=below)
            else:
                results[edge] = EndResult(kind="tree", tree=RootedTree(canonical_code=codes[child], size=below),
                                          size=below)
        elif cutoff is not None and above > cutoff:
            results[edge] = EndResult(kind="overflow", size=above)
        else:
            rest = _side(G, up, edge)
            results[edge] = EndResult(kind="tree", tree=NestingService.canonical_encode(G, up, rest), size=above)
    return results
