import math

import networkx as nx
import pytest

from app.services.ensemble import EnsembleService, band_params
from app.services.nesting import NestingService
from app.services.nodal2d import Nodal2DService
from core.errors import ParameterError, StructuralError
from models.topology import NestingGraph


def graph_from_edges(edges, vertices=None):
    """NestingGraph with alternating signs by BFS depth from vertex 0."""
    vertices = sorted({v for e in edges for v in e} | set(vertices or []))
    G = nx.Graph(list(edges))
    G.add_nodes_from(vertices)
    depth = nx.single_source_shortest_path_length(G, vertices[0]) if edges else {}
    signs = {v: 1 if depth.get(v, 0) % 2 == 0 else -1 for v in vertices}
    return NestingGraph(geometry="sphere-lonlat", vertex_signs=signs, edges=dict(enumerate(edges)))


def _random_tree(n, seed):
    # random_tree was replaced by random_labeled_tree in networkx 3.4
    if hasattr(nx, "random_labeled_tree"):
        return nx.random_labeled_tree(n, seed=seed)
    return nx.random_tree(n, seed=seed)


def test_one_circle_is_a_single_edge():
    graph = graph_from_edges([(0, 1)])
    assert NestingService.is_tree(graph)
    assert NestingService.degree_identity_check(graph) == (2, 2)


def test_nested_circles_form_a_path():
    graph = graph_from_edges([(0, 1), (1, 2), (2, 3)])
    assert NestingService.is_tree(graph)
    assert NestingService.canonical_encode(graph.to_networkx(), 0).canonical_code == "(((())))"


def test_single_vertex_is_a_tree():
    graph = graph_from_edges([], vertices=[0])
    assert NestingService.is_tree(graph)
    assert NestingService.degree_identity_check(graph) == (0, 0)


def test_two_essential_cycles_on_the_torus():
    # cos(2 pi x): two domains separated by two parallel curves
    graph = NestingGraph(geometry="flat-torus", vertex_signs={0: 1, 1: -1}, edges={0: (0, 1), 1: (0, 1)})
    assert not NestingService.is_tree(graph)
    assert NestingService.tree_end(graph, 0).kind == "non_separating"


def test_degree_identity_counts_every_curve():
    graph = NestingGraph(geometry="sphere-lonlat", vertex_signs={0: 1, 1: -1, 2: 1},
                         edges={0: (0, 1), 1: (0, 1), 2: (1, 2)})
    assert NestingService.degree_identity_check(graph) == (6, 4)


def test_degree_identity_is_sphere_only():
    graph = NestingGraph(geometry="flat-torus", vertex_signs={0: 1, 1: -1}, edges={0: (0, 1)})
    with pytest.raises(ParameterError):
        NestingService.degree_identity_check(graph)


def test_cos_field_on_the_torus_has_a_cyclic_nesting_graph():
    field = EnsembleService.sample_torus(band_params(1.0, 2 * math.pi), seed=0)
    grid = EnsembleService.evaluate_grid(field, "flat-torus")
    components = Nodal2DService.label_domains(grid)
    graph = NestingService.build_nesting_graph(components, Nodal2DService.extract_nodal_curves(grid, components))
    # A cos(2 pi x) + B cos(2 pi y) with |A| != |B|: two essential curves, two domains
    assert graph.vertex_count == graph.edge_count
    assert not NestingService.is_tree(graph)


def test_path_end_is_a_single_vertex():
    graph = graph_from_edges([(0, 1), (1, 2)])
    end = NestingService.tree_end(graph, 0)
    assert end.kind == "tree"
    assert end.tree.canonical_code == "()"
    assert end.size == 1


def test_balanced_cut_is_a_tie():
    graph = graph_from_edges([(0, 1), (1, 2), (2, 3)])
    end = NestingService.tree_end(graph, 1)
    assert end.kind == "tie"
    assert end.size == 2


def test_star_edges_cut_off_leaves():
    graph = graph_from_edges([(0, k) for k in range(1, 6)])
    for edge in graph.edges:
        end = NestingService.tree_end(graph, edge)
        assert end.tree.canonical_code == "()"
    assert NestingService.degree_identity_check(graph) == (10, 10)


def test_seventeen_domain_tree():
    tree = _random_tree(17, seed=2)
    graph = graph_from_edges(list(tree.edges))
    assert NestingService.is_tree(graph)
    assert NestingService.degree_identity_check(graph) == (32, 32)
    assert NestingService.mean_connectivity(graph) == pytest.approx(2 - 2 / 17)


@pytest.mark.parametrize("edges, code", [
    ([], "()"),
    ([(0, 1)], "(())"),
    ([(0, 1), (0, 2)], "(()())"),
    ([(0, 2), (0, 1)], "(()())"),
    ([(0, 1), (1, 2), (0, 3)], "((())())"),
])
def test_canonical_codes(edges, code):
    tree = nx.Graph(edges)
    tree.add_node(0)
    assert NestingService.canonical_encode(tree, 0).canonical_code == code


def test_isomorphic_trees_share_a_code():
    a = nx.Graph([(0, 1), (1, 2), (1, 3), (0, 4)])
    b = nx.Graph([(9, 7), (9, 8), (7, 5), (7, 6)])
    assert (NestingService.canonical_encode(a, 0).canonical_code
            == NestingService.canonical_encode(b, 9).canonical_code)


def test_cycle_cannot_be_encoded():
    with pytest.raises(StructuralError):
        NestingService.canonical_encode(nx.cycle_graph(4), 0)


def test_unknown_edge():
    with pytest.raises(ParameterError):
        NestingService.tree_end(graph_from_edges([(0, 1)]), 5)


def test_all_ends_agree_with_single_cuts():
    tree = _random_tree(25, seed=7)
    graph = graph_from_edges(list(tree.edges))
    ends = NestingService.all_ends(graph, cutoff=None)
    for edge in graph.edges:
        assert ends.results[edge] == NestingService.tree_end(graph, edge)


def test_overflow_above_the_cutoff():
    # removing the middle edge of a 9-path leaves 4 and 5 vertices
    graph = graph_from_edges([(k, k + 1) for k in range(8)])
    assert NestingService.tree_end(graph, 3, cutoff=3).kind == "overflow"
    assert NestingService.all_ends(graph, cutoff=3).results[3].kind == "overflow"


def test_end_size_profile():
    graph = graph_from_edges([(k, k + 1) for k in range(8)])
    profile = NestingService.end_size_profile([NestingService.all_ends(graph, cutoff=None)], [0, 2, 10])
    assert profile[0] == 1.0
    assert profile[10] == 0.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_spherical_harmonic_nesting_graph_is_a_tree(seed):
    field = EnsembleService.sample_sphere(band_params(1.0, math.sqrt(20 * 21)), seed=seed)
    grid = EnsembleService.evaluate_grid(field, "sphere-lonlat")
    components = Nodal2DService.label_domains(grid)
    graph = NestingService.build_nesting_graph(components, Nodal2DService.extract_nodal_curves(grid, components))
    assert NestingService.is_tree(graph)
    degree_sum, expected = NestingService.degree_identity_check(graph)
    assert degree_sum == expected


@pytest.mark.slow
@pytest.mark.parametrize("ell", [20, 40, 80])
def test_sphere_tree_identity_at_scale(ell):
    params = band_params(1.0, math.sqrt(ell * (ell + 1)))
    for seed in range(200):
        grid = EnsembleService.evaluate_grid(EnsembleService.sample_sphere(params, seed=seed), "sphere-lonlat")
        components = Nodal2DService.label_domains(grid)
        graph = NestingService.build_nesting_graph(components, Nodal2DService.extract_nodal_curves(grid, components))
        assert NestingService.is_tree(graph)
        assert NestingService.degree_identity_check(graph)[0] == 2 * graph.vertex_count - 2
