import numpy as np
import pytest
from hypothesis import given

from formctl.errors import (
    Disconnected,
    DuplicateEdge,
    IndexOutOfRange,
    NoLeaderAccess,
    SelfLoop,
)
from formctl.graph import build_graph, laplacian_plus_b, neighbors

from .strategies import comm_graphs


def test_paper_graph_builds(paper_graph):
    assert paper_graph.num_followers == 5
    assert paper_graph.leader_links == (1, 0, 1, 0, 1)
    assert neighbors(paper_graph, 2) == {1, 3}
    assert neighbors(paper_graph, 1) == {2}
    assert neighbors(paper_graph, 5) == {4}


def test_trivial_single_follower():
    g = build_graph(1, [], [1])
    assert neighbors(g, 1) == frozenset()
    h = laplacian_plus_b(g)
    assert h.shape == (1, 1) and h[0, 0] == 1.0


def test_disconnected_rejected():
    with pytest.raises(Disconnected):
        build_graph(4, [(1, 2), (3, 4)], [1, 0, 0, 0])


def test_duplicate_edge_rejected():
    with pytest.raises(DuplicateEdge):
        build_graph(3, [(1, 2), (2, 1), (2, 3)], [1, 0, 0])


def test_self_loop_rejected():
    with pytest.raises(SelfLoop):
        build_graph(3, [(1, 1), (1, 2), (2, 3)], [1, 0, 0])


def test_no_leader_access_rejected():
    with pytest.raises(NoLeaderAccess):
        build_graph(2, [(1, 2)], [0, 0])


def test_edge_index_out_of_range():
    with pytest.raises(IndexOutOfRange):
        build_graph(2, [(1, 3)], [1, 0])
    with pytest.raises(IndexOutOfRange):
        build_graph(0, [], [])
    with pytest.raises(IndexOutOfRange):
        build_graph(2, [(1, 2)], [1])  # wrong number of flags
    with pytest.raises(IndexOutOfRange):
        build_graph(2, [(1, 2)], [1, 2])  # flags must be 0/1


def test_neighbors_index_out_of_range(paper_graph):
    with pytest.raises(IndexOutOfRange):
        neighbors(paper_graph, 0)
    with pytest.raises(IndexOutOfRange):
        neighbors(paper_graph, 6)


def test_laplacian_path_two():
    g = build_graph(2, [(1, 2)], [1, 0])
    assert np.array_equal(laplacian_plus_b(g), np.array([[2.0, -1.0], [-1.0, 1.0]]))


def test_laplacian_paper_diagonal(paper_graph):
    # degrees |N_i| + b_i hand-evaluated from the edge set
    h = laplacian_plus_b(paper_graph)
    assert np.array_equal(np.diag(h), np.array([2.0, 2.0, 3.0, 2.0, 2.0]))
    assert np.array_equal(h, h.T)


@given(comm_graphs())
def test_laplacian_positive_definite(g):
    h = laplacian_plus_b(g)
    assert np.array_equal(h, h.T)
    assert np.linalg.eigvalsh(h).min() > 1e-10


@given(comm_graphs())
def test_neighbor_relation_symmetric(g):
    for i in range(1, g.num_followers + 1):
        for j in neighbors(g, i):
            assert i in neighbors(g, j)


@given(comm_graphs())
def test_neighbor_lists_match_sets(g):
    for i in range(1, g.num_followers + 1):
        assert list(g.neighbor_lists[i - 1]) == sorted(g.neighbor_sets[i - 1])
