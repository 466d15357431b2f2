import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hfgcn import topology as tp
from hfgcn.skeleton import NTU25, validate_bones

import oracles

V = NTU25.num_joints


def test_layout_is_a_tree():
    validate_bones(NTU25.bones, V)
    assert NTU25.root == 20
    assert len(NTU25.edges()) == V - 1


def test_adjacency_symmetric_normalized():
    a = tp.build_adjacency(NTU25.bones, V)
    np.testing.assert_allclose(a, a.T, atol=0)
    raw = tp.physical_graph(NTU25.bones, V) + np.eye(V)
    d = raw.sum(axis=1)
    for i in range(V):
        for j in range(V):
            assert a[i, j] == pytest.approx(raw[i, j] / np.sqrt(d[i] * d[j]), abs=1e-15)


def test_spatial_subsets_columns_normalized():
    sub = tp.spatial_subsets(NTU25.bones, V)
    assert sub.shape == (3, V, V)
    np.testing.assert_array_equal(sub[0], np.eye(V))
    for k in (1, 2):
        cols = sub[k].sum(axis=0)
        assert np.all((np.abs(cols - 1) < 1e-12) | (cols == 0))


@pytest.mark.parametrize("name,edges", [("h1", 5), ("h2", 5), ("h3", 3)])
def test_shipped_partitions_cover_every_joint_once(name, edges):
    groups = tp.load_partition("ntu25", name)
    assert len(groups) == edges
    assert sorted(j for g in groups for j in g) == list(range(V))


def test_h3_is_the_hop_ring_partition():
    rings = tp.ring_partition(NTU25.bones, V, NTU25.center)
    assert [sorted(r) for r in rings] == [sorted(g) for g in tp.load_partition("ntu25", "h3")]


def test_hop_distances_bfs():
    d = tp.hop_distances(NTU25.bones, V, 0)
    assert d[0] == 0 and d[1] == 1 and d[20] == 2 and d[3] == 4


@pytest.mark.parametrize("groups,match", [
    ([[0, 1], [1, 2]], "overlapping=\\[1\\]"),
    ([[0, 1]], "missing=\\[2\\]"),
    ([[0, 1, 2, 7]], "out_of_range=\\[7\\]"),
    ([[0, 1, 2], []], "empty"),
])
def test_invalid_partitions_are_named(groups, match):
    with pytest.raises(tp.PartitionError, match=match):
        tp.build_partition_hypergraph(groups, 3)


def test_parse_partition_skips_comments():
    assert tp.parse_partition("# header\n0, 1\n\n2 # tail\n") == [[0, 1], [2]]


@pytest.mark.parametrize("name", ["h1", "h2", "h3"])
def test_propagation_matches_loops_and_is_row_stochastic(name, topology):
    i = topology.hypergraphs.names.index(name)
    h = topology.hypergraphs.incidences[i]
    s = topology.hypergraphs.propagation[i]
    np.testing.assert_allclose(s, oracles.propagation_loops(h), atol=1e-12)
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-9)


def test_identity_partition_gives_identity_operator():
    h = tp.build_partition_hypergraph([[j] for j in range(V)], V)
    np.testing.assert_array_equal(tp.propagation_matrix(h), np.eye(V))


def test_single_hyperedge_averages_everything():
    h = tp.build_partition_hypergraph([list(range(V))], V)
    np.testing.assert_allclose(tp.propagation_matrix(h), np.full((V, V), 1.0 / V), atol=1e-15)


@st.composite
def partitions(draw):
    v = draw(st.integers(2, 12))
    labels = draw(st.lists(st.integers(0, 4), min_size=v, max_size=v))
    groups = [[j for j in range(v) if labels[j] == e] for e in sorted(set(labels))]
    return v, groups


@settings(max_examples=60, deadline=None)
@given(partitions())
def test_random_partitions_row_stochastic_and_symmetric(case):
    v, groups = case
    s = tp.propagation_matrix(tp.build_partition_hypergraph(groups, v))
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(s, s.T, atol=1e-15)
    np.testing.assert_allclose(s @ s, s, atol=1e-12)


def test_apply_hypergraphs_matches_loops(topology, rng):
    x = rng.normal(size=(2, 3, 4, V))
    got = tp.apply_hypergraphs(x, topology.hypergraphs).data
    props = topology.hypergraphs.propagation
    np.testing.assert_allclose(got, oracles.contract_loops("svu,bctu->sbctv", props, x), atol=1e-12)


def test_apply_hypergraphs_shape_error(topology):
    with pytest.raises(Exception):
        tp.apply_hypergraphs(np.zeros((1, 2, 3, V + 1)), topology.hypergraphs)


def test_permuted_topology_relabels(topology, rng):
    perm = rng.permutation(V)
    p = topology.permuted(perm)
    np.testing.assert_array_equal(p.adjacency, topology.adjacency[np.ix_(perm, perm)])
    for s0, s1 in zip(topology.hypergraphs.propagation, p.hypergraphs.propagation):
        np.testing.assert_allclose(s1, s0[np.ix_(perm, perm)], atol=1e-15)


def test_dot_export_has_one_cluster_per_hyperedge(topology):
    i = topology.hypergraphs.names.index("h2")
    dot = tp.hypergraph_dot("h2", topology.hypergraphs.incidences[i], NTU25)
    assert dot.count("subgraph cluster_") == 5
    assert dot.count(" -- ") == V - 1


def test_matrix_csv_round_trip(topology):
    s = topology.hypergraphs.propagation[1]
    back = np.array([[float(v) for v in row.split(",")] for row in tp.matrix_csv(s).splitlines()])
    np.testing.assert_allclose(back, s, atol=1e-10)
