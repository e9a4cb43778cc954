from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zodiac.graph import (
    GraphError,
    Topology,
    build_laplacian,
    complete_graph,
    gen_erdos_renyi,
    is_connected,
    path_graph,
    read_edgelist,
    ring_graph,
    write_edgelist,
)


def test_path2_laplacian_by_hand():
    lap = build_laplacian(path_graph(2))
    np.testing.assert_array_equal(lap.L, [[1, -1], [-1, 1]])
    np.testing.assert_allclose(lap.eigenvalues, [0, 2], atol=1e-12)
    assert lap.rho == pytest.approx(2) and lap.rho2 == pytest.approx(2)


def test_triangle_spectrum():
    lap = build_laplacian(complete_graph(3))
    np.testing.assert_allclose(lap.L, 2 * np.eye(3) - (np.ones((3, 3)) - np.eye(3)))
    np.testing.assert_allclose(lap.eigenvalues, [0, 3, 3], atol=1e-12)
    assert lap.rho2 == pytest.approx(3)


def test_empty_graph():
    topo = Topology(3, [])
    lap = build_laplacian(topo)
    assert np.all(lap.L == 0)
    assert lap.lambda2 == 0
    assert not is_connected(topo) and not lap.connected


def test_connectivity_examples():
    assert is_connected(path_graph(3))
    assert not is_connected(Topology(4, [(0, 1), (2, 3)]))


def test_topology_validation():
    with pytest.raises(GraphError):
        Topology(3, [(1, 1)])
    with pytest.raises(GraphError):
        Topology(3, [(0, 3)])
    with pytest.raises(GraphError):
        Topology(3, [(0, 1)], {(0, 1): 0.0})


def test_er_extremes():
    k10 = gen_erdos_renyi(10, 1.0, seed=0)
    assert k10.num_edges == 45
    with pytest.raises(GraphError):
        gen_erdos_renyi(10, 0.0, seed=0)


def test_er_mean_edge_count():
    # conditioning on connectivity nudges the mean up slightly; the band is +-1.5 around 18
    counts = [gen_erdos_renyi(10, 0.4, s).num_edges for s in range(1000)]
    assert abs(np.mean(counts) - 18) <= 1.5


def test_er_deterministic():
    assert gen_erdos_renyi(10, 0.4, 5) == gen_erdos_renyi(10, 0.4, 5)


def test_bfs_agrees_with_lambda2():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.3]
        topo = Topology(n, pairs)
        assert is_connected(topo) == (build_laplacian(topo).lambda2 > 1e-10)


def test_er_sweep_connected_matches_lambda2():
    for s in range(100):
        topo = gen_erdos_renyi(10, 0.4, s)
        assert is_connected(topo) and build_laplacian(topo).lambda2 > 1e-10


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(2, 50))
    seed = draw(st.integers(0, 10_000))
    rng = np.random.default_rng(seed)
    # random spanning tree plus extra edges, random positive weights
    edges = {(int(rng.integers(0, i)), i) for i in range(1, n)}
    for _ in range(draw(st.integers(0, 2 * n))):
        i, j = sorted(rng.choice(n, 2, replace=False).tolist())
        edges.add((i, j))
    weights = {e: float(rng.uniform(0.2, 3.0)) for e in edges}
    return Topology(n, sorted(edges), weights)


@given(connected_graphs())
@settings(max_examples=40, deadline=None)
def test_laplacian_structure(topo):
    lap = build_laplacian(topo)
    n = topo.n
    np.testing.assert_allclose(lap.L @ np.ones(n), 0, atol=1e-10)
    np.testing.assert_array_equal(lap.L, lap.L.T)
    assert lap.eigenvalues.min() >= -1e-10
    assert np.max(np.abs(lap.Q_small @ lap.L - lap.K_small)) < 1e-8
    assert np.max(np.abs(lap.L @ lap.Q_small - lap.K_small)) < 1e-8
    rng = np.random.default_rng(n)
    for _ in range(100):
        z = rng.standard_normal(n)
        z -= z.mean()
        zk = z @ lap.K_small @ z
        zq = z @ lap.Q_small @ z
        assert zk / lap.rho <= zq + 1e-8
        assert zq <= zk / lap.rho2 + 1e-8


def test_edgelist_roundtrip(tmp_path):
    topo = Topology(4, [(0, 1), (1, 3), (2, 3)], {(1, 3): 2.5})
    path = tmp_path / "g.txt"
    write_edgelist(topo, path)
    assert path.read_text().splitlines()[0] == "n 4"
    assert read_edgelist(path) == topo


def test_read_edgelist_missing_file_names_path(tmp_path):
    missing = tmp_path / "nope.txt"
    with pytest.raises(FileNotFoundError, match="nope.txt"):
        read_edgelist(missing)


def test_ring_is_2_regular():
    lap = build_laplacian(ring_graph(6))
    assert np.all(np.diag(lap.L) == 2)
