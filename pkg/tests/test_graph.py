import itertools

import numpy as np
import pandas as pd
import networkx as nx
import pytest
from scipy.special import zeta
from hypothesis import given, settings, strategies as st

from core import graph, synth
from core.errors import InputDataError


def _tuples(edges):
    frame = pd.DataFrame(edges, columns=["seller", "buyer", "volume"])
    frame["trade_id"] = [str(i) for i in range(len(frame))]
    frame["label"] = "NMT"
    frame["timestamp"] = pd.Timestamp("2013-01-01", tz="UTC")
    frame["day"] = pd.Timestamp("2013-01-01")
    return frame


def _brute_force_clustering(g):
    neighbors = {n: set() for n in g.nodes()}
    for s, b in g.edges():
        if s != b:
            neighbors[s].add(b)
            neighbors[b].add(s)
    total = 0.0
    for n, nbrs in neighbors.items():
        k = len(nbrs)
        if k < 2:
            continue
        links = sum(1 for a, b in itertools.combinations(nbrs, 2) if b in neighbors[a])
        total += 2.0 * links / (k * (k - 1))
    return total / len(neighbors)


def test_build_graph_sums_weights_and_counts():
    g = graph.build_graph(_tuples([(1, 2, 0.5), (1, 2, 1.5), (2, 1, 1.0), (3, 3, 2.0)]))
    assert g[1][2] == {"weight": 2.0, "tx_count": 2}
    assert g[2][1] == {"weight": 1.0, "tx_count": 1}
    assert g.has_edge(3, 3)


def test_build_graph_node_filter_needs_both_endpoints():
    g = graph.build_graph(_tuples([(1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0)]), node_filter={1, 2, 3})
    assert sorted(g.edges()) == [(1, 2), (2, 3)]


def test_avg_degree_definition():
    stats = graph.GraphStats(n_nodes=10702, n_edges=212900, avg_clustering=0.3, avg_degree=212900 / 10702, avg_weighted_degree=0.0)
    assert stats.avg_degree == pytest.approx(19.89, abs=0.005)


def test_triangle_with_reciprocal_edge():
    g = graph.build_graph(_tuples([(1, 2, 1.0), (2, 1, 1.0), (2, 3, 1.0), (3, 1, 1.0), (3, 4, 1.0)]))
    stats = graph.degree_stats(g)
    assert stats.n_edges == 5 and stats.n_nodes == 4
    assert stats.avg_degree == pytest.approx(5 / 4)
    assert stats.avg_weighted_degree == pytest.approx(5 / 4)
    assert stats.avg_clustering == pytest.approx((1 + 1 + 1 / 3 + 0) / 4)
    assert graph.clustering_coefficient(g, "transitivity") == pytest.approx(3 / 5)


def test_empty_graph_is_rejected():
    with pytest.raises(InputDataError):
        graph.degree_stats(nx.DiGraph())


@pytest.mark.parametrize("seed", range(50))
def test_clustering_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 31))
    p = float(rng.uniform(0.05, 0.4))
    g = nx.DiGraph()
    g.add_nodes_from(range(n))
    g.add_edges_from((a, b) for a in range(n) for b in range(n) if rng.random() < p)
    assert graph.clustering_coefficient(g) == pytest.approx(_brute_force_clustering(g), abs=1e-12)
    assert graph.degree_stats(g).avg_degree == g.number_of_edges() / n


def test_degree_modes_and_distribution():
    g = graph.build_graph(_tuples([(1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)]))
    assert graph.node_degrees(g, "out") == {1: 2, 2: 1, 3: 0}
    assert graph.node_degrees(g, "in") == {1: 0, 2: 1, 3: 2}
    assert graph.degree_distribution(g, "total") == {2: 3}
    with pytest.raises(InputDataError):
        graph.node_degrees(g, "sideways")


def test_merge_graphs_is_additive():
    a = graph.build_graph(_tuples([(1, 2, 1.0), (2, 3, 2.0)]))
    b = graph.build_graph(_tuples([(1, 2, 0.5), (3, 4, 1.0)]))
    both = graph.build_graph(_tuples([(1, 2, 1.0), (2, 3, 2.0), (1, 2, 0.5), (3, 4, 1.0)]))
    merged = graph.merge_graphs(a, b)
    assert sorted(merged.edges(data=True)) == sorted(both.edges(data=True))


@pytest.mark.parametrize("alpha", [1.8, 2.5, 3.2])
def test_power_law_recovery(alpha):
    rng = np.random.default_rng(int(alpha * 10))
    repetitions, passed = 100, 0
    for _ in range(repetitions):
        sample = synth.sample_discrete_power_law(alpha, 10_000, rng)
        fit = graph.fit_power_law(sample, x_min=1)
        if abs(fit.alpha - alpha) <= 3 * fit.sigma:
            passed += 1
    assert passed >= 0.95 * repetitions, f"alpha={alpha}: only {passed}/{repetitions} within 3 standard errors"


def test_power_law_selects_x_min():
    rng = np.random.default_rng(11)
    body = rng.integers(1, 5, 3000)
    tail = synth.sample_discrete_power_law(2.5, 3000, rng, x_min=5)
    fit = graph.fit_power_law(np.concatenate([body, tail]))
    assert fit.x_min >= 4
    assert fit.alpha == pytest.approx(2.5, abs=0.3)


def test_approximate_estimator_is_close_for_large_x_min():
    rng = np.random.default_rng(2)
    sample = synth.sample_discrete_power_law(2.5, 20_000, rng, x_min=6)
    exact = graph.fit_power_law(sample, "discrete", x_min=6)
    approximate = graph.fit_power_law(sample, "approximate", x_min=6)
    assert approximate.alpha == pytest.approx(exact.alpha, abs=0.05)


@pytest.mark.parametrize("degrees", [[3] * 20, [1, 2, 3]])
def test_power_law_rejects_degenerate_samples(degrees):
    with pytest.raises(InputDataError):
        graph.fit_power_law(degrees)


edge_lists = st.lists(
    st.tuples(st.integers(0, 8), st.integers(0, 8), st.floats(min_value=0.01, max_value=10.0)),
    min_size=1, max_size=40,
)


@settings(max_examples=50, deadline=None)
@given(edge_lists, edge_lists)
def test_edge_weights_are_additive_over_tuple_sets(first, second):
    a = graph.build_graph(_tuples(first))
    b = graph.build_graph(_tuples(second))
    union = graph.build_graph(_tuples(first + second))
    merged = graph.merge_graphs(a, b)
    assert set(merged.edges()) == set(union.edges())
    for s, t in union.edges():
        assert merged[s][t]["tx_count"] == union[s][t]["tx_count"]
        assert merged[s][t]["weight"] == pytest.approx(union[s][t]["weight"])


@settings(max_examples=50, deadline=None)
@given(edge_lists)
def test_clustering_ignores_direction(edges):
    g = graph.build_graph(_tuples(edges))
    reversed_g = graph.build_graph(_tuples([(b, a, v) for a, b, v in edges]))
    assert graph.clustering_coefficient(g) == pytest.approx(graph.clustering_coefficient(reversed_g))


def test_edge_list_export():
    g = graph.build_graph(_tuples([(2, 1, 1.0), (1, 2, 0.5), (1, 2, 0.25)]))
    frame = graph.edge_list(g)
    assert list(frame.columns) == ["src", "dst", "weight", "tx_count"]
    assert frame.values.tolist() == [[1, 2, 0.75, 2], [2, 1, 1.0, 1]]


def test_star_degree_distribution():
    g = graph.build_graph(_tuples([(leaf, 0, 1.0) for leaf in (1, 2, 3, 4)]))
    assert graph.degree_distribution(g, "in") == {0: 4, 4: 1}
    assert graph.degree_distribution(g, "out") == {0: 1, 1: 4}
    assert graph.degree_distribution(g, "total") == {1: 4, 4: 1}


def _random_tuple_graph(rng):
    n = int(rng.integers(2, 31))
    edges = [(int(rng.integers(0, n)), int(rng.integers(0, n)), float(rng.uniform(0.01, 5.0))) for _ in range(int(rng.integers(1, 120)))]
    return edges, graph.build_graph(_tuples(edges))


@pytest.mark.parametrize("seed", range(50))
def test_degree_histograms_match_tally(seed):
    edges, g = _random_tuple_graph(np.random.default_rng(700 + seed))
    pairs = {(s, b) for s, b, _ in edges}
    nodes = {a for pair in pairs for a in pair}
    tally = {
        "in": {n: sum(1 for _, b in pairs if b == n) for n in nodes},
        "out": {n: sum(1 for s, _ in pairs if s == n) for n in nodes},
    }
    tally["total"] = {n: tally["in"][n] + tally["out"][n] for n in nodes}
    for mode, degrees in tally.items():
        expected = {}
        for d in degrees.values():
            expected[d] = expected.get(d, 0) + 1
        histogram = graph.degree_distribution(g, mode)
        assert histogram == dict(sorted(expected.items())), mode
        assert sum(histogram.values()) == len(nodes)

    in_hist, out_hist = graph.degree_distribution(g, "in"), graph.degree_distribution(g, "out")
    assert sum(d * c for d, c in in_hist.items()) == sum(d * c for d, c in out_hist.items()) == g.number_of_edges()


@pytest.mark.parametrize("seed", range(50))
def test_degree_stats_match_direct_sums(seed):
    edges, g = _random_tuple_graph(np.random.default_rng(800 + seed))
    pairs = {(s, b) for s, b, _ in edges}
    nodes = {a for pair in pairs for a in pair}
    stats = graph.degree_stats(g)
    assert stats.n_nodes == len(nodes)
    assert stats.n_edges == len(pairs)
    assert stats.avg_degree == pytest.approx(len(pairs) / len(nodes))
    assert stats.avg_weighted_degree == pytest.approx(sum(v for _, _, v in edges) / len(nodes))
    assert stats.avg_clustering == pytest.approx(_brute_force_clustering(g), abs=1e-12)


def test_discrete_fit_matches_likelihood_grid():
    sample = np.array([1] * 8 + [2] * 4 + [4] * 2 + [8, 16, 32, 64])
    fit = graph.fit_power_law(sample, "discrete", x_min=1)
    grid = np.arange(1.001, 5.0, 1e-4)
    log_likelihood = -grid * np.log(sample).sum() - sample.size * np.log(zeta(grid, 1))
    assert fit.alpha == pytest.approx(grid[np.argmax(log_likelihood)], abs=1e-3)


def test_approximate_estimator_is_the_closed_form():
    rng = np.random.default_rng(9)
    sample = synth.sample_discrete_power_law(2.5, 5_000, rng, x_min=2)
    fit = graph.fit_power_law(sample, "approximate", x_min=2)
    tail = sample[sample >= 2]
    expected = 1 + tail.size / np.log(tail / 1.5).sum()
    assert fit.alpha == pytest.approx(expected, rel=1e-9)
    assert fit.sigma == pytest.approx((expected - 1) / np.sqrt(tail.size), rel=1e-9)
