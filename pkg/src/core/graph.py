"""Aggregate transaction graphs and their static metrics."""
import logging
from collections import Counter
from dataclasses import dataclass, asdict

import numpy as np
import pandas as pd
import networkx as nx
from scipy.optimize import minimize_scalar
from scipy.special import zeta

from core import config
from core.errors import InputDataError

MAX_ALPHA = 20.0


@dataclass
class GraphStats:
    n_nodes: int
    n_edges: int
    avg_clustering: float
    avg_degree: float
    avg_weighted_degree: float

    def to_dict(self):
        return asdict(self)


@dataclass
class PowerLawFit:
    alpha: float
    x_min: int
    n_tail: int
    ks_distance: float
    sigma: float

    def to_dict(self):
        return asdict(self)


def build_graph(tuples, node_filter=None):
    """Directed graph of seller -> buyer edges, weight = total BTC, tx_count = trades.

    `node_filter` is a set of allowed accounts (see classify.select_accounts);
    a tuple is kept only when both endpoints pass it. None keeps everything.
    """
    selected = tuples
    if node_filter is not None:
        selected = tuples[tuples["seller"].isin(node_filter) & tuples["buyer"].isin(node_filter)]
    edges = (
        selected.groupby(["seller", "buyer"], sort=True)["volume"]
        .agg(weight="sum", tx_count="size")
        .reset_index()
    )
    g = nx.DiGraph()
    g.add_edges_from(
        (int(s), int(b), {"weight": float(w), "tx_count": int(c)})
        for s, b, w, c in edges.itertuples(index=False)
    )
    logging.info(f"Built graph with {g.number_of_nodes()} nodes and {g.number_of_edges()} edges")
    return g


def merge_graphs(*graphs):
    """Edge-wise sum of weights and counts."""
    merged = nx.DiGraph()
    for g in graphs:
        for s, b, data in g.edges(data=True):
            if merged.has_edge(s, b):
                merged[s][b]["weight"] += data["weight"]
                merged[s][b]["tx_count"] += data["tx_count"]
            else:
                merged.add_edge(s, b, weight=data["weight"], tx_count=data["tx_count"])
    return merged


def edge_list(g):
    """src,dst,weight,tx_count rows in (src, dst) order."""
    rows = sorted((s, b, data["weight"], data["tx_count"]) for s, b, data in g.edges(data=True))
    return pd.DataFrame(rows, columns=["src", "dst", "weight", "tx_count"])


def undirected_projection(g):
    """Simple undirected graph: direction dropped, reciprocal edges merged, self-loops removed."""
    h = nx.Graph()
    h.add_nodes_from(g.nodes())
    h.add_edges_from((s, b) for s, b in g.edges() if s != b)
    return h


def _require_nonempty(g):
    if g.number_of_nodes() == 0:
        raise InputDataError("graph is empty")


def clustering_coefficient(g, method=config.CLUSTERING_METHOD):
    """Average local clustering ("average") or global transitivity ("transitivity") of the projection."""
    _require_nonempty(g)
    h = undirected_projection(g)
    if method == "average":
        return float(nx.average_clustering(h))
    if method == "transitivity":
        return float(nx.transitivity(h))
    raise InputDataError(f"unknown clustering method {method!r}")


def degree_stats(g, clustering_method=config.CLUSTERING_METHOD):
    _require_nonempty(g)
    n_nodes = g.number_of_nodes()
    n_edges = g.number_of_edges()
    return GraphStats(
        n_nodes=n_nodes,
        n_edges=n_edges,
        avg_clustering=clustering_coefficient(g, clustering_method),
        avg_degree=n_edges / n_nodes,
        avg_weighted_degree=g.size(weight="weight") / n_nodes,
    )


def node_degrees(g, mode=config.DEGREE_MODE):
    if mode == "in":
        return dict(g.in_degree())
    if mode == "out":
        return dict(g.out_degree())
    if mode == "total":
        return dict(g.degree())
    raise InputDataError(f"unknown degree mode {mode!r}")


def degree_distribution(g, mode=config.DEGREE_MODE):
    """Histogram degree -> number of nodes."""
    counts = Counter(node_degrees(g, mode).values())
    return dict(sorted(counts.items()))


def _alpha_discrete(n, sum_log, x_min):
    def negative_log_likelihood(alpha):
        return alpha * sum_log + n * np.log(zeta(alpha, x_min))

    result = minimize_scalar(negative_log_likelihood, bounds=(1.0 + 1e-6, MAX_ALPHA), method="bounded", options={"xatol": 1e-7})
    return float(result.x)


def _alpha_approximate(n, sum_log_shifted):
    return 1.0 + n / sum_log_shifted


def _standard_error(alpha, n, x_min, estimator):
    """1/sqrt(n I(alpha)) with I = d^2/da^2 ln zeta(alpha, x_min) for the discrete likelihood."""
    h = 1e-4
    if estimator == "discrete" and alpha - h > 1.0:
        log_z = lambda a: np.log(zeta(a, x_min))
        info = (log_z(alpha + h) - 2.0 * log_z(alpha) + log_z(alpha - h)) / h ** 2
        if info > 0:
            return float(1.0 / np.sqrt(n * info))
    return float((alpha - 1.0) / np.sqrt(n))


def power_law_cdf(values, alpha, x_min):
    """P(X <= v) of the discrete power law on v >= x_min."""
    values = np.asarray(values, dtype=float)
    return 1.0 - zeta(alpha, values + 1.0) / zeta(alpha, x_min)


def power_law_pmf(values, alpha, x_min):
    values = np.asarray(values, dtype=float)
    return values ** -alpha / zeta(alpha, x_min)


def _ks_distance(tail_sorted, alpha, x_min):
    values, counts = np.unique(tail_sorted, return_counts=True)
    empirical = np.cumsum(counts) / tail_sorted.size
    return float(np.max(np.abs(empirical - power_law_cdf(values, alpha, x_min))))


def fit_power_law(degrees, estimator=config.POWER_LAW_ESTIMATOR, x_min=None, min_tail=10):
    """Fit y ~ x^-alpha to a positive integer sample.

    x_min is chosen to minimize the Kolmogorov-Smirnov distance between the
    tail and the fitted law unless given explicitly. `estimator` is
    "discrete" (zeta-normalized likelihood, maximized numerically; the
    default) or "approximate", the closed form
    alpha = 1 + n / sum(ln(x / (x_min - 1/2))) with sigma = (alpha - 1) / sqrt(n).
    The two agree closely once x_min reaches about 6.
    """
    x = np.sort(np.asarray(list(degrees), dtype=np.int64))
    x = x[x >= 1]
    if x.size < 10:
        raise InputDataError(f"power-law fit needs at least 10 positive samples, got {x.size}")
    if np.unique(x).size < 2:
        raise InputDataError("power-law fit on a degenerate sample (all values equal)")
    if estimator not in ("discrete", "approximate"):
        raise InputDataError(f"unknown power-law estimator {estimator!r}")

    logs = np.log(x)
    suffix_log = np.cumsum(logs[::-1])[::-1]
    if x_min is not None:
        candidates = [int(x_min)]
    else:
        uniques = np.unique(x)[:-1]
        tail_sizes = x.size - np.searchsorted(x, uniques, side="left")
        candidates = [int(u) for u, n in zip(uniques, tail_sizes) if n >= min_tail] or [int(uniques[0])]

    best = None
    for xm in candidates:
        start = int(np.searchsorted(x, xm, side="left"))
        tail = x[start:]
        n = tail.size
        if n < 2:
            continue
        if estimator == "discrete":
            alpha = _alpha_discrete(n, suffix_log[start], xm)
        else:
            alpha = _alpha_approximate(n, suffix_log[start] - n * np.log(xm - 0.5))
        ks = _ks_distance(tail, alpha, xm)
        if best is None or ks < best.ks_distance:
            best = PowerLawFit(alpha=alpha, x_min=xm, n_tail=n, ks_distance=ks, sigma=None)
    if best is not None:
        best.sigma = _standard_error(best.alpha, best.n_tail, best.x_min, estimator)
    if best is None or not np.isfinite(best.alpha):
        raise InputDataError("power-law fit did not converge")
    return best
