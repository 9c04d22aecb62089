"""Core abnormal accounts and the daily manipulation patterns among them."""
import logging
from dataclasses import dataclass, field, asdict

import numpy as np
import pandas as pd
import networkx as nx

from core import config
from core.errors import InputDataError

PATTERNS = ["SelfLoop", "Unidirection", "Bidirection", "Triangle", "Polygon", "Star"]


@dataclass
class CoreSet:
    edges: frozenset
    accounts: frozenset
    per_base_top: dict

    def to_dict(self):
        return {
            "edges": sorted([list(e) for e in self.edges]),
            "accounts": sorted(self.accounts),
            "per_base_top": {str(i): [list(e) for e in top] for i, top in self.per_base_top.items()},
        }


@dataclass
class DailySubgraph:
    day: pd.Timestamp
    graph: nx.DiGraph

    @property
    def nodes(self):
        return set(self.graph.nodes())

    def tx_count(self, s, b):
        return self.graph[s][b]["tx_count"] if self.graph.has_edge(s, b) else 0


@dataclass
class Finding:
    pattern: str
    accounts: tuple
    edges: list
    direction: str | None = None
    truncated: bool = False

    def key(self):
        return (self.pattern, self.accounts, self.direction)


@dataclass
class MotifReport:
    day: pd.Timestamp
    findings: list = field(default_factory=list)

    def to_records(self):
        day = self.day.strftime("%Y-%m-%d")
        return [{"day": day, **asdict(f), "accounts": list(f.accounts), "edges": [list(e) for e in f.edges]} for f in self.findings]


def core_accounts(svd, edge_index, N, k=config.TOP_K_EDGES):
    """Union of the k largest-|weight| edges of base networks 1..N and their endpoints.

    Ties are broken by lexicographic edge order.
    """
    if not 0 <= N <= svd.rank_kept:
        raise InputDataError(f"N={N} outside 0..{svd.rank_kept}")
    if k < 1:
        raise InputDataError("k must be >= 1")
    edges = [tuple(e) for e in edge_index]
    lexical_rank = np.empty(len(edges), dtype=np.int64)
    lexical_rank[sorted(range(len(edges)), key=lambda l: edges[l])] = np.arange(len(edges))
    per_base_top = {}
    for i in range(1, N + 1):
        weights = np.abs(svd.V_truncated[:, i - 1])
        order = np.lexsort((lexical_rank, -weights))[:k]
        per_base_top[i] = [edges[l] for l in order]
    union = frozenset(e for top in per_base_top.values() for e in top)
    accounts = frozenset(a for e in union for a in e)
    logging.info(f"Core set: {len(union)} distinct edges, {len(accounts)} accounts from {N} base networks")
    return CoreSet(edges=union, accounts=accounts, per_base_top=per_base_top)


def daily_subgraph(tuples, core, day):
    """Transactions of one day between core accounts, counted per ordered pair."""
    if not core.accounts:
        raise InputDataError("core set is empty")
    day = pd.Timestamp(day).normalize()
    if day.tzinfo is not None:
        day = day.tz_convert(None)
    selected = tuples[
        (tuples["day"] == day)
        & tuples["seller"].isin(core.accounts)
        & tuples["buyer"].isin(core.accounts)
    ]
    counts = selected.groupby(["seller", "buyer"], sort=True).size()
    g = nx.DiGraph()
    g.add_edges_from((int(s), int(b), {"tx_count": int(c)}) for (s, b), c in counts.items())
    return DailySubgraph(day=day, graph=g)


def canonical_cycle(nodes):
    """Rotation of a directed cycle starting at its smallest account."""
    nodes = list(nodes)
    start = nodes.index(min(nodes))
    return tuple(nodes[start:] + nodes[:start])


def _cycle_edges(cycle, sub):
    return [(a, b, sub.tx_count(a, b)) for a, b in zip(cycle, cycle[1:] + cycle[:1])]


def part_of_heavier_pattern(sub, s, b, star_branches=config.STAR_BRANCHES):
    """True when s->b lies on a cycle or star whose edges all carry at least tx_count(s, b) trades.

    Depends on the subgraph only, never on min_repeats. Whenever s->b is heavy
    such a cycle or star is heavy too, so it is reported in its place.
    """
    g = sub.graph
    count = sub.tx_count(s, b)
    strong = nx.subgraph_view(g, filter_edge=lambda x, y: x != y and g[x][y]["tx_count"] >= count)
    if g.has_edge(b, s):
        return False
    return (
        nx.has_path(strong, b, s)
        or strong.out_degree(s) >= star_branches
        or strong.in_degree(b) >= star_branches
    )


def detect_motifs(sub, min_repeats=config.MIN_REPEATS, star_branches=config.STAR_BRANCHES, max_cycle_length=config.MAX_CYCLE_LENGTH):
    """Find the six manipulation patterns in one daily subgraph.

    An edge is heavy when its tx_count reaches `min_repeats`. Self-loops are
    reported at any count. A heavy one-way edge is a Unidirection unless
    part_of_heavier_pattern holds for it; raising `min_repeats` therefore
    never adds a finding.
    """
    if min_repeats < 1 or star_branches < 3:
        raise InputDataError("min_repeats must be >= 1 and star_branches >= 3")
    g = sub.graph
    heavy = nx.DiGraph()
    heavy.add_edges_from((s, b) for s, b, c in g.edges(data="tx_count") if s != b and c >= min_repeats)

    findings = []
    for s, b, c in sorted(g.edges(data="tx_count")):
        if s == b:
            findings.append(Finding("SelfLoop", (s,), [(s, s, c)]))

    for s, b in sorted(g.edges()):
        if s < b and g.has_edge(b, s):
            combined = sub.tx_count(s, b) + sub.tx_count(b, s)
            if combined >= min_repeats:
                findings.append(Finding("Bidirection", (s, b), [(s, b, sub.tx_count(s, b)), (b, s, sub.tx_count(b, s))]))

    cycles ={canonical_cycle(c) for c in nx.simple_cycles(heavy, length_bound=max_cycle_length) if len(c) > 2}
    long_components = [
        frozenset(c) for c in nx.strongly_connected_components(heavy)
        if len(c) > max_cycle_length
        and any(len(cycle) > max_cycle_length for cycle in nx.simple_cycles(heavy.subgraph(c)))
    ]
    for cycle in sorted(cycles, key=lambda c: (len(c), c)):
        edges = _cycle_edges(list(cycle), sub)
        findings.append(Finding("Triangle" if len(cycle) == 3 else "Polygon", cycle, edges))
    for component in sorted(long_components, key=lambda c: sorted(c)):
        edges = sorted((a, b, sub.tx_count(a, b)) for a, b in heavy.subgraph(component).edges())
        findings.append(Finding("Polygon", tuple(sorted(component)), edges, truncated=True))

    for node in sorted(heavy.nodes()):
        for direction, neighbors in (("out", heavy.successors(node)), ("in", heavy.predecessors(node))):
            neighbors = sorted(neighbors)
            if len(neighbors) >= star_branches:
                if direction == "out":
                    edges = [(node, n, sub.tx_count(node, n)) for n in neighbors]
                else:
                    edges = [(n, node, sub.tx_count(n, node)) for n in neighbors]
                findings.append(Finding("Star", (node, *neighbors), edges, direction=direction))

    for s, b in sorted(heavy.edges()):
        if g.has_edge(b, s) or part_of_heavier_pattern(sub, s, b, star_branches):
            continue
        findings.append(Finding("Unidirection", (s, b), [(s, b, sub.tx_count(s, b))]))

    findings.sort(key=lambda f: (PATTERNS.index(f.pattern), f.accounts, f.direction or ""))
    return MotifReport(day=sub.day, findings=findings)


def detect_all_days(tuples, core, days, **thresholds):
    """(DailySubgraph, MotifReport) for every day, in day order."""
    results = []
    for day in days:
        sub = daily_subgraph(tuples, core, day)
        report = detect_motifs(sub, **thresholds)
        if report.findings:
            logging.info(f"{report.day.date()}: {len(report.findings)} motif findings")
        results.append((sub, report))
    return results
