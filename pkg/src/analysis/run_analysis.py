import os
import sys
import glob
import json
import logging
import argparse
import importlib.util
from dataclasses import asdict, fields

import numpy as np
import pandas as pd

# --- PATH SETUP TO IMPORT CORE ---
current_dir = os.path.dirname(os.path.abspath(__file__))
parent_dir = os.path.dirname(current_dir)
sys.path.append(parent_dir)

from core import config, reports
from core import ingest, classify, graph, temporal, pricefit, motif, synth
from core.config import RunConfig, resolve_run_config
from core.errors import ForensicsError, InputDataError

MARKETS_DIR = os.path.join(current_dir, "markets")
N_CONTRIBUTIONS = 4


class ForensicPipeline:

    def __init__(self, run_config):
        self.cfg = run_config
        self.out = run_config.output_dir
        os.makedirs(self.out, exist_ok=True)
        self.inputs = {}
        self.ref = None
        self.tuples = None
        self.categories = None
        self.price_fits = {}
        self.summary = {}
        print(f"📁 Output directory: {os.path.abspath(self.out)}")

    def path(self, *parts):
        return os.path.join(self.out, *parts)

    def _register_input(self, path):
        self.inputs[os.path.basename(path)] = reports.file_digest(path)

    def _provenance(self, payload):
        return {"run_config": self.cfg.to_dict(), "inputs": dict(self.inputs), **payload}

    # --- 1. CLEAN ---
    def clean(self):
        print(f"\n🧹 [Clean] Reading {self.cfg.trades_path}...")
        self._register_input(self.cfg.trades_path)
        transactions, report, errors = ingest.read_trade_log(self.cfg.trades_path)
        if report.rows_in == 0:
            raise InputDataError(f"trade log {self.cfg.trades_path} holds no data rows")
        ingest.save_transactions(transactions, self.path("transactions.csv"))
        payload = {
            "cleaning_report": report.to_dict(),
            "n_parse_errors": len(errors),
            "parse_errors": [asdict(e) for e in errors[:100]],
        }
        reports.write_json(self.path("cleaning_report.json"), self._provenance(payload))
        if errors:
            print(f"   ⚠️  {len(errors)} malformed rows skipped")
        print(f"   ✅ {report.transactions_after_dedup} transactions kept from {report.rows_in} rows")
        return report

    def load_transactions(self):
        path = self.path("transactions.csv")
        if not os.path.isfile(path):
            raise InputDataError(f"{path} not found; run `clean` first or pass --trades")
        self._register_input(path)
        transactions = ingest.load_transactions(path)
        if transactions.empty:
            raise InputDataError("no transactions survived cleaning")
        return transactions

    # --- 2. CLASSIFY ---
    def label(self, transactions):
        print(f"\n🏷️  [Classify] Labelling {len(transactions)} transactions against {self.cfg.reference_path}...")
        self._register_input(self.cfg.reference_path)
        self.ref = classify.load_reference(self.cfg.reference_path, self.cfg.currency)
        labeler = classify.make_labeler(self.ref, self.cfg.high_multiplier, self.cfg.low_multiplier)
        self.tuples = ingest.to_tuples(transactions, labeler)

        days = pd.DatetimeIndex(self.tuples["day"].unique())
        missing = float((~days.isin(self.ref.frame.index)).mean()) if len(days) else 0.0
        if missing > self.cfg.missing_reference_warn_fraction:
            logging.warning(f"{missing:.1%} of trading days have no reference prices")
            print(f"   ⚠️  {missing:.1%} of trading days have no reference prices; their transactions stay unclassified")

        self.categories = classify.categorize_accounts(self.tuples)
        stats = classify.summarize(self.tuples, self.categories)
        reports.write_csv(stats, self.path("category_stats.csv"), index=True)
        payload = {
            "category_stats": stats.to_dict(orient="index"),
            "findings": classify.summary_findings(stats),
            "missing_reference_day_fraction": missing,
        }
        reports.write_json(self.path("category_stats.json"), self._provenance(payload))
        print(f"   ✅ {stats.at['ABA', 'accounts']} abnormal of {stats.at['All', 'accounts']} accounts")
        return self.tuples

    def window(self):
        start, end = self.cfg.window()
        first, last = self.tuples["day"].min(), self.tuples["day"].max()
        start = max(pd.Timestamp(start), first) if start else first
        end = min(pd.Timestamp(end), last) if end else last
        if start > end:
            raise InputDataError(f"window {self.cfg.window_start} .. {self.cfg.window_end} holds no transactions")
        return start, end

    def node_filter(self, kind):
        accounts = classify.select_accounts(self.categories, kind)
        if not accounts:
            raise InputDataError(f"{kind} has no accounts")
        return accounts

    # --- 3. GRAPHS ---
    def graph_stats(self):
        print(f"\n🕸️  [Graphs] Measuring {', '.join(self.cfg.graphs)}...")
        results = {}
        for kind in self.cfg.graphs:
            try:
                g = graph.build_graph(self.tuples, self.node_filter(kind))
                stats = graph.degree_stats(g, self.cfg.clustering_method)
            except InputDataError as e:
                logging.warning(f"{kind}: {e}")
                print(f"   ⚠️  {kind} skipped: {e}")
                results[kind] = None
                continue
            fits, rows = {}, []
            for mode in ("in", "out", "total"):
                degrees = graph.node_degrees(g, mode)
                try:
                    fit = graph.fit_power_law(degrees.values(), self.cfg.power_law_estimator)
                    fits[mode] = fit.to_dict()
                except InputDataError as e:
                    logging.warning(f"{kind} {mode}-degree power-law fit: {e}")
                    fit, fits[mode] = None, None
                rows.append(self._degree_rows(kind, mode, graph.degree_distribution(g, mode), fit))
            reports.write_csv(pd.concat(rows, ignore_index=True), self.path(f"degree_{kind}.csv"))
            reports.write_csv(graph.edge_list(g), self.path(f"edges_{kind}.csv"))
            histogram = graph.degree_distribution(g, self.cfg.degree_mode)
            results[kind] = {
                **stats.to_dict(),
                "power_law": fits,
                "degree_mode": self.cfg.degree_mode,
                "degree_histogram": {str(d): c for d, c in histogram.items()},
            }
            self.summary.setdefault(kind, {}).update(nodes=stats.n_nodes, edges=stats.n_edges, clustering=stats.avg_clustering)
            print(f"   ✅ {kind}: {stats.n_nodes} nodes, {stats.n_edges} edges, C={stats.avg_clustering:.4f}")
        reports.write_json(self.path("graph_stats.json"), self._provenance({"graphs": results}))
        return results

    def _degree_rows(self, kind, mode, histogram, fit):
        degrees = np.array(list(histogram.keys()), dtype=float)
        counts = np.array(list(histogram.values()), dtype=float)
        frame = pd.DataFrame({"mode": mode, "degree": degrees.astype(int), "count": counts.astype(int), "fraction": counts / counts.sum()})
        frame["fitted_fraction"] = np.nan
        if fit is not None:
            tail = degrees >= fit.x_min
            frame.loc[tail, "fitted_fraction"] = graph.power_law_pmf(degrees[tail], fit.alpha, fit.x_min) * fit.n_tail / counts.sum()
        return frame

    # --- 4. BASE NETWORKS ---
    def svd(self, kind):
        print(f"\n🧮 [SVD] {kind} daily snapshots...")
        raw = temporal.build_snapshot_series(self.tuples, self.window(), self.node_filter(kind))
        raw, price, dropped = pricefit.align_price(raw, self.ref)
        if dropped:
            print(f"   ⚠️  {dropped} days without a close price dropped")
        temporal.save_matrix(raw, self.path(f"matrix_{kind}"))
        return self._decompose(kind, raw, price)

    def load_decomposition(self, kind):
        stem = self.path(f"matrix_{kind}")
        raw = temporal.load_matrix(stem)
        self._register_input(f"{stem}.npy")
        raw, price, _ = pricefit.align_price(raw, self.ref)
        return self._decompose(kind, raw, price)

    def _decompose(self, kind, raw, price):
        svd = temporal.compute_svd(temporal.normalize_matrix(raw))
        rank = temporal.select_rank(svd.sigma, self.cfg.rank_method, self.cfg.n_base_networks)

        energy = svd.sigma ** 2
        scree = pd.DataFrame({
            "index": np.arange(1, svd.sigma.size + 1),
            "sigma": svd.sigma,
            "explained": energy / energy.sum(),
        })
        reports.write_csv(scree, self.path(f"scree_{kind}.csv"))

        day_labels = [d.strftime("%Y-%m-%d") for d in svd.days]
        contributions = pd.DataFrame({"day": day_labels})
        for i in range(1, min(N_CONTRIBUTIONS, svd.U.shape[1]) + 1):
            contributions[f"u{i}"] = temporal.contribution_series(svd, i)
        reports.write_csv(contributions, self.path(f"contributions_{kind}.csv"))

        bases = pd.DataFrame(svd.edge_index, columns=["seller", "buyer"])
        for i in range(1, rank + 1):
            bases[f"v{i}"] = svd.V_truncated[:, i - 1]
        reports.write_csv(bases, self.path(f"base_networks_{kind}.csv"))

        self.summary.setdefault(kind, {}).update(T=raw.T, L=raw.L, sigma1=float(svd.sigma[0]), rank=rank)
        print(f"   ✅ {kind}: T={raw.T}, L={raw.L}, sigma_1={svd.sigma[0]:.4f}, rank={rank}")
        return svd, rank, price

    # --- 5. PRICE FIT ---
    def fit(self, kind, svd, rank, price):
        fit, report = pricefit.fit_report(price, svd, rank)
        frame = pd.DataFrame({
            "day": [d.strftime("%Y-%m-%d") for d in price.days],
            "P": price.P,
            "B": price.B,
            "fitted": fit.fitted,
        })
        reports.write_csv(frame, self.path(f"fitted_price_{kind}.csv"))
        self.price_fits[kind] = report
        first = (report["first_base_network"] or {}).get("pearson")
        fitted = (report["fitted"] or {}).get("pearson")
        self.summary.setdefault(kind, {}).update(rho_u1=first, rho_fit=fitted)
        print(f"   📈 {kind}: Pearson(u1, B)={_fmt(first)}, Pearson(fit_{rank}, B)={_fmt(fitted)}")
        return report

    def write_price_fits(self):
        reports.write_json(self.path("price_fit.json"), self._provenance({"graphs": self.price_fits}))

    # --- 6. MOTIFS ---
    def motifs(self, kind, svd, rank):
        core = motif.core_accounts(svd, svd.edge_index, rank, self.cfg.top_k)
        reports.write_json(self.path(f"core_{kind}.json"), self._provenance(core.to_dict()))
        dot_dir = self.path(f"motifs_{kind}")
        os.makedirs(dot_dir, exist_ok=True)
        results = motif.detect_all_days(
            self.tuples, core, svd.days,
            min_repeats=self.cfg.min_repeats,
            star_branches=self.cfg.star_branches,
            max_cycle_length=self.cfg.max_cycle_length,
        ) if core.accounts else []
        records = []
        for sub, report in results:
            if report.findings:
                records += report.to_records()
                reports.write_dot(os.path.join(dot_dir, f"{sub.day.strftime('%Y-%m-%d')}.dot"), sub, report)
        reports.write_jsonl(self.path(f"motifs_{kind}.jsonl"), records)
        self.summary.setdefault(kind, {}).update(core_accounts=len(core.accounts), motifs=len(records))
        print(f"   🔎 {kind}: {len(core.accounts)} core accounts, {len(records)} motif findings")
        return records

    def write_empty_motifs(self, kind):
        reports.write_jsonl(self.path(f"motifs_{kind}.jsonl"), [])

    # --- FULL RUN ---
    def analyze(self):
        if self.cfg.trades_path:
            self.clean()
        self.label(self.load_transactions())
        self.window()
        self.graph_stats()
        for kind in self.cfg.graphs:
            try:
                svd, rank, price = self.svd(kind)
            except InputDataError as e:
                logging.warning(f"{kind} base networks skipped: {e}")
                print(f"   ⚠️  {kind} base networks skipped: {e}")
                self.write_empty_motifs(kind)
                continue
            self.fit(kind, svd, rank, price)
            self.motifs(kind, svd, rank)
        self.write_price_fits()
        self.print_summary()

    def print_summary(self):
        print(f"\n" + "=" * 96)
        print(f"🏁  ANALYSIS COMPLETE")
        print("=" * 96)
        print(f"{'GRAPH':<6} | {'NODES':>7} | {'EDGES':>8} | {'CLUST':>7} | {'T x L':>13} | {'RANK':>4} | {'RHO u1':>7} | {'RHO FIT':>7} | {'MOTIFS':>6}")
        print("-" * 96)
        for kind in self.cfg.graphs:
            row = self.summary.get(kind, {})
            shape = f"{row['T']}x{row['L']}" if "T" in row else "-"
            print(
                f"{kind:<6} | {row.get('nodes', '-'):>7} | {row.get('edges', '-'):>8} | {_fmt(row.get('clustering')):>7} | "
                f"{shape:>13} | {row.get('rank', '-'):>4} | {_fmt(row.get('rho_u1')):>7} | {_fmt(row.get('rho_fit')):>7} | {row.get('motifs', '-'):>6}"
            )
        print("-" * 96)


def _fmt(value):
    return "-" if value is None else f"{value:.4f}"


# ======================================================
# DYNAMIC MARKET LOADER
# ======================================================
def load_market_scenarios(folder_path=MARKETS_DIR):
    scenarios = {}
    if not os.path.exists(folder_path):
        return scenarios

    for file_path in sorted(glob.glob(os.path.join(folder_path, "*.py"))):
        module_name = os.path.basename(file_path).replace(".py", "")
        if module_name.startswith("__"):
            continue
        try:
            spec = importlib.util.spec_from_file_location(module_name, file_path)
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
        except Exception as e:
            logging.warning(f"Skipping market preset {file_path}: {e}")
            print(f"   ❌ Error loading {file_path}: {e}")
            continue
        for key, data in getattr(module, "MARKET_SCENARIOS", {}).items():
            scenarios[key] = {**data, "filename": module_name}
    return scenarios


def run_synth(run_config, scenario=None, market_config_path=None, seed=None, duplicates=0.0):
    settings = {}
    if scenario:
        scenarios = load_market_scenarios()
        if scenario not in scenarios:
            raise InputDataError(f"unknown scenario {scenario!r}; available: {sorted(scenarios)}")
        settings.update(scenarios[scenario]["market"])
    if market_config_path:
        try:
            with open(market_config_path, encoding="utf-8") as f:
                settings.update(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            raise InputDataError(f"cannot read market config {market_config_path}: {e}") from e
    if seed is not None:
        settings["seed"] = seed

    market = synth.MarketConfig.from_dict(settings)
    print(f"\n🎲 [Synth] {scenario or 'custom'} market: {market.days} days, {market.n_manipulator} manipulators, seed {market.seed}")
    log, reference, truth = synth.generate_market(market)
    os.makedirs(run_config.output_dir, exist_ok=True)
    if duplicates:
        log, expected = synth.plant_duplicates(log, duplicates, market.seed)
        reports.write_json(os.path.join(run_config.output_dir, "expected_cleaning_report.json"), expected.to_dict())
    paths = synth.write_market(log, reference, truth, run_config.output_dir, market)
    print(f"   ✅ {len(log)} rows -> {paths['trades']}")
    print(f"   ✅ {len(reference)} reference days -> {paths['reference']}")
    return paths


# ======================================================
# COMMAND LINE
# ======================================================
def build_parser():
    parser = argparse.ArgumentParser(description="Forensics of exchange trade logs: cleaning, abnormal-account classification, transaction graphs, base networks, price fit and manipulation motifs.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="JSON file with RunConfig fields (flags override it)")
    common.add_argument("--output_dir", type=str, default=None, help=f"Report bundle directory (env {config.OUTPUT_DIR_ENV}, default {config.DEFAULT_OUTPUT_DIR})")

    analysis = argparse.ArgumentParser(add_help=False)
    analysis.add_argument("--reference", dest="reference_path", type=str, default=None, help="Daily reference prices CSV (date,open,high,low,close)")
    analysis.add_argument("--window_start", type=str, default=None, help=f"First day analysed, YYYY-MM-DD (default {config.WINDOW_START})")
    analysis.add_argument("--window_end", type=str, default=None, help="Last day analysed, YYYY-MM-DD (default: last trading day)")
    analysis.add_argument("--high_multiplier", type=float, default=None, help=f"EHT when price > this x daily high (default {config.HIGH_MULTIPLIER})")
    analysis.add_argument("--low_multiplier", type=float, default=None, help=f"ELT when price < this x daily low (default {config.LOW_MULTIPLIER})")
    analysis.add_argument("--currency", type=str, default=None, help=f"Currency the reference prices are quoted in (default {config.REFERENCE_CURRENCY})")
    analysis.add_argument("--graphs", type=str, nargs="+", default=None, choices=config.GRAPH_KINDS, help=f"Graphs to analyse (default {' '.join(config.DEFAULT_GRAPHS)})")
    analysis.add_argument("--n_base_networks", type=int, default=None, help=f"Base networks kept by the fixed rank rule (default {config.N_BASE_NETWORKS})")
    analysis.add_argument("--rank_method", type=str, default=None, choices=["fixed", "elbow"], help="Rank selection rule")
    analysis.add_argument("--top_k", type=int, default=None, help=f"Edges taken from each base network for the core set (default {config.TOP_K_EDGES})")
    analysis.add_argument("--min_repeats", type=int, default=None, help=f"Trades per edge and day for a motif edge (default {config.MIN_REPEATS})")
    analysis.add_argument("--star_branches", type=int, default=None, help=f"Distinct counterparties for a Star (default {config.STAR_BRANCHES})")
    analysis.add_argument("--max_cycle_length", type=int, default=None, help=f"Longest cycle enumerated exactly (default {config.MAX_CYCLE_LENGTH})")
    analysis.add_argument("--clustering_method", type=str, default=None, choices=["average", "transitivity"], help="Clustering coefficient flavour")
    analysis.add_argument("--degree_mode", type=str, default=None, choices=["in", "out", "total"], help="Degree used for summaries")
    analysis.add_argument("--power_law_estimator", type=str, default=None, choices=["discrete", "approximate"], help="Power-law exponent estimator")
    analysis.add_argument("--missing_reference_warn_fraction", type=float, default=None, help="Warn when more trading days than this lack reference prices")

    sub = parser.add_subparsers(dest="command", required=True)
    clean = sub.add_parser("clean", parents=[common], help="Parse and clean a trade log into transactions.csv")
    clean.add_argument("--trades", dest="trades_path", type=str, default=None, help="Trade log CSV in the Table I schema")
    analyze = sub.add_parser("analyze", parents=[common, analysis], help="Run the full pipeline and write the report bundle")
    analyze.add_argument("--trades", dest="trades_path", type=str, default=None, help="Trade log CSV; cleaned first when given")
    for name, text in (
        ("graph-stats", "Graph sizes, clustering and degree fits from transactions.csv"),
        ("svd", "Snapshot matrices and base networks per graph"),
        ("fit", "Price fit from persisted matrices"),
        ("motifs", "Core accounts and daily motifs from persisted matrices"),
    ):
        sub.add_parser(name, parents=[common, analysis], help=text)
    synth_parser = sub.add_parser("synth", parents=[common], help="Generate a synthetic market with ground truth")
    synth_parser.add_argument("--scenario", type=str, default=None, help="Named preset from src/analysis/markets")
    synth_parser.add_argument("--market_config", type=str, default=None, help="JSON file of MarketConfig fields (applied over the preset)")
    synth_parser.add_argument("--seed", type=int, default=None, help="Random seed (overrides preset and market config)")
    synth_parser.add_argument("--plant_duplicates", type=float, default=0.0, help="Fraction of duplicate rows to plant into the log")
    return parser


def setup_logging(output_dir):
    os.makedirs(output_dir, exist_ok=True)
    logging.basicConfig(
        filename=os.path.join(output_dir, config.LOG_FILE),
        level=logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        encoding='utf-8',
        force=True,
    )


def run_command(args, run_config):
    if args.command == "synth":
        return run_synth(run_config, args.scenario, args.market_config, args.seed, args.plant_duplicates)

    pipeline = ForensicPipeline(run_config)
    if args.command == "clean":
        run_config.validate(require_inputs=("trades_path",))
        return pipeline.clean()

    run_config.validate(require_inputs=("reference_path",) + (("trades_path",) if run_config.trades_path else ()))
    if args.command == "analyze":
        return pipeline.analyze()

    pipeline.label(pipeline.load_transactions())
    pipeline.window()
    if args.command == "graph-stats":
        return pipeline.graph_stats()
    for kind in run_config.graphs:
        if args.command == "svd":
            pipeline.svd(kind)
            continue
        svd, rank, price = pipeline.load_decomposition(kind)
        if args.command == "fit":
            pipeline.fit(kind, svd, rank, price)
        else:
            pipeline.motifs(kind, svd, rank)
    if args.command == "fit":
        pipeline.write_price_fits()


def main(argv=None):
    args = build_parser().parse_args(argv)
    known = {f.name for f in fields(RunConfig)}
    flag_values = {k: v for k, v in vars(args).items() if k in known}
    try:
        run_config = resolve_run_config(flag_values, args.config)
        setup_logging(run_config.output_dir)
        logging.info(f"Command {args.command} with {run_config.to_dict()}")
        run_command(args, run_config)
    except ForensicsError as e:
        logging.error(f"{type(e).__name__}: {e}")
        print(f"❌ {type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        logging.exception("Unexpected failure")
        print(f"❌ Unexpected failure: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
