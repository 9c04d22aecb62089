"""Synthetic exchange markets with planted manipulators and known ground truth.

Normal accounts trade pairwise inside the day's price range. Manipulators only
trade among themselves: a daily "churn" split between two fixed edge sets whose
volume share follows the cumulative manipulation pressure, plus the motifs
scheduled for that day.
"""
import os
import logging
from dataclasses import dataclass, field, asdict, fields

import numpy as np
import pandas as pd
from scipy.special import zeta

from core import config, reports
from core.errors import InputDataError
from core.ingest import TABLE_I_COLUMNS, CleaningReport, parse_timestamps
from core.motif import PATTERNS, canonical_cycle

LOCATIONS = [("US", "NC"), ("CA", "QC"), ("US", "PA"), ("US", "CA"), ("JP", ""), ("DE", ""), ("GB", "")]
SECONDS_PER_DAY = 86400


@dataclass
class MarketConfig:
    days: int = 120
    start_date: str = config.WINDOW_START
    n_normal: int = 100
    n_manipulator: int = 20
    normal_rate: float = 30.0
    intensity: list | None = None
    intensity_cycles: float = 1.5
    price0: float = 13.0
    drift: float = 0.0
    volatility: float = 0.02
    kappa: float = 0.8
    p_abnormal: float = 0.5
    churn_edges: int = 40
    churn_activity: float = 0.5
    churn_trades_max: int = 2
    churn_volume: float = 200.0
    motif_schedule: list = field(default_factory=list)
    motif_every: int = 0
    motif_repeats: int = 20
    star_branches: int = config.STAR_BRANCHES
    currency: str = config.REFERENCE_CURRENCY
    seed: int = config.DEFAULT_SEED

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InputDataError(f"unknown market settings: {unknown}")
        return cls(**data)

    def to_dict(self):
        return asdict(self)

    def validate(self):
        if self.days < 1 or self.n_normal < 2:
            raise InputDataError("a market needs at least one day and two normal accounts")
        if self.n_manipulator < 0 or self.churn_edges < 0 or self.motif_every < 0:
            raise InputDataError("account, edge and schedule counts must not be negative")
        if self.normal_rate <= 0 or self.price0 <= 0 or self.volatility < 0:
            raise InputDataError("normal_rate and price0 must be positive, volatility non-negative")
        if not 0.0 <= self.p_abnormal <= 1.0:
            raise InputDataError(f"p_abnormal must lie in [0, 1], got {self.p_abnormal}")
        if not 0.0 <= self.kappa <= 1.0:
            raise InputDataError(f"kappa must lie in [0, 1], got {self.kappa}")
        if not 0.0 < self.churn_activity <= 1.0 or self.churn_trades_max < 1:
            raise InputDataError("churn_activity must lie in (0, 1] and churn_trades_max be >= 1")
        if self.motif_repeats < 1 or self.star_branches < 3:
            raise InputDataError("motif_repeats must be >= 1 and star_branches >= 3")
        if self.churn_edges and 2 * self.churn_edges > self.n_manipulator * (self.n_manipulator - 1):
            raise InputDataError(f"{self.n_manipulator} manipulators cannot carry 2 x {self.churn_edges} churn edges")
        if self.intensity is not None:
            m = np.asarray(self.intensity, dtype=float)
            if m.shape != (self.days,) or np.any((m < 0) | (m > 1)):
                raise InputDataError("intensity must hold one value in [0, 1] per day")
        try:
            pd.Timestamp(self.start_date)
        except ValueError as e:
            raise InputDataError(f"invalid start_date {self.start_date!r}") from e
        return self

    def intensity_schedule(self):
        """m(t) in [0, 1]; a sine wave with `intensity_cycles` periods unless given."""
        if self.intensity is not None:
            return np.asarray(self.intensity, dtype=float)
        t = np.arange(self.days, dtype=float)
        return np.clip(0.5 + 0.45 * np.sin(2.0 * np.pi * self.intensity_cycles * t / self.days), 0.0, 1.0)


@dataclass
class GroundTruth:
    manipulators: list
    motifs: list
    prices: pd.DataFrame
    labels: dict

    def expected_findings(self, day=None):
        """Planted motifs as (day, pattern, accounts, direction) keys."""
        return {
            (m["day"], m["pattern"], tuple(m["accounts"]), m["direction"])
            for m in self.motifs
            if day is None or m["day"] == pd.Timestamp(day).strftime("%Y-%m-%d")
        }

    def to_dict(self):
        prices = self.prices.copy()
        prices["day"] = prices["day"].dt.strftime("%Y-%m-%d")
        return {
            "manipulators": sorted(self.manipulators),
            "motifs": self.motifs,
            "prices": prices.to_dict(orient="records"),
            "labels": dict(sorted(self.labels.items())),
        }


def _format_amount(x):
    text = f"{x:.8f}".rstrip("0").rstrip(".")
    return text or "0"


def _format_date(ts):
    return f"{ts.year}/{ts.month}/{ts.day} {ts.hour}:{ts.minute:02d}:{ts.second:02d}"


def _pattern_arity(pattern, entry, star_branches):
    if pattern == "SelfLoop":
        return 1
    if pattern in ("Unidirection", "Bidirection"):
        return 2
    if pattern == "Triangle":
        return 3
    if pattern == "Polygon":
        size = int(entry.get("size", 4))
        if size < 4:
            raise InputDataError("a Polygon needs at least four accounts")
        return size
    return 1 + star_branches


def _motif_plan(cfg, manipulators, rng):
    """day offset -> list of (pattern, accounts, repeats); accounts are disjoint per day unless given."""
    entries = list(cfg.motif_schedule)
    if cfg.motif_every:
        entries += [{"day": d, "pattern": p} for d in range(0, cfg.days, cfg.motif_every) for p in PATTERNS]
    by_day = {}
    for entry in entries:
        day, pattern = int(entry["day"]), entry["pattern"]
        if not 0 <= day < cfg.days:
            raise InputDataError(f"motif day {day} outside the {cfg.days}-day market")
        if pattern not in PATTERNS:
            raise InputDataError(f"unknown motif pattern {pattern!r}")
        by_day.setdefault(day, []).append(entry)

    plan = {}
    for day in sorted(by_day):
        free = [int(i) for i in rng.permutation(len(manipulators))]
        taken = set()
        for entry in by_day[day]:
            pattern = entry["pattern"]
            arity = _pattern_arity(pattern, entry, cfg.star_branches)
            if "accounts" in entry:
                idx = [int(i) for i in entry["accounts"]]
                if len(idx) != arity or any(not 0 <= i < len(manipulators) for i in idx) or len(set(idx)) != arity:
                    raise InputDataError(f"day {day}: {pattern} needs {arity} distinct manipulator indices, got {idx}")
            else:
                idx = [i for i in free if i not in taken][:arity]
                if len(idx) < arity:
                    raise InputDataError(f"day {day}: not enough manipulators left to plant a {pattern}")
            taken.update(idx)
            repeats = int(entry.get("repeats", cfg.motif_repeats))
            if repeats < 1:
                raise InputDataError("motif repeats must be >= 1")
            plan.setdefault(day, []).append((pattern, [manipulators[i] for i in idx], repeats))
    return plan


def _motif_edges(pattern, accounts, repeats):
    """(seller, buyer, count) triples realising one planted pattern."""
    if pattern == "SelfLoop":
        return [(accounts[0], accounts[0], repeats)]
    if pattern == "Unidirection":
        return [(accounts[0], accounts[1], repeats)]
    if pattern == "Bidirection":
        forward = (repeats + 1) // 2
        return [(accounts[0], accounts[1], forward), (accounts[1], accounts[0], max(repeats - forward, 1))]
    if pattern in ("Triangle", "Polygon"):
        return [(a, b, repeats) for a, b in zip(accounts, accounts[1:] + accounts[:1])]
    return [(accounts[0], leaf, repeats) for leaf in accounts[1:]]


def _canonical_accounts(pattern, accounts):
    if pattern == "Bidirection":
        return sorted(accounts)
    if pattern in ("Triangle", "Polygon"):
        return list(canonical_cycle(accounts))
    if pattern == "Star":
        return [accounts[0]] + sorted(accounts[1:])
    return list(accounts)


def _pressure_share(m):
    """Normalized cumulative pressure in [0.05, 0.95]."""
    S = np.cumsum(m - m.mean())
    span = np.ptp(S)
    if span == 0:
        return np.full(m.size, 0.5)
    return 0.05 + 0.9 * (S - S.min()) / span


def price_path(cfg, rng):
    """P(t) from log-returns drift + vol * (kappa * z(t) + sqrt(1 - kappa^2) * eps)."""
    m = cfg.intensity_schedule()
    sd = m.std()
    z = (m - m.mean()) / sd if sd > 0 else np.zeros_like(m)
    eps = rng.standard_normal(cfg.days)
    returns = cfg.drift + cfg.volatility * (cfg.kappa * z + np.sqrt(1.0 - cfg.kappa ** 2) * eps)
    return cfg.price0 * np.exp(np.cumsum(returns))


def generate_market(cfg):
    """Returns (Table I log frame, reference price frame, GroundTruth); deterministic given cfg.seed."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n_accounts = cfg.n_normal + cfg.n_manipulator
    ids = rng.choice(np.arange(1, 1_000_000), size=n_accounts, replace=False)
    normals = ids[:cfg.n_normal]
    manipulators = [int(a) for a in ids[cfg.n_normal:]]
    location = {int(a): LOCATIONS[i] for a, i in zip(ids, rng.integers(0, len(LOCATIONS), n_accounts))}

    pairs = [(a, b) for a in manipulators for b in manipulators if a != b]
    order = rng.permutation(len(pairs)) if pairs else []
    group_a = [pairs[i] for i in order[:cfg.churn_edges]]
    group_b = [pairs[i] for i in order[cfg.churn_edges:2 * cfg.churn_edges]]

    plan = _motif_plan(cfg, manipulators, rng)
    P = price_path(cfg, rng)
    share = _pressure_share(cfg.intensity_schedule())
    start = pd.Timestamp(cfg.start_date).normalize()

    batches, price_rows, motifs, labels = [], [], [], {}
    counter = 0
    for t in range(cfg.days):
        day = start + pd.Timedelta(days=t)

        n = max(2, int(rng.poisson(cfg.normal_rate)))
        sellers = rng.integers(0, cfg.n_normal, n)
        buyers = (sellers + rng.integers(1, cfg.n_normal, n)) % cfg.n_normal
        volume = np.round(np.clip(rng.lognormal(np.log(0.5), 1.0, n), 0.001, None), 8)
        money = np.round(volume * P[t] * np.exp(rng.normal(0.0, 0.01, n)), 8)
        unit = money / volume
        high, low = float(unit.max()), float(unit.min())
        normal_batch = [(int(normals[s]), int(normals[b])) for s, b in zip(sellers, buyers)]

        manip = []
        planted_pairs = set()
        for pattern, accounts, repeats in plan.get(t, []):
            edges = _motif_edges(pattern, accounts, repeats)
            planted_pairs.update(frozenset((s, b)) for s, b, _ in edges if s != b)
            for s, b, c in edges:
                manip += [(s, b, v) for v in np.clip(rng.lognormal(np.log(0.05), 0.5, c), 0.001, None)]
            motifs.append({
                "day": day.strftime("%Y-%m-%d"),
                "pattern": pattern,
                "accounts": _canonical_accounts(pattern, accounts),
                "direction": "out" if pattern == "Star" else None,
            })
        for edges, fraction in ((group_a, share[t]), (group_b, 1.0 - share[t])):
            if not edges:
                continue
            active = [e for e, on in zip(edges, rng.random(len(edges)) < cfg.churn_activity) if on]
            active = [e for e in active if frozenset(e) not in planted_pairs]
            for s, b in active:
                count = int(rng.integers(1, cfg.churn_trades_max + 1))
                edge_volume = cfg.churn_volume * fraction / len(active) * np.exp(rng.normal(0.0, 0.1))
                manip += [(s, b, edge_volume / count)] * count

        k = len(manip)
        m_volume = np.round(np.array([v for _, _, v in manip], dtype=float), 8)
        m_volume = np.where(m_volume < 0.001, 0.001, m_volume)
        abnormal = rng.random(k) < cfg.p_abnormal
        upward = rng.random(k) < 0.5
        m_price = np.where(
            abnormal,
            np.where(upward, high * rng.uniform(2.0, 40.0, k), low * rng.uniform(0.01, 0.4, k)),
            rng.uniform(low, high, k) if k else np.empty(0),
        )
        m_money = np.round(m_volume * m_price, 8)

        total = n + k
        if total > SECONDS_PER_DAY:
            raise InputDataError(f"day {t}: {total} trades do not fit into distinct seconds")
        seconds = rng.choice(SECONDS_PER_DAY, size=total, replace=False)
        epoch = int(day.timestamp())
        all_pairs = normal_batch + [(s, b) for s, b, _ in manip]
        all_volume = np.concatenate([volume, m_volume])
        all_money = np.concatenate([money, m_money])
        unit_all = all_money / all_volume
        for i, ((s, b), sec) in enumerate(zip(all_pairs, seconds)):
            trade_id = str((epoch + int(sec)) * 1000 + (counter + i) % 1000)
            if unit_all[i] > config.HIGH_MULTIPLIER * high:
                labels[trade_id] = "EHT"
            elif unit_all[i] < config.LOW_MULTIPLIER * low:
                labels[trade_id] = "ELT"
            else:
                labels[trade_id] = "NMT"
            batches.append((trade_id, epoch + int(sec), s, b, all_volume[i], all_money[i]))
        counter += total
        price_rows.append({"day": day, "P": float(P[t]), "H": high, "L": low, "open": float(unit[0])})

    log = _to_table_rows(batches, location, cfg.currency)
    prices = pd.DataFrame(price_rows)
    reference = pd.DataFrame({
        "date": prices["day"].dt.strftime("%Y-%m-%d"),
        "open": prices["open"].round(6),
        "high": prices["H"].round(10),
        "low": prices["L"].round(10),
        "close": prices["P"].round(6),
    })
    truth = GroundTruth(manipulators=manipulators, motifs=motifs, prices=prices[["day", "P", "H", "L"]], labels=labels)
    logging.info(f"Generated {len(batches)} transactions over {cfg.days} days "
                 f"({cfg.n_normal} normal, {cfg.n_manipulator} manipulator accounts, {len(motifs)} motifs)")
    return log, reference, truth


def _to_table_rows(batches, location, currency):
    """One buy row then one sell row per trade, in time order."""
    trades = pd.DataFrame(batches, columns=["trade_id", "epoch", "seller", "buyer", "volume", "money"])
    trades = trades.sort_values(["epoch", "trade_id"], kind="stable").reset_index(drop=True)
    stamps = pd.to_datetime(trades["epoch"], unit="s")
    dates = (
        stamps.dt.year.astype(str) + "/" + stamps.dt.month.astype(str) + "/" + stamps.dt.day.astype(str)
        + " " + stamps.dt.hour.astype(str) + ":" + stamps.dt.strftime("%M:%S")
    )
    btc = trades["volume"].map(_format_amount)
    cash = trades["money"].map(_format_amount)
    sides = []
    for offset, (side, column) in enumerate((("buy", "buyer"), ("sell", "seller"))):
        users = trades[column]
        sides.append(pd.DataFrame({
            "Trade_Id": trades["trade_id"],
            "Date": dates,
            "User_Id": users.astype(str),
            "Type": side,
            "Currency": currency,
            "Bitcoins": btc,
            "Money": cash,
            "User_Country": users.map(lambda u: location[u][0]),
            "User_State": users.map(lambda u: location[u][1]),
            "_order": 2 * np.arange(len(trades)) + offset,
        }))
    rows = pd.concat(sides, ignore_index=True).sort_values("_order", kind="stable")
    return rows.drop(columns="_order").reset_index(drop=True)[TABLE_I_COLUMNS]


def write_market(log, reference, truth, out_dir, market_config=None):
    """trades.csv, reference.csv and ground_truth.json under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "trades": os.path.join(out_dir, "trades.csv"),
        "reference": os.path.join(out_dir, "reference.csv"),
        "ground_truth": os.path.join(out_dir, "ground_truth.json"),
    }
    log.to_csv(paths["trades"], index=False, lineterminator="\n")
    reference.to_csv(paths["reference"], index=False, lineterminator="\n")
    payload = truth.to_dict()
    if market_config is not None:
        payload["market_config"] = market_config.to_dict()
    reports.write_json(paths["ground_truth"], payload)
    return paths


def plant_duplicates(log, fraction, seed=config.DEFAULT_SEED):
    """Corrupt a clean Table I log with duplicates the cleaning stages must remove.

    Planted rows are split between exact row copies, copies of whole
    transactions and buy-row copies under a fresh trade id one second apart
    (these survive row dedup and die as single rows). Returns (corrupted log,
    expected CleaningReport).
    """
    if not 0.0 <= fraction < 1.0:
        raise InputDataError(f"fraction must lie in [0, 1), got {fraction}")
    log = log.reset_index(drop=True)
    rows = len(log)
    if rows % 2:
        raise InputDataError("a clean log holds two rows per trade")
    expected = CleaningReport(
        rows_in=rows, rows_after_field_dedup=rows, rows_after_single_row_removal=rows,
        complete_transactions=rows // 2, transactions_after_dedup=rows // 2,
    )
    n_planted = int(round(fraction * rows))
    if n_planted == 0:
        return log.copy(), expected

    rng = np.random.default_rng(seed)
    trade_ids = log["Trade_Id"].unique()
    n_tx = min(n_planted // 4, len(trade_ids))
    buy_rows = np.flatnonzero(log["Type"].str.lower().values == "buy")
    n_orphan = min(n_planted // 4, len(buy_rows))
    n_row = n_planted - 2 * n_tx - n_orphan

    copies = [log.iloc[rng.choice(rows, size=n_row, replace=n_row > rows)]]
    chosen = set(rng.choice(trade_ids, size=n_tx, replace=False).tolist())
    copies.append(log[log["Trade_Id"].isin(chosen)])

    stamps = parse_timestamps(log["Date"])
    taken = set(zip(stamps, log["User_Id"], log["Type"], log["Bitcoins"]))
    orphans = log.iloc[rng.choice(buy_rows, size=n_orphan, replace=False)].copy()
    next_id = max(int(i) for i in trade_ids) + 1
    for k, i in enumerate(orphans.index):
        shift = 1
        while (stamps[i] + pd.Timedelta(seconds=shift), log.at[i, "User_Id"], log.at[i, "Type"], log.at[i, "Bitcoins"]) in taken:
            shift += 1
        moved = stamps[i] + pd.Timedelta(seconds=shift)
        taken.add((moved, log.at[i, "User_Id"], log.at[i, "Type"], log.at[i, "Bitcoins"]))
        orphans.at[i, "Date"] = _format_date(moved)
        orphans.at[i, "Trade_Id"] = str(next_id + k)
    copies.append(orphans)

    planted = pd.concat(copies, ignore_index=True)
    position = np.concatenate([np.arange(rows, dtype=float), rng.uniform(0, rows, len(planted))])
    combined = pd.concat([log, planted], ignore_index=True)
    corrupted = combined.iloc[np.argsort(position, kind="stable")].reset_index(drop=True)

    duplicate_rows = n_row + len(copies[1])
    expected.rows_in = len(corrupted)
    expected.dropped_duplicate_rows = duplicate_rows
    expected.rows_after_field_dedup = rows + n_orphan
    expected.dropped_single_rows = n_orphan
    logging.info(f"Planted {duplicate_rows} duplicate rows and {n_orphan} orphan rows into {rows} rows")
    return corrupted, expected


def sample_discrete_power_law(alpha, n, rng=None, x_min=1, table_size=100_000):
    """Inverse-CDF sampling of P(x) = x^-alpha / zeta(alpha, x_min) for integer x >= x_min."""
    if alpha <= 1.0 or x_min < 1 or n < 0:
        raise InputDataError("need alpha > 1, x_min >= 1 and n >= 0")
    rng = rng if rng is not None else np.random.default_rng()
    xs = np.arange(x_min, x_min + table_size, dtype=float)
    norm = zeta(alpha, x_min)
    ccdf = zeta(alpha, xs) / norm  # P(X >= x)
    u = rng.random(n)
    idx = np.searchsorted(-ccdf, -u, side="right") - 1
    out = xs[idx]
    beyond = zeta(alpha, xs[-1] + 1.0) / norm
    tail = u < beyond
    if tail.any():
        x_edge = xs[-1] + 1.0
        out[tail] = np.floor((x_edge - 0.5) * (u[tail] / beyond) ** (-1.0 / (alpha - 1.0)) + 0.5)
    return out.astype(np.int64)
