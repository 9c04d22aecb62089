"""Price-band labels for transactions and the account categories built on them."""
import logging
from enum import Enum
from dataclasses import dataclass

import numpy as np
import pandas as pd

from core import config
from core.errors import InputDataError, InvariantViolation

CATEGORY_ROWS = ["EHA", "ELA", "ABA", "NMA", "All"]
STAT_COLUMNS = ["accounts", "tx", "abt", "eht", "elt"]


class TxLabel(str, Enum):
    EHT = "EHT"
    ELT = "ELT"
    NMT = "NMT"
    UNCLASSIFIED = "UNCLASSIFIED"


@dataclass
class ReferencePriceTable:
    """Daily high/low/close reference prices, indexed by naive UTC midnight."""
    frame: pd.DataFrame
    currency: str = config.REFERENCE_CURRENCY

    def __len__(self):
        return len(self.frame)

    @property
    def days(self):
        return list(self.frame.index)

    def lookup(self, day):
        key = pd.Timestamp(day).normalize()
        if key.tzinfo is not None:
            key = key.tz_convert(None)
        if key not in self.frame.index:
            return None
        return self.frame.loc[key]

    def close_series(self):
        return self.frame["close"]


def load_reference(source, currency=config.REFERENCE_CURRENCY):
    """Load a date,open,high,low,close CSV (open is ignored, close may be blank)."""
    try:
        raw = pd.read_csv(source, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InputDataError(f"cannot read reference prices: {e}") from e
    raw.columns = [c.strip().lower() for c in raw.columns]
    missing = [c for c in ("date", "high", "low", "close") if c not in raw.columns]
    if missing:
        raise InputDataError(f"reference prices are missing columns {missing}")

    days = pd.to_datetime(raw["date"].str.strip().str.replace("/", "-"), format="%Y-%m-%d", errors="coerce")
    high = pd.to_numeric(raw["high"].str.strip(), errors="coerce")
    low = pd.to_numeric(raw["low"].str.strip(), errors="coerce")
    close_text = raw["close"].str.strip()
    close = pd.to_numeric(close_text, errors="coerce")

    for i in raw.index:
        row = i + 2  # header is line 1
        if pd.isna(days[i]):
            raise InputDataError(f"reference row {row}: invalid date {raw.at[i, 'date']!r}")
        if pd.isna(high[i]) or pd.isna(low[i]):
            raise InputDataError(f"reference row {row}: high/low must be numeric")
        if high[i] <= 0 or low[i] <= 0:
            raise InputDataError(f"reference row {row}: prices must be positive")
        if low[i] > high[i]:
            raise InputDataError(f"reference row {row}: low {low[i]} exceeds high {high[i]}")
        if close_text[i] and (pd.isna(close[i]) or close[i] <= 0):
            raise InputDataError(f"reference row {row}: close must be a positive number")
    duplicated = days.duplicated()
    if duplicated.any():
        first = int(np.flatnonzero(duplicated.values)[0])
        raise InputDataError(f"reference row {first + 2}: duplicate day {days[first].date()}")

    frame = pd.DataFrame({"high": high.values, "low": low.values, "close": close.values}, index=pd.DatetimeIndex(days, name="day"))
    frame = frame.sort_index()
    logging.info(f"Loaded {len(frame)} reference days for {currency}")
    return ReferencePriceTable(frame=frame, currency=currency)


def label_transaction(tx, ref, high_multiplier=config.HIGH_MULTIPLIER, low_multiplier=config.LOW_MULTIPLIER):
    """Label one transaction (mapping with timestamp, unit_price, currency)."""
    currency = tx.get("currency", ref.currency) if hasattr(tx, "get") else ref.currency
    if currency is not None and str(currency).upper() != ref.currency:
        return TxLabel.UNCLASSIFIED
    entry = ref.lookup(tx["timestamp"])
    if entry is None:
        return TxLabel.UNCLASSIFIED
    price = tx["unit_price"]
    if price > high_multiplier * entry["high"]:
        return TxLabel.EHT
    if price < low_multiplier * entry["low"]:
        return TxLabel.ELT
    return TxLabel.NMT


def label_transactions(transactions, ref, high_multiplier=config.HIGH_MULTIPLIER, low_multiplier=config.LOW_MULTIPLIER):
    """Vectorized label_transaction over a transactions frame; returns a label array."""
    if transactions.empty:
        return np.array([], dtype=object)
    days = pd.to_datetime(transactions["timestamp"], utc=True).dt.tz_convert(None).dt.normalize()
    bands = ref.frame.reindex(days.values)
    high = bands["high"].values
    low = bands["low"].values
    price = transactions["unit_price"].values
    known = ~np.isnan(high)
    if "currency" in transactions.columns:
        known &= transactions["currency"].astype(str).str.upper().values == ref.currency

    labels = np.full(len(transactions), TxLabel.UNCLASSIFIED.value, dtype=object)
    with np.errstate(invalid="ignore"):
        labels[known] = TxLabel.NMT.value
        labels[known & (price > high_multiplier * high)] = TxLabel.EHT.value
        labels[known & (price < low_multiplier * low)] = TxLabel.ELT.value
    return labels


def make_labeler(ref, high_multiplier=config.HIGH_MULTIPLIER, low_multiplier=config.LOW_MULTIPLIER):
    def labeler(transactions):
        return label_transactions(transactions, ref, high_multiplier, low_multiplier)
    return labeler


def categorize_accounts(tuples):
    """Flag every account appearing as seller or buyer as EHA and/or ELA."""
    sides = pd.concat([
        pd.DataFrame({"account": tuples["seller"].values, "label": tuples["label"].values}),
        pd.DataFrame({"account": tuples["buyer"].values, "label": tuples["label"].values}),
    ], ignore_index=True)
    sides["is_eha"] = sides["label"] == TxLabel.EHT.value
    sides["is_ela"] = sides["label"] == TxLabel.ELT.value
    categories = sides.groupby("account")[["is_eha", "is_ela"]].any()
    categories["is_aba"] = categories["is_eha"] | categories["is_ela"]
    categories["is_nma"] = ~categories["is_aba"]
    return categories.sort_index()


def select_accounts(categories, kind):
    """Node filter for one of the graph kinds EHG/ELG/NMG/ABG/CG."""
    columns = {"EHG": "is_eha", "ELG": "is_ela", "ABG": "is_aba", "NMG": "is_nma"}
    if kind == "CG":
        return frozenset(categories.index.tolist())
    if kind not in columns:
        raise InputDataError(f"unknown graph kind {kind!r}")
    return frozenset(categories.index[categories[columns[kind]]].tolist())


def summarize(tuples, categories):
    """Accounts and transaction counts per category.

    #Tx of a category counts tuples whose seller and buyer both belong to it.
    """
    members = {
        "EHA": select_accounts(categories, "EHG"),
        "ELA": select_accounts(categories, "ELG"),
        "ABA": select_accounts(categories, "ABG"),
        "NMA": select_accounts(categories, "NMG"),
        "All": select_accounts(categories, "CG"),
    }
    labels = tuples["label"]
    rows = {}
    for name in CATEGORY_ROWS:
        accounts = members[name]
        inside = tuples["seller"].isin(accounts) & tuples["buyer"].isin(accounts)
        eht = int((inside & (labels == TxLabel.EHT.value)).sum())
        elt = int((inside & (labels == TxLabel.ELT.value)).sum())
        rows[name] = {"accounts": len(accounts), "tx": int(inside.sum()), "abt": eht + elt, "eht": eht, "elt": elt}
    stats = pd.DataFrame.from_dict(rows, orient="index")[STAT_COLUMNS]
    stats.index.name = "category"

    all_abnormal = int(labels.isin([TxLabel.EHT.value, TxLabel.ELT.value]).sum())
    if stats.at["All", "abt"] != all_abnormal:
        raise InvariantViolation(f"#ABT(All)={stats.at['All', 'abt']} but {all_abnormal} abnormal tuples exist")
    if stats.at["NMA", "abt"] != 0:
        raise InvariantViolation("NMA accounts carry abnormal transactions")
    if stats.at["ABA", "accounts"] + stats.at["NMA", "accounts"] != stats.at["All", "accounts"]:
        raise InvariantViolation("ABA and NMA do not partition the accounts")
    return stats


def summary_findings(stats):
    """Ratios read off the category table."""
    all_tx = stats.at["All", "tx"]
    all_accounts = stats.at["All", "accounts"]
    aba = stats.loc["ABA"]
    return {
        "abnormal_account_share": float(aba["accounts"] / all_accounts) if all_accounts else 0.0,
        "abnormal_transaction_share": float(aba["abt"] / all_tx) if all_tx else 0.0,
        "normal_tx_among_aba_share": float((aba["tx"] - aba["abt"]) / all_tx) if all_tx else 0.0,
        "cross_category_transactions": int(all_tx - aba["tx"] - stats.at["NMA", "tx"]),
    }
