"""Trade-log ingestion: parse raw exchange rows and clean them into complete transactions.

Cleaning runs in three stages over the raw rows:
  1. drop rows repeating the (date, user_id, side, bitcoins) key,
  2. pair the buy and sell row of each trade_id, dropping single rows,
  3. drop repeated complete transactions.
Every discarded row is counted in a CleaningReport.
"""
import io
import os
import csv
import logging
from dataclasses import dataclass, asdict

import numpy as np
import pandas as pd

from core.errors import InputDataError, InvariantViolation

TABLE_I_COLUMNS = ["Trade_Id", "Date", "User_Id", "Type", "Currency", "Bitcoins", "Money", "User_Country", "User_State"]
RECORD_COLUMNS = ["line", "trade_id", "date", "user_id", "side", "currency", "bitcoins", "money", "country", "state"]
TRANSACTION_COLUMNS = ["trade_id", "timestamp", "seller", "buyer", "currency", "bitcoins", "money", "unit_price"]
TUPLE_COLUMNS = ["trade_id", "seller", "buyer", "volume", "timestamp", "day", "label"]

ROW_KEY = ["date", "user_id", "side", "bitcoins"]
TRANSACTION_KEY = ["trade_id", "timestamp", "seller", "buyer", "bitcoins", "money"]
PAIR_RTOL = 1e-8

_TIMESTAMP_RE = r"^(\d{4})[/-](\d{1,2})[/-](\d{1,2})\s+(\d{1,2}):(\d{1,2})(?::(\d{1,2}))?$"


@dataclass(frozen=True)
class ParseError:
    line: int
    field: str | None
    reason: str


@dataclass
class CleaningReport:
    rows_in: int = 0
    dropped_malformed: int = 0
    dropped_nonpositive: int = 0
    dropped_duplicate_rows: int = 0
    rows_after_field_dedup: int = 0
    dropped_single_rows: int = 0
    rows_after_single_row_removal: int = 0
    dropped_multi_rows: int = 0
    dropped_mismatched_rows: int = 0
    complete_transactions: int = 0
    dropped_duplicate_transactions: int = 0
    transactions_after_dedup: int = 0

    def to_dict(self):
        return asdict(self)

    def check_conservation(self):
        """rows_in = surviving rows + every drop counter."""
        accounted = (
            2 * self.transactions_after_dedup
            + self.dropped_malformed
            + self.dropped_nonpositive
            + self.dropped_duplicate_rows
            + self.dropped_single_rows
            + self.dropped_multi_rows
            + self.dropped_mismatched_rows
            + 2 * self.dropped_duplicate_transactions
        )
        if accounted != self.rows_in:
            raise InvariantViolation(f"cleaning counters do not balance: {accounted} accounted for {self.rows_in} rows in")
        stages = [
            self.rows_in,
            self.rows_in - self.dropped_malformed - self.dropped_nonpositive,
            self.rows_after_field_dedup,
            self.rows_after_single_row_removal,
            2 * self.complete_transactions,
            2 * self.transactions_after_dedup,
        ]
        if any(later > earlier for earlier, later in zip(stages, stages[1:])):
            raise InvariantViolation(f"cleaning stage counts increase: {stages}")
        return True


@dataclass
class PairingStats:
    single_rows: int = 0
    multi_rows: int = 0
    mismatched_rows: int = 0


def _empty_records():
    frame = pd.DataFrame({c: pd.Series(dtype=object) for c in RECORD_COLUMNS})
    return _coerce_record_types(frame)


def _coerce_record_types(frame):
    frame = frame.copy()
    frame["line"] = frame["line"].astype("int64")
    frame["date"] = pd.to_datetime(frame["date"], utc=True)
    frame["user_id"] = frame["user_id"].astype("int64")
    frame["bitcoins"] = frame["bitcoins"].astype("float64")
    frame["money"] = frame["money"].astype("float64")
    for col in ("trade_id", "side", "currency", "country", "state"):
        frame[col] = frame[col].astype(object)
    return frame.reset_index(drop=True)


def parse_timestamps(values):
    """Parse 'YYYY/M/D H:MM:SS' (padded or not, '/' or '-') into UTC timestamps; NaT when malformed."""
    parts = values.astype(str).str.strip().str.extract(_TIMESTAMP_RE)
    parts[5] = parts[5].fillna("0")
    iso = (
        parts[0] + "-" + parts[1].str.zfill(2) + "-" + parts[2].str.zfill(2) + " "
        + parts[3].str.zfill(2) + ":" + parts[4].str.zfill(2) + ":" + parts[5].str.zfill(2)
    )
    return pd.to_datetime(iso, format="%Y-%m-%d %H:%M:%S", errors="coerce", utc=True)


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        try:
            return open(source, encoding="utf-8-sig", newline="")
        except OSError as e:
            raise InputDataError(f"cannot read trade log {source}: {e}") from e
    if isinstance(source, (io.RawIOBase, io.BufferedIOBase)):
        return io.TextIOWrapper(source, encoding="utf-8-sig", newline="")
    return source


def parse_records(source, delimiter=",", header="auto"):
    """Tokenize a Table I trade log into typed records.

    `header` is True, False or "auto" (skip the first non-blank line when it
    starts with Trade_Id). A leading UTF-8 byte order mark is ignored.
    Returns (records frame, list of ParseError); every data line ends up in
    exactly one of the two.
    """
    stream = _open_text(source)
    try:
        try:
            lines = list(enumerate(csv.reader(stream, delimiter=delimiter), start=1))
        except (OSError, UnicodeDecodeError, csv.Error) as e:
            raise InputDataError(f"cannot read trade log: {e}") from e
    finally:
        if isinstance(source, (str, os.PathLike)):
            stream.close()

    errors = []
    rows = []
    first = True
    for lineno, fields in lines:
        if not fields or all(not f.strip() for f in fields):
            continue
        fields = [f.strip() for f in fields]
        if first:
            fields[0] = fields[0].lstrip("\ufeff")
        is_header = first and (header is True or (header == "auto" and fields[0].lower() == "trade_id"))
        first = False
        if is_header:
            continue
        if len(fields) < 7 or len(fields) > 9:
            errors.append(ParseError(lineno, None, f"expected 7 to 9 fields, got {len(fields)}"))
            continue
        fields = fields + [""] * (9 - len(fields))
        rows.append([lineno] + fields)

    if not rows:
        return _empty_records(), errors

    raw = pd.DataFrame(rows, columns=RECORD_COLUMNS)
    checks = {}
    checks["trade_id"] = raw["trade_id"].str.fullmatch(r"\d+")
    dates = parse_timestamps(raw["date"])
    checks["date"] = dates.notna()
    user_ids = pd.to_numeric(raw["user_id"], errors="coerce")
    checks["user_id"] = user_ids.notna() & (user_ids == np.floor(user_ids))
    sides = raw["side"].str.lower()
    checks["side"] = sides.isin(["buy", "sell"])
    checks["currency"] = raw["currency"].str.len() > 0
    bitcoins = pd.to_numeric(raw["bitcoins"], errors="coerce")
    checks["bitcoins"] = bitcoins.notna() & np.isfinite(bitcoins)
    money = pd.to_numeric(raw["money"], errors="coerce")
    checks["money"] = money.notna() & np.isfinite(money)

    ok = pd.Series(True, index=raw.index)
    for name, passed in checks.items():
        failed = ok & ~passed.fillna(False).astype(bool)
        for i in raw.index[failed]:
            errors.append(ParseError(int(raw.at[i, "line"]), name, f"invalid {name}: {raw.at[i, name]!r}"))
        ok &= ~failed

    records = pd.DataFrame({
        "line": raw["line"],
        "trade_id": raw["trade_id"],
        "date": dates,
        "user_id": user_ids,
        "side": sides,
        "currency": raw["currency"].str.upper(),
        "bitcoins": bitcoins,
        "money": money,
        "country": raw["country"],
        "state": raw["state"],
    })[ok]
    errors.sort(key=lambda e: e.line)
    return _coerce_record_types(records), errors


def drop_nonpositive(records):
    keep = (records["bitcoins"] > 0) & (records["money"] > 0)
    return records[keep].reset_index(drop=True), int((~keep).sum())


def dedup_rows(records):
    """Keep the first row per (date, user_id, side, bitcoins)."""
    return records.drop_duplicates(subset=ROW_KEY, keep="first").reset_index(drop=True)


def pair_transactions(records):
    """Join the buy and sell row of every trade_id into one complete transaction.

    Returns (transactions, PairingStats). Trade ids with one row, more than two
    rows, two rows on the same side, or sides disagreeing on bitcoins/money are
    dropped and counted, never guessed.
    """
    stats = PairingStats()
    if records.empty:
        return _empty_transactions(), stats

    sizes = records.groupby("trade_id", sort=False)["side"].transform("size")
    stats.single_rows = int((sizes == 1).sum())
    stats.multi_rows = int((sizes > 2).sum())
    paired = records[sizes == 2]

    buys = paired[paired["side"] == "buy"].set_index("trade_id")
    sells = paired[paired["side"] == "sell"].set_index("trade_id")
    joined = buys.join(sells, how="inner", lsuffix="_buy", rsuffix="_sell")

    consistent = (
        np.isclose(joined["bitcoins_buy"], joined["bitcoins_sell"], rtol=PAIR_RTOL, atol=0.0)
        & np.isclose(joined["money_buy"], joined["money_sell"], rtol=PAIR_RTOL, atol=0.0)
    )
    stats.mismatched_rows = len(paired) - 2 * int(consistent.sum())
    joined = joined[consistent]

    transactions = pd.DataFrame({
        "trade_id": joined.index.astype(object),
        "timestamp": np.minimum(joined["date_buy"].values, joined["date_sell"].values),
        "seller": joined["user_id_sell"].values,
        "buyer": joined["user_id_buy"].values,
        "currency": joined["currency_buy"].values,
        "bitcoins": joined["bitcoins_buy"].values,
        "money": joined["money_buy"].values,
    })
    transactions["timestamp"] = pd.to_datetime(transactions["timestamp"], utc=True)
    transactions["unit_price"] = transactions["money"] / transactions["bitcoins"]
    transactions = transactions.sort_values(["timestamp", "trade_id"], kind="stable").reset_index(drop=True)
    logging.info(f"Paired {len(transactions)} transactions; dropped {stats.single_rows} single, "
                 f"{stats.multi_rows} multi, {stats.mismatched_rows} mismatched rows")
    return transactions[TRANSACTION_COLUMNS], stats


def _empty_transactions():
    frame = pd.DataFrame({c: pd.Series(dtype=object) for c in TRANSACTION_COLUMNS})
    frame["timestamp"] = pd.to_datetime(frame["timestamp"], utc=True)
    for col in ("seller", "buyer"):
        frame[col] = frame[col].astype("int64")
    for col in ("bitcoins", "money", "unit_price"):
        frame[col] = frame[col].astype("float64")
    return frame


def dedup_complete(transactions):
    """Drop repeated complete transactions, keeping the first.

    After dedup_rows and pair_transactions this stage finds nothing to drop:
    a repeated transaction shares its trade_id with the original, so its
    rows either collapse in dedup_rows or push the group past two rows.
    It stays as a guard for transactions built outside that path.
    """
    return transactions.drop_duplicates(subset=TRANSACTION_KEY, keep="first").reset_index(drop=True)


def clean_records(records, n_malformed=0):
    """Run the cleaning stages over parsed records. Returns (transactions, CleaningReport)."""
    report = CleaningReport(rows_in=len(records) + n_malformed, dropped_malformed=n_malformed)
    records, report.dropped_nonpositive = drop_nonpositive(records)

    deduped = dedup_rows(records)
    report.dropped_duplicate_rows = len(records) - len(deduped)
    report.rows_after_field_dedup = len(deduped)

    transactions, stats = pair_transactions(deduped)
    report.dropped_single_rows = stats.single_rows
    report.rows_after_single_row_removal = len(deduped) - stats.single_rows
    report.dropped_multi_rows = stats.multi_rows
    report.dropped_mismatched_rows = stats.mismatched_rows
    report.complete_transactions = len(transactions)

    unique = dedup_complete(transactions)
    report.dropped_duplicate_transactions = len(transactions) - len(unique)
    report.transactions_after_dedup = len(unique)

    report.check_conservation()
    logging.info(f"Cleaning report: {report.to_dict()}")
    return unique, report


def read_trade_log(source, delimiter=",", header="auto"):
    """Parse and clean a trade log. Returns (transactions, CleaningReport, parse errors)."""
    records, errors = parse_records(source, delimiter=delimiter, header=header)
    for err in errors[:20]:
        logging.warning(f"line {err.line}: {err.reason}")
    transactions, report = clean_records(records, n_malformed=len(errors))
    return transactions, report, errors


def to_tuples(transactions, labeler):
    """One (S, B, v, t, l) tuple per transaction.

    `labeler` maps the transactions frame to one label per row (see
    classify.make_labeler).
    """
    labels = np.asarray(labeler(transactions), dtype=object)
    if len(labels) != len(transactions):
        raise InvariantViolation(f"labeler returned {len(labels)} labels for {len(transactions)} transactions")
    tuples = pd.DataFrame({
        "trade_id": transactions["trade_id"].values,
        "seller": transactions["seller"].values.astype("int64"),
        "buyer": transactions["buyer"].values.astype("int64"),
        "volume": transactions["bitcoins"].values.astype("float64"),
        "timestamp": pd.to_datetime(transactions["timestamp"], utc=True).values,
        "label": labels,
    })
    tuples["timestamp"] = pd.to_datetime(tuples["timestamp"], utc=True)
    tuples["day"] = tuples["timestamp"].dt.tz_convert(None).dt.normalize()
    return tuples[TUPLE_COLUMNS]


def save_transactions(transactions, path):
    out = transactions.copy()
    out["timestamp"] = out["timestamp"].dt.strftime("%Y-%m-%d %H:%M:%S")
    out.to_csv(path, index=False, lineterminator="\n")


def load_transactions(path):
    try:
        frame = pd.read_csv(path, dtype={"trade_id": str, "currency": str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InputDataError(f"cannot read cleaned transactions {path}: {e}") from e
    missing = [c for c in TRANSACTION_COLUMNS if c not in frame.columns]
    if missing:
        raise InputDataError(f"{path} is missing columns {missing}")
    frame["timestamp"] = pd.to_datetime(frame["timestamp"], format="%Y-%m-%d %H:%M:%S", utc=True)
    frame["trade_id"] = frame["trade_id"].astype(object)
    return frame[TRANSACTION_COLUMNS]
