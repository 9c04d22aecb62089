"""Correlating base-network activity with the log-transformed exchange price."""
import logging
from dataclasses import dataclass, asdict

import numpy as np
import pandas as pd
from scipy import stats

from core.errors import InputDataError

LOG_BASE = 1000.0
METHODS = ("pearson", "spearman", "kendall")


@dataclass
class PriceSeries:
    days: list
    P: np.ndarray
    B: np.ndarray


@dataclass
class PriceFit:
    c0: float
    coefficients: np.ndarray
    fitted: np.ndarray
    N: int


@dataclass
class CorrelationTriple:
    pearson: float
    spearman: float
    kendall: float

    def to_dict(self):
        return asdict(self)


def log_price(P):
    """B(t) = log_1000 P(t)."""
    P = np.asarray(P, dtype=float)
    if np.any(~np.isfinite(P)) or np.any(P <= 0):
        raise InputDataError("prices must be positive to take the log transform")
    return np.log(P) / np.log(LOG_BASE)


def price_series(days, closes):
    days = [pd.Timestamp(d) for d in days]
    if any(b <= a for a, b in zip(days, days[1:])):
        raise InputDataError("price days must be strictly increasing")
    P = np.asarray(closes, dtype=float)
    return PriceSeries(days=days, P=P, B=log_price(P))


def align_price(matrix, ref):
    """Drop matrix rows whose day has no close price; returns (matrix, PriceSeries, n_dropped).

    Works on the raw matrix so normalization and SVD are redone on the kept days.
    """
    if matrix.normalized:
        raise InputDataError("align_price expects the raw (unnormalized) matrix")
    closes = ref.close_series().reindex(pd.DatetimeIndex(matrix.days))
    keep = closes.notna().values & (closes.fillna(0).values > 0)
    dropped = int((~keep).sum())
    if dropped:
        logging.warning(f"Dropping {dropped} of {len(keep)} days without a close price")
    reduced = matrix.drop_days(keep)
    if reduced.T < 2:
        raise InputDataError("fewer than two days have both activity rows and close prices")
    return reduced, price_series(reduced.days, closes.values[keep]), dropped


def correlate(x, y, method="pearson"):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise InputDataError(f"series lengths differ: {x.size} vs {y.size}")
    if x.size < 2:
        raise InputDataError("correlation needs at least two points")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise InputDataError(f"{method} correlation is undefined for a constant series")
    if method == "pearson":
        value = stats.pearsonr(x, y)[0]
    elif method == "spearman":
        value = stats.spearmanr(x, y)[0]
    elif method == "kendall":
        value = stats.kendalltau(x, y, variant="b")[0]
    else:
        raise InputDataError(f"unknown correlation method {method!r}")
    if not np.isfinite(value):
        raise InputDataError(f"{method} correlation is undefined for these series")
    return float(np.clip(value, -1.0, 1.0))


def correlation_triple(x, y):
    return CorrelationTriple(**{m: correlate(x, y, m) for m in METHODS})


def _log_prices(B):
    return B.B if isinstance(B, PriceSeries) else np.asarray(B, dtype=float)


def fit_price(B, svd, N):
    """B(t) ~ c0 + sum_i c_i u_i(t) with c0 = mean(B) and c_i = (B - c0) . u_i."""
    values = _log_prices(B)
    if values.size != svd.U.shape[0]:
        raise InputDataError(f"price series has {values.size} days, SVD has {svd.U.shape[0]}")
    if isinstance(B, PriceSeries) and svd.days and [pd.Timestamp(d) for d in svd.days] != B.days:
        raise InputDataError("price days are not aligned with the SVD day axis")
    if not 0 <= N <= svd.U.shape[1]:
        raise InputDataError(f"N={N} outside 0..{svd.U.shape[1]}")
    c0 = float(values.mean())
    U = svd.U[:, :N]
    coefficients = U.T @ (values - c0)
    fitted = c0 + U @ coefficients
    return PriceFit(c0=c0, coefficients=coefficients, fitted=fitted, N=N)


def evaluate_fit(fit, B):
    return correlation_triple(fit.fitted, _log_prices(B))


def fit_report(price, svd, N):
    """Correlations of u_1 alone and of the fitted-N combination against B(t)."""
    fit = fit_price(price, svd, N)
    report = {"N": N, "c0": fit.c0, "c": fit.coefficients.tolist()}
    try:
        report["first_base_network"] = correlation_triple(svd.U[:, 0], price.B).to_dict()
    except InputDataError as e:
        logging.warning(f"u_1 correlation undefined: {e}")
        report["first_base_network"] = None
    try:
        report["fitted"] = evaluate_fit(fit, price).to_dict()
    except InputDataError as e:
        logging.warning(f"fitted correlation undefined: {e}")
        report["fitted"] = None
    return fit, report
