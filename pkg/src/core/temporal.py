"""Daily snapshot matrices over a frozen edge universe and their singular value decomposition."""
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg

from core import config
from core.errors import InputDataError, InvariantViolation

ORTHONORMALITY_TOL = 1e-8


@dataclass
class GraphTimeSeriesMatrix:
    days: list
    edge_index: list
    X: np.ndarray
    normalized: bool = False

    @property
    def T(self):
        return self.X.shape[0]

    @property
    def L(self):
        return self.X.shape[1]

    def drop_days(self, keep_mask):
        keep_mask = np.asarray(keep_mask, dtype=bool)
        return GraphTimeSeriesMatrix(
            days=[d for d, k in zip(self.days, keep_mask) if k],
            edge_index=list(self.edge_index),
            X=self.X[keep_mask].copy(),
            normalized=self.normalized,
        )


@dataclass
class SvdResult:
    sigma: np.ndarray
    U: np.ndarray
    V_truncated: np.ndarray
    rank_kept: int
    days: list = field(default_factory=list)
    edge_index: list = field(default_factory=list)


@dataclass
class BaseNetwork:
    index: int
    edge_weights: dict
    sigma_i: float


def _as_day(value):
    day = pd.Timestamp(value)
    if day.tzinfo is not None:
        day = day.tz_convert(None)
    return day.normalize()


def build_snapshot_series(tuples, window=(None, None), node_filter=None):
    """T x L matrix of daily edge weights.

    The edge universe is the aggregate graph of the in-window tuples passing
    `node_filter`, in lexicographic (seller, buyer) order; every calendar day
    of the window gets a row, empty days included.
    """
    start, end = window
    selected = tuples
    if node_filter is not None:
        selected = selected[selected["seller"].isin(node_filter) & selected["buyer"].isin(node_filter)]
    if start is not None:
        selected = selected[selected["day"] >= _as_day(start)]
    if end is not None:
        selected = selected[selected["day"] <= _as_day(end)]
    if selected.empty:
        raise InputDataError(f"no transactions inside window {start} .. {end}")

    first = _as_day(start) if start is not None else selected["day"].min()
    last = _as_day(end) if end is not None else selected["day"].max()
    days = pd.date_range(first, last, freq="D")

    daily = selected.groupby(["day", "seller", "buyer"], sort=True)["volume"].sum()
    edges = daily.index.droplevel("day").unique().sort_values()
    table = daily.unstack(["seller", "buyer"], fill_value=0.0).reindex(index=days, columns=edges, fill_value=0.0)
    X = table.to_numpy(dtype=np.float64)
    edge_index = [(int(s), int(b)) for s, b in edges]
    logging.info(f"Snapshot series: T={X.shape[0]} days x L={X.shape[1]} edges")
    return GraphTimeSeriesMatrix(days=list(days), edge_index=edge_index, X=X, normalized=False)


def normalize_matrix(m):
    """Row-normalize to unit sums (all-zero rows stay zero), then center every column."""
    if m.normalized:
        raise InputDataError("matrix is already normalized")
    X = m.X.astype(np.float64, copy=True)
    row_sums = X.sum(axis=1)
    nonzero = row_sums > 0
    X[nonzero] /= row_sums[nonzero, None]
    X -= X.mean(axis=0, keepdims=True)
    return GraphTimeSeriesMatrix(days=list(m.days), edge_index=list(m.edge_index), X=X, normalized=True)


def _rebase_null_space(U, null):
    """Re-span the sigma = 0 block of U so the constant direction is its last column."""
    block = U[:, null]
    e = np.full(U.shape[0], 1.0 / np.sqrt(U.shape[0]))
    w = block.T @ e
    norm = np.linalg.norm(w)
    if norm < 1.0 - 1e-6:
        return U
    constant = block @ (w / norm)
    others = block @ scipy.linalg.null_space(w[None, :])
    rebased = U.copy()
    rebased[:, null] = np.column_stack([others, constant])
    return rebased


def compute_svd(m, rank=None):
    """Thin SVD X = U S V^T of a normalized T x L matrix (T <= L).

    Singular values come sorted descending. Each (u_i, v_i) pair is flipped so
    the largest-magnitude entry of v_i is positive.
    """
    if not m.normalized:
        raise InputDataError("compute_svd expects a normalized matrix")
    T, L = m.X.shape
    if T > L:
        raise InputDataError(f"T={T} days exceeds L={L} edges; use a shorter window or a larger edge universe")
    try:
        U, s, Vt = scipy.linalg.svd(m.X, full_matrices=False)
    except np.linalg.LinAlgError:
        U, s, Vt = scipy.linalg.svd(m.X, full_matrices=False, lapack_driver="gesvd")

    tol = s.max() * max(T, L) * np.finfo(float).eps if s.size and s.max() > 0 else 0.0
    null = s <= tol
    s = np.where(null, 0.0, s)
    if null.any():
        U = _rebase_null_space(U, null)

    for i in range(Vt.shape[0]):
        j = int(np.argmax(np.abs(Vt[i])))
        if Vt[i, j] < 0:
            Vt[i] *= -1.0
            U[:, i] *= -1.0

    rank = T if rank is None else int(min(rank, T))
    result = SvdResult(sigma=s, U=U, V_truncated=Vt[:rank].T.copy(), rank_kept=rank, days=list(m.days), edge_index=list(m.edge_index))
    check_orthonormality(result)
    logging.info(f"SVD of {T}x{L}: top singular values {np.round(s[:5], 4).tolist()}")
    return result


def check_orthonormality(svd, tol=ORTHONORMALITY_TOL):
    gram_u = svd.U.T @ svd.U
    gram_v = svd.V_truncated.T @ svd.V_truncated
    residual = max(
        float(np.abs(gram_u - np.eye(gram_u.shape[0])).max(initial=0.0)),
        float(np.abs(gram_v - np.eye(gram_v.shape[0])).max(initial=0.0)),
    )
    if residual > tol:
        raise InvariantViolation(f"singular vectors are not orthonormal (residual {residual:.2e})")
    return residual


def base_network(svd, i, edge_index=None):
    """The i-th right-singular vector (1-based) as signed edge weights."""
    if not 1 <= i <= svd.rank_kept:
        raise InputDataError(f"base network {i} out of range 1..{svd.rank_kept}")
    edges = edge_index if edge_index is not None else svd.edge_index
    weights = svd.V_truncated[:, i - 1]
    return BaseNetwork(index=i, edge_weights=dict(zip(edges, weights.tolist())), sigma_i=float(svd.sigma[i - 1]))


def contribution_series(svd, i):
    """u_i(t): daily contribution of base network i (1-based)."""
    if not 1 <= i <= svd.U.shape[1]:
        raise InputDataError(f"contribution series {i} out of range 1..{svd.U.shape[1]}")
    return svd.U[:, i - 1].copy()


def _positive_count(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size == 0 or sigma.max() <= 0:
        raise InputDataError("all singular values are zero")
    return int((sigma > sigma.max() * sigma.size * np.finfo(float).eps).sum())


class BaseRankSelector:
    """Interface for scree-based rank selection"""
    def select(self, sigma):
        raise NotImplementedError


class FixedRank(BaseRankSelector):
    """Keep the first n base networks, capped at the number of nonzero singular values"""
    def __init__(self, n=config.N_BASE_NETWORKS):
        self.n = n

    def select(self, sigma):
        return min(self.n, _positive_count(sigma))


class ElbowRank(BaseRankSelector):
    """Point of the scree curve farthest from the chord joining its endpoints"""
    def select(self, sigma):
        _positive_count(sigma)
        y = np.asarray(sigma, dtype=float)
        x = np.arange(1, y.size + 1, dtype=float)
        if y.size < 3:
            return 1
        dx, dy = x[-1] - x[0], y[-1] - y[0]
        distance = np.abs(dy * (x - x[0]) - dx * (y - y[0])) / np.hypot(dx, dy)
        return int(np.argmax(distance)) + 1


def select_rank(sigma, method=config.RANK_METHOD, n=config.N_BASE_NETWORKS):
    if method == "fixed":
        selector = FixedRank(n)
    elif method == "elbow":
        selector = ElbowRank()
    else:
        raise InputDataError(f"unknown rank method {method!r}")
    rank = selector.select(sigma)
    logging.info(f"Rank selection ({method}): {rank}")
    return rank


def save_matrix(m, stem):
    """Write <stem>.npy and a <stem>.json sidecar with days and edge index."""
    np.save(f"{stem}.npy", m.X)
    sidecar = {
        "days": [d.strftime("%Y-%m-%d") for d in m.days],
        "edge_index": [[s, b] for s, b in m.edge_index],
        "normalized": m.normalized,
    }
    with open(f"{stem}.json", "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=1)


def load_matrix(stem):
    try:
        X = np.load(f"{stem}.npy")
        with open(f"{stem}.json", encoding="utf-8") as f:
            sidecar = json.load(f)
    except (OSError, ValueError) as e:
        raise InputDataError(f"cannot load matrix {stem}: {e}") from e
    days = [pd.Timestamp(d) for d in sidecar["days"]]
    edge_index = [(int(s), int(b)) for s, b in sidecar["edge_index"]]
    if X.shape != (len(days), len(edge_index)):
        raise InputDataError(f"matrix {stem} shape {X.shape} does not match its sidecar")
    return GraphTimeSeriesMatrix(days=days, edge_index=edge_index, X=X, normalized=bool(sidecar["normalized"]))
