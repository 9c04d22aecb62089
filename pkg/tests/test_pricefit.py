import io

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from core import classify, pricefit, temporal
from core.errors import InputDataError
from core.temporal import GraphTimeSeriesMatrix


def _svd(seed, T=25, L=120):
    rng = np.random.default_rng(seed)
    X = rng.exponential(1.0, (T, L)) * (rng.random((T, L)) < 0.4)
    days = list(pd.date_range("2013-01-01", periods=T, freq="D"))
    m = GraphTimeSeriesMatrix(days=days, edge_index=[(i, i + 1) for i in range(L)], X=X)
    return temporal.compute_svd(temporal.normalize_matrix(m))


def test_log_price_base():
    assert pricefit.log_price([1000.0, 1.0, 1e6]) == pytest.approx([1.0, 0.0, 2.0])
    with pytest.raises(InputDataError):
        pricefit.log_price([10.0, 0.0])


def test_full_rank_fit_reproduces_price():
    svd = _svd(0)
    rng = np.random.default_rng(1)
    B = rng.normal(0.4, 0.1, svd.U.shape[0])
    fit = pricefit.fit_price(B, svd, svd.U.shape[1])
    assert np.abs(fit.fitted - B).max() <= 1e-8


def test_residual_is_orthogonal_to_used_components():
    svd = _svd(2)
    B = np.random.default_rng(3).normal(0.4, 0.1, svd.U.shape[0])
    fit = pricefit.fit_price(B, svd, 5)
    residual = B - fit.fitted
    assert np.abs(svd.U[:, :5].T @ residual).max() <= 1e-10
    assert fit.c0 == pytest.approx(B.mean())


def test_planted_coefficients_are_recovered():
    svd = _svd(4)
    rng = np.random.default_rng(5)
    B = 0.5 + 2.0 * svd.U[:, 0] - 1.0 * svd.U[:, 1] + rng.normal(0, 1e-3, svd.U.shape[0])
    fit = pricefit.fit_price(B, svd, 3)
    assert fit.coefficients[0] == pytest.approx(2.0, abs=0.05)
    assert fit.coefficients[1] == pytest.approx(-1.0, abs=0.05)
    assert fit.coefficients[2] == pytest.approx(0.0, abs=0.05)


def test_pearson_never_drops_as_components_are_added():
    svd = _svd(6)
    B = np.random.default_rng(7).normal(0.4, 0.1, svd.U.shape[0])
    squared = [pricefit.evaluate_fit(pricefit.fit_price(B, svd, n), B).pearson ** 2 for n in range(1, svd.U.shape[1] + 1)]
    assert all(b >= a - 1e-12 for a, b in zip(squared, squared[1:]))
    assert squared[-1] == pytest.approx(1.0)


def test_fit_rejects_bad_inputs():
    svd = _svd(8)
    with pytest.raises(InputDataError):
        pricefit.fit_price(np.ones(svd.U.shape[0] + 1), svd, 2)
    with pytest.raises(InputDataError):
        pricefit.fit_price(np.ones(svd.U.shape[0]), svd, svd.U.shape[1] + 1)


def test_zero_components_give_constant_fit():
    svd = _svd(9)
    B = np.linspace(0.3, 0.5, svd.U.shape[0])
    fit = pricefit.fit_price(B, svd, 0)
    assert np.all(fit.fitted == fit.c0)
    with pytest.raises(InputDataError, match="constant"):
        pricefit.evaluate_fit(fit, B)


def test_kendall_tau_b_small_case():
    assert pricefit.correlate([1, 2, 3], [1, 3, 2], "kendall") == pytest.approx(1 / 3)
    triple = pricefit.correlation_triple([1, 2, 3, 4], [2, 4, 6, 8])
    assert triple.to_dict() == pytest.approx({"pearson": 1.0, "spearman": 1.0, "kendall": 1.0})


def test_correlation_rejects_degenerate_series():
    with pytest.raises(InputDataError):
        pricefit.correlate([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(InputDataError):
        pricefit.correlate([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(InputDataError):
        pricefit.correlate([1.0, 2.0], [2.0, 1.0], "distance")


def test_align_price_drops_days_without_close():
    days = list(pd.date_range("2013-01-01", periods=6, freq="D"))
    X = np.arange(6 * 8, dtype=float).reshape(6, 8) + 1.0
    m = GraphTimeSeriesMatrix(days=days, edge_index=[(i, i + 1) for i in range(8)], X=X)
    csv = "date,open,high,low,close\n" + "".join(
        f"{d:%Y-%m-%d},1,2,1,{'' if i == 2 else 10 + i}\n" for i, d in enumerate(days)
    )
    ref = classify.load_reference(io.StringIO(csv))
    reduced, price, dropped = pricefit.align_price(m, ref)
    assert dropped == 1 and reduced.T == 5
    assert price.days == [d for i, d in enumerate(days) if i != 2]
    assert price.P.tolist() == [10, 11, 13, 14, 15]
    assert np.array_equal(reduced.X, np.delete(X, 2, axis=0))
    with pytest.raises(InputDataError):
        pricefit.align_price(temporal.normalize_matrix(m), ref)


def test_fit_checks_day_alignment():
    svd = _svd(10, T=5, L=20)
    shifted = pricefit.price_series(pd.date_range("2014-01-01", periods=5, freq="D"), [1, 2, 3, 4, 5])
    with pytest.raises(InputDataError, match="aligned"):
        pricefit.fit_price(shifted, svd, 2)


finite_series = st.lists(st.floats(min_value=-100, max_value=100, allow_nan=False), min_size=3, max_size=30, unique=True)


@settings(max_examples=50, deadline=None)
@given(finite_series, st.sampled_from([np.exp, np.arctan, lambda v: v ** 3]))
def test_rank_correlations_ignore_monotone_transforms(x, transform):
    x = np.asarray(x)
    y = np.cos(x)
    if np.ptp(y) == 0:
        return
    tx = transform(x)
    if np.unique(tx).size < x.size:
        return
    for method in ("spearman", "kendall"):
        assert pricefit.correlate(tx, y, method) == pytest.approx(pricefit.correlate(x, y, method), abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_projection_equals_least_squares(seed):
    svd = _svd(100 + seed, T=8, L=30)
    B = np.random.default_rng(seed).normal(0.4, 0.1, 8)
    positive = int((svd.sigma > 1e-9 * svd.sigma.max()).sum())
    for N in range(positive + 1):
        design = np.column_stack([np.ones(8), svd.U[:, :N]])
        solution, *_ = np.linalg.lstsq(design, B, rcond=None)
        fit = pricefit.fit_price(B, svd, N)
        assert fit.c0 == pytest.approx(solution[0], abs=1e-9)
        assert np.allclose(fit.coefficients, solution[1:], atol=1e-9)
        assert np.allclose(fit.fitted, design @ solution, atol=1e-9)
