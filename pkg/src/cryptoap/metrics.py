"""Statistical kernels shared by the diagnostics, sorts, risk premia and events."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import pandas as pd
from scipy import stats

WEEKS_PER_YEAR = 52
MI_BINS = 10
MI_MIN_PAIRS = 50


class RankDeficientError(ValueError):
    """Design matrix does not have full column rank."""


@dataclass(frozen=True)
class RegressionResult:
    coefficients: np.ndarray
    se: np.ndarray
    r_squared: float
    residuals: np.ndarray
    n_obs: int
    lags_used: int | None = None  # None: plain OLS errors

    @property
    def t_stats(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coefficients / self.se


def add_constant(x) -> np.ndarray:
    x = np.asarray(x, float)
    if x.ndim == 1:
        x = x[:, None]
    return np.column_stack([np.ones(x.shape[0]), x])


def ols(y, X) -> RegressionResult:
    """Least squares of ``y`` on ``X`` (``X`` carries its own intercept column)."""
    y = np.asarray(y, float)
    X = np.asarray(X, float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if y.shape != (n,):
        raise ValueError("y and X disagree on the number of observations")
    if n <= k:
        raise ValueError(f"need more observations ({n}) than regressors ({k})")
    if np.linalg.matrix_rank(X) < k:
        raise RankDeficientError("design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    sigma2 = resid @ resid / (n - k)
    xtx_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(np.clip(np.diag(xtx_inv) * sigma2, 0.0, None))
    tss = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - (resid @ resid) / tss if tss > 0 else (1.0 if resid @ resid == 0 else 0.0)
    return RegressionResult(coef, se, float(min(max(r2, 0.0), 1.0)), resid, n)


def bartlett_lags(n: int) -> int:
    """Automatic lag length ``floor(4 (n/100)^(2/9))``."""
    return int(math.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


def hac_covariance(X, residuals, lags: int) -> np.ndarray:
    X = np.asarray(X, float)
    u = np.asarray(residuals, float)
    n = X.shape[0]
    if lags < 0:
        raise ValueError("lags must be non-negative")
    if lags >= n:
        raise ValueError(f"lags ({lags}) must be smaller than the sample size ({n})")
    xu = X * u[:, None]
    S = xu.T @ xu
    for lag in range(1, lags + 1):
        w = 1.0 - lag / (lags + 1.0)
        g = xu[lag:].T @ xu[:-lag]
        S += w * (g + g.T)
    bread = np.linalg.inv(X.T @ X)
    return bread @ S @ bread


def newey_west_se(result: RegressionResult, X, lags: int | None = None) -> np.ndarray:
    """Bartlett-kernel HAC standard errors; ``lags=None`` uses :func:`bartlett_lags`."""
    X = np.asarray(X, float)
    if X.ndim == 1:
        X = X[:, None]
    L = bartlett_lags(X.shape[0]) if lags is None else int(lags)
    cov = hac_covariance(X, result.residuals, L)
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def ols_hac(y, X, lags: int | None = None) -> RegressionResult:
    res = ols(y, X)
    X = np.asarray(X, float)
    L = bartlett_lags(res.n_obs) if lags is None else int(lags)
    return replace(res, se=newey_west_se(res, X, L), lags_used=L)


def white_se(result: RegressionResult, X) -> np.ndarray:
    return newey_west_se(result, X, 0)


def significance_stars(t: float) -> str:
    """Two-sided normal critical values at 10/5/1%."""
    if not np.isfinite(t):
        return ""
    a = abs(t)
    if a > stats.norm.ppf(0.995):
        return "***"
    if a > stats.norm.ppf(0.975):
        return "**"
    if a > stats.norm.ppf(0.95):
        return "*"
    return ""


# ---------------------------------------------------------------------------
# correlation and PCA

def pearson(x, y) -> float:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 2:
        return math.nan
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(dx @ dx), math.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        return math.nan
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


def pearson_matrix(columns) -> pd.DataFrame | np.ndarray:
    """Pairwise-complete Pearson matrix; zero-variance columns give NaN rows/columns."""
    is_frame = isinstance(columns, pd.DataFrame)
    M = columns.to_numpy(float) if is_frame else np.asarray(columns, float)
    k = M.shape[1]
    out = np.full((k, k), np.nan)
    for i in range(k):
        for j in range(i, k):
            v = pearson(M[:, i], M[:, j])
            if i == j and np.isfinite(v):
                v = 1.0
            out[i, j] = out[j, i] = v
    if is_frame:
        return pd.DataFrame(out, index=columns.columns, columns=columns.columns)
    return out


def rolling_pearson(x, y, window: int) -> np.ndarray:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    out = np.full(x.size, np.nan)
    for end in range(window, x.size + 1):
        out[end - 1] = pearson(x[end - window:end], y[end - window:end])
    return out


@dataclass(frozen=True)
class PCResult:
    loadings: np.ndarray
    explained_variance_ratio: float
    scores: np.ndarray
    names: tuple = ()


def first_pc(columns) -> PCResult:
    """Leading eigenvector of the correlation matrix after standardizing each column.

    Sign convention: the largest-magnitude loading is positive.
    """
    if isinstance(columns, pd.DataFrame):
        names = tuple(columns.columns)
        M = columns.to_numpy(float)
    else:
        M = np.asarray(columns, float)
        names = tuple(range(M.shape[1]))
    n, k = M.shape
    if k < 2 or n < 2:
        raise ValueError("first_pc needs at least two rows and two columns")
    sd = M.std(axis=0, ddof=1)
    for j in range(k):
        if not np.isfinite(sd[j]) or sd[j] == 0:
            raise ValueError(f"column {names[j]!r} is constant")
    Z = (M - M.mean(axis=0)) / sd
    C = (Z.T @ Z) / (n - 1)
    vals, vecs = np.linalg.eigh(C)
    v = vecs[:, -1]
    v = v / np.linalg.norm(v)
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    ratio = float(vals[-1] / vals.sum())
    return PCResult(v, min(max(ratio, 0.0), 1.0), Z @ v, names)


# ---------------------------------------------------------------------------
# mutual information

def equal_frequency_bins(x, bins: int = MI_BINS) -> np.ndarray:
    """Bin labels ``0..bins-1`` from average ranks, so tied values share a bin."""
    x = np.asarray(x, float)
    r = stats.rankdata(x, method="average")
    return np.minimum(((r - 1.0) * bins / x.size).astype(int), bins - 1)


def mi_from_table(counts) -> float:
    """Plug-in mutual information (nats) of a contingency table of counts."""
    c = np.asarray(counts, float)
    tot = c.sum()
    if tot <= 0:
        return math.nan
    p = c / tot
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(max((p[nz] * np.log(p[nz] / (px @ py)[nz])).sum(), 0.0))


def mutual_information(x, y, bins: int = MI_BINS) -> float:
    """Plug-in MI on a ``bins x bins`` equal-frequency discretization of each margin."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < MI_MIN_PAIRS:
        raise ValueError(f"mutual information needs at least {MI_MIN_PAIRS} pairs, got {x.size}")
    bx, by = equal_frequency_bins(x, bins), equal_frequency_bins(y, bins)
    table = np.zeros((bins, bins))
    np.add.at(table, (bx, by), 1.0)
    return mi_from_table(table)


# ---------------------------------------------------------------------------
# performance

@dataclass(frozen=True)
class PerfStats:
    mean_ann: float
    vol_ann: float
    sharpe_ann: float
    geometric_ann: float
    skew: float
    kurtosis: float
    pct_positive: float
    n_obs: int


def perf_stats(returns, periods_per_year: int = WEEKS_PER_YEAR) -> PerfStats:
    """Annualized summary of a weekly (excess) return series; kurtosis is excess kurtosis."""
    r = np.asarray(returns, float)
    r = r[np.isfinite(r)]
    T = r.size
    if T < 8:
        raise ValueError(f"need at least 8 observations, got {T}")
    mu = r.mean()
    sd = r.std(ddof=1)
    sharpe = mu / sd * math.sqrt(periods_per_year) if sd > 0 else math.nan
    growth = np.prod(1.0 + r)
    geo = growth ** (periods_per_year / T) - 1.0 if growth > 0 else -1.0
    if sd > 0:
        skew = float(stats.skew(r, bias=False))
        kurt = float(stats.kurtosis(r, fisher=True, bias=False))
    else:
        skew = kurt = math.nan
    return PerfStats(float(mu * periods_per_year), float(sd * math.sqrt(periods_per_year)), float(sharpe),
                     float(geo), skew, kurt, float((r > 0).mean()), T)


def rolling_sharpe(returns, window: int, periods_per_year: int = WEEKS_PER_YEAR) -> np.ndarray:
    r = np.asarray(returns, float)
    out = np.full(r.size, np.nan)
    for end in range(window, r.size + 1):
        w = r[end - window:end]
        w = w[np.isfinite(w)]
        if w.size >= 2:
            sd = w.std(ddof=1)
            if sd > 0:
                out[end - 1] = w.mean() / sd * math.sqrt(periods_per_year)
    return out


def blend(returns_a, returns_b, w: float):
    """Weekly-rebalanced mix ``w * a + (1 - w) * b``."""
    if not 0.0 <= w <= 1.0:
        raise ValueError("weight must lie in [0, 1]")
    if isinstance(returns_a, pd.Series) or isinstance(returns_b, pd.Series):
        if not (isinstance(returns_a, pd.Series) and isinstance(returns_b, pd.Series)):
            raise ValueError("both series must be indexed to check alignment")
        if not returns_a.index.equals(returns_b.index):
            raise ValueError("series are not aligned on the same dates")
        return w * returns_a + (1.0 - w) * returns_b
    a = np.asarray(returns_a, float)
    b = np.asarray(returns_b, float)
    if a.shape != b.shape:
        raise ValueError("series are not aligned")
    return w * a + (1.0 - w) * b


def tangency_weight(mean_a: float, mean_b: float, var_a: float, var_b: float, cov_ab: float) -> float:
    """Two-asset maximum-Sharpe weight on ``a`` (fully invested, excess returns)."""
    num = mean_a * var_b - mean_b * cov_ab
    den = mean_a * var_b + mean_b * var_a - (mean_a + mean_b) * cov_ab
    return num / den


# ---------------------------------------------------------------------------
# bootstrap

def rng_for(seed: int, tag: str) -> np.random.Generator:
    """Random stream for one call, keyed by ``(seed, tag)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(tag.encode())]))


def bootstrap_se(values, statistic: Callable = np.mean, B: int = 10_000, seed: int = 0,
                 tag: str = "bootstrap") -> float:
    """Standard deviation of ``statistic`` over ``B`` resamples with replacement."""
    v = np.asarray(values, float)
    if v.size == 0:
        raise ValueError("cannot bootstrap an empty vector")
    if B < 100:
        raise ValueError("B must be at least 100")
    rng = rng_for(seed, tag)
    idx = rng.integers(0, v.size, size=(B, v.size))
    draws = v[idx]
    if statistic is np.mean:
        stat = draws.mean(axis=1)
    else:
        stat = np.array([statistic(row) for row in draws])
    return float(stat.std(ddof=1))
