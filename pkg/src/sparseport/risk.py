"""Sample covariance, oracle-approximating shrinkage and max-flat volatility."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from sparseport._io import fmt_float, write_csv

COV_WINDOW = 504
MIN_COV_WINDOW = 126
FLAT_DAYS = 63
DECAY_DAYS = 189


@dataclass(frozen=True)
class CovarianceEstimate:
    tickers: tuple[str, ...]
    matrix: np.ndarray
    shrinkage_rho: float
    n_obs: int
    as_of: date | None = None

    def to_csv(self, path: str | Path) -> None:
        rows = ([t, *map(fmt_float, row)] for t, row in zip(self.tickers, self.matrix))
        write_csv(path, ("ticker", *self.tickers), rows)


@dataclass(frozen=True)
class VolatilityScore:
    ticker: str
    score: float


def sample_covariance(returns: np.ndarray) -> np.ndarray:
    """Unbiased covariance of the rows of a (tickers x days) return matrix."""
    x = np.atleast_2d(np.asarray(returns, dtype=float))
    n = x.shape[1]
    if n < 2:
        raise ValueError("need at least 2 observations")
    centred = x - x.mean(axis=1, keepdims=True)
    s = centred @ centred.T / (n - 1)
    return (s + s.T) / 2


def oas_intensity(s: np.ndarray, n_obs: int) -> float:
    p = s.shape[0]
    if p == 1:
        return 0.0
    tr = np.trace(s)
    tr2 = float(np.sum(s * s))  # trace(S @ S) for symmetric S
    denom = (n_obs + 1.0 - 2.0 / p) * (tr2 - tr * tr / p)
    if denom <= 0.0:
        return 1.0
    num = (1.0 - 2.0 / p) * tr2 + tr * tr
    return float(min(1.0, max(0.0, num / denom)))


def oas_shrink(
    s: np.ndarray,
    n_obs: int,
    tickers: Sequence[str] | None = None,
    as_of: date | None = None,
    sym_tol: float = 1e-10,
) -> CovarianceEstimate:
    """Shrink ``s`` toward ``trace(s)/p * I`` with the OAS intensity.

    A 1x1 input is returned unchanged (intensity 0); an already spherical
    input gets intensity 1.
    """
    s = np.atleast_2d(np.asarray(s, dtype=float))
    p = s.shape[0]
    if s.shape != (p, p) or p < 1:
        raise ValueError("covariance must be a nonempty square matrix")
    if n_obs < 2:
        raise ValueError("n_obs must be at least 2")
    scale = max(1.0, float(np.max(np.abs(s))))
    if np.max(np.abs(s - s.T)) > sym_tol * scale:
        raise ValueError("covariance matrix is not symmetric")
    s = (s + s.T) / 2
    rho = oas_intensity(s, n_obs)
    mu = np.trace(s) / p
    shrunk = (1.0 - rho) * s
    shrunk[np.diag_indices(p)] += rho * mu
    labels = tuple(tickers) if tickers is not None else tuple(str(i) for i in range(p))
    return CovarianceEstimate(labels, shrunk, rho, int(n_obs), as_of)


def maxflat_kernel(length: int, flat: int = FLAT_DAYS, decay: int = DECAY_DAYS) -> np.ndarray:
    """Unnormalized weights, oldest first: linear ramp over ``decay`` days then flat ones."""
    ramp = np.arange(1, decay + 1, dtype=float) / (decay + 1)
    full = np.concatenate([ramp, np.ones(flat)])
    return full[-length:] if length < full.size else full


def maxflat_volatility(
    returns: Sequence[float],
    flat: int = FLAT_DAYS,
    decay: int = DECAY_DAYS,
    ticker: str = "",
) -> VolatilityScore:
    """Weighted population std of the most recent ``flat + decay`` returns.

    The newest ``flat`` returns get weight 1, the ``decay`` before them fall
    linearly toward 0 with age. Shorter series use the newest part of the
    kernel; fewer than ``flat`` returns is an error.
    """
    r = np.asarray(returns, dtype=float)
    if r.size < flat or r.size < 1:
        raise ValueError(f"need at least {flat} returns, got {r.size}")
    k = maxflat_kernel(min(r.size, flat + decay), flat, decay)
    x = r[-k.size :]
    w = k / k.sum()
    mean = w @ x
    var = w @ (x - mean) ** 2
    return VolatilityScore(ticker, float(np.sqrt(max(var, 0.0))))


def select_low_vol(universe: Sequence[str], scores: Mapping[str, float], k: int) -> set[str]:
    """The ``k`` lowest-score tickers, ties broken by ticker."""
    missing = [t for t in universe if t not in scores]
    if missing:
        raise KeyError(f"no volatility score for {missing}")
    ranked = sorted(set(universe), key=lambda t: (scores[t], t))
    return set(ranked[:k])
