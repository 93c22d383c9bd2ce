"""Tracking and beat portfolio problems expressed as quadratic programs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from sparseport.marketdata import FundReport, InstrumentMeta
from sparseport.qpsolver import OPTIMAL, QuadraticProgram, Settings, Solution, solve
from sparseport.weighting import WeightVector, weight_by_holding_mcap

TRACK = "track"
BEAT = "beat"
DEFAULT_GAMMA = {TRACK: 0.01, BEAT: 0.10}


class InfeasibleProblem(ValueError):
    """The constraint set is empty; raised before any solve is attempted."""


class SolveFailed(RuntimeError):
    def __init__(self, solution: Solution):
        super().__init__(f"solver finished with status {solution.status} after {solution.iterations} iterations")
        self.solution = solution


@dataclass(frozen=True)
class IndustryMatrix:
    """Stock-by-sector membership matrix; every row holds a single 1."""

    tickers: tuple[str, ...]
    sectors: tuple[str, ...]
    A: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        object.__setattr__(self, "A", A)
        if A.shape != (len(self.tickers), len(self.sectors)):
            raise ValueError("membership matrix shape does not match tickers x sectors")
        if A.size and (not np.isin(A, (0.0, 1.0)).all() or not np.all(A.sum(axis=1) == 1.0)):
            raise ValueError("each stock must belong to exactly one sector")

    @classmethod
    def from_instruments(
        cls,
        tickers: Sequence[str],
        instruments: Mapping[str, InstrumentMeta],
        sectors: Sequence[str] | None = None,
    ) -> "IndustryMatrix":
        if sectors is None:
            sectors = sorted({m.industry_code for m in instruments.values()})
        col = {s: k for k, s in enumerate(sectors)}
        A = np.zeros((len(tickers), len(sectors)))
        for i, t in enumerate(tickers):
            code = instruments[t].industry_code
            if code not in col:
                raise KeyError(f"{t}: sector {code!r} not in the sector list")
            A[i, col[code]] = 1.0
        return cls(tuple(tickers), tuple(sectors), A)

    def exposure(self, w: np.ndarray) -> np.ndarray:
        return self.A.T @ np.asarray(w, dtype=float)

    def counts(self) -> np.ndarray:
        return self.A.sum(axis=0)


@dataclass(frozen=True)
class ExposureBand:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or np.any(lo < 0) or np.any(hi > 1) or np.any(lo > hi):
            raise ValueError("exposure band must satisfy 0 <= lower <= upper <= 1")

    @classmethod
    def around(cls, exposure: np.ndarray, width: float) -> "ExposureBand":
        e = np.asarray(exposure, dtype=float)
        return cls(np.clip(e - width, 0.0, 1.0), np.clip(e + width, 0.0, 1.0))


@dataclass(frozen=True)
class ProblemSpec:
    mode: str = TRACK
    beta: float = 1.0
    kappa: float = 10.0
    gamma: float | None = None
    band_width: float = 0.02
    sector_cap: float = 0.10
    return_window_days: int = 63

    def __post_init__(self):
        if self.mode not in (TRACK, BEAT):
            raise ValueError(f"mode must be {TRACK!r} or {BEAT!r}")
        if self.gamma is None:
            object.__setattr__(self, "gamma", DEFAULT_GAMMA[self.mode])
        if self.beta < 0 or self.kappa < 0:
            raise ValueError("beta and kappa must be nonnegative")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.band_width < 0 or not 0 < self.sector_cap <= 1:
            raise ValueError("band_width must be >= 0 and sector_cap in (0, 1]")


def benchmark_industry_exposure(reports: Iterable[FundReport], industry: IndustryMatrix) -> np.ndarray:
    """Sector split of the holding-market-value weights over ``industry.tickers``."""
    weights = weight_by_holding_mcap(reports, industry.tickers)
    w = np.array([weights.get(t) for t in industry.tickers])
    return industry.exposure(w)


def check_feasible(industry: IndustryMatrix, lower: np.ndarray, upper: np.ndarray, gamma: float) -> None:
    """Raise ``InfeasibleProblem`` unless {0<=w<=gamma, sum w = 1, lower<=A'w<=upper} is nonempty.

    With one sector per stock, sector s can hold anything in [0, n_s*gamma],
    so the check reduces to sums of per-sector bounds.
    """
    reach = np.minimum(upper, industry.counts() * gamma)
    short = np.flatnonzero(lower > reach + 1e-12)
    if short.size:
        names = ", ".join(industry.sectors[k] for k in short)
        raise InfeasibleProblem(f"sector lower bounds exceed attainable exposure in: {names}")
    if lower.sum() > 1 + 1e-12:
        raise InfeasibleProblem(f"sector lower bounds sum to {lower.sum():.6f} > 1")
    if reach.sum() < 1 - 1e-12:
        represented = int(np.count_nonzero(industry.counts()))
        raise InfeasibleProblem(
            f"sector caps and per-stock cap {gamma} allow at most {reach.sum():.6f} total weight "
            f"({represented} represented sectors, {len(industry.tickers)} stocks)"
        )


def _constraints(industry: IndustryMatrix, gamma: float, lower: np.ndarray, upper: np.ndarray):
    n = len(industry.tickers)
    C = np.vstack([np.ones((1, n)), np.eye(n), industry.A.T])
    lo = np.concatenate([[1.0], np.zeros(n), lower])
    hi = np.concatenate([[1.0], np.full(n, gamma), upper])
    return C, lo, hi


def build_tracking_problem(
    alpha: np.ndarray,
    sigma: np.ndarray,
    stock_returns: np.ndarray,
    bench_returns: np.ndarray,
    industry: IndustryMatrix,
    bands: ExposureBand,
    spec: ProblemSpec,
) -> QuadraticProgram:
    """-alpha'w + beta w'Sw + kappa ||R'w - r||^2 over the capped simplex with sector bands.

    ``stock_returns`` is (stocks x days). The L1 term is constant on the
    long-only simplex and therefore left out.
    """
    alpha = np.asarray(alpha, dtype=float)
    R = np.atleast_2d(np.asarray(stock_returns, dtype=float))
    r = np.asarray(bench_returns, dtype=float)
    n = alpha.size
    if sigma.shape != (n, n) or R.shape[0] != n or len(industry.tickers) != n:
        raise ValueError("alpha, covariance, returns and industry matrix must share one ticker order")
    if R.shape[1] != r.size:
        raise ValueError("benchmark returns must cover the same days as stock returns")
    check_feasible(industry, bands.lower, bands.upper, spec.gamma)
    P = 2.0 * spec.beta * sigma + 2.0 * spec.kappa * (R @ R.T)
    P = (P + P.T) / 2
    q = -alpha - 2.0 * spec.kappa * (R @ r)
    C, lo, hi = _constraints(industry, spec.gamma, bands.lower, bands.upper)
    return QuadraticProgram(P, q, C, lo, hi)


def build_beat_problem(
    alpha: np.ndarray,
    sigma: np.ndarray,
    industry: IndustryMatrix,
    spec: ProblemSpec,
) -> QuadraticProgram:
    """-alpha'w + beta w'Sw over the capped simplex with per-sector upper caps."""
    alpha = np.asarray(alpha, dtype=float)
    n = alpha.size
    if sigma.shape != (n, n) or len(industry.tickers) != n:
        raise ValueError("alpha, covariance and industry matrix must share one ticker order")
    k = len(industry.sectors)
    upper = np.full(k, spec.sector_cap)
    check_feasible(industry, np.zeros(k), upper, spec.gamma)
    P = 2.0 * spec.beta * sigma
    P = (P + P.T) / 2
    C, lo, hi = _constraints(industry, spec.gamma, np.full(k, -np.inf), upper)
    return QuadraticProgram(P, -alpha, C, lo, hi)


def project_capped_simplex(w: np.ndarray, gamma: float, tol: float = 1e-15) -> np.ndarray:
    """Euclidean projection onto {0 <= w <= gamma, sum w = 1} by bisection on the shift."""
    w = np.asarray(w, dtype=float)
    if gamma * w.size < 1 - 1e-12:
        raise InfeasibleProblem("capped simplex is empty")
    lo, hi = -1.0 - np.max(w), 1.0 - np.min(w) + gamma
    for _ in range(200):
        mid = (lo + hi) / 2
        if np.clip(w + mid, 0.0, gamma).sum() > 1.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol:
            break
    return np.clip(w + (lo + hi) / 2, 0.0, gamma)


def clean_weights(raw: np.ndarray, gamma: float, floor: float = 1e-9) -> np.ndarray:
    """Snap solver output onto the capped simplex, dropping dust below ``floor``."""
    w = np.clip(np.asarray(raw, dtype=float), 0.0, gamma)
    keep = w >= floor
    if gamma * keep.sum() < 1:
        keep = np.ones_like(keep)
    out = np.zeros_like(w)
    out[keep] = project_capped_simplex(w[keep], gamma)
    out[out < floor] = 0.0
    return out / math.fsum(out)


def solve_portfolio(
    qp: QuadraticProgram,
    tickers: Sequence[str],
    gamma: float,
    settings: Settings | None = None,
) -> tuple[WeightVector, Solution]:
    sol = solve(qp, settings)
    if sol.status != OPTIMAL:
        raise SolveFailed(sol)
    w = clean_weights(sol.w[: len(tickers)], gamma)
    entries = {t: float(v) for t, v in zip(tickers, w) if v > 0}
    return WeightVector(entries), sol
