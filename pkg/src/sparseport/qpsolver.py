"""Dense ADMM solver for convex quadratic programs.

Problems have the form::

    minimize    1/2 w' P w + q' w
    subject to  lower <= C w <= upper

with equality rows encoded as ``lower == upper`` and infinite bounds
allowed. The iteration is the usual operator splitting: a regularized
linear solve, a projection of the constraint values onto the box, and a
dual update, run on a Ruiz-equilibrated copy of the problem with a fixed
step parameter. Residuals are checked in the original units.

By default a converged run is polished: the equality system on the
guessed active set is solved directly and accepted only when its residuals
pass the same tolerances. Without it, an iterate that meets eps = 1e-6 can
sit up to 1e-6 outside the feasible set, and on problems with large
gradients that moves the objective by around 1e-5.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.optimize import nnls

from sparseport._io import fmt_float, write_csv

OPTIMAL = "optimal"
MAX_ITERATIONS = "max_iterations"
INFEASIBLE = "infeasible"


@dataclass
class QuadraticProgram:
    P: np.ndarray
    q: np.ndarray
    C: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        self.q = np.asarray(self.q, dtype=float).ravel()
        n = self.q.size
        self.C = np.asarray(self.C, dtype=float).reshape(-1, n)
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.asarray(self.upper, dtype=float).ravel()
        m = self.C.shape[0]
        if self.P.shape != (n, n):
            raise ValueError(f"P has shape {self.P.shape}, expected {(n, n)}")
        if self.lower.size != m or self.upper.size != m:
            raise ValueError("bounds must have one entry per constraint row")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("bounds must not be NaN")
        if np.max(np.abs(self.P - self.P.T), initial=0.0) > 1e-10:
            raise ValueError("P is not symmetric")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def m(self) -> int:
        return self.C.shape[0]

    def objective(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=float)
        return float(0.5 * w @ self.P @ w + self.q @ w)

    def violation(self, w: np.ndarray) -> float:
        cw = self.C @ np.asarray(w, dtype=float)
        return float(np.max(np.abs(cw - np.clip(cw, self.lower, self.upper)), initial=0.0))

    def dump(self, directory: str | Path) -> None:
        """Write P, q, C, lower and upper as CSV files."""
        directory = Path(directory)
        write_csv(directory / "P.csv", [f"c{j}" for j in range(self.n)], ([fmt_float(v) for v in row] for row in self.P))
        write_csv(directory / "q.csv", ["q"], ([fmt_float(v)] for v in self.q))
        write_csv(directory / "C.csv", [f"c{j}" for j in range(self.n)], ([fmt_float(v) for v in row] for row in self.C))
        write_csv(directory / "lower.csv", ["lower"], ([fmt_float(v)] for v in self.lower))
        write_csv(directory / "upper.csv", ["upper"], ([fmt_float(v)] for v in self.upper))

    @classmethod
    def load(cls, directory: str | Path) -> "QuadraticProgram":
        directory = Path(directory)

        def read(name: str) -> np.ndarray:
            rows = (directory / name).read_text().splitlines()[1:]
            return np.array([[float(x) for x in r.split(",")] for r in rows if r])

        q = read("q.csv").ravel()
        n = q.size
        c = read("C.csv")
        return cls(read("P.csv").reshape(n, n), q, c.reshape(-1, n), read("lower.csv").ravel(), read("upper.csv").ravel())


@dataclass(frozen=True)
class Settings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_primal: float = 1e-6
    eps_dual: float = 1e-6
    eps_infeasible: float = 1e-8
    max_iter: int = 100_000
    check_every: int = 10
    scaling_iters: int = 10
    eq_rho_factor: float = 1e3
    polish: bool = True
    psd_tol: float = 1e-9


@dataclass
class Solution:
    w: np.ndarray
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    y: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    polished: bool = False


def _check_psd(P: np.ndarray, tol: float) -> None:
    if P.size == 0:
        return
    scale = max(1.0, float(np.max(np.abs(P))))
    min_eig = float(np.linalg.eigvalsh((P + P.T) / 2)[0])
    if min_eig < -tol * scale:
        raise ValueError(f"P is not positive semidefinite (min eigenvalue {min_eig:.3e})")


def _ruiz(P: np.ndarray, C: np.ndarray, q: np.ndarray, iters: int):
    """Equilibrate the KKT matrix; returns scaled (P, C, q), D, E and cost scale c."""
    n, m = P.shape[0], C.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    P = P.copy()
    C = C.copy()
    for _ in range(iters):
        col = np.max(np.abs(P), axis=0, initial=0.0)
        if m:
            col = np.maximum(col, np.max(np.abs(C), axis=0, initial=0.0))
        row = np.max(np.abs(C), axis=1, initial=0.0) if m else np.zeros(0)
        d = 1.0 / np.sqrt(np.clip(np.where(col > 0, col, 1.0), 1e-4, 1e4))
        e = 1.0 / np.sqrt(np.clip(np.where(row > 0, row, 1.0), 1e-4, 1e4))
        P = d[:, None] * P * d[None, :]
        C = e[:, None] * C * d[None, :]
        D *= d
        E *= e
    q = D * q
    col_p = np.max(np.abs(P), axis=0, initial=0.0)
    gamma = max(float(np.mean(col_p)) if n else 0.0, float(np.max(np.abs(q), initial=0.0)))
    c = 1.0 / np.clip(gamma if gamma > 0 else 1.0, 1e-4, 1e4)
    return c * P, C, c * q, D, E, c


def solve(qp: QuadraticProgram, settings: Settings | None = None) -> Solution:
    """Solve ``qp``; a pure function of its inputs and ``settings``."""
    s = settings or Settings()
    _check_psd(qp.P, s.psd_tol)
    n, m = qp.n, qp.m
    P, C, q, D, E, c = _ruiz(qp.P, qp.C, qp.q, s.scaling_iters)
    l = E * qp.lower
    u = E * qp.upper

    rho = np.full(m, s.rho)
    both_inf = np.isinf(l) & np.isinf(u)
    equality = np.isfinite(l) & np.isfinite(u) & (u - l <= 1e-10 * (1.0 + np.abs(l)))
    rho[both_inf] = 1e-6
    rho[equality] = s.rho * s.eq_rho_factor

    K = P + s.sigma * np.eye(n) + C.T @ (rho[:, None] * C)
    try:
        factor = sla.cho_factor(K, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError("KKT matrix factorization failed; P may not be PSD") from exc
    Kinv = sla.cho_solve(factor, np.eye(n))
    KinvCt = Kinv @ C.T

    x = np.zeros(n)
    z = np.zeros(m)
    y = np.zeros(m)
    a = s.alpha
    status = MAX_ITERATIONS
    it = 0
    prim = dual = np.inf
    for it in range(1, s.max_iter + 1):
        x_prev, y_prev = x, y
        xt = Kinv @ (s.sigma * x - q) + KinvCt @ (rho * z - y)
        zt = C @ xt
        x = a * xt + (1.0 - a) * x_prev
        zr = a * zt + (1.0 - a) * z
        z_new = np.clip(zr + y / rho, l, u)
        y = y + rho * (zr - z_new)
        z = z_new
        if it % s.check_every and it != s.max_iter:
            continue
        prim, dual = _residuals(P, C, q, x, z, y, D, E, c)
        if prim <= s.eps_primal and dual <= s.eps_dual:
            status = OPTIMAL
            break
        if m and _primal_infeasible(C, l, u, y - y_prev, D, E, s.eps_infeasible):
            status = INFEASIBLE
            break

    w = D * x
    y_orig = E * y / c
    sol = Solution(w, status, it, prim, dual, qp.objective(w), y_orig)
    if s.polish and status == OPTIMAL:
        polished = _polish(qp, w, z / E, y_orig, s)
        if polished is not None:
            sol = polished
            sol.iterations = it
    return sol


def _residuals(P, C, q, x, z, y, D, E, c) -> tuple[float, float]:
    prim = float(np.max(np.abs((C @ x - z) / E), initial=0.0))
    dual = float(np.max(np.abs((P @ x + q + C.T @ y) / (c * D)), initial=0.0))
    return prim, dual


def _primal_infeasible(C, l, u, dy, D, E, eps) -> bool:
    dy_orig = E * dy
    norm = float(np.max(np.abs(dy_orig), initial=0.0))
    if norm <= eps:
        return False
    if np.max(np.abs((C.T @ dy) / D), initial=0.0) > eps * norm:
        return False
    pos = np.maximum(dy, 0.0)
    neg = np.minimum(dy, 0.0)
    # an infinite bound paired with a non-negligible multiplier is no certificate
    if np.any(np.isinf(u) & (pos > eps * norm)) or np.any(np.isinf(l) & (neg < -eps * norm)):
        return False
    support = np.where(np.isinf(u), 0.0, u) @ pos + np.where(np.isinf(l), 0.0, l) @ neg
    return bool(support < -eps * norm)


def _polish(qp: QuadraticProgram, w: np.ndarray, z: np.ndarray, y: np.ndarray, s: Settings) -> Solution | None:
    """Re-solve the equality problem on the guessed active set; None if it does not help."""
    n = qp.n
    lower_act = (z - qp.lower < -y) & np.isfinite(qp.lower)
    upper_act = (qp.upper - z < y) & np.isfinite(qp.upper)
    act = lower_act | upper_act
    rows = qp.C[act]
    rhs_b = np.where(lower_act, qp.lower, qp.upper)[act]
    k = rows.shape[0]
    delta = 1e-9
    kkt = np.block([[qp.P + delta * np.eye(n), rows.T], [rows, -delta * np.eye(k)]])
    rhs = np.concatenate([-qp.q, rhs_b])
    exact = np.block([[qp.P, rows.T], [rows, np.zeros((k, k))]])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            lu = sla.lu_factor(kkt)
        except (ValueError, np.linalg.LinAlgError):
            return None
        sol = sla.lu_solve(lu, rhs)
        for _ in range(5):
            sol = sol + sla.lu_solve(lu, rhs - exact @ sol)
    if not np.all(np.isfinite(sol)):
        return None
    wp = sol[:n]
    yp = _sign_constrained_multipliers(qp, wp, lower_act, upper_act)
    prim = qp.violation(wp)
    dual = float(np.max(np.abs(qp.P @ wp + qp.q + qp.C.T @ yp), initial=0.0))
    if prim > s.eps_primal or dual > s.eps_dual:
        return None
    return Solution(wp, OPTIMAL, 0, prim, dual, qp.objective(wp), yp, polished=True)


def _sign_constrained_multipliers(qp: QuadraticProgram, w: np.ndarray, lower_act: np.ndarray, upper_act: np.ndarray) -> np.ndarray:
    """Multipliers for ``w`` that best cancel the gradient with the correct signs.

    On degenerate active sets the KKT multipliers are not unique and the
    linear solve can return any of them, so they are refit by NNLS: rows at
    the lower bound get y <= 0, rows at the upper bound y >= 0, and rows at
    both (equalities) a free y.
    """
    grad = qp.P @ w + qp.q
    cols, index, signs = [], [], []
    for i in np.flatnonzero(lower_act | upper_act):
        for sign, on in ((-1.0, lower_act[i]), (1.0, upper_act[i])):
            if on:
                cols.append(sign * qp.C[i])
                index.append(i)
                signs.append(sign)
    y = np.zeros(qp.m)
    if not cols:
        return y
    u, _ = nnls(np.array(cols).T, -grad, maxiter=50 * len(cols))
    np.add.at(y, index, np.array(signs) * u)
    return y


def l1_to_qp(qp: QuadraticProgram, lam: float) -> QuadraticProgram:
    """Rewrite ``qp`` plus ``lam * ||w||_1`` as a QP over ``[w; v]``.

    The auxiliary ``v`` enters the objective as ``lam * sum(v)`` and is tied to
    ``w`` by ``-v <= w <= v``; dropping ``v`` from a solution solves the
    penalized problem.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    n, m = qp.n, qp.m
    eye = np.eye(n)
    P = np.zeros((2 * n, 2 * n))
    P[:n, :n] = qp.P
    q = np.concatenate([qp.q, np.full(n, float(lam))])
    C = np.block(
        [
            [qp.C, np.zeros((m, n))],
            [eye, -eye],  # w - v <= 0
            [eye, eye],  # w + v >= 0
        ]
    )
    lower = np.concatenate([qp.lower, np.full(n, -np.inf), np.zeros(n)])
    upper = np.concatenate([qp.upper, np.zeros(n), np.full(n, np.inf)])
    return QuadraticProgram(P, q, C, lower, upper)
