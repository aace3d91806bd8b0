"""Convex quadratic programming by operator splitting.

Solves problems of the form

    minimize   1/2 z' P z + q' z
    subject to l <= G z <= u

with P symmetric positive semidefinite.  Equality rows are encoded as
l_i = u_i; infinite bounds are allowed.  The iteration alternates a linear
solve on (P + sigma*I + G' diag(rho) G), a projection of the constraint-space
copy onto [l, u], and a dual ascent step.  The factorization is computed once
per (P, G, rho) and cached, and is refactored when the penalty is adapted.

Two internal reformulations keep a single scalar penalty workable across
heterogeneous constraints: rows are normalized to unit Euclidean norm (duals
are rescaled on exit), and equality rows carry a fixed 1000x penalty boost.
Convergence is checked on the residuals of the original problem, and iterate
sequences are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

SOLVED = "solved"
MAX_ITER = "max-iterations"
INVALID = "invalid"

_RHO_MIN = 1e-6
_RHO_MAX = 1e6
_EQ_BOOST = 1e3


@dataclass(frozen=True)
class QpProblem:
    """Problem data; P and G may be dense arrays or scipy sparse matrices."""

    P: object
    q: np.ndarray
    G: object
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64).ravel()
        l = np.asarray(self.l, dtype=np.float64).ravel()
        u = np.asarray(self.u, dtype=np.float64).ravel()
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "u", u)
        dim = q.shape[0]
        if self.P.shape != (dim, dim):
            raise ValueError(f"P must be {dim}x{dim}, got {self.P.shape}")
        rows = self.G.shape[0]
        if self.G.shape[1] != dim:
            raise ValueError(f"G must have {dim} columns, got {self.G.shape}")
        if l.shape != (rows,) or u.shape != (rows,):
            raise ValueError("bound vectors must match the constraint row count")
        if np.any(l > u):
            raise ValueError("lower bounds must not exceed upper bounds")
        if not np.isfinite(q).all():
            raise ValueError("q must be finite")

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    @property
    def rows(self) -> int:
        return self.G.shape[0]

    def objective(self, z: np.ndarray) -> float:
        return 0.5 * float(z @ (self.P @ z)) + float(self.q @ z)


@dataclass
class QpSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    eps_abs: float = 1e-5
    eps_rel: float = 1e-5
    max_iter: int = 4000
    warm_start: Optional[Tuple[np.ndarray, np.ndarray]] = None
    check_interval: int = 5   # residual evaluation cadence (iterations)
    adapt_interval: int = 25  # penalty adaptation cadence (iterations)
    adapt_max_factor: float = 10.0

    def __post_init__(self):
        if min(self.rho, self.sigma, self.eps_abs, self.eps_rel) <= 0:
            raise ValueError("rho, sigma, and tolerances must be positive")
        if self.max_iter < 1 or self.check_interval < 1 or self.adapt_interval < 1:
            raise ValueError("iteration counts must be >= 1")


@dataclass
class QpSolution:
    z: np.ndarray
    y: np.ndarray
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float


def _spot_check_psd(P, dim: int) -> bool:
    rng = np.random.default_rng(0)
    for _ in range(8):
        v = rng.standard_normal(dim)
        if v @ (P @ v) < -1e-8 * (v @ v):
            return False
    return True


class QpSolver:
    """Operator-splitting solver with a per-instance factorization cache.

    Reusing one instance across solves of problems that share the same P and
    G objects (e.g. receding-horizon steps where only q, l, u change) skips
    the matrix setup entirely.
    """

    def __init__(self):
        self._key = None
        self._rho_base = None
        self._rho_vec = None
        self._chol = None
        self._Gs = None
        self._row_scale = None
        self._eq_rows = None
        self._P = None
        self._sigma = None

    def _setup(self, problem: QpProblem, rho: float, sigma: float) -> None:
        G = problem.G
        if sp.issparse(G):
            G = G.tocsr()
            row_norms = np.sqrt(np.asarray(G.multiply(G).sum(axis=1)).ravel())
            d = np.where(row_norms > 0, row_norms, 1.0)
            Gs = (sp.diags(1.0 / d) @ G).tocsr()
        else:
            G = np.asarray(G, dtype=np.float64)
            row_norms = np.linalg.norm(G, axis=1)
            d = np.where(row_norms > 0, row_norms, 1.0)
            Gs = G / d[:, None]
        self._Gs = Gs
        self._row_scale = d
        self._eq_rows = problem.l == problem.u
        self._P = problem.P
        self._sigma = sigma
        self._key = (id(problem.P), id(problem.G), sigma)
        self._factorize(rho)

    def _factorize(self, rho_base: float) -> None:
        dim = self._Gs.shape[1]
        rho_vec = rho_base * np.where(self._eq_rows, _EQ_BOOST, 1.0)
        if sp.issparse(self._Gs):
            GrG = (self._Gs.T @ sp.diags(rho_vec) @ self._Gs).toarray()
        else:
            GrG = self._Gs.T @ (rho_vec[:, None] * self._Gs)
        P = self._P
        if sp.issparse(P):
            P = P.toarray()
        M = np.asarray(P, dtype=np.float64) + self._sigma * np.eye(dim) + GrG
        self._chol = sla.cho_factor(M, lower=True)
        self._rho_base = rho_base
        self._rho_vec = rho_vec

    def solve(self, problem: QpProblem, settings: QpSettings = None) -> QpSolution:
        if settings is None:
            settings = QpSettings()
        if not _spot_check_psd(problem.P, problem.dim):
            return QpSolution(
                z=np.zeros(problem.dim), y=np.zeros(problem.rows),
                status=INVALID, iterations=0,
                primal_residual=np.inf, dual_residual=np.inf,
            )

        key = (id(problem.P), id(problem.G), settings.sigma)
        if self._key != key:
            self._setup(problem, settings.rho, settings.sigma)
        elif self._rho_base != settings.rho:
            self._factorize(settings.rho)

        Gs, d = self._Gs, self._row_scale
        ls = problem.l / d
        us = problem.u / d
        q = problem.q
        sigma = settings.sigma
        rho = self._rho_vec

        if settings.warm_start is not None:
            z0, y0 = settings.warm_start
            z = np.array(z0, dtype=np.float64).ravel().copy()
            ys = np.array(y0, dtype=np.float64).ravel() * d
            w = np.clip(Gs @ z, ls, us)
        else:
            z = np.zeros(problem.dim)
            ys = np.zeros(problem.rows)
            w = np.clip(np.zeros(problem.rows), ls, us)

        status = MAX_ITER
        r_prim = np.inf
        r_dual = np.inf
        iterations = settings.max_iter
        for it in range(1, settings.max_iter + 1):
            rhs = sigma * z - q + Gs.T @ (rho * w - ys)
            z = sla.cho_solve(self._chol, rhs)
            Gz = Gs @ z
            w = np.clip(Gz + ys / rho, ls, us)
            ys = ys + rho * (Gz - w)

            if it % settings.check_interval and it != settings.max_iter:
                continue

            Pz = problem.P @ z
            Gty = Gs.T @ ys          # equals G' y in original scaling
            r_prim = np.max(np.abs(d * (Gz - w))) if len(d) else 0.0
            r_dual = np.max(np.abs(Pz + q + Gty))
            eps_prim = settings.eps_abs + settings.eps_rel * max(
                np.max(np.abs(d * Gz)) if len(d) else 0.0,
                np.max(np.abs(d * w)) if len(d) else 0.0,
            )
            eps_dual = settings.eps_abs + settings.eps_rel * max(
                np.max(np.abs(Pz)), np.max(np.abs(Gty)), np.max(np.abs(q))
            )
            if r_prim <= eps_prim and r_dual <= eps_dual:
                status = SOLVED
                iterations = it
                break

            if it % settings.adapt_interval == 0:
                scale = np.sqrt(
                    (r_prim / max(eps_prim, 1e-30)) / (r_dual / max(eps_dual, 1e-30))
                )
                scale = float(np.clip(scale, 1.0 / settings.adapt_max_factor,
                                      settings.adapt_max_factor))
                if scale > 2.0 or scale < 0.5:
                    new_base = float(np.clip(self._rho_base * scale, _RHO_MIN, _RHO_MAX))
                    if new_base != self._rho_base:
                        self._factorize(new_base)
                        rho = self._rho_vec

        return QpSolution(
            z=z, y=ys / d, status=status, iterations=iterations,
            primal_residual=float(r_prim), dual_residual=float(r_dual),
        )


def solve(problem: QpProblem, settings: QpSettings = None) -> QpSolution:
    """One-shot convenience wrapper around :class:`QpSolver`."""
    return QpSolver().solve(problem, settings)


def kkt_residuals(problem: QpProblem, sol: QpSolution):
    """Stationarity, primal feasibility, and complementarity of a solution.

    Complementarity pairs each multiplier with the distance of its
    constraint value to the bound consistent with the multiplier's sign
    (positive -> upper bound, negative -> lower bound).
    """
    z, y = sol.z, sol.y
    Gz = problem.G @ z
    stationarity = float(np.max(np.abs(problem.P @ z + problem.q + problem.G.T @ y)))
    primal = float(np.max(np.abs(Gz - np.clip(Gz, problem.l, problem.u))))
    dist = np.zeros_like(y)
    pos = y > 0
    neg = y < 0
    dist[pos] = np.abs(Gz[pos] - problem.u[pos])
    dist[neg] = np.abs(Gz[neg] - problem.l[neg])
    comp = float(np.max(np.abs(y) * dist)) if len(y) else 0.0
    return stationarity, primal, comp
