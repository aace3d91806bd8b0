"""Receding-horizon tracking controller over a reduced-order model.

Each step solves a sparse quadratic program in the stacked reduced states,
inputs, and per-stage slack variables:

    minimize   sum_k Qw ||x~_k - x~*||^2 + sum_k Rw ||u_k||^2 + px sum_k s_k^2
    subject to x~_{k+1} = Atil x~_k + Btil u_k      (x~_0 projected from data)
               u_min <= u_k <= u_max
               x_min - s_k <= (lifted x~_k)_i <= x_max + s_k,  s_k >= 0

State-box rows are sampled with a configurable pixel stride and softened by
the slack penalty, so the program is always feasible.  The tracking target is
projected into the reduced space once (orthonormal basis, so the optimizer is
unchanged), the constraint structure is assembled once per controller, and
consecutive solves are warm-started from the previous solution shifted by one
stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .dmdc import DmdcModel
from .qpsolve import QpProblem, QpSettings, QpSolver, SOLVED


@dataclass
class MpcConfig:
    horizon: int = 10
    u_min: object = 0.0
    u_max: object = np.inf
    x_min: object = 15.0
    x_max: object = 35.0
    tracking_weight: float = 1.0
    input_weight: float = 1e-3
    state_penalty: float = 1e3
    constraint_stride: int = 1

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if np.any(np.asarray(self.u_min) > np.asarray(self.u_max)):
            raise ValueError("u_min must not exceed u_max")
        if np.any(np.asarray(self.x_min) >= np.asarray(self.x_max)):
            raise ValueError("x_min must be strictly below x_max")
        if min(self.tracking_weight, self.input_weight, self.state_penalty) <= 0:
            raise ValueError("weights must be positive")
        if self.constraint_stride < 1:
            raise ValueError("constraint_stride must be >= 1")


def variable_count(config: MpcConfig, model: DmdcModel) -> int:
    """Decision-variable count in the conventional reporting form
    N*r + (N-1)*q (slacks are bookkept separately)."""
    N = config.horizon
    return N * model.r + (N - 1) * model.q


class MpcController:
    """Stateful tracking controller; one instance per control loop.

    ``reference`` is the target field in the model's observation space and
    original units.  ``obs_indices`` optionally selects which entries of a
    larger measurement vector this controller reads (used by proxy-sensor
    baselines); the model must match the selected dimension.
    """

    def __init__(
        self,
        model: DmdcModel,
        config: MpcConfig,
        reference: np.ndarray,
        obs_indices: Optional[np.ndarray] = None,
    ):
        self.model = model
        self.config = config
        self.obs_indices = None if obs_indices is None else np.asarray(obs_indices, int)
        self._solver = QpSolver()
        self._prev = None  # (z, y) of previous solve, for warm starting

        N, r, q = config.horizon, model.r, model.q
        self._nx = N * r
        self._nu = N * q

        u_min = np.broadcast_to(np.asarray(config.u_min, float), (q,)).copy()
        u_max = np.broadcast_to(np.asarray(config.u_max, float), (q,)).copy()
        self._u_min, self._u_max = u_min, u_max

        x_min = np.broadcast_to(np.asarray(config.x_min, float), (model.n,))
        x_max = np.broadcast_to(np.asarray(config.x_max, float), (model.n,))
        self._x_min_full, self._x_max_full = x_min, x_max
        sel = np.arange(0, model.n, config.constraint_stride)
        has_box = bool(np.isfinite(x_min[sel]).any() or np.isfinite(x_max[sel]).any())
        self._sel = sel if has_box else None
        self._ns = N if has_box else 0

        self._build_structure()
        self.set_reference(reference)

    # -- problem structure ------------------------------------------------

    def _build_structure(self):
        model, config = self.model, self.config
        N, r, q = config.horizon, model.r, model.q
        nx, nu, ns = self._nx, self._nu, self._ns
        dim = nx + nu + ns

        shift = sp.diags([np.ones(N - 1)], [-1], shape=(N, N), format="csr")
        dyn_x = sp.identity(nx, format="csr") - sp.kron(
            shift, sp.csr_matrix(model.Atil), format="csr"
        )
        dyn_u = -sp.kron(sp.identity(N, format="csr"), sp.csr_matrix(model.Btil))
        dyn_parts = [dyn_x, dyn_u]
        box_parts = [sp.csr_matrix((nu, nx)), sp.identity(nu, format="csr")]
        if ns:
            dyn_parts.append(sp.csr_matrix((nx, ns)))
            box_parts.append(sp.csr_matrix((nu, ns)))
        dyn = sp.hstack(dyn_parts, format="csr")
        box_u = sp.hstack(box_parts, format="csr")

        parts = [dyn, box_u]
        l_parts = [np.zeros(nx), np.tile(self._u_min, N)]
        u_parts = [np.zeros(nx), np.tile(self._u_max, N)]

        if ns:
            sel = self._sel
            Ur_sel = sp.csr_matrix(model.Ur[sel, :])
            nsel = len(sel)
            stage_x = sp.kron(sp.identity(N, format="csr"), Ur_sel, format="csr")
            slack_col = sp.kron(
                sp.identity(N, format="csr"),
                sp.csr_matrix(np.ones((nsel, 1))),
                format="csr",
            )
            zeros_u = sp.csr_matrix((N * nsel, nu))
            upper = sp.hstack([stage_x, zeros_u, -slack_col], format="csr")
            lower = sp.hstack([stage_x, zeros_u, slack_col], format="csr")
            slack_rows = sp.hstack(
                [sp.csr_matrix((N, nx + nu)), sp.identity(N, format="csr")],
                format="csr",
            )
            xmax_dev = self._x_max_full[sel] - model.offset
            xmin_dev = self._x_min_full[sel] - model.offset
            parts += [upper, lower, slack_rows]
            l_parts += [np.full(N * nsel, -np.inf), np.tile(xmin_dev, N), np.zeros(N)]
            u_parts += [np.tile(xmax_dev, N), np.full(N * nsel, np.inf), np.full(N, np.inf)]
            # orthonormal basis: the state-block Gram of the box rows is the
            # identity, which keeps the splitting matrix well conditioned
            gram = Ur_sel.T @ Ur_sel
            if config.constraint_stride == 1:
                assert np.abs(gram.toarray() - np.eye(r)).max() < 1e-10

        self._G = sp.vstack(parts, format="csr")
        self._l = np.concatenate(l_parts)
        self._u = np.concatenate(u_parts)

        pdiag = np.concatenate(
            [
                np.full(nx, 2.0 * config.tracking_weight),
                np.full(nu, 2.0 * config.input_weight),
                np.full(ns, 2.0 * config.state_penalty),
            ]
        )
        self._P = sp.diags(pdiag, format="csc")
        self._dim = dim

        # warm-start shift maps (advance every block by one stage)
        def block_shift(count, width):
            idx = np.arange(count * width)
            return np.concatenate(
                [idx[width:], idx[(count - 1) * width :]]
            )

        z_parts = [block_shift(N, r), nx + block_shift(N, q)]
        if ns:
            z_parts.append(nx + nu + block_shift(N, 1))
        self._z_shift = np.concatenate(z_parts)
        y_parts = [block_shift(N, r), nx + block_shift(N, q)]
        if ns:
            nsel = len(self._sel)
            base = nx + nu
            y_parts += [
                base + block_shift(N, nsel),
                base + N * nsel + block_shift(N, nsel),
                base + 2 * N * nsel + block_shift(N, 1),
            ]
        self._y_shift = np.concatenate(y_parts)

    def set_reference(self, reference: np.ndarray) -> None:
        reference = np.asarray(reference, dtype=np.float64).ravel()
        if reference.shape != (self.model.n,):
            raise ValueError(
                f"reference must have length {self.model.n}, got {reference.shape}"
            )
        self.reference = reference
        self.reference_reduced = self.model.Ur.T @ (reference - self.model.offset)
        qvec = np.zeros(self._dim)
        qvec[: self._nx] = np.tile(
            -2.0 * self.config.tracking_weight * self.reference_reduced,
            self.config.horizon,
        )
        self._qvec = qvec

    # -- per-step problem -------------------------------------------------

    def _reduced_initial(self, x_t: np.ndarray) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=np.float64).ravel()
        if self.obs_indices is not None and x_t.shape[0] != self.model.n:
            x_t = x_t[self.obs_indices]
        if x_t.shape != (self.model.n,):
            raise ValueError(f"state must have length {self.model.n}, got {x_t.shape}")
        return self.model.Ur.T @ (x_t - self.model.offset)

    def build_problem(self, x_t: np.ndarray, lifted_objective: bool = False) -> QpProblem:
        """Assemble the QP for the current measured state.

        ``lifted_objective`` expresses the tracking term through the lifted
        field instead of the reduced coordinates; with an orthonormal basis
        the minimizer is identical, and the flag exists to verify that.
        """
        xt0 = self._reduced_initial(x_t)
        l = self._l.copy()
        u = self._u.copy()
        rhs0 = self.model.Atil @ xt0
        l[: self.model.r] = rhs0
        u[: self.model.r] = rhs0
        if not lifted_objective:
            return QpProblem(P=self._P, q=self._qvec, G=self._G, l=l, u=u)

        # tracking term via ||lift(x~) - x*||^2: the x-block Hessian becomes
        # Ur'Ur and the linear term uses the same projected reference
        N, r = self.config.horizon, self.model.r
        gram = sp.csr_matrix(self.model.Ur.T @ self.model.Ur)
        pblocks = [2.0 * self.config.tracking_weight * sp.kron(sp.identity(N), gram)]
        pblocks.append(
            sp.diags(np.full(self._nu, 2.0 * self.config.input_weight))
        )
        if self._ns:
            pblocks.append(sp.diags(np.full(self._ns, 2.0 * self.config.state_penalty)))
        P = sp.block_diag(pblocks, format="csc")
        return QpProblem(P=P, q=self._qvec, G=self._G, l=l, u=u)

    def control_action(self, x_t: np.ndarray):
        """First input of the horizon solution plus solver diagnostics.

        The returned input is clipped to the input box as a final safeguard.
        Diagnostics include the predicted reduced trajectory re-simulated
        through the model recursion (so it satisfies the dynamics exactly),
        the solver status, and a check of the current state against the box
        (informational; the k=0 state is data, not a decision).
        """
        xt0 = self._reduced_initial(x_t)
        problem = self.build_problem(x_t)
        settings = QpSettings()
        if self._prev is not None:
            z0, y0 = self._prev
            settings.warm_start = (z0[self._z_shift], y0[self._y_shift])
        sol = self._solver.solve(problem, settings)
        self._prev = (sol.z, sol.y)

        N, r, q = self.config.horizon, self.model.r, self.model.q
        u_traj = sol.z[self._nx : self._nx + self._nu].reshape(N, q)
        u0 = np.clip(u_traj[0], self._u_min, self._u_max)

        predicted = np.empty((r, N + 1))
        predicted[:, 0] = xt0
        for k in range(N):
            predicted[:, k + 1] = self.model.Atil @ predicted[:, k] + self.model.Btil @ u_traj[k]

        x_now = np.asarray(x_t, dtype=np.float64).ravel()
        if self.obs_indices is not None and x_now.shape[0] != self.model.n:
            x_now = x_now[self.obs_indices]
        k0_violations = int(
            np.sum((x_now < self._x_min_full) | (x_now > self._x_max_full))
        )

        diagnostics = {
            "objective": problem.objective(sol.z),
            "iterations": sol.iterations,
            "status": sol.status,
            "warning": sol.status != SOLVED,
            "predicted_reduced": predicted,
            "k0_violations": k0_violations,
        }
        return u0, diagnostics
