"""Reduced-order linear model identification from snapshot data.

Given snapshots of a high-dimensional state driven by known inputs, the
procedure regresses a one-step linear map onto dominant SVD subspaces:

1. stack states and inputs into the joint data matrix and take its truncated
   economy SVD (order ``s``);
2. take a second truncated SVD of the shifted state matrix (order ``r``)
   whose left factor ``Ur`` becomes the reduction basis;
3. form the reduced system and input matrices directly from the factors,
   never materializing any n-by-n operator.

The resulting model advances an r-dimensional state that lifts back to the
full space through ``Ur``.  Diagnostics cover singular-value energy profiles,
eigen-decomposition of the reduced map, and spatial mode extraction.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .matio import SnapshotDataset, as_matrix, read_matrix, split_snapshots, write_matrix

# singular values below RANK_GUARD * s_max are treated as numerically zero
RANK_GUARD = 1e-12

# raw shifted-state matrix is retained for full-matrix reconstruction only
# below this state dimension
FULL_RECONSTRUCT_CAP = 256

# default cumulative-energy thresholds; the joint-matrix SVD feeds the second
# one, so it gets the tighter threshold.  Diffusion snapshot spectra decay so
# fast that thresholds must sit within nano-fractions of 1 to retain the
# input-coupling directions (the first few modes already hold >99.7% of the
# squared singular-value mass).
ENERGY_OMEGA = 1.0 - 1e-9
ENERGY_Y = 1.0 - 2e-10

# Gram route pays off only for strongly rectangular matrices
_GRAM_RATIO = 4


@dataclass(frozen=True)
class TruncationRule:
    """Order selection for a truncated SVD: fixed order or energy threshold."""

    mode: str  # "fixed" | "energy"
    value: float

    def __post_init__(self):
        if self.mode == "fixed":
            if int(self.value) != self.value or self.value < 1:
                raise ValueError("fixed truncation order must be an integer >= 1")
        elif self.mode == "energy":
            if not 0.0 < self.value <= 1.0:
                raise ValueError("energy threshold must lie in (0, 1]")
        else:
            raise ValueError(f"unknown truncation mode {self.mode!r}")

    @staticmethod
    def fixed(order: int) -> "TruncationRule":
        return TruncationRule("fixed", int(order))

    @staticmethod
    def energy(tau: float) -> "TruncationRule":
        return TruncationRule("energy", float(tau))


@dataclass(frozen=True)
class SvdFactors:
    """Truncated economy SVD, mat ~ U @ diag(S) @ V.T."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    order: int

    def __post_init__(self):
        if self.U.shape[1] != self.order or self.V.shape[1] != self.order:
            raise ValueError("factor column counts must equal the truncation order")
        if self.S.shape != (self.order,):
            raise ValueError("singular-value vector length must equal the order")
        if np.any(self.S < 0) or np.any(np.diff(self.S) > 0):
            raise ValueError("singular values must be nonnegative and nonincreasing")
        gram = self.U.T @ self.U
        if np.abs(gram - np.eye(self.order)).max() > 1e-10:
            raise ValueError("left singular vectors are not orthonormal")


def _economy_svd(mat: np.ndarray):
    """Full economy SVD (U, S, Vt), via the Gram matrix of the smaller side
    when the aspect ratio is extreme, LAPACK otherwise."""
    rows, cols = mat.shape
    small, large = min(rows, cols), max(rows, cols)
    if large >= _GRAM_RATIO * small:
        if rows <= cols:
            gram = mat @ mat.T
            w, Q = np.linalg.eigh(gram)
            w = np.clip(w[::-1], 0.0, None)
            U = Q[:, ::-1]
            S = np.sqrt(w)
            safe = np.where(S > 0, S, 1.0)
            V = mat.T @ (U / safe)
        else:
            gram = mat.T @ mat
            w, Q = np.linalg.eigh(gram)
            w = np.clip(w[::-1], 0.0, None)
            V = Q[:, ::-1]
            S = np.sqrt(w)
            safe = np.where(S > 0, S, 1.0)
            U = mat @ (V / safe)
        # tiny singular values make the derived factor unreliable; fall back
        healthy = S > 1e-8 * max(S[0], 1e-300)
        if healthy.all():
            return U, S, V.T
    U, S, Vt = sla.svd(mat, full_matrices=False)
    return U, S, Vt


def energy_profile(S: np.ndarray) -> np.ndarray:
    """Cumulative squared-singular-value fractions p_v, v = 1..len(S).

    Nondecreasing with final entry exactly 1 (partial sums over the total).
    """
    S = np.asarray(S, dtype=np.float64).ravel()
    if S.size == 0:
        raise ValueError("empty singular-value vector")
    if np.any(S < 0):
        raise ValueError("singular values must be nonnegative")
    cs = np.cumsum(S * S)
    if cs[-1] == 0.0:
        raise ValueError("zero-energy spectrum")
    return cs / cs[-1]


def select_order(S: np.ndarray, rule: TruncationRule) -> int:
    """Rule-selected truncation order, capped at the numerical rank."""
    S = np.asarray(S, dtype=np.float64).ravel()
    rank = int(np.sum(S > RANK_GUARD * (S[0] if S.size else 0.0)))
    rank = max(rank, 1)
    if rule.mode == "fixed":
        order = int(rule.value)
        if order > S.size:
            raise ValueError(
                f"order exceeds rank bound: requested {order}, have {S.size} singular values"
            )
        return order
    p = energy_profile(S)
    order = int(np.argmax(p >= rule.value)) + 1
    return min(order, rank)


def truncated_svd(mat: np.ndarray, rule: TruncationRule) -> SvdFactors:
    """Economy SVD of ``mat`` truncated per ``rule``."""
    mat = as_matrix(mat)
    U, S, Vt = _economy_svd(mat)
    order = select_order(S, rule)
    return SvdFactors(
        np.ascontiguousarray(U[:, :order]),
        S[:order].copy(),
        np.ascontiguousarray(Vt[:order].T),
        order,
    )


def _sorted_eig(Atil: np.ndarray):
    """Eigenpairs sorted by descending modulus, then descending real part,
    then descending imaginary part (keeps conjugate pairs adjacent)."""
    eigvals, eigvecs = np.linalg.eig(Atil)
    idx = np.lexsort((-eigvals.imag, -eigvals.real, -np.abs(eigvals)))
    return eigvals[idx], eigvecs[:, idx]


@dataclass(frozen=True)
class DmdcModel:
    """Identified reduced-order model x~_{k+1} = Atil x~_k + Btil u_k.

    ``Ur`` (n x r, orthonormal columns) maps reduced states back to the full
    space.  ``sigma_omega`` / ``sigma_y`` hold the full singular-value spectra
    of the joint and shifted data matrices for energy diagnostics.  The
    truncated factor bundles and the raw shifted-state matrix are retained
    only when cheap enough (see ``identify``); they are absent on models
    loaded from disk.
    """

    n: int
    q: int
    r: int
    s: int
    Ur: np.ndarray
    Atil: np.ndarray
    Btil: np.ndarray
    sigma_omega: np.ndarray
    sigma_y: np.ndarray
    eigvals: np.ndarray
    eigvecs_reduced: np.ndarray
    m_train: int
    dt: float
    offset: float = 0.0
    omega_svd: Optional[SvdFactors] = None
    y_svd: Optional[SvdFactors] = None
    Y_raw: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.Ur.shape != (self.n, self.r):
            raise ValueError("Ur shape mismatch")
        if self.Atil.shape != (self.r, self.r) or self.Btil.shape != (self.r, self.q):
            raise ValueError("reduced matrix shape mismatch")
        gram = self.Ur.T @ self.Ur
        if np.abs(gram - np.eye(self.r)).max() > 1e-10:
            raise ValueError("reduction basis is not orthonormal")
        # eigen-residual check per pair
        W = self.eigvecs_reduced
        res = self.Atil @ W - W * self.eigvals[np.newaxis, :]
        norms = np.linalg.norm(W, axis=0)
        if np.any(np.linalg.norm(res, axis=0) > 1e-8 * norms):
            raise ValueError("eigenpairs do not satisfy the reduced eigen-residual bound")


def identify(
    ds: SnapshotDataset,
    s_rule: TruncationRule = TruncationRule.energy(ENERGY_OMEGA),
    r_rule: TruncationRule = TruncationRule.energy(ENERGY_Y),
    offset: float = 0.0,
) -> DmdcModel:
    """Fit a reduced-order model to a snapshot dataset.

    The joint data matrix stacks the state block over the input block; its
    truncated SVD (order s) gives the regression pseudoinverse, and the SVD
    of the shifted states (order r) gives the reduction basis.  Requested
    orders must respect s <= min(n+q, m-1) and r <= min(n, m-1); kept
    singular values below the rank guard raise an ill-conditioning error.

    ``offset`` references all state snapshots to a known ambient level
    before the regression (states enter as deviations ``x - offset``); the
    model then predicts deviations and lifting re-adds the level.  Use the
    plant's fixed boundary temperature for thermal datasets, where it makes
    the deviation dynamics exactly linear.
    """
    X, Y, Ups = split_snapshots(ds)
    if offset != 0.0:
        X = X - offset
        Y = Y - offset
    omega = np.vstack([X, Ups])
    om_U, om_S, om_Vt = _economy_svd(omega)
    y_U, y_S, y_Vt = _economy_svd(Y)
    return _assemble_model(
        ds, Y, (om_U, om_S, om_Vt), (y_U, y_S, y_Vt), s_rule, r_rule, offset
    )


def _assemble_model(
    ds: SnapshotDataset,
    Y: np.ndarray,
    omega_factors,
    y_factors,
    s_rule: TruncationRule,
    r_rule: TruncationRule,
    offset: float = 0.0,
) -> DmdcModel:
    """Build a model from precomputed full economy SVDs (shared by sweeps).

    ``Y`` and the factors must already be offset-referenced.
    """
    n, q = ds.n, ds.q
    om_U, om_S, om_Vt = omega_factors
    y_U, y_S, y_Vt = y_factors

    s = select_order(om_S, s_rule)
    if om_S[s - 1] < RANK_GUARD * om_S[0]:
        raise ValueError("ill-conditioned truncation; reduce s")
    r = select_order(y_S, r_rule)

    om = SvdFactors(
        np.ascontiguousarray(om_U[:, :s]), om_S[:s].copy(),
        np.ascontiguousarray(om_Vt[:s].T), s,
    )
    ysvd = SvdFactors(
        np.ascontiguousarray(y_U[:, :r]), y_S[:r].copy(),
        np.ascontiguousarray(y_Vt[:r].T), r,
    )

    Ur = ysvd.U
    T = Y @ (om.V / om.S)          # n x s
    U1 = om.U[:n, :]
    U2 = om.U[n:, :]
    UrT_T = Ur.T @ T               # r x s
    Atil = UrT_T @ (U1.T @ Ur)
    Btil = UrT_T @ U2.T
    eigvals, W = _sorted_eig(Atil)

    keep_y = n <= FULL_RECONSTRUCT_CAP
    return DmdcModel(
        n=n, q=q, r=r, s=s,
        Ur=Ur, Atil=Atil, Btil=Btil,
        sigma_omega=np.asarray(om_S, dtype=np.float64).copy(),
        sigma_y=np.asarray(y_S, dtype=np.float64).copy(),
        eigvals=eigvals, eigvecs_reduced=W,
        m_train=ds.m, dt=ds.dt, offset=offset,
        omega_svd=om, y_svd=ysvd,
        Y_raw=Y.copy() if keep_y else None,
    )


def reconstruct_full(model: DmdcModel):
    """Full-order estimated system and input matrices (small instances only).

    Uses the retained shifted-state matrix and joint-SVD factors, so it is
    available only when the state dimension is at most FULL_RECONSTRUCT_CAP.
    """
    if model.Y_raw is None or model.omega_svd is None:
        raise ValueError(
            f"full reconstruction disabled at this scale (n={model.n}, cap={FULL_RECONSTRUCT_CAP})"
        )
    om = model.omega_svd
    T = model.Y_raw @ (om.V / om.S)
    U1 = om.U[: model.n, :]
    U2 = om.U[model.n :, :]
    return T @ U1.T, T @ U2.T


def reduce_state(model: DmdcModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape != (model.n,):
        raise ValueError(f"expected state of length {model.n}, got {x.shape}")
    return model.Ur.T @ (x - model.offset)


def lift_state(model: DmdcModel, xt: np.ndarray) -> np.ndarray:
    xt = np.asarray(xt, dtype=np.float64).ravel()
    if xt.shape != (model.r,):
        raise ValueError(f"expected reduced state of length {model.r}, got {xt.shape}")
    return model.offset + model.Ur @ xt


def rollout(model: DmdcModel, x0: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Lifted prediction over K steps; column k is the lifted state at step k.

    The initial state is projected into the reduced space, advanced by the
    model recursion under the given q x K input matrix, and lifted back, so
    the output has K+1 columns.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[0] != model.q:
        raise ValueError(f"inputs must be {model.q} x K")
    K = inputs.shape[1]
    xt = reduce_state(model, x0)
    reduced = np.empty((model.r, K + 1))
    reduced[:, 0] = xt
    for k in range(K):
        xt = model.Atil @ xt + model.Btil @ inputs[:, k]
        reduced[:, k + 1] = xt
    return model.offset + model.Ur @ reduced


def modes(model: DmdcModel):
    """Eigenvalues and spatial modes (basis-lifted eigenvectors) of the model.

    Requires the reduced matrix to be diagonalizable: the eigenvector matrix
    must have condition number at most 1e8.
    """
    W = model.eigvecs_reduced
    if np.linalg.cond(W) > 1e8:
        raise ValueError("non-diagonalizable reduced matrix")
    return model.eigvals.copy(), model.Ur @ W


def save_model(directory, model: DmdcModel) -> None:
    """Persist a model as DMDMAT01 matrices plus a metadata text file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix(directory / "Ur.dmdmat", model.Ur)
    write_matrix(directory / "Atil.dmdmat", model.Atil)
    write_matrix(directory / "Btil.dmdmat", model.Btil)
    write_matrix(directory / "S_omega.dmdmat", model.sigma_omega.reshape(1, -1))
    write_matrix(directory / "S_y.dmdmat", model.sigma_y.reshape(1, -1))
    meta = (
        f"n = {model.n}\nq = {model.q}\nr = {model.r}\ns = {model.s}\n"
        f"m_train = {model.m_train}\ndt = {model.dt!r}\noffset = {model.offset!r}\n"
    )
    (directory / "model.meta").write_text(meta)


def load_model(directory) -> DmdcModel:
    """Load a model saved by :func:`save_model`; eigenpairs are recomputed."""
    directory = Path(directory)
    meta = {}
    for line in (directory / "model.meta").read_text().splitlines():
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    Ur = read_matrix(directory / "Ur.dmdmat")
    Atil = read_matrix(directory / "Atil.dmdmat")
    Btil = read_matrix(directory / "Btil.dmdmat")
    sigma_omega = read_matrix(directory / "S_omega.dmdmat").ravel()
    sigma_y = read_matrix(directory / "S_y.dmdmat").ravel()
    eigvals, W = _sorted_eig(Atil)
    return DmdcModel(
        n=int(meta["n"]), q=int(meta["q"]), r=int(meta["r"]), s=int(meta["s"]),
        Ur=Ur, Atil=Atil, Btil=Btil,
        sigma_omega=sigma_omega, sigma_y=sigma_y,
        eigvals=eigvals, eigvecs_reduced=W,
        m_train=int(meta["m_train"]), dt=float(meta["dt"]),
        offset=float(meta.get("offset", 0.0)),
    )
