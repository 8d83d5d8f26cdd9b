"""Alternating closed-form solver for kernel two-dimensional ridge regression.

The model minimizes, over a projection ``P`` (b x r, orthonormal columns) and
a representation ``Z`` (n x n),

    sum_i ||phi(X_i) P - sum_j phi(X_j) P z_ji||_F^2
        + lam * sum_i ||phi(X_i) - phi(X_i) P P^T||_F^2 + gamma * ||Z||_F^2

where ``phi`` maps every column of a sample into a kernel feature space. Only
the kernel blocks ``K_ij = phi(X_i)^T phi(X_j)`` are ever needed.

With ``Z`` fixed the objective is ``Tr(P^T M P) + xi`` and ``P`` is given by
the eigenvectors of ``M`` for its ``r`` smallest eigenvalues. With ``P``
fixed it is a ridge problem on the projected Gram matrix ``Kbar`` and
``Z = (Kbar + gamma I)^{-1} Kbar``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from threadpoolctl import threadpool_limits

from .errors import (
    DimensionMismatch,
    EigenFailure,
    IndexOutOfRange,
    InvalidSpec,
    MissingFile,
    NumericalError,
    ParseError,
    SolveFailure,
    StorageError,
)
from .kernels import KernelBlocks, KernelDescriptor

logger = logging.getLogger(__name__)

MODEL_FORMAT = "ktrr-model/1"


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one fit.

    Parameters
    ----------
    r : int
        Number of projection directions, ``1 <= r <= b``.
    lam : float
        Weight of the projection reconstruction term, ``>= 0``. Values above 1
        are allowed and make ``M`` indefinite.
    gamma : float
        Ridge weight on ``Z``, ``> 0``.
    epsilon : float
        Stop when the relative objective change falls below this.
    t_max : int
        Iteration cap.
    """

    r: int = 5
    lam: float = 0.1
    gamma: float = 0.1
    epsilon: float = 1e-6
    t_max: int = 50

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise InvalidSpec(f"r must be an integer >= 1, got {self.r}")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise InvalidSpec(f"lambda must be >= 0, got {self.lam}")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise InvalidSpec(f"gamma must be > 0, got {self.gamma}")
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise InvalidSpec(f"epsilon must be > 0, got {self.epsilon}")
        if int(self.t_max) != self.t_max or self.t_max < 1:
            raise InvalidSpec(f"t_max must be an integer >= 1, got {self.t_max}")


@dataclass(frozen=True, eq=False)
class HMatrices:
    """``M = (1 - lam) H1 + H2 - H3`` (symmetrized) and the constant ``xi = lam Tr(H1)``."""

    M: np.ndarray
    xi: float
    H1: np.ndarray
    H2: np.ndarray
    H3: np.ndarray


@dataclass(frozen=True, eq=False)
class KtrrModel:
    P: np.ndarray
    Z: np.ndarray
    objective_history: tuple
    iterations: int
    converged: bool
    config: SolverConfig = field(default_factory=SolverConfig)
    descriptor: KernelDescriptor | None = None

    @property
    def objective(self) -> float:
        return self.objective_history[-1]


def _check_square(Z, n, name="Z"):
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape != (n, n):
        raise DimensionMismatch(f"{name} must be {n}x{n}, got {Z.shape}")
    return Z


def assemble_H(blocks: KernelBlocks, Z, lam: float) -> HMatrices:
    """Build ``H1 = sum_i K_ii``, ``H2 = sum_st (Z Z^T)_st K_st``,
    ``H3 = sum_ij (K_ij + K_ji) z_ji`` and the combined ``M``."""
    n, b = blocks.n, blocks.b
    Z = _check_square(Z, n)
    F = blocks.flat()
    idx = np.arange(n)
    H1 = blocks.blocks[idx, idx].sum(axis=0)
    H2 = ((Z @ Z.T).ravel() @ F).reshape(b, b)
    S = (Z.T.ravel() @ F).reshape(b, b)
    H3 = S + S.T
    M = (1.0 - lam) * H1 + H2 - H3
    M = 0.5 * (M + M.T)
    return HMatrices(M=M, xi=float(lam * np.trace(H1)), H1=H1, H2=H2, H3=H3)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry (first on ties) is positive."""
    pivot = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivot, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def update_P(H: HMatrices, r: int) -> np.ndarray:
    """Eigenvectors of ``M`` for its ``r`` algebraically smallest eigenvalues, ascending."""
    M = H.M
    b = M.shape[0]
    if not 1 <= r <= b:
        raise IndexOutOfRange(f"r must lie in [1, {b}], got {r}")
    try:
        _, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"eigendecomposition of M did not converge: {exc}") from exc
    if not np.all(np.isfinite(V)):
        raise EigenFailure("eigendecomposition of M returned non-finite vectors")
    return _fix_signs(V[:, :r])


def assemble_Kbar(blocks: KernelBlocks, P) -> np.ndarray:
    """Projected Gram matrix ``Kbar_ij = Tr(P^T K_ij P)``."""
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != blocks.b:
        raise DimensionMismatch(f"P must have {blocks.b} rows, got shape {P.shape}")
    n = blocks.n
    Q = P @ P.T
    Q = 0.5 * (Q + Q.T)
    K = (blocks.flat() @ Q.ravel()).reshape(n, n)
    return np.triu(K) + np.triu(K, 1).T


def update_Z(Kbar, gamma: float) -> np.ndarray:
    """Solve ``(Kbar + gamma I) Z = Kbar`` by Cholesky, falling back to a
    pivoted symmetric-indefinite solve when rounding breaks definiteness."""
    Kbar = np.asarray(Kbar, dtype=np.float64)
    n = Kbar.shape[0]
    _check_square(Kbar, n, "Kbar")
    if not gamma > 0:
        raise SolveFailure(f"Kbar + gamma I is not positive definite for gamma={gamma}")
    A = Kbar + gamma * np.eye(n)
    try:
        Z = scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), Kbar)
    except (np.linalg.LinAlgError, ValueError):
        try:
            Z = scipy.linalg.solve(A, Kbar, assume_a="sym")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SolveFailure(f"Kbar + gamma I is numerically singular: {exc}") from exc
    if not np.all(np.isfinite(Z)):
        raise SolveFailure("Z update produced non-finite values")
    return Z


def objective(H: HMatrices, P, Z, gamma: float) -> float:
    """``Tr(P^T M P) + xi + gamma ||Z||_F^2``; ``H`` must be assembled from this ``Z``."""
    P = np.asarray(P, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    return float(np.sum(P * (H.M @ P)) + H.xi + gamma * np.sum(Z * Z))


INITS = ("ridge", "zero")


def initial_Z(blocks: KernelBlocks, gamma: float, init: str = "ridge") -> np.ndarray:
    """Starting representation.

    ``"ridge"`` solves the unprojected problem (``P = I_b``), i.e. plain 2D
    ridge regression in feature space. ``"zero"`` starts from ``Z = 0``, which
    makes the first ``P`` the lowest-energy directions of ``H1`` whenever
    ``lam < 1`` and tends to stall in poor stationary points.
    """
    if init == "ridge":
        return update_Z(assemble_Kbar(blocks, np.eye(blocks.b)), gamma)
    if init == "zero":
        return np.zeros((blocks.n, blocks.n))
    raise InvalidSpec(f"unknown init {init!r}; expected one of {INITS}")


def fit(blocks: KernelBlocks, cfg: SolverConfig, init: str = "ridge") -> KtrrModel:
    """Alternate the ``P`` and ``Z`` updates until the objective settles.

    Each sweep updates ``P`` first, so only the starting ``Z`` matters (see
    :func:`initial_Z`). BLAS runs single-threaded so the result is
    bit-identical whatever the machine's core count.
    """
    if cfg.r > blocks.b:
        raise InvalidSpec(f"r={cfg.r} exceeds the column count b={blocks.b}")
    history = []
    converged = False
    with threadpool_limits(limits=1):
        Z = initial_Z(blocks, cfg.gamma, init)
        H = assemble_H(blocks, Z, cfg.lam)
        for t in range(1, cfg.t_max + 1):
            try:
                P = update_P(H, cfg.r)
                Z = update_Z(assemble_Kbar(blocks, P), cfg.gamma)
            except NumericalError as exc:
                raise type(exc)(f"iteration {t}: {exc}") from exc
            H = assemble_H(blocks, Z, cfg.lam)
            g = objective(H, P, Z, cfg.gamma)
            history.append(g)
            if t > 1:
                prev = history[-2]
                if abs(g - prev) / max(1.0, abs(prev)) < cfg.epsilon:
                    converged = True
                    break
    logger.debug("fit: %d iterations, objective %.6g, converged=%s", t, history[-1], converged)
    return KtrrModel(P=P, Z=Z, objective_history=tuple(history), iterations=t,
                     converged=converged, config=cfg, descriptor=blocks.descriptor)


def feature(X, P, j: int) -> np.ndarray:
    """The ``j``-th extracted 2D feature ``X p_j p_j^T`` (``j`` is 1-based)."""
    X = np.asarray(X, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if not 1 <= j <= P.shape[1]:
        raise IndexOutOfRange(f"j must lie in [1, {P.shape[1]}], got {j}")
    p = P[:, j - 1]
    return np.outer(X @ p, p)


def reconstruct(X, P, j: int) -> np.ndarray:
    """Reconstruction from the top ``j`` features, ``X sum_{s<=j} p_s p_s^T``."""
    X = np.asarray(X, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != P.shape[0]:
        raise DimensionMismatch(f"sample with {X.shape[-1]} columns does not match P with {P.shape[0]} rows")
    if not 1 <= j <= P.shape[1]:
        raise IndexOutOfRange(f"j must lie in [1, {P.shape[1]}], got {j}")
    Pj = P[:, :j]
    return (X @ Pj) @ Pj.T


# ---------------------------------------------------------------------------
# Model dump: JSON text. Floats are written with ``repr``, which round-trips
# exactly and never needs more than 17 significant digits.

def save_model(model: KtrrModel, path) -> None:
    cfg = model.config
    doc = {
        "format": MODEL_FORMAT,
        "r": cfg.r,
        "lambda": cfg.lam,
        "gamma": cfg.gamma,
        "epsilon": cfg.epsilon,
        "t_max": cfg.t_max,
        "kernel": None if model.descriptor is None else model.descriptor.to_dict(),
        "iterations": model.iterations,
        "converged": model.converged,
        "objective_history": list(model.objective_history),
        "P": model.P.tolist(),
        "Z": model.Z.tolist(),
    }
    try:
        Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def load_model(path) -> KtrrModel:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ParseError(f"{path}: not a {MODEL_FORMAT} file")
    try:
        cfg = SolverConfig(r=doc["r"], lam=doc["lambda"], gamma=doc["gamma"],
                           epsilon=doc["epsilon"], t_max=doc["t_max"])
        desc = None if doc["kernel"] is None else KernelDescriptor.from_dict(doc["kernel"])
        P = np.array(doc["P"], dtype=np.float64)
        Z = np.array(doc["Z"], dtype=np.float64)
        return KtrrModel(P=P, Z=Z, objective_history=tuple(doc["objective_history"]),
                         iterations=doc["iterations"], converged=doc["converged"],
                         config=cfg, descriptor=desc)
    except KeyError as exc:
        raise ParseError(f"{path}: missing field {exc.args[0]!r}") from exc
