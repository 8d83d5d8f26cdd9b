"""Affinity matrix from a self-expressive representation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidSpec, StorageError, SvdFailure

logger = logging.getLogger(__name__)

DEFAULT_EXPONENT = 4.0
DEFAULT_RANK_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Affinity:
    A: np.ndarray
    exponent: float = DEFAULT_EXPONENT

    @property
    def n(self) -> int:
        return self.A.shape[0]


def build_affinity(Z, exponent: float = DEFAULT_EXPONENT, rank_tol: float = DEFAULT_RANK_TOL) -> Affinity:
    """Affinity ``A_ij = |(Ubar Ubar^T)_ij| ** exponent``.

    ``Z`` is reduced to its skinny SVD ``U S V^T`` (singular values above
    ``rank_tol * s_max``), ``Ubar`` is ``U S^(1/2)`` with unit-norm rows.
    Rows that vanish stay zero, so those samples get no affinity at all.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] != Z.shape[1]:
        raise InvalidSpec(f"Z must be square, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise InvalidSpec("Z contains NaN or Inf")
    if not exponent >= 1:
        raise InvalidSpec(f"exponent must be >= 1, got {exponent}")
    n = Z.shape[0]
    try:
        U, s, _ = np.linalg.svd(Z, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdFailure(f"SVD of Z did not converge: {exc}") from exc
    if s.size == 0 or s[0] <= 0:
        return Affinity(np.zeros((n, n)), exponent)
    keep = s > rank_tol * s[0]
    Zbar = U[:, keep] * np.sqrt(s[keep])
    norms = np.linalg.norm(Zbar, axis=1)
    zero = norms == 0
    if zero.any():
        logger.warning("%d samples have a zero row in the weighted column space and are isolated",
                       int(zero.sum()))
    norms[zero] = 1.0
    Ubar = Zbar / norms[:, None]
    C = np.clip(np.abs(Ubar @ Ubar.T), 0.0, 1.0)
    C = 0.5 * (C + C.T)
    return Affinity(C**exponent, exponent)


def save_affinity_csv(aff: Affinity, path) -> None:
    try:
        np.savetxt(path, aff.A, delimiter=",", fmt="%.17g")
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def save_matrix_csv(M, path) -> None:
    try:
        np.savetxt(Path(path), np.asarray(M), delimiter=",", fmt="%.17g")
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
