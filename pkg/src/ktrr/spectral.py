"""Normalized-cut spectral clustering with a seeded k-means."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .affinity import Affinity
from .errors import (
    DegenerateGraph,
    EigenFailure,
    InvalidSpec,
    MissingFile,
    ParseError,
    StorageError,
)

DEFAULT_RESTARTS = 20
MAX_ITER = 300
TOL = 1e-9


class DegenerateClusters(UserWarning):
    """Fewer non-empty clusters than requested."""


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    labels: np.ndarray
    k: int
    inertia: float
    isolated: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def _sq_dists(points, centers):
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeans_pp(points, k, rng):
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(points, points[[idx]])[:, 0])
    return points[chosen].copy()


def _lloyd(points, centers):
    n, k = points.shape[0], centers.shape[0]
    rows = np.arange(n)
    prev = np.inf
    for _ in range(MAX_ITER):
        d2 = _sq_dists(points, centers)
        labels = np.argmin(d2, axis=1)
        own = d2[rows, labels]
        for c in np.flatnonzero(np.bincount(labels, minlength=k) == 0):
            # reseed an empty cluster with the point farthest from its centre
            far = int(np.argmax(own))
            labels[far] = c
            own[far] = -np.inf
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = points[members].mean(axis=0)
        inertia = float(_sq_dists(points, centers)[rows, labels].sum())
        if np.isfinite(prev) and prev - inertia <= TOL * prev:
            break
        prev = inertia
    d2 = _sq_dists(points, centers)
    labels = np.argmin(d2, axis=1)
    return labels, centers, float(d2[rows, labels].sum())


def kmeans(points, k: int, seed: int = 0, restarts: int = DEFAULT_RESTARTS) -> ClusterAssignment:
    """Lloyd's algorithm from k-means++ starts; the restart with the lowest
    inertia wins. Restart ``i`` draws from the stream ``(seed, i)``."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise InvalidSpec("points must be a 2D array")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise InvalidSpec(f"need 1 <= k <= n, got k={k}, n={n}")
    if restarts < 1:
        raise InvalidSpec("restarts must be >= 1")
    best = None
    for i in range(restarts):
        rng = np.random.default_rng([seed, i])
        labels, _, inertia = _lloyd(points, _kmeans_pp(points, k, rng))
        if best is None or inertia < best[1]:
            best = (labels, inertia)
    return ClusterAssignment(best[0], k, best[1])


def spectral_embedding(A, k: int):
    """Top-``k`` eigenvectors of ``D^-1/2 A D^-1/2`` with rows scaled to unit length.

    Returns the embedding and a boolean mask of zero-degree samples.
    """
    A = np.asarray(A, dtype=np.float64)
    deg = A.sum(axis=1)
    isolated = deg <= 0
    if isolated.all():
        raise DegenerateGraph("every sample has zero degree")
    deg[isolated] = 1.0
    dinv = 1.0 / np.sqrt(deg)
    N = A * dinv[:, None] * dinv[None, :]
    N = 0.5 * (N + N.T)
    try:
        _, V = np.linalg.eigh(N)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"eigendecomposition of the normalized affinity failed: {exc}") from exc
    E = V[:, ::-1][:, :k]
    norms = np.linalg.norm(E, axis=1)
    norms[norms == 0] = 1.0
    return E / norms[:, None], isolated


def ncut(A, k: int, seed: int = 0, restarts: int = DEFAULT_RESTARTS) -> ClusterAssignment:
    """Normalized-cut clustering of an affinity matrix into ``k`` groups."""
    if isinstance(A, Affinity):
        A = A.A
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if k < 2 or n < k:
        raise InvalidSpec(f"need 2 <= k <= n, got k={k}, n={n}")
    E, isolated = spectral_embedding(A, k)
    connected = ~isolated
    if connected.sum() >= k:
        fitted = kmeans(E[connected], k, seed, restarts)
        members = E[connected]
        centers = np.stack([members[fitted.labels == c].mean(axis=0) if np.any(fitted.labels == c)
                            else np.full(k, np.inf) for c in range(k)])
        d2 = _sq_dists(E, centers)
        labels = np.argmin(d2, axis=1)
        labels[connected] = fitted.labels
        inertia = fitted.inertia
    else:
        fitted = kmeans(E, k, seed, restarts)
        labels, inertia = fitted.labels, fitted.inertia
    if np.unique(labels).size < k:
        warnings.warn(f"only {np.unique(labels).size} of {k} clusters are non-empty", DegenerateClusters)
    return ClusterAssignment(labels, k, inertia, np.flatnonzero(isolated))


def save_labels_csv(labels, path) -> None:
    lines = ["index,label"] + [f"{i},{int(l)}" for i, l in enumerate(labels)]
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def load_labels_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"labels file not found: {path}")
    pairs = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#") or line.lower().replace(" ", "") == "index,label":
            continue
        try:
            i, label = (int(x) for x in line.split(","))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: expected 'index,label'") from exc
        pairs.append((i, label))
    pairs.sort()
    if [i for i, _ in pairs] != list(range(len(pairs))):
        raise ParseError(f"{path}: indices must cover 0..n-1 exactly once")
    return np.array([label for _, label in pairs], dtype=np.int64)
