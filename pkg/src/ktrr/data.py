"""2D samples, datasets, ingestion and the synthetic union-of-subspaces generator."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyDataset,
    InvalidSpec,
    MissingFile,
    ParseError,
    ShapeMismatch,
    StorageError,
)

K2D1_MAGIC = b"K2D1"
_K2D1_HEADER = struct.Struct("<4sIIIB")


def as_sample(values) -> np.ndarray:
    """Validate a single 2D sample and return it as a float64 array of shape (a, b)."""
    X = np.asarray(values, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ShapeMismatch(f"a 2D sample must be a non-empty matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidSpec("sample contains NaN or Inf")
    return X


def _remap_labels(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeMismatch("labels must be one-dimensional")
    _, inverse = np.unique(labels, return_inverse=True)
    return inverse.astype(np.int64)


@dataclass(frozen=True, eq=False)
class Dataset2D:
    """An ordered collection of ``n`` matrices of identical shape ``a x b``.

    Parameters
    ----------
    samples : array-like, shape (n, a, b)
    labels : array-like of int, shape (n,), optional
        Ground-truth cluster ids. Stored remapped to contiguous integers
        ``0..k-1`` in order of first sorted appearance.
    """

    samples: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 3:
            raise ShapeMismatch(f"samples must have shape (n, a, b), got {samples.shape}")
        n, a, b = samples.shape
        if n < 2:
            raise EmptyDataset(f"a dataset needs at least 2 samples, got {n}")
        if a < 1 or b < 1:
            raise ShapeMismatch(f"empty sample shape {(a, b)}")
        if not np.all(np.isfinite(samples)):
            raise InvalidSpec("dataset contains NaN or Inf")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if self.labels is not None:
            labels = _remap_labels(self.labels)
            if labels.shape[0] != n:
                raise ShapeMismatch(f"{labels.shape[0]} labels for {n} samples")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples.shape[1], self.samples.shape[2]

    @property
    def n_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return self.samples[i]

    def subset(self, indices) -> Dataset2D:
        indices = np.asarray(indices)
        labels = None if self.labels is None else self.labels[indices]
        return Dataset2D(self.samples[indices], labels)

    def vectors(self) -> np.ndarray:
        """Column-major vectorized samples stacked as columns, shape (a*b, n)."""
        n = self.n
        return self.samples.transpose(0, 2, 1).reshape(n, -1).T.copy()


def vectorize(sample) -> np.ndarray:
    """Stack the columns of ``sample`` into one vector (column-major order)."""
    return np.ravel(as_sample(sample), order="F")


def unvectorize(vector, a: int, b: int) -> np.ndarray:
    return np.reshape(np.asarray(vector, dtype=np.float64), (a, b), order="F")


def scale_max_abs(data: Dataset2D) -> Dataset2D:
    """Divide each sample by its largest absolute entry (all-zero samples untouched)."""
    peak = np.abs(data.samples).max(axis=(1, 2))
    peak[peak == 0] = 1.0
    return Dataset2D(data.samples / peak[:, None, None], data.labels)


# ---------------------------------------------------------------------------
# Manifest / CSV ingestion

def _read_csv_matrix(path: Path) -> np.ndarray:
    if not path.is_file():
        raise MissingFile(f"sample file not found: {path}")
    try:
        X = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return X


def load_dataset(manifest_path, scale: bool = False) -> Dataset2D:
    """Read a dataset from a manifest of CSV sample files.

    Each non-comment line is ``<relative_path>,<label>`` or ``<relative_path>``.
    Paths are resolved relative to the manifest's directory. Labels are kept
    only when every line carries one.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise MissingFile(f"manifest not found: {manifest_path}")
    try:
        text = manifest_path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{manifest_path}: not UTF-8 text") from exc

    root = manifest_path.parent
    paths, labels = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) > 2 or not parts[0]:
            raise ParseError(f"{manifest_path}:{lineno}: expected '<path>[,<label>]'")
        paths.append(root / parts[0])
        if len(parts) == 2:
            try:
                label = int(parts[1])
            except ValueError as exc:
                raise ParseError(f"{manifest_path}:{lineno}: label {parts[1]!r} is not an integer") from exc
            if label < 0:
                raise ParseError(f"{manifest_path}:{lineno}: negative label {label}")
            labels.append(label)
        else:
            labels.append(None)

    if len(paths) < 2:
        raise EmptyDataset(f"{manifest_path}: a dataset needs at least 2 samples, got {len(paths)}")

    samples = []
    for path in paths:
        X = _read_csv_matrix(path)
        if samples and X.shape != samples[0].shape:
            raise ShapeMismatch(f"{path}: shape {X.shape} differs from {samples[0].shape}")
        samples.append(X)

    has_labels = all(label is not None for label in labels)
    data = Dataset2D(np.stack(samples), labels if has_labels else None)
    return scale_max_abs(data) if scale else data


def save_dataset_csv(data: Dataset2D, directory) -> Path:
    """Write one CSV per sample plus ``manifest.txt``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = len(str(data.n - 1))
    lines = []
    for i, X in enumerate(data.samples):
        name = f"sample_{i:0{width}d}.csv"
        np.savetxt(directory / name, X, delimiter=",", fmt="%.17g")
        lines.append(name if data.labels is None else f"{name},{int(data.labels[i])}")
    manifest = directory / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


# ---------------------------------------------------------------------------
# K2D1 binary format

def save_k2d1(data: Dataset2D, path) -> None:
    n, (a, b) = data.n, data.shape
    has_labels = data.labels is not None
    parts = [_K2D1_HEADER.pack(K2D1_MAGIC, n, a, b, int(has_labels))]
    if has_labels:
        parts.append(data.labels.astype("<i4").tobytes())
    parts.append(data.samples.astype("<f8").tobytes(order="C"))
    try:
        Path(path).write_bytes(b"".join(parts))
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def load_k2d1(path) -> Dataset2D:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"dataset file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _K2D1_HEADER.size:
        raise ParseError(f"{path}: truncated header")
    magic, n, a, b, has_labels = _K2D1_HEADER.unpack_from(raw)
    if magic != K2D1_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if has_labels not in (0, 1):
        raise ParseError(f"{path}: has_labels flag must be 0 or 1")
    offset = _K2D1_HEADER.size
    expected = offset + (4 * n if has_labels else 0) + 8 * n * a * b
    if len(raw) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, found {len(raw)}")
    labels = None
    if has_labels:
        labels = np.frombuffer(raw, dtype="<i4", count=n, offset=offset).astype(np.int64)
        offset += 4 * n
        if np.any(labels < 0):
            raise ParseError(f"{path}: negative label")
    values = np.frombuffer(raw, dtype="<f8", count=n * a * b, offset=offset)
    return Dataset2D(values.reshape(n, a, b).astype(np.float64), labels)


def read_dataset(path, scale: bool = False) -> Dataset2D:
    """Load a K2D1 file or a manifest, deciding by the leading magic bytes."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"dataset not found: {path}")
    with path.open("rb") as fh:
        head = fh.read(4)
    if head == K2D1_MAGIC:
        data = load_k2d1(path)
        return scale_max_abs(data) if scale else data
    return load_dataset(path, scale=scale)


# ---------------------------------------------------------------------------
# Synthetic data

@dataclass(frozen=True)
class SyntheticSpec:
    clusters: int
    samples_per_cluster: int
    a: int
    b: int
    subspace_rank: int
    noise_sigma: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.clusters < 2:
            raise InvalidSpec(f"need at least 2 clusters, got {self.clusters}")
        if self.samples_per_cluster < 1:
            raise InvalidSpec("samples_per_cluster must be >= 1")
        if self.a < 1 or self.b < 1:
            raise InvalidSpec(f"bad sample shape ({self.a}, {self.b})")
        if not 1 <= self.subspace_rank < min(self.a, self.b):
            raise InvalidSpec(
                f"subspace_rank must satisfy 1 <= d < min(a, b) = {min(self.a, self.b)}, "
                f"got {self.subspace_rank}"
            )
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise InvalidSpec(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.seed < 0:
            raise InvalidSpec("seed must be non-negative")


def generate_synthetic(spec: SyntheticSpec) -> Dataset2D:
    """Draw samples ``U_c @ C_i + sigma * noise`` from ``k`` column subspaces.

    Every sample of cluster ``c`` has its columns in ``span(U_c)``, an
    ``a x d`` Gaussian basis; coefficients ``C_i`` are ``d x b`` Gaussian.
    Samples are ordered cluster by cluster.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    a, b, d = spec.a, spec.b, spec.subspace_rank
    samples, labels = [], []
    for c in range(spec.clusters):
        basis = rng.standard_normal((a, d))
        for _ in range(spec.samples_per_cluster):
            coeffs = rng.standard_normal((d, b))
            noise = rng.standard_normal((a, b))
            samples.append(basis @ coeffs + spec.noise_sigma * noise)
            labels.append(c)
    return Dataset2D(np.stack(samples), labels)
