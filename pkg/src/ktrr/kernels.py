"""Column-wise kernels and the n x n grid of b x b kernel blocks.

For samples ``X_i`` and ``X_j`` (both ``a x b``) the block ``K_ij`` holds the
kernel value between every column of ``X_i`` and every column of ``X_j``.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from ._threads import resolve_threads
from .data import Dataset2D, as_sample
from .errors import (
    InvalidSpec,
    LengthMismatch,
    MemoryBudgetExceeded,
    MissingFile,
    ParseError,
    ShapeMismatch,
    StorageError,
)

KINDS = ("linear", "rbf", "polynomial")
DEFAULT_MAX_BYTES = 8 * 1024**3

# Upper bound on elements of the (m, a, b, b) difference tensor built for RBF rows.
_RBF_CHUNK_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class KernelDescriptor:
    """Kernel on column vectors.

    ``linear``: ``u.v``; ``rbf``: ``exp(-|u - v|^2 / (2 sigma^2))``;
    ``polynomial``: ``(u.v + offset) ** degree``.
    """

    kind: str = "linear"
    sigma: float = 1.0
    degree: int = 2
    offset: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "rbf" and not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidSpec(f"rbf sigma must be > 0, got {self.sigma}")
        if self.kind == "polynomial":
            if int(self.degree) != self.degree or self.degree < 1:
                raise InvalidSpec(f"polynomial degree must be an integer >= 1, got {self.degree}")
            if not (np.isfinite(self.offset) and self.offset >= 0):
                raise InvalidSpec(f"polynomial offset must be >= 0, got {self.offset}")

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def rbf(cls, sigma):
        return cls("rbf", sigma=float(sigma))

    @classmethod
    def polynomial(cls, degree, offset=1.0):
        return cls("polynomial", degree=int(degree), offset=float(offset))

    def params(self) -> dict:
        """Only the parameters that affect this kind."""
        if self.kind == "rbf":
            return {"sigma": self.sigma}
        if self.kind == "polynomial":
            return {"degree": self.degree, "offset": self.offset}
        return {}

    def label(self) -> str:
        if self.kind == "rbf":
            return f"rbf(sigma={self.sigma:g})"
        if self.kind == "polynomial":
            return f"polynomial(degree={self.degree}, offset={self.offset:g})"
        return "linear"

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params()}

    @classmethod
    def from_dict(cls, d: dict) -> KernelDescriptor:
        d = dict(d)
        kind = d.pop("kind", "linear")
        unknown = set(d) - {"sigma", "degree", "offset"}
        if unknown:
            raise InvalidSpec(f"unknown kernel fields {sorted(unknown)}")
        return cls(kind, **d)


def kernel_eval(desc: KernelDescriptor, u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise LengthMismatch(f"kernel arguments must be equal-length vectors, got {u.shape} and {v.shape}")
    if desc.kind == "linear":
        return float(u @ v)
    if desc.kind == "polynomial":
        return float((u @ v + desc.offset) ** desc.degree)
    d = u - v
    return float(np.exp(-(d @ d) / (2.0 * desc.sigma**2)))


def _kernel_row(desc: KernelDescriptor, Xi: np.ndarray, Xs: np.ndarray) -> np.ndarray:
    """Blocks between ``Xi`` (a, b) and each of ``Xs`` (m, a, b); returns (m, b, b)."""
    if desc.kind in ("linear", "polynomial"):
        G = np.matmul(Xi.T, Xs)
        if desc.kind == "polynomial":
            G = (G + desc.offset) ** desc.degree
        return G
    m, a, b = Xs.shape
    out = np.empty((m, b, b))
    step = max(1, _RBF_CHUNK_ELEMENTS // max(1, a * b * b))
    scale = -1.0 / (2.0 * desc.sigma**2)
    for start in range(0, m, step):
        chunk = Xs[start:start + step]
        diff = Xi[None, :, :, None] - chunk[:, :, None, :]
        out[start:start + step] = np.exp(np.einsum("mapq,mapq->mpq", diff, diff) * scale)
    return out


def block_kernel(X_i, X_j, desc: KernelDescriptor) -> np.ndarray:
    """The ``b x b`` matrix of kernel values between columns of ``X_i`` and ``X_j``."""
    X_i, X_j = as_sample(X_i), as_sample(X_j)
    if X_i.shape != X_j.shape:
        raise ShapeMismatch(f"sample shapes differ: {X_i.shape} vs {X_j.shape}")
    return _kernel_row(desc, X_i, X_j[None])[0]


@dataclass(frozen=True, eq=False)
class KernelBlocks:
    """Dense kernel blocks, ``blocks[i, j]`` is ``K_ij`` with shape (b, b)."""

    blocks: np.ndarray
    descriptor: KernelDescriptor

    @property
    def n(self) -> int:
        return self.blocks.shape[0]

    @property
    def b(self) -> int:
        return self.blocks.shape[2]

    def __getitem__(self, ij):
        return self.blocks[ij]

    def flat(self) -> np.ndarray:
        """View of shape (n*n, b*b); row ``i*n + j`` is ``K_ij`` flattened row-major."""
        n, b = self.n, self.b
        return self.blocks.reshape(n * n, b * b)


def kernel_memory_bytes(n: int, b: int) -> int:
    return 8 * n * n * b * b


def compute_kernel_blocks(data: Dataset2D, desc: KernelDescriptor, threads=None,
                          max_bytes: int = DEFAULT_MAX_BYTES) -> KernelBlocks:
    """Compute all ``n^2`` blocks.

    Only the upper triangle ``i <= j`` is evaluated; ``K_ji`` is stored as the
    exact transpose of ``K_ij``. Rows are distributed over ``threads`` workers
    with BLAS pinned to one thread, so the result does not depend on the
    worker count.
    """
    X = data.samples
    n, a, b = X.shape
    need = kernel_memory_bytes(n, b)
    if need > max_bytes:
        raise MemoryBudgetExceeded(
            f"kernel blocks need {need / 2**30:.2f} GiB, above the cap of {max_bytes / 2**30:.2f} GiB"
        )
    blocks = np.empty((n, n, b, b))

    def fill_row(i):
        row = _kernel_row(desc, X[i], X[i:])
        diag = row[0]
        row[0] = 0.5 * (diag + diag.T)
        blocks[i, i:] = row
        blocks[i + 1:, i] = row[1:].transpose(0, 2, 1)

    workers = resolve_threads(threads)
    with threadpool_limits(limits=1):
        if workers == 1:
            for i in range(n):
                fill_row(i)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(fill_row, range(n)))
    blocks.setflags(write=False)
    return KernelBlocks(blocks, desc)


# ---------------------------------------------------------------------------
# K2DK block cache:
#   magic "K2DK", u8 kind (0 linear, 1 rbf, 2 polynomial), f64 sigma,
#   u32 degree, f64 offset, u32 n, u32 b, then the blocks K_ij for i <= j in
#   row-major (i, j) order, each b x b row-major, all little-endian f64.

K2DK_MAGIC = b"K2DK"
_K2DK_HEADER = struct.Struct("<4sBdIdII")


def save_kernel_cache(kb: KernelBlocks, path) -> None:
    d = kb.descriptor
    n, b = kb.n, kb.b
    header = _K2DK_HEADER.pack(K2DK_MAGIC, KINDS.index(d.kind), float(d.sigma),
                               int(d.degree), float(d.offset), n, b)
    iu, ju = np.triu_indices(n)
    body = np.ascontiguousarray(kb.blocks[iu, ju]).astype("<f8").tobytes()
    try:
        Path(path).write_bytes(header + body)
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def load_kernel_cache(path) -> KernelBlocks:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"kernel cache not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _K2DK_HEADER.size:
        raise ParseError(f"{path}: truncated header")
    magic, kind, sigma, degree, offset, n, b = _K2DK_HEADER.unpack_from(raw)
    if magic != K2DK_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if kind >= len(KINDS):
        raise ParseError(f"{path}: unknown kernel code {kind}")
    desc = KernelDescriptor(KINDS[kind], sigma=sigma, degree=degree, offset=offset)
    count = n * (n + 1) // 2
    if len(raw) != _K2DK_HEADER.size + 8 * count * b * b:
        raise ParseError(f"{path}: size does not match n={n}, b={b}")
    upper = np.frombuffer(raw, dtype="<f8", offset=_K2DK_HEADER.size).reshape(count, b, b)
    blocks = np.empty((n, n, b, b))
    iu, ju = np.triu_indices(n)
    blocks[iu, ju] = upper
    blocks[ju, iu] = upper.transpose(0, 2, 1)
    blocks.setflags(write=False)
    return KernelBlocks(blocks, desc)
