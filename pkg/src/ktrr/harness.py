"""Experiment harness: cluster-subset sampling, grid sweeps and ablations.

A sweep is split into jobs, one per (N, subset, kernel); a job computes the
kernel blocks once and then runs every (lambda, gamma, r) cell on them. Each
cell seeds its clustering from a hash of (master seed, N, subset, cell
parameters), so results do not depend on job order, on the number of
workers, or on which other grid points are present.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from ._threads import resolve_threads
from .affinity import DEFAULT_EXPONENT, build_affinity
from .data import Dataset2D
from .errors import (
    ConfigError,
    KtrrError,
    MissingFile,
    MissingLabels,
    NotEnoughClasses,
    StorageError,
)
from .kernels import KernelDescriptor, compute_kernel_blocks
from .metrics import evaluate
from .solver import INITS, SolverConfig, fit
from .spectral import DEFAULT_RESTARTS, ncut

logger = logging.getLogger(__name__)

CSV_HEADER = ["N", "method", "kernel", "param_json", "acc_mean", "acc_std",
              "nmi_mean", "nmi_std", "pur_mean", "pur_std", "cells_failed"]

SWEEP_VALUES = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0)
R_VALUES = (1, 3, 5, 7, 9)


@dataclass(frozen=True)
class ExperimentGrid:
    """Parameter grid and sampling protocol of a sweep.

    ``subset_sizes`` lists the cluster counts N to draw; ``None`` means a
    single N equal to the number of classes in the dataset.
    """

    rbf_sigmas: tuple = ()
    poly_degrees: tuple = ()
    linear: bool = True
    poly_offset: float = 1.0
    lambdas: tuple = (0.1,)
    gammas: tuple = (0.1,)
    rs: tuple = (5,)
    subset_sizes: tuple | None = None
    subsets_per_N: int = 1
    master_seed: int = 0
    epsilon: float = 1e-6
    t_max: int = 50
    exponent: float = DEFAULT_EXPONENT
    restarts: int = DEFAULT_RESTARTS
    init: str = "ridge"

    def __post_init__(self):
        for name in ("rbf_sigmas", "poly_degrees", "lambdas", "gammas", "rs"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.subset_sizes is not None:
            object.__setattr__(self, "subset_sizes", tuple(int(N) for N in self.subset_sizes))
        if not self.kernels():
            raise ConfigError("grid has no kernels: enable linear or give rbf_sigmas / poly_degrees")
        for name in ("lambdas", "gammas", "rs"):
            if not getattr(self, name):
                raise ConfigError(f"grid field {name!r} must be non-empty")
        if self.subset_sizes is not None and not self.subset_sizes:
            raise ConfigError("grid field 'subset_sizes' must be non-empty")
        if self.subsets_per_N < 1:
            raise ConfigError("subsets_per_N must be >= 1")
        if self.init not in INITS:
            raise ConfigError(f"init must be one of {INITS}, got {self.init!r}")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if not self.exponent >= 1:
            raise ConfigError(f"exponent must be >= 1, got {self.exponent}")
        # validate every point up front
        for lam in self.lambdas:
            for gamma in self.gammas:
                for r in self.rs:
                    self.solver_config(lam, gamma, r)

    def kernels(self) -> list:
        out = [KernelDescriptor.linear()] if self.linear else []
        out += [KernelDescriptor.rbf(s) for s in self.rbf_sigmas]
        out += [KernelDescriptor.polynomial(d, self.poly_offset) for d in self.poly_degrees]
        return out

    def solver_config(self, lam, gamma, r) -> SolverConfig:
        return SolverConfig(r=int(r), lam=float(lam), gamma=float(gamma),
                            epsilon=self.epsilon, t_max=self.t_max)

    def points(self) -> list:
        """Grid points ``(kernel, lam, gamma, r)`` in canonical order."""
        return [(desc, lam, gamma, r)
                for desc in self.kernels()
                for lam in self.lambdas
                for gamma in self.gammas
                for r in self.rs]

    def linear_only(self) -> ExperimentGrid:
        return replace(self, linear=True, rbf_sigmas=(), poly_degrees=())

    def to_dict(self) -> dict:
        return {
            "kernels": {"linear": self.linear, "rbf_sigmas": list(self.rbf_sigmas),
                        "poly_degrees": list(self.poly_degrees), "poly_offset": self.poly_offset},
            "lambdas": list(self.lambdas),
            "gammas": list(self.gammas),
            "rs": list(self.rs),
            "subset_sizes": None if self.subset_sizes is None else list(self.subset_sizes),
            "subsets_per_N": self.subsets_per_N,
            "master_seed": self.master_seed,
            "epsilon": self.epsilon,
            "t_max": self.t_max,
            "exponent": self.exponent,
            "restarts": self.restarts,
            "init": self.init,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentGrid:
        if not isinstance(doc, dict):
            raise ConfigError("grid config must be a JSON object")
        doc = dict(doc)
        kernels = doc.pop("kernels", {})
        if not isinstance(kernels, dict):
            raise ConfigError("field 'kernels' must be an object")
        unknown = set(kernels) - {"linear", "rbf_sigmas", "poly_degrees", "poly_offset"}
        if unknown:
            raise ConfigError(f"unknown field(s) kernels.{', kernels.'.join(sorted(unknown))}")
        allowed = {"lambdas", "gammas", "rs", "subset_sizes", "subsets_per_N", "master_seed",
                   "epsilon", "t_max", "exponent", "restarts", "init"}
        unknown = set(doc) - allowed
        if unknown:
            raise ConfigError(f"unknown field(s) {', '.join(sorted(unknown))}")
        kwargs = {}
        for key, value in {**kernels, **doc}.items():
            kwargs[key] = _typed_field(key, value)
        try:
            return cls(**kwargs)
        except KtrrError as exc:
            raise ConfigError(str(exc)) from exc


_FIELD_TYPES = {
    "linear": bool, "rbf_sigmas": float, "poly_degrees": int, "poly_offset": float,
    "lambdas": float, "gammas": float, "rs": int, "subset_sizes": int,
    "subsets_per_N": int, "master_seed": int, "epsilon": float, "t_max": int,
    "exponent": float, "restarts": int, "init": str,
}
_LIST_FIELDS = {"rbf_sigmas", "poly_degrees", "lambdas", "gammas", "rs", "subset_sizes"}


def _typed_field(key, value):
    kind = _FIELD_TYPES[key]

    def check(v):
        ok = isinstance(v, kind) and not (kind is not bool and isinstance(v, bool))
        if kind is float and isinstance(v, int) and not isinstance(v, bool):
            ok, v = True, float(v)
        if not ok:
            raise ConfigError(f"field {key!r}: expected {kind.__name__}, got {v!r}")
        return v

    if key in _LIST_FIELDS:
        if key == "subset_sizes" and value is None:
            return None
        if not isinstance(value, list):
            raise ConfigError(f"field {key!r}: expected a list")
        return tuple(check(v) for v in value)
    return check(value)


def load_grid(path) -> ExperimentGrid:
    """Read a JSON grid config; errors name the offending line or field."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"grid config not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return ExperimentGrid.from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Sampling

def sample_subsets(data: Dataset2D, N: int, count: int, seed: int) -> list:
    """Draw ``count`` subsets, each holding every sample of ``N`` distinct classes.

    Classes are chosen uniformly without replacement; draw ``s`` uses the
    random stream ``(seed, N, s)``.
    """
    if data.labels is None:
        raise MissingLabels("subset sampling needs a labeled dataset")
    k = data.n_classes
    if not 1 <= N <= k:
        raise NotEnoughClasses(f"cannot draw {N} classes from a dataset with {k}")
    out = []
    for s in range(count):
        rng = np.random.default_rng([seed, N, s])
        classes = np.sort(rng.choice(k, size=N, replace=False))
        out.append(data.subset(np.flatnonzero(np.isin(data.labels, classes))))
    return out


def cell_seed(master_seed: int, N: int, subset: int, desc: KernelDescriptor, lam, gamma, r) -> int:
    key = json.dumps([master_seed, N, subset, desc.to_dict(), float(lam), float(gamma), int(r)],
                     sort_keys=True)
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")


def param_key(desc: KernelDescriptor, lam, gamma, r) -> str:
    return json.dumps({**desc.params(), "lambda": float(lam), "gamma": float(gamma), "r": int(r)},
                      sort_keys=True)


# ---------------------------------------------------------------------------
# Running

def _run_job(subset_data: Dataset2D, N: int, s: int, desc: KernelDescriptor, grid: ExperimentGrid) -> list:
    """All (lambda, gamma, r) cells of one subset and one kernel."""
    cells = []
    with threadpool_limits(limits=1):
        try:
            blocks = compute_kernel_blocks(subset_data, desc, threads=1)
        except KtrrError as exc:
            blocks, kernel_error = None, f"{type(exc).__name__}: {exc}"
        for lam in grid.lambdas:
            for gamma in grid.gammas:
                for r in grid.rs:
                    cell = {"N": N, "subset": s, "kernel": desc.to_dict(), "lambda": float(lam),
                            "gamma": float(gamma), "r": int(r), "failed": False}
                    try:
                        if blocks is None:
                            raise _CellFailure(kernel_error)
                        model = fit(blocks, grid.solver_config(lam, gamma, r), init=grid.init)
                        aff = build_affinity(model.Z, grid.exponent)
                        seed = cell_seed(grid.master_seed, N, s, desc, lam, gamma, r)
                        labels = ncut(aff, N, seed=seed, restarts=grid.restarts).labels
                        rep = evaluate(subset_data.labels, labels)
                        cell.update(accuracy=rep.accuracy, nmi=rep.nmi, purity=rep.purity,
                                    iterations=model.iterations, converged=model.converged)
                    except (KtrrError, _CellFailure) as exc:
                        cell.update(failed=True, error=f"{type(exc).__name__}: {exc}")
                        logger.warning("cell failed N=%d subset=%d %s: %s", N, s,
                                       param_key(desc, lam, gamma, r), exc)
                    cells.append(cell)
    return cells


class _CellFailure(Exception):
    pass


def _job_key(N, s, desc) -> str:
    return json.dumps([N, s, desc.to_dict()], sort_keys=True)


def _fingerprint(data: Dataset2D, grid: ExperimentGrid) -> str:
    h = hashlib.sha256(json.dumps(grid.to_dict(), sort_keys=True).encode())
    h.update(data.samples.tobytes())
    h.update(data.labels.tobytes())
    return h.hexdigest()[:16]


def _read_checkpoint(path: Path, fingerprint: str) -> dict:
    done = {}
    if not path.is_file():
        return done
    for line in path.read_text(encoding="utf-8").splitlines():
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            # a run killed mid-write leaves a partial last line
            continue
        if rec.get("fingerprint") == fingerprint:
            done[rec["job"]] = rec["cells"]
    return done


def run_cells(data: Dataset2D, grid: ExperimentGrid, threads=None, checkpoint=None,
              resume: bool = False) -> list:
    """Evaluate every cell of the sweep and return the raw cell records in canonical order."""
    if data.labels is None:
        raise MissingLabels("a sweep needs a labeled dataset")
    sizes = grid.subset_sizes or (data.n_classes,)
    jobs = []
    for N in sizes:
        for s, sub in enumerate(sample_subsets(data, N, grid.subsets_per_N, grid.master_seed)):
            for desc in grid.kernels():
                jobs.append((_job_key(N, s, desc), sub, N, s, desc))

    done = {}
    fh = None
    fingerprint = _fingerprint(data, grid)
    if checkpoint is not None:
        checkpoint = Path(checkpoint)
        if resume:
            done = _read_checkpoint(checkpoint, fingerprint)
            logger.info("resuming: %d of %d jobs already in %s", sum(j[0] in done for j in jobs),
                        len(jobs), checkpoint)
        try:
            if resume and checkpoint.is_file():
                # drop a partial trailing line so appended records stay parseable
                text = checkpoint.read_text(encoding="utf-8")
                if text and not text.endswith("\n"):
                    checkpoint.write_text(text[: text.rfind("\n") + 1], encoding="utf-8")
            fh = checkpoint.open("a" if resume else "w", encoding="utf-8")
        except OSError as exc:
            raise StorageError(f"cannot open checkpoint {checkpoint}: {exc}") from exc

    todo = [j for j in jobs if j[0] not in done]
    workers = min(resolve_threads(threads), max(1, len(todo)))

    def record(job, cells):
        done[job[0]] = cells
        for c in cells:
            if c["failed"]:
                continue
            logger.info("N=%d subset=%d %s acc=%.4f nmi=%.4f", c["N"], c["subset"],
                        param_key(KernelDescriptor.from_dict(c["kernel"]), c["lambda"], c["gamma"], c["r"]),
                        c["accuracy"], c["nmi"])
        if fh is not None:
            fh.write(json.dumps({"fingerprint": fingerprint, "job": job[0], "cells": cells}) + "\n")
            fh.flush()

    try:
        if workers == 1:
            for job in todo:
                record(job, _run_job(job[1], job[2], job[3], job[4], grid))
        else:
            from joblib import Parallel, delayed

            results = Parallel(n_jobs=workers, return_as="generator")(
                delayed(_run_job)(job[1], job[2], job[3], job[4], grid) for job in todo)
            for job, cells in zip(todo, results):
                record(job, cells)
    finally:
        if fh is not None:
            fh.close()

    return [cell for job in jobs for cell in done[job[0]]]


@dataclass
class ResultRow:
    N: int
    method: str
    kernel: str
    params: dict
    acc_mean: float
    acc_std: float
    nmi_mean: float
    nmi_std: float
    pur_mean: float
    pur_std: float
    cells_failed: int
    cells: int = 0

    @property
    def param_json(self) -> str:
        return json.dumps(self.params, sort_keys=True)


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def best(self, N: int, method: str = "KTRR") -> ResultRow:
        for row in self.rows:
            if row.N == N and row.method == f"{method}-best":
                return row
        raise KeyError((N, method))

    def grid_rows(self, method: str | None = None) -> list:
        return [r for r in self.rows if not r.method.endswith("-best")
                and (method is None or r.method == method)]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in self.rows:
            w.writerow([row.N, row.method, row.kernel, row.param_json]
                       + [_fmt(v) for v in (row.acc_mean, row.acc_std, row.nmi_mean,
                                            row.nmi_std, row.pur_mean, row.pur_std)]
                       + [row.cells_failed])
        text = buf.getvalue()
        if path is not None:
            try:
                Path(path).write_text(text, encoding="utf-8")
            except OSError as exc:
                raise StorageError(f"cannot write {path}: {exc}") from exc
        return text


def _fmt(v: float) -> str:
    return "nan" if np.isnan(v) else f"{v:.17g}"


def _select_best(rows):
    """Highest mean accuracy, then NMI; earliest grid point on exact ties."""
    best = None
    for row in rows:
        if np.isnan(row.acc_mean):
            continue
        if best is None or (row.acc_mean, row.nmi_mean) > (best.acc_mean, best.nmi_mean):
            best = row
    return best


def aggregate(cells: list, grid: ExperimentGrid, method: str = "KTRR") -> ResultTable:
    """Mean and standard deviation (ddof 0) over subsets per (N, grid point),
    followed by one ``<method>-best`` row per N."""
    groups = {}
    for c in cells:
        desc = KernelDescriptor.from_dict(c["kernel"])
        key = (c["N"], param_key(desc, c["lambda"], c["gamma"], c["r"]), desc.label())
        groups.setdefault(key, []).append(c)
    table = ResultTable()
    sizes = []
    for (N, pkey, klabel), members in groups.items():
        if N not in sizes:
            sizes.append(N)
        ok = [m for m in members if not m["failed"]]
        stats = []
        for metric in ("accuracy", "nmi", "purity"):
            vals = np.array([m[metric] for m in ok], dtype=np.float64)
            stats += [float(vals.mean()), float(vals.std())] if vals.size else [np.nan, np.nan]
        table.rows.append(ResultRow(N, method, klabel, json.loads(pkey), *stats,
                                    cells_failed=len(members) - len(ok), cells=len(members)))
    for N in sizes:
        best = _select_best([r for r in table.rows if r.N == N])
        if best is not None:
            table.rows.append(replace(best, method=f"{method}-best"))
    return table


def run_grid(data: Dataset2D, grid: ExperimentGrid, threads=None, checkpoint=None,
             resume: bool = False, method: str = "KTRR") -> ResultTable:
    """fit, affinity, NCut with ``k = N`` and metrics for every cell; aggregated per grid point."""
    return aggregate(run_cells(data, grid, threads, checkpoint, resume), grid, method)


def ablate_ktrr_vs_trr(data: Dataset2D, grid: ExperimentGrid, threads=None) -> ResultTable:
    """The full grid (KTRR) next to its linear-kernel restriction (TRR), best rows paired per N."""
    ktrr = run_grid(data, grid, threads, method="KTRR")
    trr = run_grid(data, grid.linear_only(), threads, method="TRR")
    table = ResultTable(ktrr.grid_rows() + trr.grid_rows())
    for N in dict.fromkeys(r.N for r in ktrr.rows):
        for src, method in ((ktrr, "KTRR"), (trr, "TRR")):
            try:
                table.rows.append(src.best(N, method))
            except KeyError:
                pass
    return table


def r_curve(table: ResultTable, rs) -> ResultTable:
    """Per (N, r): the best grid row over all other parameters, as method ``KTRR-r``."""
    out = ResultTable()
    rows = table.grid_rows()
    for N in dict.fromkeys(r.N for r in rows):
        for r in rs:
            best = _select_best([row for row in rows if row.N == N and row.params["r"] == r])
            if best is not None:
                out.rows.append(replace(best, method="KTRR-r"))
    return out


def sweep_r(data: Dataset2D, grid: ExperimentGrid, threads=None) -> ResultTable:
    """Best-over-other-parameters metrics for each projection count in ``grid.rs``."""
    return r_curve(run_grid(data, grid, threads), grid.rs)
