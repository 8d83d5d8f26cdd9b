"""Command line front end.

Exit codes: 0 success, 2 usage or configuration error (including missing
input paths), 3 numerical failure, 4 I/O failure while reading or writing.
Errors are reported on stderr as one JSON object with ``category`` and
``message``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._threads import resolve_threads
from .affinity import DEFAULT_EXPONENT, DEFAULT_RANK_TOL, build_affinity, save_affinity_csv, save_matrix_csv
from .data import SyntheticSpec, generate_synthetic, read_dataset, save_k2d1
from .errors import DimensionMismatch, InvalidSpec, KtrrError, MissingFile, StorageError
from .harness import ablate_ktrr_vs_trr, load_grid, r_curve, run_grid
from .kernels import KernelDescriptor, compute_kernel_blocks, load_kernel_cache, save_kernel_cache
from .metrics import evaluate
from .solver import INITS, SolverConfig, feature, fit, load_model, reconstruct, save_model
from .spectral import DEFAULT_RESTARTS, load_labels_csv, ncut, save_labels_csv

logger = logging.getLogger("ktrr")


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"input path does not exist: {p}")
    return p


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def _outdir(path: str) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageError(f"cannot create {p}: {exc}") from exc
    return p


def _metrics_csv(rep) -> str:
    return f"accuracy,nmi,purity\n{rep.accuracy:.17g},{rep.nmi:.17g},{rep.purity:.17g}\n"


def _kernel_from_args(args) -> KernelDescriptor:
    return KernelDescriptor(args.kernel, sigma=args.sigma, degree=args.degree, offset=args.offset)


def _add_kernel_flags(p):
    p.add_argument("--kernel", choices=["linear", "rbf", "polynomial"], default="linear")
    p.add_argument("--sigma", type=float, default=1.0, help="RBF width (rbf only)")
    p.add_argument("--degree", type=int, default=2, help="polynomial degree (polynomial only)")
    p.add_argument("--offset", type=float, default=1.0, help="polynomial offset (polynomial only)")


def _add_common(p):
    p.add_argument("--threads", type=int, default=None,
                   help="worker count; defaults to $KTRR_THREADS, then all cores. Never changes output")
    p.add_argument("--quiet", action="store_true", help="log warnings only")


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args) -> int:
    spec = SyntheticSpec(clusters=args.clusters, samples_per_cluster=args.per, a=args.a, b=args.b,
                         subspace_rank=args.rank, noise_sigma=args.sigma, seed=args.seed)
    data = generate_synthetic(spec)
    save_k2d1(data, args.out)
    print(f"wrote {args.out}: n={data.n} a={data.shape[0]} b={data.shape[1]} "
          f"clusters={data.n_classes} rank={args.rank} sigma={args.sigma:g} seed={args.seed}")
    return 0


def cmd_fit(args) -> int:
    data_path = _existing(args.data)
    cache = _existing(args.kernel_cache) if args.kernel_cache else None
    cfg = SolverConfig(r=args.r, lam=args.lam, gamma=args.gamma, epsilon=args.epsilon, t_max=args.t_max)
    desc = None if cache else _kernel_from_args(args)
    out = _outdir(args.out)
    data = read_dataset(data_path, scale=args.scale)
    k = args.k if args.k is not None else data.n_classes
    if k < 2:
        raise InvalidSpec("cluster count unknown: pass --k or use a labeled dataset")

    resolved = {"command": "fit", "data": str(data_path), "n": data.n, "shape": list(data.shape),
                "k": k, "kernel": None if cache else desc.to_dict(), "kernel_cache": str(cache) if cache else None,
                "r": cfg.r, "lambda": cfg.lam, "gamma": cfg.gamma, "epsilon": cfg.epsilon,
                "t_max": cfg.t_max, "init": args.init, "exponent": args.exponent,
                "rank_tol": args.rank_tol, "restarts": args.restarts, "seed": args.seed,
                "scale": args.scale}
    logger.info("resolved config: %s", json.dumps(resolved, sort_keys=True))

    if cache:
        blocks = load_kernel_cache(cache)
        if blocks.n != data.n or blocks.b != data.shape[1]:
            raise DimensionMismatch(f"kernel cache is for n={blocks.n}, b={blocks.b}; "
                                    f"dataset has n={data.n}, b={data.shape[1]}")
    else:
        blocks = compute_kernel_blocks(data, desc, threads=resolve_threads(args.threads))
    model = fit(blocks, cfg, init=args.init)
    logger.info("fit: %d iterations, objective %.10g, converged=%s",
                model.iterations, model.objective, model.converged)
    aff = build_affinity(model.Z, args.exponent, args.rank_tol)
    labels = ncut(aff, k, seed=args.seed, restarts=args.restarts).labels

    save_model(model, out / "model.json")
    save_matrix_csv(model.Z, out / "Z.csv")
    save_affinity_csv(aff, out / "affinity.csv")
    save_labels_csv(labels, out / "labels.csv")
    metrics_path = out / "metrics.csv"
    if data.labels is not None:
        rep = evaluate(data.labels, labels)
        _write(metrics_path, _metrics_csv(rep))
        print(f"accuracy={rep.accuracy:.4f} nmi={rep.nmi:.4f} purity={rep.purity:.4f}")
    elif metrics_path.exists():
        metrics_path.unlink()
    return 0


def cmd_sweep(args) -> int:
    data_path = _existing(args.data)
    grid = load_grid(_existing(args.config))
    data = read_dataset(data_path, scale=args.scale)
    threads = resolve_threads(args.threads)
    logger.info("resolved config: %s", json.dumps({"command": "sweep", "data": str(data_path),
                                                   "mode": args.mode, "grid": grid.to_dict()},
                                                  sort_keys=True))
    if args.mode == "ablate":
        if args.checkpoint:
            raise InvalidSpec("--checkpoint is only supported with --mode grid")
        table = ablate_ktrr_vs_trr(data, grid, threads)
    else:
        table = run_grid(data, grid, threads, checkpoint=args.checkpoint, resume=args.resume)
    table.to_csv(args.out)
    if args.r_curve:
        if args.mode == "ablate":
            raise InvalidSpec("--r-curve needs --mode grid")
        r_curve(table, grid.rs).to_csv(args.r_curve)
    for row in table.rows:
        if row.method.endswith("-best"):
            print(f"N={row.N} {row.method} {row.kernel} {row.param_json} "
                  f"acc={row.acc_mean:.4f} nmi={row.nmi_mean:.4f} purity={row.pur_mean:.4f}")
    return 0


def cmd_reconstruct(args) -> int:
    model = load_model(_existing(args.model))
    data = read_dataset(_existing(args.data), scale=args.scale)
    out = _outdir(args.out)
    if not 0 <= args.index < data.n:
        raise InvalidSpec(f"sample index {args.index} outside [0, {data.n})")
    X = data.samples[args.index]
    if X.shape[1] != model.P.shape[0]:
        raise DimensionMismatch(f"model expects b={model.P.shape[0]}, dataset has b={X.shape[1]}")
    save_matrix_csv(feature(X, model.P, args.j), out / f"feature_{args.j}.csv")
    save_matrix_csv(reconstruct(X, model.P, args.j), out / f"reconstruction_{args.j}.csv")
    lines = ["j,frobenius_error"]
    for j in range(1, args.j + 1):
        err = float(np.linalg.norm(X - reconstruct(X, model.P, j)))
        lines.append(f"{j},{err:.17g}")
    _write(out / "summary.csv", "\n".join(lines) + "\n")
    print(f"sample {args.index}: reconstruction error with {args.j} features = {err:.6g}")
    return 0


def cmd_eval(args) -> int:
    truth = load_labels_csv(_existing(args.truth))
    pred = load_labels_csv(_existing(args.pred))
    rep = evaluate(truth, pred)
    text = _metrics_csv(rep)
    if args.out:
        _write(Path(args.out), text)
    sys.stdout.write(text)
    return 0


def cmd_kernel_cache(args) -> int:
    data = read_dataset(_existing(args.data), scale=args.scale)
    blocks = compute_kernel_blocks(data, _kernel_from_args(args), threads=resolve_threads(args.threads))
    save_kernel_cache(blocks, args.out)
    print(f"wrote {args.out}: {blocks.descriptor.label()} n={blocks.n} b={blocks.b}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ktrr", description="Kernel two-dimensional ridge regression "
                                     "subspace clustering.")
    parser.add_argument("--version", action="version", version=f"ktrr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic union-of-subspaces dataset (K2D1)")
    p.add_argument("--clusters", type=int, required=True, help="number of clusters k")
    p.add_argument("--per", type=int, required=True, help="samples per cluster")
    p.add_argument("--a", type=int, required=True, help="rows per sample")
    p.add_argument("--b", type=int, required=True, help="columns per sample")
    p.add_argument("--rank", type=int, required=True, help="column-subspace rank per cluster")
    p.add_argument("--sigma", type=float, default=0.0, help="additive Gaussian noise level")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output K2D1 path")
    p.add_argument("--quiet", action="store_true", help="log warnings only")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit one model, cluster, and evaluate")
    p.add_argument("--data", required=True, help="K2D1 file or CSV manifest")
    p.add_argument("--out", required=True, help="output directory")
    _add_kernel_flags(p)
    p.add_argument("--kernel-cache", default=None, help="precomputed K2DK file (overrides kernel flags)")
    p.add_argument("--r", type=int, default=5, help="number of projection directions")
    p.add_argument("--lam", type=float, default=0.1, help="projection reconstruction weight")
    p.add_argument("--gamma", type=float, default=0.1, help="ridge weight on Z")
    p.add_argument("--epsilon", type=float, default=1e-6, help="relative objective tolerance")
    p.add_argument("--t-max", type=int, default=50, help="iteration cap")
    p.add_argument("--init", choices=INITS, default="ridge", help="starting representation")
    p.add_argument("--k", type=int, default=None, help="cluster count (default: from labels)")
    p.add_argument("--exponent", type=float, default=DEFAULT_EXPONENT, help="affinity sharpening power")
    p.add_argument("--rank-tol", type=float, default=DEFAULT_RANK_TOL, help="skinny SVD cut-off")
    p.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS, help="k-means restarts")
    p.add_argument("--seed", type=int, default=0, help="k-means seed")
    p.add_argument("--scale", action="store_true", help="scale each sample to max |value| = 1")
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="run a parameter grid over random cluster subsets")
    p.add_argument("--data", required=True, help="labeled K2D1 file or CSV manifest")
    p.add_argument("--config", required=True, help="JSON grid config")
    p.add_argument("--out", required=True, help="result table CSV")
    p.add_argument("--mode", choices=["grid", "ablate"], default="grid",
                   help="'ablate' adds the linear-kernel (TRR) arm")
    p.add_argument("--r-curve", default=None, help="also write best metrics per r to this CSV")
    p.add_argument("--checkpoint", default=None, help="JSON-lines file recording finished jobs")
    p.add_argument("--resume", action="store_true", help="skip jobs already in --checkpoint")
    p.add_argument("--scale", action="store_true", help="scale each sample to max |value| = 1")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reconstruct", help="extract features and reconstructions of one sample")
    p.add_argument("--model", required=True, help="model.json written by 'fit'")
    p.add_argument("--data", required=True, help="K2D1 file or CSV manifest")
    p.add_argument("--index", type=int, required=True, help="0-based sample index")
    p.add_argument("--j", type=int, required=True, help="feature count, 1 <= j <= r")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scale", action="store_true", help="scale each sample to max |value| = 1")
    p.add_argument("--quiet", action="store_true", help="log warnings only")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", help="metrics between two 'index,label' CSV files")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", default=None, help="also write the metrics CSV here")
    p.add_argument("--quiet", action="store_true", help="log warnings only")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("kernel-cache", help="precompute kernel blocks into a K2DK file")
    p.add_argument("--data", required=True, help="K2D1 file or CSV manifest")
    p.add_argument("--out", required=True, help="output K2DK path")
    _add_kernel_flags(p)
    p.add_argument("--scale", action="store_true", help="scale each sample to max |value| = 1")
    _add_common(p)
    p.set_defaults(func=cmd_kernel_cache)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except KtrrError as exc:
        sys.stderr.write(json.dumps({"category": exc.category, "error": type(exc).__name__,
                                     "message": str(exc)}) + "\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(json.dumps({"category": "io", "error": type(exc).__name__,
                                     "message": str(exc)}) + "\n")
        return 4


if __name__ == "__main__":
    sys.exit(main())
