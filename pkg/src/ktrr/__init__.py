"""Kernel two-dimensional ridge regression (KTRR) for subspace clustering of 2D data."""

__version__ = "0.1.0"

from .affinity import Affinity, build_affinity
from .data import (
    Dataset2D,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    load_k2d1,
    read_dataset,
    save_dataset_csv,
    save_k2d1,
    vectorize,
)
from .errors import KtrrError
from .harness import (
    ExperimentGrid,
    ResultTable,
    ablate_ktrr_vs_trr,
    load_grid,
    run_grid,
    sample_subsets,
    sweep_r,
)
from .kernels import KernelBlocks, KernelDescriptor, block_kernel, compute_kernel_blocks, kernel_eval
from .metrics import MetricReport, accuracy, evaluate, nmi, purity
from .solver import (
    KtrrModel,
    SolverConfig,
    assemble_H,
    assemble_Kbar,
    feature,
    fit,
    initial_Z,
    load_model,
    objective,
    reconstruct,
    save_model,
    update_P,
    update_Z,
)
from .spectral import ClusterAssignment, kmeans, ncut
