"""
Features extracted by the projection
====================================

The j-th feature of a sample is ``X p_j p_j^T``. Summing the first j
features rebuilds the sample one column direction at a time. The
directions are ordered by the fitting objective, not by the energy of this
particular sample, so the error falls unevenly.
"""

# %%
import numpy as np

from ktrr import (KernelDescriptor, SolverConfig, SyntheticSpec, compute_kernel_blocks, feature, fit,
                  generate_synthetic, reconstruct)

data = generate_synthetic(SyntheticSpec(3, 20, 12, 8, 2, 0.05, seed=4))
model = fit(compute_kernel_blocks(data, KernelDescriptor.linear()), SolverConfig(r=8, lam=0.5, gamma=0.1))
X = data.samples[0]

# %%
for j in range(1, 9):
    F = feature(X, model.P, j)
    err = np.linalg.norm(X - reconstruct(X, model.P, j)) / np.linalg.norm(X)
    print(f"j={j}  rank(feature)={np.linalg.matrix_rank(F, tol=1e-10)}  relative error={err:.4f}")

# %%
# With every direction kept the reconstruction is exact.
print(np.abs(reconstruct(X, model.P, 8) - X).max())
