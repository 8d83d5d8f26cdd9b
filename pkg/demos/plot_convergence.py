"""
Objective descent of the alternating updates
============================================

Every sweep updates the projection ``P`` and then ``Z``; neither step can
raise the objective. Compare the two starting points for ``Z``.
"""

# %%
import numpy as np

from ktrr import KernelDescriptor, SolverConfig, SyntheticSpec, compute_kernel_blocks, fit, generate_synthetic

data = generate_synthetic(SyntheticSpec(3, 30, 10, 10, 1, 0.01, seed=1))
cfg = SolverConfig(r=5, lam=0.1, gamma=0.1, t_max=100)

# %%
for desc in (KernelDescriptor.linear(), KernelDescriptor.rbf(1.0), KernelDescriptor.polynomial(2)):
    blocks = compute_kernel_blocks(data, desc)
    for init in ("ridge", "zero"):
        m = fit(blocks, cfg, init=init)
        h = np.array(m.objective_history)
        print(f"{desc.label():32s} {init:5s} iterations={m.iterations:3d} "
              f"final={h[-1]:.6g} largest step={np.diff(h).max(initial=-np.inf):.2g}")

# %%
# Starting from the unprojected ridge solution reaches a lower objective in
# fewer sweeps; starting from zero first picks the lowest-energy columns.
m = fit(compute_kernel_blocks(data, KernelDescriptor.rbf(1.0)), cfg)
for t, g in enumerate(m.objective_history[:8], start=1):
    print(t, f"{g:.10g}")
