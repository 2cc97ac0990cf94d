# %% [markdown]
# # Joint image and coil-sensitivity reconstruction
# A 4-coil acquisition of a 128x128 Shepp-Logan phantom is undersampled 4x on a
# Cartesian grid with an 8% calibration block. We reconstruct image and coil maps
# together with a TV prior and compare against the zero-filled RSS image.
#
# Run from the repository root with `python notebooks/01_joint_reconstruction.py`.
# Images are written to `notebooks/out/`.

# %%
from pathlib import Path

import numpy as np

from ebmrecon.cli import save_png
from ebmrecon.data import make_mask, shepp_logan, smooth_coils
from ebmrecon.evaluation import metric_report, null_space_residual
from ebmrecon.forward_model import simulate_measurement
from ebmrecon.numerics import rss
from ebmrecon.recon import IpalmConfig, ReconProblem, ipalm_solve, normalize_problem

out = Path(__file__).resolve().parent / "out"
out.mkdir(exist_ok=True)

# %% [markdown]
# ## Simulated acquisition
# The coil maps are smooth complex fields. The measured data only pin down the
# image weighted by the coil RSS, so the reference for scoring is `x * rss(coils)`.

# %%
shape = (128, 128)
x = shepp_logan(shape)
coils = smooth_coils(shape, 4, seed=0).coils
mask = make_mask("cartesian", shape, {"accel": 4, "acl_fraction": 0.08}, seed=0)
z = simulate_measurement(x, coils, mask, noise_std=0.01, seed=0).planes
reference = x * rss(coils)
print(f"sampled fraction {mask.mask.mean():.3f}")

# %% [markdown]
# ## Zero filling versus joint TV reconstruction
# The data are scaled so that the zero-filled image peaks at 1. The TV weight is
# small because the Shepp-Logan phantom is piecewise constant and the noise is low.

# %%
problem, scale = normalize_problem(ReconProblem(z, mask))
u0, coils0 = problem.initial_guess()
result = ipalm_solve(problem, IpalmConfig(K=100, lam=1e-3))

zf = metric_report(u0 * scale, reference)
tv = metric_report(result.u * scale, reference)
print(f"zero filled: PSNR {zf['psnr_db']:.2f} dB, SSIM {zf['ssim']:.3f}")
print(f"joint TV:    PSNR {tv['psnr_db']:.2f} dB, SSIM {tv['ssim']:.3f}  ({result.wall_clock:.1f} s)")

# %% [markdown]
# The objective trace and the backtracked step sizes show how the solver behaved.
# With inertia and no restart the energy is not monotone in the final iterations.

# %%
energy = np.asarray(result.energy)
print("energy at k = 0, 10, 50, 100:", np.round(energy[[0, 10, 50, -1]], 4))
print(f"final L_u {result.L_u[-1]:.3g}, L_sigma {result.L_sigma[-1]:.3g}")

# %% [markdown]
# ## Are the estimated coil maps consistent with fully sampled data?
# Projecting fully sampled coil images onto the span of the maps leaves a residual
# that vanishes for exact maps. The refined maps should beat the zero-filled ones.

# %%
full = simulate_measurement(x, coils, np.ones(shape), noise_std=0.01, seed=0).planes
for name, maps in (("true", coils), ("zero filled", coils0), ("estimated", result.coils)):
    print(f"{name:>12}: null-space residual {null_space_residual(maps, full)[2]:.3f}")

# %%
save_png(out / "reference.png", reference)
save_png(out / "zero_filled.png", u0 * scale, vmax=reference.max())
save_png(out / "joint_tv.png", result.u * scale, vmax=reference.max())
save_png(out / "tv_error.png", np.abs(result.u * scale - reference), vmax=0.2 * reference.max())
