"""Sensitivity-map checks, intensity calibration, lambda regression and landscape projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline, make_lsq_spline

from ..numerics import ifft2, rss

__all__ = [
    "null_space_residual",
    "SplineCalibration",
    "spline_fit",
    "spline_apply",
    "linear_spline_fit",
    "lambda_fit",
    "LAMBDA_GRID",
    "landscape_projection",
    "Landscape",
    "radial_profile",
]

#: default per-image grid for the lambda search
LAMBDA_GRID = np.logspace(-3, 1, 15)


def null_space_residual(coils, kspace):
    """Per-coil residual of projecting fully sampled coil images onto the coil maps.

    ``pi_c = coil_c / rss^2 * sum_i conj(coil_i) * u_i - u_c`` with
    ``u_c = ifft2(kspace_c)``. At pixels where ``rss(coils) == 0`` the
    projection is taken as zero, so ``pi_c = -u_c`` there.

    Returns
    -------
    residual : ndarray, shape (C, rows, cols)
    residual_rss : ndarray, shape (rows, cols)
    norm : float
        Euclidean norm of ``residual_rss``.
    """
    coils = np.asarray(coils, dtype=np.complex128)
    coil_images = ifft2(np.asarray(kspace))
    if coils.shape != coil_images.shape:
        raise ValueError(f"coil shape {coils.shape} does not match data shape {coil_images.shape}")
    r2 = np.sum(np.abs(coils) ** 2, axis=0)
    combined = np.sum(np.conj(coils) * coil_images, axis=0)
    safe = np.where(r2 > 0, r2, 1.0)
    projection = np.where(r2 > 0, coils * (combined / safe), 0.0)
    residual = projection - coil_images
    res_rss = rss(residual)
    return residual, res_rss, float(np.linalg.norm(res_rss))


@dataclass
class SplineCalibration:
    """Least-squares cubic spline mapping reconstructed to reference intensities."""

    knots: np.ndarray
    spline: BSpline

    def __call__(self, values):
        return spline_apply(self, values)


def _lsq_spline(x, y, n_knots, degree):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError("abscissae and ordinates differ in size")
    if np.unique(x).size < n_knots:
        raise ValueError(f"need at least {n_knots} distinct abscissae")
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    knots = np.linspace(x[0], x[-1], n_knots)
    t = np.r_[[knots[0]] * degree, knots, [knots[-1]] * degree]
    try:
        spline = make_lsq_spline(x, y, t, k=degree)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise ValueError(f"degenerate abscissae for a {n_knots}-knot spline: {exc}") from None
    return knots, spline


def spline_fit(recon_values, ref_values, n_knots=5):
    """Fit a cubic spline with ``n_knots`` equally spaced knots over the data range."""
    knots, spline = _lsq_spline(recon_values, ref_values, n_knots, 3)
    return SplineCalibration(knots, spline)


def linear_spline_fit(recon_values, ref_values, n_knots=5):
    """Piecewise-linear least-squares fit on the same knots (comparison baseline)."""
    knots, spline = _lsq_spline(recon_values, ref_values, n_knots, 1)
    return SplineCalibration(knots, spline)


def spline_apply(cal, values):
    """Map intensities through the calibration; values outside the knot range are extrapolated."""
    values = np.asarray(values, dtype=np.float64)
    return cal.spline(values.ravel(), extrapolate=True).reshape(values.shape)


def radial_profile(images):
    """Mean intensity per integer distance from the image centre, averaged over a stack.

    Parameters
    ----------
    images : ndarray, shape (rows, cols) or (N, rows, cols)

    Returns
    -------
    ndarray
        Mean over the pixels at each rounded distance, for the distances that
        occur on the grid (in increasing order).
    """
    stack = np.asarray(images, dtype=np.float64)
    stack = stack[None] if stack.ndim == 2 else stack
    rows, cols = stack.shape[-2:]
    i, j = np.indices((rows, cols))
    dist = np.rint(np.hypot(i - (rows - 1) / 2, j - (cols - 1) / 2)).astype(int).ravel()
    counts = np.bincount(dist)
    sums = np.bincount(dist, weights=stack.mean(axis=0).ravel())
    occupied = counts > 0
    return sums[occupied] / counts[occupied]


def lambda_fit(residua, optimal_lambdas):
    """Ordinary least squares ``lambda ~ slope * residuum + intercept``.

    Returns ``(slope, intercept, predict)`` where ``predict`` maps a residuum to
    a positive regularization weight.
    """
    x = np.asarray(residua, dtype=np.float64).ravel()
    y = np.asarray(optimal_lambdas, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError("residua and lambdas differ in length")
    if x.size < 2:
        raise ValueError("need at least two validation problems")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean()) / sxx) if sxx > 0 else 0.0
    intercept = float(y.mean() - slope * x.mean())
    floor = 1e-12

    def predict(residuum):
        return np.maximum(slope * np.asarray(residuum, dtype=np.float64) + intercept, floor)

    return slope, intercept, predict


@dataclass
class Landscape:
    center: np.ndarray
    directions: np.ndarray
    coords: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    energy: np.ndarray
    surface: np.ndarray


def landscape_projection(trajectory, energy_fn, xi1=None, xi2=None, temperature=7.0, tol=1e-10):
    """Project a sampler trajectory onto its two leading principal directions.

    Parameters
    ----------
    trajectory : ndarray, shape (K + 1, rows, cols)
        States ``x_0 ... x_K``; the last one is the reference point.
    energy_fn : callable
        Energy of a batch ``(M, rows, cols) -> (M,)`` or of a single image.
    xi1, xi2 : 1-D arrays, optional
        Lattice coordinates; default spans the projected trajectory with a
        10% margin on 41 points per axis.
    temperature : float
        Surface is ``exp(-energy / temperature)``.

    Returns
    -------
    Landscape
        ``coords[k] = (<x_k - center, v1>, <x_k - center, v2>)``.

    Raises
    ------
    ValueError
        If fewer than three states are given or the differences have rank < 2.
    """
    traj = np.asarray(trajectory, dtype=np.float64)
    if traj.shape[0] < 3:
        raise ValueError("need at least three trajectory states")
    K = traj.shape[0] - 1
    last = traj[-1]
    diffs = (traj[:-1] - last).reshape(K, -1)
    center = last + diffs[1:].sum(axis=0).reshape(last.shape) / (K - 1)
    centred = diffs - diffs.mean(axis=0)
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    if s.size < 2 or s[0] == 0 or s[1] <= tol * s[0]:
        raise ValueError("trajectory differences have rank < 2")
    v = vt[:2]
    coords = (traj.reshape(K + 1, -1) - center.ravel()) @ v.T
    if xi1 is None or xi2 is None:
        lo, hi = coords.min(axis=0), coords.max(axis=0)
        pad = 0.1 * (hi - lo)
        xi1 = np.linspace(lo[0] - pad[0], hi[0] + pad[0], 41) if xi1 is None else xi1
        xi2 = np.linspace(lo[1] - pad[1], hi[1] + pad[1], 41) if xi2 is None else xi2
    xi1, xi2 = np.asarray(xi1, dtype=np.float64), np.asarray(xi2, dtype=np.float64)
    g1, g2 = np.meshgrid(xi1, xi2, indexing="ij")
    points = center.ravel() + g1.reshape(-1, 1) * v[0] + g2.reshape(-1, 1) * v[1]
    energy = np.asarray(energy_fn(points.reshape((-1,) + last.shape)), dtype=np.float64).reshape(g1.shape)
    directions = v.reshape((2,) + last.shape)
    return Landscape(center, directions, coords, xi1, xi2, energy, np.exp(-energy / temperature))


def initial_residuum(problem, mu=10.0):
    """Data misfit of the zero-filled initialization after one coil-smoothing prox.

    ``sum_c ||mask * fft2(s_c * u0) - z_c||^2`` where ``s = prox_coil_smooth(coils0, mu)``.
    The raw zero-filled maps reproduce the data exactly, so the smoothing step
    is what makes this a usable predictor of the noise and aliasing level.
    """
    from ..numerics import fft2
    from ..recon.prox import prox_coil_smooth

    u0, coils0 = problem.initial_guess()
    if not problem.single_coil:
        coils0 = prox_coil_smooth(coils0, mu, 1.0)
    resid = problem.mask * fft2(coils0 * u0) - problem.z
    return float(np.sum(np.abs(resid) ** 2))


def grid_search_lambda(problem, reference, cfg, prior=None, lambdas=LAMBDA_GRID):
    """Pick the weight minimizing ``||u*(lambda) - reference||^2``.

    ``problem`` is reconstructed as given; ``reference`` must be on the same
    intensity scale as the returned images (multiply by ``problem.scale`` if the
    problem was normalized). Returns ``(best_lambda, errors)``.
    """
    from dataclasses import replace

    from ..recon.ipalm import ipalm_solve

    errors = []
    for lam in lambdas:
        res = ipalm_solve(problem, replace(cfg, lam=float(lam)), prior=prior)
        errors.append(float(np.sum((res.u * problem.scale - reference) ** 2)))
    errors = np.asarray(errors)
    return float(np.asarray(lambdas)[np.argmin(errors)]), errors
