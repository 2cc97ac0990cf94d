"""Synthetic images and coil sensitivities for desk-scale experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "normalize_slice",
    "shepp_logan",
    "SimulatedCoils",
    "smooth_coils",
    "blob_images",
]

# Modified Shepp-Logan (Toft): intensity, semi-axes (a, b), centre (x0, y0), angle [deg]
_MODIFIED_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


def normalize_slice(g):
    """Affinely map ``g`` onto ``[0, 1]``.

    Raises
    ------
    ValueError
        If ``g`` is constant.
    """
    g = np.asarray(g, dtype=np.float64)
    lo, hi = g.min(), g.max()
    if not hi > lo:
        raise ValueError("cannot normalize a constant slice")
    out = (g - lo) / (hi - lo)
    # guard against rounding pushing the extremes off 0 and 1
    out[g == lo] = 0.0
    out[g == hi] = 1.0
    return out


def shepp_logan(shape=(128, 128)):
    """Modified Shepp-Logan phantom with values in ``[0, 1]``."""
    rows, cols = shape
    y = np.linspace(1.0, -1.0, rows)[:, None]
    x = np.linspace(-1.0, 1.0, cols)[None, :]
    img = np.zeros((rows, cols))
    for value, a, b, x0, y0, phi in _MODIFIED_SHEPP_LOGAN:
        phi = np.deg2rad(phi)
        xr = (x - x0) * np.cos(phi) + (y - y0) * np.sin(phi)
        yr = -(x - x0) * np.sin(phi) + (y - y0) * np.cos(phi)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += value
    return np.clip(img, 0.0, 1.0)


@dataclass
class SimulatedCoils:
    """Coil sensitivities of shape ``(C, rows, cols)``.

    ``ground_truth`` marks maps that generated the data exactly (as opposed to
    estimates).
    """

    coils: np.ndarray
    ground_truth: bool = True

    def __len__(self):
        return self.coils.shape[0]


def smooth_coils(shape, n_coils, seed=0, width=0.45, n_bumps=3):
    """Spatially smooth complex sensitivities built from wide Gaussian bumps.

    Coil ``c`` is centred at angle ``2 pi c / C`` on a ring around the field of
    view and carries a slowly varying phase. A few weaker bumps with random
    complex weights make the maps less symmetric. Everything is deterministic
    in ``seed``.
    """
    if n_coils < 1:
        raise ValueError("need at least one coil")
    rng = np.random.default_rng(seed)
    rows, cols = shape
    y = np.linspace(-1.0, 1.0, rows)[:, None]
    x = np.linspace(-1.0, 1.0, cols)[None, :]
    coils = np.zeros((n_coils, rows, cols), dtype=np.complex128)
    offset = rng.uniform(0, 2 * np.pi)
    for c in range(n_coils):
        angle = offset + 2 * np.pi * c / n_coils
        cx, cy = 0.7 * np.cos(angle), 0.7 * np.sin(angle)
        main = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * (2 * width) ** 2))
        phase = np.exp(1j * (rng.uniform(-np.pi, np.pi) + 0.5 * (cx * x + cy * y)))
        coils[c] = main * phase
        for _ in range(n_bumps):
            bx, by = rng.uniform(-0.8, 0.8, size=2)
            weight = 0.3 * rng.uniform(0.2, 1.0) * np.exp(1j * rng.uniform(-np.pi, np.pi))
            coils[c] += weight * np.exp(-((x - bx) ** 2 + (y - by) ** 2) / (2 * width**2))
    return SimulatedCoils(coils=coils, ground_truth=True)


def blob_images(n, shape=(16, 16), seed=0, width_range=(1.5, 2.5)):
    """Toy dataset: each image holds two Gaussian blobs, normalized to ``[0, 1]``.

    The blobs sit on opposite sides of the centre at a random orientation and
    radius, which gives the set a well-defined mean radial profile.
    """
    rng = np.random.default_rng(seed)
    rows, cols = shape
    yy, xx = np.mgrid[0:rows, 0:cols].astype(np.float64)
    cy, cx = (rows - 1) / 2, (cols - 1) / 2
    out = np.empty((n, rows, cols))
    for i in range(n):
        phi = rng.uniform(0, np.pi)
        radius = rng.uniform(0.15, 0.3) * min(rows, cols)
        img = np.zeros(shape)
        for sign in (1.0, -1.0):
            by = cy + sign * radius * np.sin(phi) + rng.normal(0, 0.5)
            bx = cx + sign * radius * np.cos(phi) + rng.normal(0, 0.5)
            w = rng.uniform(*width_range)
            img += rng.uniform(0.6, 1.0) * np.exp(-((yy - by) ** 2 + (xx - bx) ** 2) / (2 * w**2))
        out[i] = normalize_slice(img)
    return out
