"""SENSE forward model and the data-fidelity term in the ``u = x * rss(coils)`` variables.

Coil stacks are complex arrays of shape ``(C, rows, cols)``; measured data use
the same layout with zeros at unsampled k-space positions. Gradients with
respect to complex arrays are returned as ``dE/dRe + 1j * dE/dIm``, the
steepest-ascent direction of a real-valued function viewed on R^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data.masks import SamplingMask
from .numerics import fft2, ifft2, rss

__all__ = [
    "SenseOperator",
    "MeasuredData",
    "apply_A",
    "apply_A_adjoint",
    "simulate_measurement",
    "data_term",
    "grad_u_data",
    "grad_sigma_data",
    "data_term_and_grads",
    "zf_rss_init",
]


def _mask_array(mask):
    return mask.mask if isinstance(mask, SamplingMask) else np.asarray(mask, dtype=np.float64)


def _coil_stack(coils):
    coils = np.asarray(coils, dtype=np.complex128)
    return coils[None] if coils.ndim == 2 else coils


@dataclass
class SenseOperator:
    """Masked Fourier sampling of coil-weighted images."""

    mask: np.ndarray
    coils: np.ndarray

    def __post_init__(self):
        self.mask = _mask_array(self.mask)
        self.coils = _coil_stack(self.coils)
        if self.coils.shape[1:] != self.mask.shape:
            raise ValueError(f"coil shape {self.coils.shape[1:]} does not match mask shape {self.mask.shape}")


@dataclass
class MeasuredData:
    """Multi-coil k-space planes (zero where not sampled)."""

    planes: np.ndarray
    noise_std: float = 0.0

    def __array__(self, dtype=None, copy=None):
        return self.planes if dtype is None else self.planes.astype(dtype)


def apply_A(x, op):
    """``mask * fft2(coil_c * x)`` for every coil."""
    x = np.asarray(x)
    if x.shape != op.mask.shape:
        raise ValueError(f"image shape {x.shape} does not match operator shape {op.mask.shape}")
    return op.mask * fft2(op.coils * x)


def apply_A_adjoint(z, op):
    """``sum_c conj(coil_c) * ifft2(mask * z_c)`` (complex image).

    The adjoint of :func:`apply_A` for real images is the real part of this.
    """
    z = np.asarray(z)
    if z.shape != op.coils.shape:
        raise ValueError(f"data shape {z.shape} does not match coil stack {op.coils.shape}")
    return np.sum(np.conj(op.coils) * ifft2(op.mask * z), axis=0)


def simulate_measurement(x, coils, mask, noise_std=0.0, seed=0):
    """Sample ``x`` through the SENSE model and add complex white noise on sampled points.

    The noise has standard deviation ``noise_std`` per complex sample
    (``noise_std / sqrt(2)`` in each of the real and imaginary parts).
    """
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    op = SenseOperator(_mask_array(mask), _coil_stack(coils))
    z = apply_A(x, op)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(z.shape) + 1j * rng.standard_normal(z.shape)
        z = z + op.mask * noise * (noise_std / np.sqrt(2.0))
    return MeasuredData(z, float(noise_std))


def _spin_density(u, r):
    """``u / r`` with ``0 / 0 := 0``. Fails where ``r == 0`` but ``u != 0``."""
    bad = (r == 0) & (u != 0)
    if np.any(bad):
        raise ZeroDivisionError(f"coil RSS vanishes at {int(bad.sum())} pixel(s) where the image is nonzero")
    safe = np.where(r > 0, r, 1.0)
    return np.where(r > 0, u / safe, 0.0), safe


def data_term_and_grads(u, coils, z, mask, need_u=True, need_sigma=True):
    """Data term value together with the requested gradients.

    Returns ``(value, grad_u, grad_sigma)``; gradients that were not requested
    are ``None``.
    """
    u = np.asarray(u, dtype=np.float64)
    coils = _coil_stack(coils)
    z = np.asarray(z)
    m = _mask_array(mask)
    r = rss(coils)
    x, r_safe = _spin_density(u, r)
    resid = m * fft2(coils * x) - z
    value = 0.5 * float(np.sum(resid.real**2 + resid.imag**2))
    if not (need_u or need_sigma):
        return value, None, None
    back = ifft2(m * resid)
    g_x = np.sum(np.real(np.conj(coils) * back), axis=0)
    g_u = np.where(r > 0, g_x / r_safe, 0.0) if need_u else None
    g_s = None
    if need_sigma:
        # direct term x * back_c, plus the dependence of x = u / rss(coils) on each coil
        g_s = x * back - (g_x * x / r_safe**2) * coils
    return value, g_u, g_s


def data_term(u, coils, z, mask):
    """``0.5 * sum_c ||mask * fft2(coil_c * u / rss(coils)) - z_c||^2``."""
    return data_term_and_grads(u, coils, z, mask, need_u=False, need_sigma=False)[0]


def grad_u_data(u, coils, z, mask):
    return data_term_and_grads(u, coils, z, mask, need_u=True, need_sigma=False)[1]


def grad_sigma_data(u, coils, z, mask):
    return data_term_and_grads(u, coils, z, mask, need_u=False, need_sigma=True)[2]


def zf_rss_init(z, mask):
    """Zero-filled RSS image and the matching sensitivities.

    Returns
    -------
    u0 : ndarray
        ``sqrt(sum_c |ifft2(mask * z_c)|^2)``
    coils0 : ndarray
        ``ifft2(mask * z_c) / u0`` with ``0 / 0 := 0``.
    """
    z = _coil_stack(np.asarray(z))
    m = _mask_array(mask)
    if not m.any():
        raise ValueError("mask samples no k-space point")
    coil_images = ifft2(m * z)
    u0 = rss(coil_images)
    safe = np.where(u0 > 0, u0, 1.0)
    coils0 = np.where(u0 > 0, coil_images / safe, 0.0)
    return u0, coils0
