"""Dense-array kernels shared by the reconstruction and training code.

All transforms act on the last two axes, so stacks of grids (coils, batches)
go through the same functions as single grids.
"""

from __future__ import annotations

import numpy as np
import scipy.fft

__all__ = [
    "fft2",
    "ifft2",
    "dst2",
    "dst2_inv",
    "grad",
    "grad_adjoint",
    "laplace_eigenvalues",
    "rss",
    "BOUNDARIES",
]

BOUNDARIES = ("dirichlet", "replicate")


def fft2(g):
    """Unitary 2D DFT over the last two axes (DC at index ``(0, 0)``)."""
    return np.fft.fft2(np.asarray(g, dtype=np.complex128), norm="ortho")


def ifft2(g):
    """Inverse of :func:`fft2`; also its adjoint."""
    return np.fft.ifft2(np.asarray(g, dtype=np.complex128), norm="ortho")


def dst2(g):
    """Orthonormal 2D DST-I over the last two axes.

    The orthonormal DST-I matrix is symmetric and orthogonal, so the transform
    is its own inverse.
    """
    return scipy.fft.dstn(np.asarray(g, dtype=np.float64), type=1, axes=(-2, -1), norm="ortho")


def dst2_inv(g):
    """Inverse of :func:`dst2` (identical map)."""
    return scipy.fft.idstn(np.asarray(g, dtype=np.float64), type=1, axes=(-2, -1), norm="ortho")


def grad(g, boundary="replicate"):
    """Forward-difference gradient.

    Parameters
    ----------
    g : array_like, shape (..., rows, cols)
        Real (or complex) grid.
    boundary : {'replicate', 'dirichlet'}
        ``replicate`` zeros the difference at the trailing edge and returns
        shape ``(..., 2, rows, cols)``. ``dirichlet`` treats every value outside
        the domain as zero. Both edges then carry a difference, so each axis has
        ``N + 1`` of them and the result is zero-padded to
        ``(..., 2, rows + 1, cols + 1)``.

    Returns
    -------
    ndarray
        Component 0 holds horizontal differences (along columns), component 1
        vertical differences (along rows).
    """
    g = np.asarray(g)
    if boundary == "replicate":
        out = np.zeros(g.shape[:-2] + (2,) + g.shape[-2:], dtype=np.result_type(g, np.float64))
        out[..., 0, :, :-1] = g[..., :, 1:] - g[..., :, :-1]
        out[..., 1, :-1, :] = g[..., 1:, :] - g[..., :-1, :]
        return out
    if boundary == "dirichlet":
        rows, cols = g.shape[-2:]
        p = np.zeros(g.shape[:-2] + (rows + 2, cols + 2), dtype=np.result_type(g, np.float64))
        p[..., 1:-1, 1:-1] = g
        out = np.zeros(g.shape[:-2] + (2, rows + 1, cols + 1), dtype=p.dtype)
        out[..., 0, :rows, :] = p[..., 1:-1, 1:] - p[..., 1:-1, :-1]
        out[..., 1, :, :cols] = p[..., 1:, 1:-1] - p[..., :-1, 1:-1]
        return out
    raise ValueError(f"unknown boundary {boundary!r}; expected one of {BOUNDARIES}")


def grad_adjoint(f, boundary="replicate"):
    """Exact adjoint of :func:`grad` (a negative divergence).

    For ``dirichlet`` the padding entries of ``f`` that :func:`grad` never
    writes are ignored.
    """
    f = np.asarray(f)
    if boundary == "replicate":
        fx = f[..., 0, :, :]
        fy = f[..., 1, :, :]
        out = np.zeros(fx.shape, dtype=np.result_type(f, np.float64))
        out[..., :, :-1] -= fx[..., :, :-1]
        out[..., :, 1:] += fx[..., :, :-1]
        out[..., :-1, :] -= fy[..., :-1, :]
        out[..., 1:, :] += fy[..., :-1, :]
        return out
    if boundary == "dirichlet":
        rows, cols = f.shape[-2] - 1, f.shape[-1] - 1
        fx = f[..., 0, :rows, :]
        fy = f[..., 1, :, :cols]
        return (fx[..., :, :-1] - fx[..., :, 1:]) + (fy[..., :-1, :] - fy[..., 1:, :])
    raise ValueError(f"unknown boundary {boundary!r}; expected one of {BOUNDARIES}")


def laplace_eigenvalues(shape):
    """Eigenvalues of the 2D Dirichlet Laplacian ``grad_adjoint(grad(., 'dirichlet'))``.

    The operator is diagonal in the DST-I basis, with entries
    ``(2 - 2 cos(i pi / (R + 1))) + (2 - 2 cos(j pi / (C + 1)))``.
    """
    rows, cols = shape
    if rows < 1 or cols < 1:
        raise ValueError(f"shape must be positive, got {shape}")
    xi_r = 2.0 - 2.0 * np.cos(np.arange(1, rows + 1) * np.pi / (rows + 1))
    xi_c = 2.0 - 2.0 * np.cos(np.arange(1, cols + 1) * np.pi / (cols + 1))
    return xi_r[:, None] + xi_c[None, :]


def rss(coils):
    """Pixel-wise root-sum-of-squares over the leading (coil) axis."""
    coils = [np.asarray(c) for c in coils] if isinstance(coils, (list, tuple)) else np.asarray(coils)
    if isinstance(coils, list):
        shapes = {c.shape for c in coils}
        if len(shapes) != 1:
            raise ValueError(f"coil shapes differ: {sorted(shapes)}")
        coils = np.stack(coils)
    if coils.ndim < 3 or coils.shape[0] < 1:
        raise ValueError("expected a coil stack of shape (C, rows, cols) with C >= 1")
    return np.sqrt(np.sum(coils.real**2 + coils.imag**2, axis=0))
