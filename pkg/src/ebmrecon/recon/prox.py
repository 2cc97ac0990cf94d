from __future__ import annotations

import numpy as np

from ..numerics import dst2, dst2_inv, laplace_eigenvalues

__all__ = ["prox_nonneg", "prox_coil_smooth", "coil_smoothness", "BacktrackingError", "backtrack"]


def prox_nonneg(u):
    """Projection onto the nonnegative orthant."""
    return np.maximum(np.asarray(u, dtype=np.float64), 0.0)


def coil_smoothness(coils):
    """``0.5 * sum_c (||D Re c||^2 + ||D Im c||^2)`` with Dirichlet differences.

    Evaluated in the DST basis, where the Dirichlet Laplacian is diagonal.
    """
    coils = np.asarray(coils)
    xi = laplace_eigenvalues(coils.shape[-2:])
    return 0.5 * float(np.sum(xi * (dst2(coils.real) ** 2 + dst2(coils.imag) ** 2)))


def prox_coil_smooth(coils, mu, step=1.0):
    """Proximal map of ``step * mu * coil_smoothness``.

    Each real and imaginary part solves ``(I + alpha D^T D) s = y`` with
    ``alpha = step * mu``. In the DST-I basis this is the filter
    ``mu_hat / (xi + mu_hat)`` with ``mu_hat = 1 / alpha``.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    coils = np.asarray(coils, dtype=np.complex128)
    alpha = step * mu
    xi = laplace_eigenvalues(coils.shape[-2:])
    filt = 1.0 / (1.0 + alpha * xi)
    return dst2_inv(filt * dst2(coils.real)) + 1j * dst2_inv(filt * dst2(coils.imag))


class BacktrackingError(RuntimeError):
    """The Lipschitz search exceeded its iteration cap."""


def _inner(a, b):
    return float(np.sum(np.real(np.conj(a) * b)))


def backtrack(energy, grad, prox, x0, L0, gamma1, gamma2, max_iter=60, e0=None, g0=None):
    """One proximal-gradient step with a backtracked Lipschitz estimate.

    Parameters
    ----------
    energy, grad : callable
        Smooth part ``E`` and its gradient.
    prox : callable
        ``prox(v, t)`` evaluates the proximal map of ``t * P`` at ``v``.
    x0 : ndarray
        Point of linearization (real or complex).
    L0 : float
        Initial Lipschitz estimate.
    gamma1, gamma2 : float in (0, 1)
        On acceptance ``L`` is shrunk to ``gamma1 * L``; on rejection it grows
        to ``L / gamma2``.
    e0, g0 : optional
        Precomputed ``E(x0)`` and ``grad E(x0)``.

    Returns
    -------
    x : ndarray
        Accepted point satisfying
        ``E(x) <= E(x0) + <grad E(x0), x - x0> + L/2 ||x - x0||^2``.
    L : float
        ``gamma1`` times the accepting constant.
    n_trials : int
    """
    if not L0 > 0:
        raise ValueError("L0 must be positive")
    e0 = energy(x0) if e0 is None else e0
    g0 = grad(x0) if g0 is None else g0
    L = L0
    for trial in range(1, max_iter + 1):
        x = prox(x0 - g0 / L, 1.0 / L)
        d = x - x0
        e = energy(x)
        bound = e0 + _inner(g0, d) + 0.5 * L * _inner(d, d)
        # relative slack absorbs rounding when d is tiny
        if e <= bound + 1e-12 * max(abs(e0), 1.0):
            return x, gamma1 * L, trial
        L = L / gamma2
    raise BacktrackingError(f"no sufficient decrease after {max_iter} trials (L0={L0:.3g}, last L={L:.3g}, E(x0)={e0:.6g})")
