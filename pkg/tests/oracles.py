"""Brute-force reference computations shared by the tests."""

import numpy as np


def dense_matrix(op, in_shape, dtype=np.float64):
    """Columns are ``op`` applied to the standard basis (brute-force oracle)."""
    n = int(np.prod(in_shape))
    cols = []
    for k in range(n):
        e = np.zeros(n, dtype=dtype)
        e[k] = 1
        cols.append(np.asarray(op(e.reshape(in_shape))).ravel())
    return np.stack(cols, axis=1)


def central_difference(f, x, idx, h=1e-6):
    """Central difference of scalar ``f`` along coordinate ``idx`` of real ``x``."""
    xp, xm = x.copy(), x.copy()
    xp[idx] += h
    xm[idx] -= h
    return (f(xp) - f(xm)) / (2 * h)


def fd_gradient(f, x, h=1e-6):
    """Full central-difference gradient; complex ``x`` gives ``dRe + 1j * dIm``."""
    x = np.asarray(x)
    g = np.zeros(x.shape, dtype=x.dtype)
    for idx in np.ndindex(x.shape):
        steps = (1.0, 1j) if np.iscomplexobj(x) else (1.0,)
        for s in steps:
            xp, xm = x.copy(), x.copy()
            xp[idx] += h * s
            xm[idx] -= h * s
            g[idx] += s * (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b):
    return float(np.linalg.norm(np.ravel(a) - np.ravel(b)) / max(np.linalg.norm(np.ravel(b)), 1e-300))


class QuadraticPrior:
    """``R(u) = kappa/2 ||u||^2``; with a fully sampled unit coil the posterior is Gaussian."""

    def __init__(self, kappa):
        self.kappa = kappa

    def value(self, u):
        return 0.5 * self.kappa * float(np.sum(np.asarray(u) ** 2))

    def grad(self, u):
        return self.kappa * np.asarray(u, dtype=np.float64)

    def value_and_grad(self, u):
        return self.value(u), self.grad(u)


def ula_gaussian_moments(curvature, step, thin, n_kept):
    """Stationary variance of ULA on ``curvature/2 x^2`` and the standard error of a thinned mean."""
    rho = 1.0 - 0.5 * step * curvature
    var = step / (1.0 - rho**2)
    r = rho**thin
    return var, np.sqrt(var * (1 + r) / (1 - r) / n_kept)
