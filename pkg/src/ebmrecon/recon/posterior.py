"""Langevin sampling of ``p(u | z, coils) ~ exp(-H(u, coils))`` and its moments."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..forward_model import data_term_and_grads
from .ipalm import NumericalError

__all__ = ["PosteriorConfig", "n_kept", "posterior_sample", "RunningMoments", "mmse_and_variance"]


@dataclass
class PosteriorConfig:
    burn_in: int = 10000
    thin: int = 15
    total_iters: int = 160000
    lam: float = 1.0
    step: float = 2e-4
    seed: int = 0
    check_every: int = 100

    def __post_init__(self):
        if not self.total_iters > self.burn_in >= 0:
            raise ValueError("total_iters must exceed burn_in")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not self.step > 0:
            raise ValueError("step must be positive")

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]


def n_kept(cfg):
    """Number of samples :func:`posterior_sample` yields for ``cfg``."""
    return (cfg.total_iters - cfg.burn_in) // cfg.thin


def posterior_sample(problem, coils, prior, cfg=None, init=None):
    """Yield ULA samples of ``u`` with the sensitivities held fixed.

    The chain starts from uniform noise on ``[0, 1)`` (or ``init``), runs
    ``cfg.total_iters`` unconstrained steps on ``H(u, coils) = data + lam * R``
    and yields every ``thin``-th iterate after ``burn_in``.

    Parameters
    ----------
    problem : ReconProblem
    coils : ndarray
        Frozen sensitivities, e.g. the MAP estimate. Ignored for single-coil
        problems (all-ones map).
    prior : object
        Provides ``grad(u)`` (and ``value`` for the finiteness check).
    """
    cfg = cfg or PosteriorConfig()
    rng = np.random.default_rng(cfg.seed)
    shape = problem.mask.shape
    if problem.single_coil or coils is None:
        coils = np.ones((1,) + shape, dtype=np.complex128)
    coils = np.asarray(coils, dtype=np.complex128)
    u = rng.random(shape) if init is None else np.array(init, dtype=np.float64)
    z, mask, lam, step = problem.z, problem.mask, cfg.lam, cfg.step
    noise_scale = np.sqrt(step)
    for j in range(1, cfg.total_iters + 1):
        e, g, _ = data_term_and_grads(u, coils, z, mask, need_u=True, need_sigma=False)
        if lam:
            g = g + lam * prior.grad(u)
        if j % cfg.check_every == 0 and not (np.isfinite(e) and np.all(np.isfinite(g))):
            raise NumericalError(f"non-finite energy or gradient at ULA iteration {j}")
        u = u - 0.5 * step * g + noise_scale * rng.standard_normal(shape)
        if j > cfg.burn_in and (j - cfg.burn_in) % cfg.thin == 0:
            yield u.copy()
    if not np.all(np.isfinite(u)):
        raise NumericalError("posterior chain ended with non-finite values")


class RunningMoments:
    """Welford accumulator for pixel-wise mean and population variance."""

    def __init__(self):
        self.n = 0
        self.mean = None
        self._m2 = None

    def update(self, x):
        x = np.asarray(x, dtype=np.float64)
        self.n += 1
        if self.mean is None:
            self.mean = x.copy()
            self._m2 = np.zeros_like(x)
            return
        delta = x - self.mean
        self.mean += delta / self.n
        self._m2 += delta * (x - self.mean)

    @property
    def variance(self):
        return self._m2 / self.n


def mmse_and_variance(samples):
    """Pixel-wise sample mean (MMSE estimate) and population variance.

    ``samples`` may be an array of shape ``(S, rows, cols)`` or any iterable of
    grids (e.g. the generator returned by :func:`posterior_sample`).
    """
    acc = RunningMoments()
    for x in samples:
        acc.update(x)
    if acc.n < 2:
        raise ValueError(f"need at least two samples, got {acc.n}")
    return acc.mean, np.maximum(acc.variance, 0.0)
