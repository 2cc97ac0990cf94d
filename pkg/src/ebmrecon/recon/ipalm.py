"""Joint MAP estimation of image and coil sensitivities by iPALM with backtracking."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, fields

import numpy as np

from ..data.masks import SamplingMask
from ..forward_model import data_term_and_grads, zf_rss_init
from ..regularizers import make_regularizer
from .prox import backtrack, coil_smoothness, prox_coil_smooth, prox_nonneg

__all__ = [
    "IpalmConfig",
    "ReconProblem",
    "ReconResult",
    "NumericalError",
    "normalize_problem",
    "denormalize",
    "objective",
    "ipalm_solve",
]

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Non-finite energy encountered during reconstruction or sampling."""


@dataclass
class IpalmConfig:
    K: int = 100
    gamma1: float = 0.9
    gamma2: float = 0.5
    L_u: float = 1.0
    L_sigma: float = 1.0
    lam: float = 1.0
    mu: float = 10.0
    regularizer: str = "tv"
    tv_epsilon: float = 1e-3
    checkpoint: str | None = None
    tol: float | None = None
    update_coils: bool = True
    max_backtracks: int = 60

    def __post_init__(self):
        if not (0 < self.gamma1 < 1 and 0 < self.gamma2 < 1):
            raise ValueError("gamma1 and gamma2 must lie in (0, 1)")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not (self.L_u > 0 and self.L_sigma > 0 and self.mu > 0):
            raise ValueError("L_u, L_sigma and mu must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.regularizer not in ("tv", "ebm", "none"):
            raise ValueError(f"unknown regularizer {self.regularizer!r}")

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]


@dataclass
class ReconProblem:
    """Measured multi-coil k-space and its sampling mask.

    ``scale`` records the normalization applied to ``z`` (1 if none).
    ``single_coil`` pins the sensitivities to one all-ones map.
    """

    z: np.ndarray
    mask: np.ndarray
    scale: float = 1.0
    single_coil: bool = False

    def __post_init__(self):
        if isinstance(self.mask, SamplingMask):
            self.mask = self.mask.mask
        self.mask = np.asarray(self.mask, dtype=np.float64)
        z = np.asarray(self.z, dtype=np.complex128)
        self.z = z[None] if z.ndim == 2 else z
        if self.z.shape[1:] != self.mask.shape:
            raise ValueError(f"data shape {self.z.shape} does not match mask {self.mask.shape}")
        if self.single_coil and self.z.shape[0] != 1:
            raise ValueError("single-coil problems need exactly one data plane")

    @property
    def n_coils(self):
        return self.z.shape[0]

    def initial_guess(self):
        """Zero-filled RSS image and sensitivities (all-ones map in single-coil mode)."""
        u0, coils0 = zf_rss_init(self.z, self.mask)
        if self.single_coil:
            return u0, np.ones((1,) + self.mask.shape, dtype=np.complex128)
        return u0, coils0


@dataclass
class ReconResult:
    u: np.ndarray
    coils: np.ndarray
    energy: list = field(default_factory=list)
    L_u: list = field(default_factory=list)
    L_sigma: list = field(default_factory=list)
    wall_clock: float = 0.0
    iterations: int = 0


def normalize_problem(problem):
    """Scale the data so the zero-filled RSS image has maximum 1.

    Returns ``(normalized_problem, scale)``.
    """
    u0, _ = zf_rss_init(problem.z, problem.mask)
    scale = float(np.max(np.abs(u0)))
    if scale == 0:
        raise ValueError("cannot normalize all-zero data")
    scaled = ReconProblem(problem.z / scale, problem.mask, problem.scale * scale, problem.single_coil)
    return scaled, scale


def denormalize(u, scale):
    return np.asarray(u) * scale


def objective(u, coils, problem, prior, cfg):
    """Full objective ``data + lam * R(u) + mu * F(coils)`` (indicator omitted)."""
    e = data_term_and_grads(u, coils, problem.z, problem.mask, need_u=False, need_sigma=False)[0]
    e += cfg.lam * prior.value(u) if cfg.lam else 0.0
    if not problem.single_coil:
        e += cfg.mu * coil_smoothness(coils)
    return e


def ipalm_solve(problem, cfg=None, prior=None, init=None):
    """Minimize ``H(u, coils) + indicator(u >= 0) + mu * F(coils)``.

    Parameters
    ----------
    problem : ReconProblem
    cfg : IpalmConfig
    prior : object, optional
        Image prior with ``value``/``grad``/``value_and_grad``. Built from
        ``cfg.regularizer`` when omitted.
    init : (u0, coils0), optional
        Starting point; defaults to :meth:`ReconProblem.initial_guess`.

    Returns
    -------
    ReconResult
    """
    cfg = cfg or IpalmConfig()
    if prior is None:
        prior = make_regularizer(cfg.regularizer, epsilon=cfg.tv_epsilon, checkpoint=cfg.checkpoint)
    z, mask, lam = problem.z, problem.mask, cfg.lam
    u, coils = problem.initial_guess() if init is None else (np.asarray(init[0], float), np.asarray(init[1], complex))
    if coils.ndim == 2:
        coils = coils[None]
    update_coils = cfg.update_coils and not problem.single_coil

    def u_value_grad(v, s):
        e, g, _ = data_term_and_grads(v, s, z, mask, need_u=True, need_sigma=False)
        if lam:
            r, gr = prior.value_and_grad(v)
            e, g = e + lam * r, g + lam * gr
        return e, g

    def u_value(v, s):
        e = data_term_and_grads(v, s, z, mask, need_u=False, need_sigma=False)[0]
        return e + lam * prior.value(v) if lam else e

    t0 = time.perf_counter()
    result = ReconResult(u, coils)
    result.energy.append(objective(u, coils, problem, prior, cfg))
    L_u, L_s = cfg.L_u, cfg.L_sigma
    u_prev, coils_prev = u, coils
    for k in range(1, cfg.K):
        beta = k / (k + 3.0)
        u_bar = u + beta * (u - u_prev)
        e0, g0 = u_value_grad(u_bar, coils)
        if not np.isfinite(e0):
            raise NumericalError(f"non-finite energy at iteration {k} (u-step)")
        u_new, L_u, _ = backtrack(
            lambda v: u_value(v, coils), None, lambda v, t: prox_nonneg(v),
            u_bar, L_u, cfg.gamma1, cfg.gamma2, cfg.max_backtracks, e0=e0, g0=g0,
        )
        u_prev, u = u, u_new

        if update_coils:
            s_bar = coils + beta * (coils - coils_prev)
            e0, _, g0 = data_term_and_grads(u, s_bar, z, mask, need_u=False, need_sigma=True)
            if not np.isfinite(e0):
                raise NumericalError(f"non-finite energy at iteration {k} (coil step)")
            s_new, L_s, _ = backtrack(
                lambda s: data_term_and_grads(u, s, z, mask, need_u=False, need_sigma=False)[0],
                None, lambda s, t: prox_coil_smooth(s, cfg.mu, t),
                s_bar, L_s, cfg.gamma1, cfg.gamma2, cfg.max_backtracks, e0=e0, g0=g0,
            )
            coils_prev, coils = coils, s_new

        energy = objective(u, coils, problem, prior, cfg)
        if not np.isfinite(energy):
            raise NumericalError(f"non-finite objective at iteration {k}")
        result.energy.append(energy)
        result.L_u.append(L_u)
        result.L_sigma.append(L_s)
        if cfg.tol is not None and abs(result.energy[-2] - energy) <= cfg.tol * max(abs(energy), 1e-30):
            log.debug("relative energy change below %g at iteration %d", cfg.tol, k)
            break
    result.u, result.coils = u, coils
    result.iterations = len(result.energy) - 1
    result.wall_clock = time.perf_counter() - t0
    return result
