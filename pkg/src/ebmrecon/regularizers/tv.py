from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import grad, grad_adjoint

__all__ = ["TvConfig", "tv_value", "tv_grad", "TotalVariation"]


@dataclass(frozen=True)
class TvConfig:
    epsilon: float = 1e-3

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def _magnitude(u, cfg):
    du = grad(u, "replicate")
    return du, np.sqrt(du[..., 0, :, :] ** 2 + du[..., 1, :, :] ** 2 + cfg.epsilon**2)


def tv_value(u, cfg=TvConfig()):
    """Charbonnier-smoothed isotropic TV, ``sum sqrt(|Du|^2 + eps^2)``."""
    return float(np.sum(_magnitude(np.asarray(u, dtype=np.float64), cfg)[1]))


def tv_grad(u, cfg=TvConfig()):
    du, mag = _magnitude(np.asarray(u, dtype=np.float64), cfg)
    return grad_adjoint(du / mag[..., None, :, :], "replicate")


class TotalVariation:
    """TV prior exposing the ``value`` / ``grad`` / ``value_and_grad`` interface."""

    def __init__(self, epsilon=1e-3):
        self.cfg = TvConfig(epsilon)

    def value(self, u):
        return tv_value(u, self.cfg)

    def grad(self, u):
        return tv_grad(u, self.cfg)

    def value_and_grad(self, u):
        u = np.asarray(u, dtype=np.float64)
        du, mag = _magnitude(u, self.cfg)
        return float(np.sum(mag)), grad_adjoint(du / mag[..., None, :, :], "replicate")
