"""Image priors: Charbonnier TV and the learned convolutional energy."""

import numpy as np

from .ebm import (
    EbmArchitecture,
    EbmParameters,
    EnergyRegularizer,
    center_crop,
    channel_table,
    ebm_forward_backward,
    ebm_grad_input,
    ebm_grad_params,
    ebm_value,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .tv import TotalVariation, TvConfig, tv_grad, tv_value


class NoRegularizer:
    """``R = 0``."""

    def value(self, u):
        return 0.0

    def grad(self, u):
        return np.zeros_like(np.asarray(u, dtype=np.float64))

    def value_and_grad(self, u):
        return 0.0, self.grad(u)


def make_regularizer(name, epsilon=1e-3, checkpoint=None):
    """Build a prior from its selector name: ``'tv'``, ``'ebm'`` or ``'none'``."""
    if name == "tv":
        return TotalVariation(epsilon)
    if name == "none":
        return NoRegularizer()
    if name == "ebm":
        if checkpoint is None:
            raise ValueError("the 'ebm' regularizer needs a checkpoint")
        return EnergyRegularizer.from_checkpoint(checkpoint)
    raise ValueError(f"unknown regularizer {name!r}; expected 'tv', 'ebm' or 'none'")


__all__ = [
    "EbmArchitecture",
    "EbmParameters",
    "EnergyRegularizer",
    "NoRegularizer",
    "TotalVariation",
    "TvConfig",
    "center_crop",
    "channel_table",
    "ebm_forward_backward",
    "ebm_grad_input",
    "ebm_grad_params",
    "ebm_value",
    "init_params",
    "load_checkpoint",
    "make_regularizer",
    "save_checkpoint",
    "tv_grad",
    "tv_value",
]
