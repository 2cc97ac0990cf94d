"""MAP reconstruction (iPALM) and posterior sampling."""

from .ipalm import (
    IpalmConfig,
    NumericalError,
    ReconProblem,
    ReconResult,
    denormalize,
    ipalm_solve,
    normalize_problem,
    objective,
)
from .posterior import PosteriorConfig, RunningMoments, mmse_and_variance, n_kept, posterior_sample
from .prox import BacktrackingError, backtrack, coil_smoothness, prox_coil_smooth, prox_nonneg

__all__ = [
    "BacktrackingError",
    "IpalmConfig",
    "NumericalError",
    "PosteriorConfig",
    "ReconProblem",
    "ReconResult",
    "RunningMoments",
    "backtrack",
    "coil_smoothness",
    "denormalize",
    "ipalm_solve",
    "mmse_and_variance",
    "n_kept",
    "normalize_problem",
    "objective",
    "posterior_sample",
    "prox_coil_smooth",
    "prox_nonneg",
]
