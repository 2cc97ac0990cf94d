from .io import TensorFormatError, TensorMismatchError, UnsupportedDtypeError, load_tensor, save_tensor
from .masks import PATTERNS, SamplingMask, acceleration_factor, load_mask, make_mask, save_mask
from .phantoms import SimulatedCoils, blob_images, normalize_slice, shepp_logan, smooth_coils

__all__ = [
    "TensorFormatError",
    "TensorMismatchError",
    "UnsupportedDtypeError",
    "load_tensor",
    "save_tensor",
    "PATTERNS",
    "SamplingMask",
    "acceleration_factor",
    "load_mask",
    "make_mask",
    "save_mask",
    "SimulatedCoils",
    "blob_images",
    "normalize_slice",
    "shepp_logan",
    "smooth_coils",
]
