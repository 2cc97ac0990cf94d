"""NPY v1.0 tensor container with strict dtype checking."""

from __future__ import annotations

import os

import numpy as np
from numpy.lib import format as npformat

__all__ = [
    "TensorFormatError",
    "UnsupportedDtypeError",
    "TensorMismatchError",
    "save_tensor",
    "load_tensor",
]

_SUPPORTED = {np.dtype("<f8"): "f8", np.dtype("<c16"): "c16"}


class TensorFormatError(ValueError):
    """The file is not a well-formed NPY v1.0 container."""


class UnsupportedDtypeError(TypeError):
    """The payload dtype is not little-endian float64 or complex128."""


class TensorMismatchError(ValueError):
    """The stored tensor does not have the shape or dtype the caller expected."""


def _canonical_dtype(dtype):
    dtype = np.dtype(dtype)
    if dtype.kind == "f" and dtype.itemsize == 8:
        return np.dtype("<f8")
    if dtype.kind == "c" and dtype.itemsize == 16:
        return np.dtype("<c16")
    return None


def save_tensor(grid, path):
    """Write ``grid`` as an NPY v1.0 file (little-endian ``f8``/``c16``, C order).

    Booleans and integers are promoted to ``f8``. Other dtypes are rejected.
    """
    arr = np.asarray(grid)
    if arr.dtype.kind in "biu":
        arr = arr.astype("<f8")
    dtype = _canonical_dtype(arr.dtype)
    if dtype is None:
        raise UnsupportedDtypeError(f"cannot store dtype {arr.dtype}; only f8 and c16 are supported")
    arr = np.ascontiguousarray(arr, dtype=dtype)
    with open(os.fspath(path), "wb") as fh:
        npformat.write_array(fh, arr, version=(1, 0), allow_pickle=False)


def load_tensor(path, dtype=None, shape=None):
    """Read a tensor written by :func:`save_tensor`.

    Parameters
    ----------
    path : path-like
    dtype : {'f8', 'c16'}, optional
        Expected payload type; a different stored type raises
        :class:`TensorMismatchError`.
    shape : tuple of int, optional
        Expected shape.

    Raises
    ------
    TensorFormatError
        Bad magic string, wrong version, unreadable header or truncated payload.
    UnsupportedDtypeError
        Payload dtype other than ``<f8`` / ``<c16``, or Fortran order.
    TensorMismatchError
        ``dtype`` or ``shape`` disagree with the file.
    """
    with open(os.fspath(path), "rb") as fh:
        try:
            version = npformat.read_magic(fh)
        except ValueError as exc:
            raise TensorFormatError(f"{path}: {exc}") from None
        if version != (1, 0):
            raise TensorFormatError(f"{path}: NPY version {version} is not 1.0")
        try:
            file_shape, fortran, file_dtype = npformat.read_array_header_1_0(fh)
        except ValueError as exc:
            raise TensorFormatError(f"{path}: malformed header ({exc})") from None
        if file_dtype not in _SUPPORTED:
            raise UnsupportedDtypeError(f"{path}: unsupported dtype {file_dtype.str}")
        if fortran:
            raise UnsupportedDtypeError(f"{path}: Fortran-ordered payloads are not supported")
        count = int(np.prod(file_shape, dtype=np.int64))
        data = np.fromfile(fh, dtype=file_dtype, count=count)
        if data.size != count:
            raise TensorFormatError(f"{path}: payload truncated ({data.size} of {count} items)")
    if dtype is not None and _canonical_dtype(dtype) != file_dtype:
        raise TensorMismatchError(f"{path}: stored dtype {_SUPPORTED[file_dtype]}, expected {dtype}")
    if shape is not None and tuple(shape) != tuple(file_shape):
        raise TensorMismatchError(f"{path}: stored shape {file_shape}, expected {tuple(shape)}")
    return data.reshape(file_shape)
