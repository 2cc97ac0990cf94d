"""k-space sampling masks on the Cartesian grid.

Masks are returned in the native FFT layout of :func:`ebmrecon.numerics.fft2`
(DC at index ``(0, 0)``) so they can be applied directly to its output. They
are *constructed* in the centred layout and moved with ``ifftshift``. Use
:meth:`SamplingMask.centered` for display.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .io import load_tensor, save_tensor

__all__ = ["SamplingMask", "PATTERNS", "make_mask", "acceleration_factor", "save_mask", "load_mask"]

PATTERNS = ("cartesian", "random", "radial", "spiral", "gaussian2d")

_DEFAULTS = {
    "cartesian": {"accel": 4.0, "acl_fraction": 0.08, "phase_dir": "vertical"},
    "random": {"accel": 4.0},
    "radial": {"n_spokes": 45},
    "spiral": {"turns": 16, "accel": None},
    "gaussian2d": {"accel": 8.0, "sigma": None},
}


@dataclass
class SamplingMask:
    """Binary sampling mask plus the metadata needed to regenerate it."""

    mask: np.ndarray
    pattern: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=np.float64)
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise ValueError("mask entries must be 0 or 1")
        if not self.mask.any():
            raise ValueError("mask samples no k-space point")

    @property
    def shape(self):
        return self.mask.shape

    @property
    def acl_fraction(self):
        return self.params.get("acl_fraction")

    @property
    def phase_dir(self):
        return self.params.get("phase_dir", "vertical")

    def centered(self):
        """Mask with DC moved to the centre (for display)."""
        return np.fft.fftshift(self.mask)

    def metadata(self):
        meta = {"pattern": self.pattern, "seed": int(self.seed), "shape": list(self.shape)}
        meta.update({"accel": None, "acl_fraction": None, "phase_dir": None})
        meta.update(self.params)
        meta["acceleration_factor"] = acceleration_factor(self)
        return meta


def acceleration_factor(mask):
    """Number of grid points divided by the number of sampled points."""
    m = mask.mask if isinstance(mask, SamplingMask) else np.asarray(mask)
    n_sampled = int(np.count_nonzero(m))
    if n_sampled == 0:
        raise ValueError("mask samples no k-space point")
    return m.size / n_sampled


def make_mask(pattern, shape, params=None, seed=0):
    """Generate a sampling mask.

    Parameters
    ----------
    pattern : {'cartesian', 'random', 'radial', 'spiral', 'gaussian2d'}
    shape : (rows, cols)
    params : dict, optional
        Pattern options, merged over the defaults:

        * cartesian: ``accel``, ``acl_fraction`` (0 disables the centre
          block), ``phase_dir`` ('vertical' samples whole columns,
          'horizontal' whole rows)
        * random: ``accel``
        * radial: ``n_spokes``
        * spiral: ``turns``, or ``accel`` to pick the turn count that comes
          closest to that acceleration
        * gaussian2d: ``accel``, ``sigma`` (pixels, default ``min(shape)/6``)
    seed : int

    Returns
    -------
    SamplingMask
    """
    if pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; expected one of {PATTERNS}")
    unknown = set(params or {}) - set(_DEFAULTS[pattern])
    if unknown:
        raise ValueError(f"unknown parameters for {pattern}: {sorted(unknown)}")
    p = dict(_DEFAULTS[pattern])
    p.update(params or {})
    rng = np.random.default_rng(seed)
    builder = {
        "cartesian": _cartesian,
        "random": _random,
        "radial": _radial,
        "spiral": _spiral,
        "gaussian2d": _gaussian2d,
    }[pattern]
    centred = builder(tuple(shape), p, rng)
    return SamplingMask(np.fft.ifftshift(centred), pattern, p, seed)


def _check_accel(accel):
    if accel is None or not accel >= 1:
        raise ValueError(f"acceleration must be >= 1, got {accel}")


def _cartesian(shape, p, rng):
    accel = p["accel"]
    _check_accel(accel)
    acl = p["acl_fraction"] or 0.0
    if p["phase_dir"] not in ("vertical", "horizontal"):
        raise ValueError(f"phase_dir must be 'vertical' or 'horizontal', got {p['phase_dir']!r}")
    rows, cols = shape if p["phase_dir"] == "vertical" else shape[::-1]
    if not 0 <= acl <= 1:
        raise ValueError(f"acl_fraction must lie in [0, 1], got {acl}")
    if acl > 0 and acl * cols < 1:
        raise ValueError(f"acl_fraction * cols = {acl * cols:.3g} < 1 line")
    n_acl = int(round(acl * cols))
    n_total = max(int(round(cols / accel)), n_acl, 1)
    lines = np.zeros(cols, dtype=bool)
    start = (cols - n_acl + 1) // 2
    lines[start : start + n_acl] = True
    rest = np.flatnonzero(~lines)
    lines[rng.choice(rest, size=n_total - n_acl, replace=False)] = True
    mask = np.broadcast_to(lines[None, :], (rows, cols)).astype(np.float64)
    return mask if p["phase_dir"] == "vertical" else mask.T.copy()


def _random(shape, p, rng):
    _check_accel(p["accel"])
    mask = (rng.random(shape) < 1.0 / p["accel"]).astype(np.float64)
    if not mask.any():
        mask[shape[0] // 2, shape[1] // 2] = 1.0
    return mask


def _rasterize(shape, ys, xs):
    mask = np.zeros(shape)
    iy, ix = np.rint(ys).astype(int), np.rint(xs).astype(int)
    keep = (iy >= 0) & (iy < shape[0]) & (ix >= 0) & (ix < shape[1])
    mask[iy[keep], ix[keep]] = 1.0
    return mask


def _radial(shape, p, rng):
    n_spokes = int(p["n_spokes"])
    if n_spokes < 1:
        raise ValueError("n_spokes must be >= 1")
    rows, cols = shape
    cy, cx = rows // 2, cols // 2
    reach = np.hypot(rows, cols)
    t = np.arange(-reach, reach + 0.25, 0.25)
    angles = np.arange(n_spokes) * np.pi / n_spokes
    # round away tiny sin/cos residues so 0 and 90 degree spokes are exact lines
    ys = cy + np.round(np.outer(np.sin(angles), t), 9)
    xs = cx + np.round(np.outer(np.cos(angles), t), 9)
    return _rasterize(shape, ys.ravel(), xs.ravel())


def _spiral_mask(shape, turns):
    rows, cols = shape
    cy, cx = rows // 2, cols // 2
    r_max = np.hypot(rows, cols) / 2
    phi_max = 2 * np.pi * turns
    # arc length grows like phi^2; sample finely enough for sub-pixel steps
    n = int(4 * r_max * turns * np.pi) + 16
    phi = np.linspace(0.0, phi_max, n)
    r = r_max * phi / phi_max
    return _rasterize(shape, cy + r * np.sin(phi), cx + r * np.cos(phi))


def _spiral(shape, p, rng):
    if p.get("accel") is not None:
        _check_accel(p["accel"])
        candidates = range(1, max(shape))
        turns = min(candidates, key=lambda t: abs(acceleration_factor(_spiral_mask(shape, t)) - p["accel"]))
        p["turns"] = turns
    if p["turns"] < 1:
        raise ValueError("turns must be >= 1")
    return _spiral_mask(shape, p["turns"])


def _gaussian2d(shape, p, rng):
    accel = p["accel"]
    _check_accel(accel)
    rows, cols = shape
    sigma = p["sigma"] if p["sigma"] is not None else min(shape) / 6
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    ky = np.arange(rows) - rows // 2
    kx = np.arange(cols) - cols // 2
    weight = np.exp(-(ky[:, None] ** 2 + kx[None, :] ** 2) / (2 * sigma**2)).ravel()
    n_pick = max(int(round(rows * cols / accel)), 1)
    if np.count_nonzero(weight) < n_pick:
        raise ValueError("sigma too small for the requested acceleration")
    idx = rng.choice(rows * cols, size=n_pick, replace=False, p=weight / weight.sum())
    mask = np.zeros(rows * cols)
    mask[idx] = 1.0
    return mask.reshape(shape)


def save_mask(mask, path):
    """Store the mask as an ``f8`` NPY grid plus a ``.json`` sidecar."""
    path = os.fspath(path)
    save_tensor(mask.mask, path)
    with open(os.path.splitext(path)[0] + ".json", "w") as fh:
        json.dump(mask.metadata(), fh, indent=2, sort_keys=True)


def load_mask(path):
    path = os.fspath(path)
    grid = load_tensor(path, dtype="f8")
    sidecar = os.path.splitext(path)[0] + ".json"
    meta = {}
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            meta = json.load(fh)
    pattern = meta.pop("pattern", "cartesian")
    seed = meta.pop("seed", 0)
    for key in ("shape", "acceleration_factor"):
        meta.pop(key, None)
    params = {k: v for k, v in meta.items() if v is not None}
    return SamplingMask(grid, pattern, params, seed)
