"""Convolutional energy ``R(u) = |FC(S_L(...S_1(crop(u))))|`` with hand-written reverse mode.

Each block ``S_l`` is ``lrelu(conv_s2(lrelu(conv_s1(x) + b) ) + b~)`` with 3x3
kernels, zero padding 1, and ``lrelu(x) = max(leak * x, x)``. The stride-2
convolution halves the spatial size (ceil division). ``FC`` is a linear map of
the flattened final feature map to a scalar.

Arrays are batched as ``(B, channels, rows, cols)`` internally; the public
functions also accept a single ``(rows, cols)`` image or a ``(B, rows, cols)``
stack.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "EbmArchitecture",
    "EbmParameters",
    "channel_table",
    "init_params",
    "center_crop",
    "ebm_value",
    "ebm_grad_input",
    "ebm_grad_params",
    "ebm_forward_backward",
    "EnergyRegularizer",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class EbmArchitecture:
    layers: int = 6
    base_features: int = 48
    feature_ratio: float = 1.75
    leak: float = 0.05
    crop_shape: tuple = (320, 320)
    kernel: int = 3

    def __post_init__(self):
        object.__setattr__(self, "crop_shape", tuple(int(s) for s in self.crop_shape))
        if self.layers < 1:
            raise ValueError("need at least one layer")
        if not 0 < self.leak < 1:
            raise ValueError("leak must lie in (0, 1)")
        if self.kernel != 3:
            raise ValueError("only 3x3 kernels are supported")
        if min(channel_table(self)) < 1:
            raise ValueError("channel counts must be >= 1")

    @classmethod
    def desk(cls, crop_shape=(32, 32), **kwargs):
        """Small configuration used for tests and toy training."""
        return cls(layers=kwargs.pop("layers", 2), base_features=kwargs.pop("base_features", 8), crop_shape=crop_shape, **kwargs)

    @property
    def channels(self):
        return channel_table(self)

    def spatial_shapes(self):
        """Feature-map size after each block (input size first)."""
        shapes = [self.crop_shape]
        for _ in range(self.layers):
            h, w = shapes[-1]
            shapes.append((math.ceil(h / 2), math.ceil(w / 2)))
        return shapes

    @property
    def fc_shape(self):
        return (self.channels[-1],) + self.spatial_shapes()[-1]


def channel_table(arch):
    """Per-layer feature counts ``round(base * ratio**(l - 1))``."""
    return [int(round(arch.base_features * arch.feature_ratio**l)) for l in range(arch.layers)]


@dataclass
class EbmParameters:
    """All learnable tensors.

    ``W[l]``/``b[l]`` belong to the stride-1 convolution of block ``l``
    (``c_{l-1} -> c_l`` channels), ``Wt[l]``/``bt[l]`` to the stride-2 one
    (``c_l -> c_l``), and ``w_fc`` to the final linear map.
    """

    W: list
    b: list
    Wt: list
    bt: list
    w_fc: np.ndarray

    def named_arrays(self):
        out = []
        for l in range(len(self.W)):
            out += [(f"W{l + 1}", self.W[l]), (f"b{l + 1}", self.b[l]), (f"Wt{l + 1}", self.Wt[l]), (f"bt{l + 1}", self.bt[l])]
        out.append(("W_fc", self.w_fc))
        return out

    def arrays(self):
        return [a for _, a in self.named_arrays()]

    @property
    def count(self):
        return sum(a.size for a in self.arrays())

    def to_vector(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def from_vector(self, vec):
        """New parameters with the structure of ``self`` and values from ``vec``."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.count:
            raise ValueError(f"expected {self.count} values, got {vec.size}")
        pieces, pos = [], 0
        for a in self.arrays():
            pieces.append(vec[pos : pos + a.size].reshape(a.shape).copy())
            pos += a.size
        return EbmParameters._from_list(pieces)

    @staticmethod
    def _from_list(pieces):
        n = (len(pieces) - 1) // 4
        return EbmParameters(
            W=pieces[0:-1:4][:n], b=pieces[1:-1:4][:n], Wt=pieces[2:-1:4][:n], bt=pieces[3:-1:4][:n], w_fc=pieces[-1]
        )

    def copy(self):
        return EbmParameters._from_list([a.copy() for a in self.arrays()])

    def zeros_like(self):
        return EbmParameters._from_list([np.zeros_like(a) for a in self.arrays()])


def init_params(arch, seed=0, fc_scale=1.0):
    """He-style random initialization with zero biases."""
    rng = np.random.default_rng(seed)
    ch = [1] + arch.channels
    W, b, Wt, bt = [], [], [], []
    for l in range(arch.layers):
        c_in, c_out = ch[l], ch[l + 1]
        W.append(rng.standard_normal((c_out, c_in, 3, 3)) * np.sqrt(2.0 / (9 * c_in)))
        b.append(np.zeros(c_out))
        Wt.append(rng.standard_normal((c_out, c_out, 3, 3)) * np.sqrt(2.0 / (9 * c_out)))
        bt.append(np.zeros(c_out))
    n_fc = int(np.prod(arch.fc_shape))
    w_fc = rng.standard_normal(arch.fc_shape) * fc_scale / np.sqrt(n_fc)
    return EbmParameters(W, b, Wt, bt, w_fc)


def center_crop(u, crop_shape):
    """Centre crop over the last two axes. Raises if ``u`` is smaller than ``crop_shape``."""
    u = np.asarray(u)
    h, w = crop_shape
    H, W = u.shape[-2:]
    if H < h or W < w:
        raise ValueError(f"input {H}x{W} is smaller than the crop {h}x{w}")
    top, left = (H - h) // 2, (W - w) // 2
    return u[..., top : top + h, left : left + w]


def _conv(x, W, b, stride):
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(win, W, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    return out + b[None, :, None, None], win


def _conv_backward(gout, win, W, in_shape, stride, need_input=True):
    gW = np.tensordot(gout, win, axes=([0, 2, 3], [0, 2, 3]))
    gb = gout.sum(axis=(0, 2, 3))
    if not need_input:
        return None, gW, gb
    B, C, H, Wd = in_shape
    Ho, Wo = gout.shape[2:]
    contrib = np.tensordot(gout, W, axes=([1], [0]))  # (B, Ho, Wo, C_in, 3, 3)
    gpad = np.zeros((B, C, H + 2, Wd + 2))
    for i in range(3):
        for j in range(3):
            gpad[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += contrib[..., i, j].transpose(0, 3, 1, 2)
    return gpad[:, :, 1:-1, 1:-1], gW, gb


def _lrelu(x, leak):
    return np.where(x > 0, x, leak * x)


def _as_batch(u, arch):
    u = np.asarray(u, dtype=np.float64)
    single = u.ndim == 2
    batch = u[None] if single else u
    if batch.ndim != 3:
        raise ValueError(f"expected (rows, cols) or (B, rows, cols), got shape {u.shape}")
    return batch, single


def ebm_forward_backward(u, theta, arch, weights=None, need_input=True, need_params=True):
    """Energies of a batch plus weighted reverse-mode derivatives.

    Parameters
    ----------
    u : ndarray, shape (B, rows, cols)
        Images of at least ``arch.crop_shape``; larger inputs are centre-cropped.
    weights : ndarray, shape (B,), optional
        Upstream weights ``w_b``. The parameter gradient returned is that of
        ``sum_b w_b * R(u_b)``; the input gradient row ``b`` is
        ``w_b * dR(u_b)/du_b``. Defaults to ones.

    Returns
    -------
    energy : ndarray, shape (B,)
    grad_u : ndarray or None
        Same shape as ``u``; zero outside the crop window.
    grad_theta : EbmParameters or None
    """
    u = np.asarray(u, dtype=np.float64)
    x = center_crop(u, arch.crop_shape)[:, None]
    B = x.shape[0]
    cache = []
    h = x
    for l in range(arch.layers):
        a1, win1 = _conv(h, theta.W[l], theta.b[l], 1)
        h1 = _lrelu(a1, arch.leak)
        a2, win2 = _conv(h1, theta.Wt[l], theta.bt[l], 2)
        cache.append((h.shape, win1, a1, h1.shape, win2, a2))
        h = _lrelu(a2, arch.leak)
    if h.shape[1:] != theta.w_fc.shape:
        raise ValueError(f"final feature map {h.shape[1:]} does not match FC weights {theta.w_fc.shape}")
    pre = np.tensordot(h, theta.w_fc, axes=([1, 2, 3], [0, 1, 2]))
    energy = np.abs(pre)
    if not (need_input or need_params):
        return energy, None, None

    w = np.ones(B) if weights is None else np.asarray(weights, dtype=np.float64)
    gpre = w * np.sign(pre)
    g_fc = np.tensordot(gpre, h, axes=([0], [0]))
    gh = gpre[:, None, None, None] * theta.w_fc[None]
    gW, gb, gWt, gbt = [None] * arch.layers, [None] * arch.layers, [None] * arch.layers, [None] * arch.layers
    for l in reversed(range(arch.layers)):
        in_shape, win1, a1, mid_shape, win2, a2 = cache[l]
        ga2 = gh * np.where(a2 > 0, 1.0, arch.leak)
        gh1, gWt[l], gbt[l] = _conv_backward(ga2, win2, theta.Wt[l], mid_shape, 2)
        ga1 = gh1 * np.where(a1 > 0, 1.0, arch.leak)
        gh, gW[l], gb[l] = _conv_backward(ga1, win1, theta.W[l], in_shape, 1, need_input=need_input or l > 0)

    grad_u = None
    if need_input:
        grad_u = np.zeros_like(u)
        H, W = u.shape[-2:]
        ch, cw = arch.crop_shape
        top, left = (H - ch) // 2, (W - cw) // 2
        grad_u[:, top : top + ch, left : left + cw] = gh[:, 0]
    grad_theta = EbmParameters(gW, gb, gWt, gbt, g_fc) if need_params else None
    return energy, grad_u, grad_theta


def ebm_value(u, theta, arch):
    """Energy of one image (float) or of a ``(B, rows, cols)`` stack (array)."""
    batch, single = _as_batch(u, arch)
    energy = ebm_forward_backward(batch, theta, arch, need_input=False, need_params=False)[0]
    return float(energy[0]) if single else energy


def ebm_grad_input(u, theta, arch):
    """``dR/du`` for each image; the absolute-value head uses ``sign(0) = 0``."""
    batch, single = _as_batch(u, arch)
    g = ebm_forward_backward(batch, theta, arch, need_params=False)[1]
    return g[0] if single else g


def ebm_grad_params(u, theta, arch):
    """``dR/dtheta`` for one image, or of the mean energy over a stack."""
    batch, _ = _as_batch(u, arch)
    weights = np.full(batch.shape[0], 1.0 / batch.shape[0])
    return ebm_forward_backward(batch, theta, arch, weights=weights, need_input=False)[2]


class EnergyRegularizer:
    """Learned prior with the ``value`` / ``grad`` / ``value_and_grad`` interface."""

    def __init__(self, theta, arch):
        self.theta = theta
        self.arch = arch

    @classmethod
    def from_checkpoint(cls, path):
        theta, arch = load_checkpoint(path)
        return cls(theta, arch)

    def value(self, u):
        return ebm_value(u, self.theta, self.arch)

    def grad(self, u):
        return ebm_grad_input(u, self.theta, self.arch)

    def value_and_grad(self, u):
        batch, single = _as_batch(u, self.arch)
        e, g, _ = ebm_forward_backward(batch, self.theta, self.arch, need_params=False)
        return (float(e[0]), g[0]) if single else (e, g)


def save_checkpoint(path, theta, arch, extra=None):
    """Write parameters as named arrays in an ``.npz`` archive.

    The archive holds one float64 array per tensor (``W1, b1, Wt1, bt1, ...,
    W_fc``) and a ``header`` entry, a JSON string with the architecture fields
    under ``"arch"`` and optional metadata under ``"extra"``.
    """
    header = {"format": "ebmrecon-checkpoint", "version": 1, "arch": asdict(arch), "extra": extra or {}}
    arrays = {name: np.asarray(a, dtype=np.float64) for name, a in theta.named_arrays()}
    arrays["header"] = np.array(json.dumps(header, sort_keys=True))
    with open(os.fspath(path), "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(theta, arch)``."""
    with np.load(os.fspath(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        arch_fields = header["arch"]
        arch_fields["crop_shape"] = tuple(arch_fields["crop_shape"])
        arch = EbmArchitecture(**arch_fields)
        n = arch.layers
        theta = EbmParameters(
            W=[data[f"W{l + 1}"] for l in range(n)],
            b=[data[f"b{l + 1}"] for l in range(n)],
            Wt=[data[f"Wt{l + 1}"] for l in range(n)],
            bt=[data[f"bt{l + 1}"] for l in range(n)],
            w_fc=data["W_fc"],
        )
    return theta, arch
