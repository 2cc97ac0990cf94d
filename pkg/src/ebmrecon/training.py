"""Maximum-likelihood training of the convolutional energy.

The parameter gradient ``E_data[dR/dtheta] - E_model[dR/dtheta]`` is estimated
with short-run unadjusted Langevin chains that start from a persistent replay
buffer.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .regularizers.ebm import (
    EbmArchitecture,
    EbmParameters,
    ebm_forward_backward,
    init_params,
    save_checkpoint,
)

__all__ = [
    "TrainConfig",
    "DivergenceError",
    "ula_chain",
    "schedule_J",
    "learning_rate",
    "ReplayBuffer",
    "buffer_draw",
    "buffer_writeback",
    "ml_gradient",
    "AdaBelief",
    "TrainResult",
    "train",
]

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Raised when a chain or the training loop produces non-finite or runaway values."""


@dataclass
class TrainConfig:
    lr: float = 5e-4
    lr_decay: float = 0.5
    lr_milestones: tuple = (500, 2000, 3000, 5000, 7000)
    batch: int = 50
    total_updates: int = 27000
    J_max: int = 500
    ula_step: float | None = None
    pi_reinit: float = 0.01
    data_noise_std: float = 1.5e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    buffer_capacity: int = 8000
    checkpoint_every: int = 1000
    energy_bound: float = 1e6
    energy_penalty: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.lr_milestones = tuple(int(m) for m in self.lr_milestones)
        if self.ula_step is None:
            # one ULA step then injects noise of the same scale as the data smoothing
            self.ula_step = 2.0 * self.data_noise_std**2
        if not 0 <= self.pi_reinit <= 1:
            raise ValueError("pi_reinit must lie in [0, 1]")
        for name in ("lr", "batch", "J_max", "ula_step", "buffer_capacity", "energy_bound"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.total_updates < 0:
            raise ValueError("total_updates must be nonnegative")
        if self.energy_penalty < 0:
            raise ValueError("energy_penalty must be nonnegative")

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]


def ula_chain(x0, grad_fn, step, n_steps, rng, burn_in=0, thin=None):
    """Unadjusted Langevin iterations ``x <- x - step/2 * grad(x) + sqrt(step) * n``.

    Parameters
    ----------
    x0 : ndarray
        Initial state (any shape; batches of independent chains are fine).
    grad_fn : callable
        Gradient of the energy, ``x -> dR/dx``.
    step : float
        Time step ``zeta > 0``.
    n_steps : int
    rng : numpy.random.Generator or int
    burn_in, thin : int, optional
        When ``thin`` is given, every ``thin``-th iterate after ``burn_in``
        iterations is collected.

    Returns
    -------
    x : ndarray
        Final state.
    samples : ndarray or None
        Stacked kept iterates (``None`` unless ``thin`` is set).

    Raises
    ------
    DivergenceError
        If the gradient becomes non-finite.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    rng = np.random.default_rng(rng)
    x = np.array(x0, dtype=np.float64, copy=True)
    kept = [] if thin else None
    noise_scale = math.sqrt(step)
    for j in range(1, n_steps + 1):
        g = grad_fn(x)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(
                f"non-finite gradient at ULA step {j}: |x|_max={np.max(np.abs(x)):.3g}, step={step}"
            )
        x = x - 0.5 * step * g + noise_scale * rng.standard_normal(x.shape)
        if thin and j > burn_in and (j - burn_in) % thin == 0:
            kept.append(x.copy())
    samples = None if kept is None else (np.stack(kept) if kept else np.empty((0,) + x.shape))
    return x, samples


def schedule_J(h, J_max):
    """Number of ULA steps at update ``h``: ``ceil(J_max * (1 - exp(-h / 1000)))``."""
    if h < 0:
        raise ValueError("h must be nonnegative")
    return int(math.ceil(J_max * (1.0 - math.exp(-h / 1000.0))))


def learning_rate(h, cfg):
    """Step-decayed learning rate; each milestone reached multiplies by ``lr_decay``."""
    return cfg.lr * cfg.lr_decay ** sum(1 for m in cfg.lr_milestones if h >= m)


@dataclass
class ReplayBuffer:
    capacity: int
    shape: tuple
    slots: np.ndarray = field(init=False, repr=False)
    occupancy: int = 0

    def __post_init__(self):
        self.slots = np.zeros((self.capacity,) + tuple(self.shape))

    def fill(self, dataset, rng):
        """Cold start: fill every slot with a random dataset sample."""
        idx = rng.integers(0, len(dataset), size=self.capacity)
        self.slots[:] = dataset[idx]
        self.occupancy = self.capacity


def _fresh_sample(dataset, rng):
    x = dataset[rng.integers(0, len(dataset))].copy()
    if rng.random() < 0.5:
        x = rng.permutation(x.ravel()).reshape(x.shape)
    return x


def buffer_draw(buf, dataset, rng, batch):
    """Draw ``batch`` chain starts; returns ``(x0, slot_indices)``.

    An empty buffer is cold-started from ``dataset`` first.
    """
    if buf.occupancy == 0:
        buf.fill(dataset, rng)
    idx = rng.choice(buf.occupancy, size=batch, replace=batch > buf.occupancy)
    return buf.slots[idx].copy(), idx


def buffer_writeback(buf, xJ, idx, dataset, rng, pi_reinit):
    """Store chain end points; each slot is reinitialized with probability ``pi_reinit``.

    A reinitialized slot receives a fresh dataset sample whose pixels are
    randomly permuted with probability 1/2. Returns the number of reinitialized
    slots.
    """
    reinit = rng.random(len(idx)) < pi_reinit
    for k, slot in enumerate(idx):
        buf.slots[slot] = _fresh_sample(dataset, rng) if reinit[k] else xJ[k]
    return int(reinit.sum())


def ml_gradient(theta, arch, data_batch, model_batch, energy_penalty=0.0):
    """Mean parameter gradient over ``data_batch`` minus that over ``model_batch``.

    With ``energy_penalty = a > 0`` the gradient of
    ``a * (mean(R(data)^2) + mean(R(model)^2))`` is added, which keeps the
    energy scale bounded on small problems.

    Returns ``(gradient, data_energy, model_energy)`` with the mean energies of
    both batches.
    """
    data_batch = np.asarray(data_batch, dtype=np.float64)
    model_batch = np.asarray(model_batch, dtype=np.float64)
    if data_batch.shape[1:] != model_batch.shape[1:]:
        raise ValueError("data and model samples must share their image shape")
    both = np.concatenate([data_batch, model_batch])
    nd, nm = len(data_batch), len(model_batch)
    weights = np.concatenate([np.full(nd, 1.0 / nd), np.full(nm, -1.0 / nm)])
    if energy_penalty > 0:
        energy = ebm_forward_backward(both, theta, arch, need_input=False, need_params=False)[0]
        weights = weights + 2.0 * energy_penalty * energy * np.abs(weights)
    energy, _, g = ebm_forward_backward(both, theta, arch, weights=weights, need_input=False)
    return g, float(energy[:nd].mean()), float(energy[nd:].mean())


class AdaBelief:
    """AdaBelief update on a flat parameter vector.

    ``m`` tracks the gradient, ``s`` the squared deviation of the gradient from
    ``m``; both are bias-corrected.
    """

    def __init__(self, size, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(size)
        self.s = np.zeros(size)
        self.t = 0

    def step(self, params, grad, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        self.m = b1 * self.m + (1 - b1) * grad
        self.s = b2 * self.s + (1 - b2) * (grad - self.m) ** 2 + self.eps
        m_hat = self.m / (1 - b1**self.t)
        s_hat = self.s / (1 - b2**self.t)
        return params - lr * m_hat / (np.sqrt(s_hat) + self.eps)


@dataclass
class TrainResult:
    theta: EbmParameters
    checkpoints: list
    log: list
    buffer: ReplayBuffer | None = None


LOG_FIELDS = ("update", "J", "lr", "data_energy", "model_energy", "grad_norm")


def train(dataset, arch, cfg=None, theta0=None, out_dir=None, callback=None):
    """Run maximum-likelihood training.

    Parameters
    ----------
    dataset : ndarray, shape (N, rows, cols)
        Normalized training images.
    arch : EbmArchitecture
    cfg : TrainConfig
    theta0 : EbmParameters, optional
        Initial parameters (random initialization from ``cfg.seed`` otherwise).
    out_dir : path-like, optional
        If given, checkpoints ``theta_XXXXXX.npz`` and ``log.csv`` are written
        there.
    callback : callable, optional
        Called as ``callback(h, theta, row)`` after every update.

    Returns
    -------
    TrainResult
        ``checkpoints`` is a list of ``(update, theta)`` pairs and always ends
        with the final parameters.
    """
    cfg = cfg or TrainConfig()
    dataset = np.asarray(dataset, dtype=np.float64)
    if dataset.ndim != 3 or len(dataset) == 0:
        raise ValueError("dataset must be a nonempty (N, rows, cols) stack")
    rng = np.random.default_rng(cfg.seed)
    theta = theta0.copy() if theta0 is not None else init_params(arch, seed=cfg.seed)
    if cfg.total_updates == 0:
        return TrainResult(theta, [(0, theta.copy())], [])

    buf = ReplayBuffer(cfg.buffer_capacity, dataset.shape[1:])
    vec = theta.to_vector()
    opt = AdaBelief(vec.size, cfg.beta1, cfg.beta2, cfg.eps)
    rows, checkpoints = [], []
    writer = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_file = open(os.path.join(out_dir, "log.csv"), "w", newline="")
        writer = csv.writer(log_file)
        writer.writerow(LOG_FIELDS)

    def input_grad(x):
        return ebm_forward_backward(x, theta, arch, need_params=False)[1]

    t0 = time.time()
    try:
        for h in range(1, cfg.total_updates + 1):
            J = schedule_J(h, cfg.J_max)
            pick = rng.integers(0, len(dataset), size=cfg.batch)
            data = dataset[pick] + cfg.data_noise_std * rng.standard_normal((cfg.batch,) + dataset.shape[1:])
            x0, idx = buffer_draw(buf, dataset, rng, cfg.batch)
            xJ, _ = ula_chain(x0, input_grad, cfg.ula_step, J, rng)
            g, e_data, e_model = ml_gradient(theta, arch, data, xJ, cfg.energy_penalty)
            gvec = g.to_vector()
            gnorm = float(np.linalg.norm(gvec))
            if not (np.isfinite(e_data) and np.isfinite(e_model) and np.isfinite(gnorm)):
                raise DivergenceError(f"non-finite energies or gradient at update {h}")
            if max(abs(e_data), abs(e_model)) > cfg.energy_bound:
                raise DivergenceError(
                    f"energy bound exceeded at update {h}: data {e_data:.3g}, model {e_model:.3g}"
                )
            lr = learning_rate(h, cfg)
            vec = opt.step(vec, gvec, lr)
            theta = theta.from_vector(vec)
            buffer_writeback(buf, xJ, idx, dataset, rng, cfg.pi_reinit)

            row = dict(zip(LOG_FIELDS, (h, J, lr, e_data, e_model, gnorm)))
            rows.append(row)
            if writer is not None:
                writer.writerow([row[k] for k in LOG_FIELDS])
            if callback is not None:
                callback(h, theta, row)
            if h % cfg.checkpoint_every == 0 or h == cfg.total_updates:
                checkpoints.append((h, theta.copy()))
                if out_dir is not None:
                    save_checkpoint(os.path.join(out_dir, f"theta_{h:06d}.npz"), theta, arch, extra={"update": h, "ula_step": cfg.ula_step})
                log.info(
                    "update %d  J=%d  lr=%.2e  E_data=%.4g  E_model=%.4g  |g|=%.3g  (%.1fs)",
                    h, J, lr, e_data, e_model, gnorm, time.time() - t0,
                )
    finally:
        if writer is not None:
            log_file.close()
    return TrainResult(theta, checkpoints, rows, buf)
