"""Acceptance suite: one test per criterion, each with its tolerance and runtime budget.

Every test records a PASS/FAIL line (measured value, threshold, wall time);
``conftest.py`` prints them after the run. Criterion 10 reruns criteria 4-9
and compares the bytes of the NPY files they wrote.

Run on its own with ``pytest tests/test_acceptance.py -v`` (about 25 minutes,
dominated by the three toy training runs of criterion 7).
"""

import time

import numpy as np
import pytest

from ebmrecon.cli import main as cli_main
from ebmrecon.data import PATTERNS, blob_images, load_tensor, make_mask, save_tensor, shepp_logan, smooth_coils
from ebmrecon.evaluation import LAMBDA_GRID, grid_search_lambda, null_space_residual, psnr, radial_profile
from ebmrecon.forward_model import (
    SenseOperator,
    apply_A,
    apply_A_adjoint,
    grad_sigma_data,
    grad_u_data,
    data_term,
    simulate_measurement,
)
from ebmrecon.numerics import fft2, grad, grad_adjoint, ifft2, rss
from ebmrecon.recon import (
    IpalmConfig,
    PosteriorConfig,
    ReconProblem,
    ipalm_solve,
    mmse_and_variance,
    n_kept,
    normalize_problem,
    posterior_sample,
    prox_coil_smooth,
)
from ebmrecon.regularizers import (
    EbmArchitecture,
    TvConfig,
    ebm_grad_input,
    ebm_grad_params,
    ebm_value,
    init_params,
    load_checkpoint,
    tv_grad,
    tv_value,
)
from ebmrecon.training import TrainConfig, train, ula_chain

from oracles import QuadraticPrior, dense_matrix, fd_gradient, rel_err, ula_gaussian_moments

#: (criterion, title, passed, detail) in the order the tests ran
RESULTS = []

# first-run outputs of criteria 4-9, keyed by criterion then file name
_OUTPUTS = {}


def _record(number, title, passed, detail, elapsed, budget):
    in_time = elapsed < budget
    ok = bool(passed and in_time)
    RESULTS.append((number, title, ok, f"{detail}; {elapsed:.1f} s (budget {budget:g} s)"))
    return ok


def _check(number, title, passed, detail, elapsed, budget):
    ok = _record(number, title, passed, detail, elapsed, budget)
    assert ok, f"criterion {number} ({title}): {detail}; {elapsed:.1f} s of {budget:g} s"


def _npy_bytes(arrays, directory):
    """Write each array with the package's NPY writer and return the file bytes."""
    directory.mkdir(parents=True, exist_ok=True)
    out = {}
    for name, a in arrays.items():
        path = directory / f"{name}.npy"
        save_tensor(np.ascontiguousarray(a), path)
        out[name] = path.read_bytes()
    return out


def _first_run(number, compute, directory):
    if number not in _OUTPUTS:
        _OUTPUTS[number] = _npy_bytes(compute()["arrays"], directory / f"c{number}")
    return _OUTPUTS[number]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def _cplx(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# ---------------------------------------------------------------- criterion 1

MASK_PARAMS = {
    "cartesian": {"accel": 2, "acl_fraction": 0.25},
    "random": {"accel": 3},
    "radial": {"n_spokes": 4},
    "spiral": {"turns": 2},
    "gaussian2d": {"accel": 3},
}


def test_c1_adjoint_identities():
    t0 = time.perf_counter()
    worst_a = worst_g = 0.0
    for k in range(50):
        rng = np.random.default_rng(k)
        shape = tuple(int(n) for n in rng.integers(4, 17, size=2))
        n_coils = int(rng.integers(1, 4))
        pattern = PATTERNS[k % len(PATTERNS)]
        op = SenseOperator(make_mask(pattern, shape, MASK_PARAMS[pattern], seed=k), _cplx(rng, (n_coils,) + shape))
        x = _cplx(rng, shape)
        z = _cplx(rng, (n_coils,) + shape)
        lhs = np.vdot(apply_A(x, op), z)
        rhs = np.vdot(x, apply_A_adjoint(z, op))
        worst_a = max(worst_a, abs(lhs - rhs) / abs(lhs))
        for boundary in ("replicate", "dirichlet"):
            g = rng.standard_normal(shape)
            f = rng.standard_normal(grad(g, boundary).shape)
            lhs = np.sum(grad(g, boundary) * f)
            rhs = np.sum(g * grad_adjoint(f, boundary))
            worst_g = max(worst_g, abs(lhs - rhs) / abs(lhs))
    worst = max(worst_a, worst_g)
    _check(1, "adjoint identities", worst <= 1e-10,
           f"max rel. error A {worst_a:.1e}, grad {worst_g:.1e} (tol 1e-10)", time.perf_counter() - t0, 5)


# ---------------------------------------------------------------- criterion 2

def test_c2_dst_prox_matches_dense_solve():
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(30):
        rng = np.random.default_rng(100 + k)
        shape = tuple(int(n) for n in rng.integers(2, 9, size=2))
        alpha = (0.1, 1.0, 10.0)[k % 3]
        n = shape[0] * shape[1]
        D = dense_matrix(lambda g: grad(g, "dirichlet"), shape)
        system = np.eye(n) + alpha * D.T @ D
        y = _cplx(rng, (2,) + shape)
        step = float(rng.uniform(0.1, 2.0))
        out = prox_coil_smooth(y, mu=alpha / step, step=step)
        for c in range(2):
            expected = np.linalg.solve(system, y[c].ravel().astype(np.complex128))
            worst = max(worst, float(np.max(np.abs(out[c].ravel() - expected))))
    _check(2, "DST prox vs dense solve", worst <= 1e-8, f"max abs. error {worst:.1e} (tol 1e-8)",
           time.perf_counter() - t0, 5)


# ---------------------------------------------------------------- criterion 3

def test_c3_gradients_match_finite_differences():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    errors = {}

    u = rng.random((8, 8))
    cfg = TvConfig(0.05)
    errors["tv_grad"] = rel_err(tv_grad(u, cfg), fd_gradient(lambda v: tv_value(v, cfg), u))

    arch = EbmArchitecture.desk(crop_shape=(16, 16))
    theta = init_params(arch, seed=3)
    for b in theta.b + theta.bt:
        b[:] = 0.1 * rng.standard_normal(b.shape)
    img = rng.random((16, 16))
    errors["ebm_grad_input"] = rel_err(ebm_grad_input(img, theta, arch),
                                       fd_gradient(lambda v: ebm_value(v, theta, arch), img))
    vec = theta.to_vector()
    fd = fd_gradient(lambda p: ebm_value(img, theta.from_vector(p), arch), vec)
    errors["ebm_grad_params"] = rel_err(ebm_grad_params(img, theta, arch).to_vector(), fd)

    shape = (8, 8)
    u = rng.random(shape) + 0.1
    coils = _cplx(rng, (2,) + shape)
    z = _cplx(rng, (2,) + shape)
    m = (rng.random(shape) < 0.5).astype(float)
    errors["grad_u_data"] = rel_err(grad_u_data(u, coils, z, m), fd_gradient(lambda v: data_term(v, coils, z, m), u))
    errors["grad_sigma_data"] = rel_err(grad_sigma_data(u, coils, z, m),
                                        fd_gradient(lambda s: data_term(u, s, z, m), coils))
    worst = max(errors.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errors.items())
    _check(3, "gradients vs central differences", worst <= 1e-4, f"{detail} (tol 1e-4)",
           time.perf_counter() - t0, 60)


# ---------------------------------------------------------------- criterion 4

ULA_RATIOS = (0.01, 0.1)


def _c4():
    """100 chains of 10^6 steps per ratio, thinned by 10 after 5000 burn-in steps.

    Both ratios share one loop: the step is fixed and each row of chains gets
    its own variance ``s^2 = step / ratio``.
    """
    step = 0.01
    s2 = step / np.array(ULA_RATIOS)[:, None]
    rng = np.random.default_rng(40)
    x, samples = ula_chain(rng.standard_normal((len(ULA_RATIOS), 100)) * np.sqrt(s2), lambda v: v / s2, step, 10**6,
                           rng, burn_in=5000, thin=10)
    target = s2[:, 0] / (1.0 - step / (4.0 * s2[:, 0]))
    var = np.var(samples, axis=(0, 2))
    rel = dict(zip(ULA_RATIOS, np.abs(var / target - 1.0)))
    return {"arrays": {"final": x, "variance": var}, "rel": rel}


def test_c4_ula_stationary_variance(workdir):
    t0 = time.perf_counter()
    out = _c4()
    elapsed = time.perf_counter() - t0
    _OUTPUTS[4] = _npy_bytes(out["arrays"], workdir / "c4")
    worst = max(out["rel"].values())
    detail = ", ".join(f"zeta/s^2={r}: {e:.2%}" for r, e in out["rel"].items())
    _check(4, "ULA stationary variance", worst <= 0.03, f"{detail} (tol 3%)", elapsed, 30)


# ---------------------------------------------------------------- criterion 5

def _c5():
    x = shepp_logan((64, 64))
    full = np.ones((64, 64))
    z = simulate_measurement(x, np.ones((1, 64, 64)), full).planes
    res = ipalm_solve(ReconProblem(z, full, single_coil=True), IpalmConfig(K=50, lam=0.0, regularizer="none"))
    return {"arrays": {"u": res.u}, "psnr": psnr(res.u, x)}


def test_c5_exact_recovery(workdir):
    t0 = time.perf_counter()
    out = _c5()
    elapsed = time.perf_counter() - t0
    _OUTPUTS[5] = _npy_bytes(out["arrays"], workdir / "c5")
    _check(5, "exact recovery", out["psnr"] > 100, f"PSNR {out['psnr']:.1f} dB (need > 100)", elapsed, 10)


# ---------------------------------------------------------------- criterion 6

PHANTOM = (128, 128)
CARTESIAN_4X = {"accel": 4, "acl_fraction": 0.08}
NOISE = 0.01


def _single_coil_problem(seed):
    x = shepp_logan(PHANTOM)
    m = make_mask("cartesian", PHANTOM, CARTESIAN_4X, seed=seed)
    z = simulate_measurement(x, np.ones((1,) + PHANTOM), m, NOISE, seed=seed).planes
    return normalize_problem(ReconProblem(z, m, single_coil=True))[0], x


def _c6():
    # weight chosen on a validation instance (other mask and noise draw), then applied to the test instance
    val, ref = _single_coil_problem(seed=1)
    lam, _ = grid_search_lambda(val, ref, IpalmConfig(K=100), lambdas=LAMBDA_GRID)
    prob, ref = _single_coil_problem(seed=0)
    res = ipalm_solve(prob, IpalmConfig(K=100, lam=lam))
    u0, _ = prob.initial_guess()
    tv, zf = res.u * prob.scale, u0 * prob.scale
    return {"arrays": {"tv": tv, "zf": zf}, "lam": lam, "tv": psnr(tv, ref), "zf": psnr(zf, ref)}


def test_c6_tv_beats_zero_filling(workdir):
    t0 = time.perf_counter()
    out = _c6()
    elapsed = time.perf_counter() - t0
    _OUTPUTS[6] = _npy_bytes(out["arrays"], workdir / "c6")
    gain = out["tv"] - out["zf"]
    _check(6, "TV-MAP vs zero filling", gain >= 3,
           f"TV {out['tv']:.2f} dB, ZF {out['zf']:.2f} dB, gain {gain:.2f} dB at lambda {out['lam']:.3g} (need >= 3)",
           elapsed, 60)


# ---------------------------------------------------------------- criterion 7

TOY_SEEDS = (0, 1, 2)
TOY_CONFIG = dict(total_updates=2000, batch=32, J_max=30, buffer_capacity=1000, lr=5e-4,
                  data_noise_std=0.05, energy_penalty=1e-3, checkpoint_every=200)
TOY_SYNTH = ["-o", "synthesize.n_samples=64", "-o", "synthesize.steps=500"]


def _toy_data():
    return blob_images(2000, (16, 16), seed=100), blob_images(200, (16, 16), seed=999)


def _toy_seed(seed, directory, total_updates=None):
    data, held = _toy_data()
    arch = EbmArchitecture.desk(crop_shape=(16, 16))
    cfg = TrainConfig(seed=seed, **dict(TOY_CONFIG, total_updates=total_updates or TOY_CONFIG["total_updates"]))
    train_dir = directory / f"train_{seed}"
    res = train(data, arch, cfg, out_dir=train_dir)
    ckpt = train_dir / f"theta_{cfg.total_updates:06d}.npz"
    synth_dir = directory / f"synth_{seed}"
    assert cli_main(["synthesize", "--checkpoint", str(ckpt), "--seed", str(seed), "--out", str(synth_dir), *TOY_SYNTH]) == 0
    samples = load_tensor(synth_dir / "samples.npy")
    noise = np.random.default_rng(500 + seed).random((200, 16, 16))
    gap = float(np.mean(ebm_value(noise, res.theta, arch)) - np.mean(ebm_value(held, res.theta, arch)))
    prof_data = radial_profile(data)
    d_samples = float(np.linalg.norm(radial_profile(samples) - prof_data))
    d_noise = float(np.linalg.norm(radial_profile(noise[: len(samples)]) - prof_data))
    return {"theta": res.theta.to_vector(), "samples": samples, "gap": gap, "d_samples": d_samples,
            "d_noise": d_noise, "train_dir": train_dir}


_TOY = {}


def test_c7_toy_training(workdir):
    t0 = time.perf_counter()
    for seed in TOY_SEEDS:
        _TOY[seed] = _toy_seed(seed, workdir / "c7")
    elapsed = time.perf_counter() - t0
    arrays = {}
    for seed, r in _TOY.items():
        arrays[f"theta_{seed}"] = r["theta"]
        arrays[f"samples_{seed}"] = r["samples"]
    _OUTPUTS[7] = _npy_bytes(arrays, workdir / "c7" / "npy")
    gaps = np.array([r["gap"] for r in _TOY.values()])
    spread = float(np.std(gaps, ddof=1))
    energy_ok = bool(np.min(gaps) >= 5 * spread)
    closer = [r["d_samples"] < r["d_noise"] for r in _TOY.values()]
    profile = "; ".join(f"seed {s}: samples {r['d_samples']:.3f} vs noise {r['d_noise']:.3f}" for s, r in _TOY.items())
    detail = (f"gaps {np.array2string(gaps, precision=2)} >= 5 x std {spread:.3f}: {energy_ok}; "
              f"profile L2 {profile}")
    _check(7, "toy EBM training and synthesis", energy_ok and all(closer), detail, elapsed, 1800)


# ---------------------------------------------------------------- criterion 8

def _c8():
    """Default sampler settings on an 8x8 fully sampled problem with a quadratic prior."""
    rng = np.random.default_rng(8)
    x = rng.random((8, 8))
    z = fft2(x) + 0.05 * _cplx(rng, (8, 8))
    prob = ReconProblem(z, np.ones((8, 8)), single_coil=True)
    kappa = 49.0
    cfg = PosteriorConfig()
    mean, var = mmse_and_variance(posterior_sample(prob, None, QuadraticPrior(kappa), cfg))
    # posterior precision is 1 + kappa per pixel: unitary FFT, unit coil, full mask
    exact = ifft2(z).real / (1.0 + kappa)
    _, se = ula_gaussian_moments(1.0 + kappa, cfg.step, cfg.thin, n_kept(cfg))
    return {"arrays": {"mean": mean, "variance": var}, "kept": n_kept(cfg), "zmax": float(np.max(np.abs(mean - exact) / se)),
            "var_min": float(np.min(var))}


def test_c8_posterior_machinery(workdir):
    t0 = time.perf_counter()
    out = _c8()
    elapsed = time.perf_counter() - t0
    _OUTPUTS[8] = _npy_bytes(out["arrays"], workdir / "c8")
    ok = out["kept"] == 10000 and out["var_min"] >= 0 and out["zmax"] <= 3
    _check(8, "posterior sampling", ok,
           f"{out['kept']} kept samples (need 10000), min variance {out['var_min']:.3g}, "
           f"max |mean error| {out['zmax']:.2f} SE (need <= 3)", elapsed, 600)


# ---------------------------------------------------------------- criterion 9

def _coil_problem(seed):
    x = shepp_logan(PHANTOM)
    coils = smooth_coils(PHANTOM, 4, seed=seed).coils
    m = make_mask("cartesian", PHANTOM, CARTESIAN_4X, seed=seed)
    z = simulate_measurement(x, coils, m, NOISE, seed=seed).planes
    # joint estimation identifies the image up to the coil RSS of the true maps
    return normalize_problem(ReconProblem(z, m))[0], x * rss(coils), x, coils


def _c9():
    x = shepp_logan(PHANTOM)
    coils = smooth_coils(PHANTOM, 4, seed=0).coils
    clean_full = simulate_measurement(x, coils, np.ones(PHANTOM)).planes
    exact_norm = null_space_residual(coils, clean_full)[2]

    val, val_ref, _, _ = _coil_problem(seed=1)
    lam, _ = grid_search_lambda(val, val_ref, IpalmConfig(K=100), lambdas=LAMBDA_GRID)
    prob, ref, _, _ = _coil_problem(seed=0)
    res = ipalm_solve(prob, IpalmConfig(K=100, lam=lam))
    u0, coils0 = prob.initial_guess()
    noisy_full = simulate_measurement(x, coils, np.ones(PHANTOM), NOISE, seed=0).planes
    est_norm = null_space_residual(res.coils, noisy_full)[2]
    zf_norm = null_space_residual(coils0, noisy_full)[2]
    joint, zf = res.u * prob.scale, u0 * prob.scale
    return {"arrays": {"u": joint, "coils": res.coils}, "exact": exact_norm, "est": est_norm, "zf_norm": zf_norm,
            "psnr": psnr(joint, ref), "psnr_zf": psnr(zf, ref), "lam": lam}


def test_c9_null_space_and_joint_estimation(workdir):
    t0 = time.perf_counter()
    out = _c9()
    elapsed = time.perf_counter() - t0
    _OUTPUTS[9] = _npy_bytes(out["arrays"], workdir / "c9")
    gain = out["psnr"] - out["psnr_zf"]
    ok = out["exact"] <= 1e-10 and out["est"] <= out["zf_norm"] and gain >= 5
    _check(9, "null-space residual and joint estimation", ok,
           f"exact maps {out['exact']:.1e} (need <= 1e-10), estimated {out['est']:.3f} vs ZF {out['zf_norm']:.3f}, "
           f"PSNR {out['psnr']:.2f} vs ZF {out['psnr_zf']:.2f} dB (gain {gain:.2f}, need >= 5) at lambda {out['lam']:.3g}",
           elapsed, 300)


# ---------------------------------------------------------------- criterion 10

def _toy_rerun(directory):
    """Retrain seed 0 for the first checkpoint interval and resynthesize from the final checkpoint."""
    first = TOY_CONFIG["checkpoint_every"]
    short = _toy_seed(0, directory, total_updates=first)
    full_dir = _TOY[0]["train_dir"]
    theta_full, _ = load_checkpoint(full_dir / f"theta_{first:06d}.npz")
    final = full_dir / f"theta_{TOY_CONFIG['total_updates']:06d}.npz"
    synth_dir = directory / "synth_again"
    assert cli_main(["synthesize", "--checkpoint", str(final), "--seed", "0", "--out", str(synth_dir), *TOY_SYNTH]) == 0
    return (
        _npy_bytes({"theta": theta_full.to_vector()}, directory / "a"),
        _npy_bytes({"theta": short["theta"]}, directory / "b"),
        (full_dir.parent / "synth_0" / "samples.npy").read_bytes(),
        (synth_dir / "samples.npy").read_bytes(),
    )


def test_c10_determinism(workdir):
    t0 = time.perf_counter()
    reruns = {4: _c4, 5: _c5, 6: _c6, 8: _c8, 9: _c9}
    mismatched = []
    for number, compute in reruns.items():
        first = _first_run(number, compute, workdir / "first")
        again = _npy_bytes(compute()["arrays"], workdir / "again" / f"c{number}")
        if first != again:
            mismatched.append(str(number))
    if 0 in _TOY:
        a, b, s1, s2 = _toy_rerun(workdir / "again" / "c7")
        if a != b or s1 != s2:
            mismatched.append("7")
        covered = "4, 5, 6, 7, 8, 9"
    else:
        covered = "4, 5, 6, 8, 9 (criterion 7 did not run)"
    _check(10, "determinism", not mismatched and 0 in _TOY,
           f"reran criteria {covered}; mismatched: {', '.join(mismatched) or 'none'}",
           time.perf_counter() - t0, float("inf"))
