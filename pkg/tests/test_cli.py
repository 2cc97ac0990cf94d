import json

import numpy as np
import pytest

from ebmrecon.cli import (
    EXIT_CONFIG,
    EXIT_FORMAT,
    EXIT_MISSING,
    EXIT_OK,
    ConfigError,
    load_config,
    main,
)
from ebmrecon.data import load_tensor


def _run(*argv):
    return main([str(a) for a in argv])


def _manifest(path):
    return json.loads((path / "manifest.json").read_text())


@pytest.fixture
def full_mask(tmp_path):
    out = tmp_path / "full"
    assert _run("mask", "-o", "mask.shape=32,32", "-o", "mask.accel=1", "-o", "mask.acl_fraction=0.1", "--out", out) == EXIT_OK
    return out / "mask.npy"


def test_config_file_and_overrides(tmp_path):
    ini = tmp_path / "cfg.ini"
    ini.write_text("[run]\nseed = 3\n[recon]\nL_u = 2.5\nK = 7\n[train]\nlr_milestones = 10, 20\n")
    cfg = load_config(ini, ["recon.K=9"])
    assert cfg["run"]["seed"] == 3
    assert cfg["recon"]["L_u"] == 2.5 and cfg["recon"]["K"] == 9
    assert cfg["train"]["lr_milestones"] == (10, 20)
    assert cfg["recon"]["regularizer"] == "tv"
    with pytest.raises(ConfigError):
        load_config(None, ["recon.bogus=1"])
    with pytest.raises(ConfigError):
        load_config(None, ["nosection.key=1"])
    with pytest.raises(ConfigError):
        load_config(None, ["recon.K=abc"])


def test_mask_command_fastmri_geometry(tmp_path):
    out = tmp_path / "m"
    code = _run("mask", "-o", "mask.shape=320,368", "-o", "mask.accel=4", "-o", "mask.acl_fraction=0.08", "--out", out)
    assert code == EXIT_OK
    mask = load_tensor(out / "mask.npy")
    assert int(mask[0].sum()) == 92
    meta = json.loads((out / "mask.json").read_text())
    assert meta["acl_fraction"] == 0.08 and meta["accel"] == 4
    assert (out / "mask.png").exists()
    manifest = _manifest(out)
    assert manifest["results"]["acceleration"] == 4.0
    assert {"config", "seed", "versions", "wall_clock_s", "argv"} <= set(manifest)


def test_reconstruct_exact_single_coil(tmp_path, full_mask):
    ph = tmp_path / "ph"
    assert _run("phantom", "-o", "data.shape=32,32", "-o", "data.n_coils=1", "--mask", full_mask, "--out", ph) == EXIT_OK
    rc = tmp_path / "rc"
    code = _run(
        "reconstruct", "--kspace", ph / "kspace.npy", "--mask", full_mask, "--reference", ph / "ground_truth.npy",
        "-o", "recon.lam=0", "-o", "recon.regularizer=none", "-o", "recon.single_coil=true", "-o", "recon.K=50", "--out", rc,
    )
    assert code == EXIT_OK
    assert _manifest(rc)["results"]["psnr_db"] > 100
    assert (rc / "energy.csv").read_text().startswith("iteration,energy,L_u,L_sigma")


def test_eval_identical_pair(tmp_path, full_mask):
    ph = tmp_path / "ph"
    _run("phantom", "-o", "data.shape=32,32", "--out", ph)
    ev = tmp_path / "ev"
    assert _run("eval", "--recon", ph / "ground_truth.npy", "--reference", ph / "ground_truth.npy", "--out", ev) == EXIT_OK
    lines = (ev / "metrics.csv").read_text().splitlines()
    assert lines[0] == "image,psnr_db,nmse,ssim"
    _, _, nmse, ssim = lines[1].split(",")
    assert float(nmse) == 0.0 and float(ssim) == 1.0


def test_repeat_runs_are_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        _run("mask", "-o", "mask.pattern=random", "-o", "mask.shape=16,16", "--seed", "5", "--out", out)
        outs.append((out / "mask.npy").read_bytes())
    assert outs[0] == outs[1]


def test_train_synthesize_posterior_calibrate(tmp_path):
    data = tmp_path / "data"
    assert _run("phantom", "-o", "data.kind=blobs", "-o", "data.shape=8,8", "-o", "data.n_images=20", "--out", data) == EXIT_OK
    tr = tmp_path / "tr"
    code = _run(
        "train", "--dataset", data / "dataset.npy", "-o", "train.total_updates=3", "-o", "train.batch=4",
        "-o", "train.buffer_capacity=8", "-o", "train.J_max=50", "-o", "train.base_features=2", "--out", tr,
    )
    assert code == EXIT_OK
    manifest = _manifest(tr)
    ckpt = tr / manifest["results"]["final_checkpoint"]
    assert ckpt.exists() and (tr / "log.csv").exists()

    sy = tmp_path / "sy"
    assert _run("synthesize", "--checkpoint", ckpt, "-o", "synthesize.n_samples=3", "-o", "synthesize.steps=5", "--out", sy) == EXIT_OK
    assert load_tensor(sy / "samples.npy").shape == (3, 8, 8)
    assert len(json.loads((sy / "radial_profile.json").read_text())["samples"]) > 1

    mk = tmp_path / "mk"
    _run("mask", "-o", "mask.shape=8,8", "-o", "mask.pattern=random", "-o", "mask.accel=2", "--out", mk)
    ph = tmp_path / "ph"
    _run("phantom", "-o", "data.shape=8,8", "-o", "data.n_coils=1", "-o", "data.noise_std=0.01", "--mask", mk / "mask.npy", "--out", ph)
    po = tmp_path / "po"
    code = _run(
        "posterior", "--kspace", ph / "kspace.npy", "--mask", mk / "mask.npy", "-o", "posterior.regularizer=ebm",
        "-o", f"posterior.checkpoint={ckpt}", "-o", "posterior.burn_in=10", "-o", "posterior.total_iters=40",
        "-o", "posterior.thin=3", "--out", po,
    )
    assert code == EXIT_OK
    assert _manifest(po)["results"]["n_samples"] == 10
    assert np.all(load_tensor(po / "variance.npy") >= 0) and np.all(load_tensor(po / "mmse.npy") >= 0)

    ca = tmp_path / "ca"
    assert _run("calibrate", "--recon", po / "mmse_raw.npy", "--reference", ph / "ground_truth.npy", "--out", ca) == EXIT_OK
    res = _manifest(ca)["results"]
    assert res["residual_after"] <= res["residual_before"]
    table = tmp_path / "lam.csv"
    table.write_text("residuum,lambda\n1,0.2\n3,0.6\n")
    cl = tmp_path / "cl"
    assert _run("calibrate", "--lambda-table", table, "--out", cl) == EXIT_OK
    assert _manifest(cl)["results"]["slope"] == pytest.approx(0.2)


def test_error_codes(tmp_path, capsys, full_mask):
    assert _run("mask", "-o", "mask.bogus=1", "--out", tmp_path / "x") == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == EXIT_CONFIG and err["error"] == "ConfigError"
    assert _run("reconstruct", "--kspace", tmp_path / "missing.npy", "--mask", full_mask, "--out", tmp_path / "y") == EXIT_MISSING
    bad = tmp_path / "bad.npy"
    bad.write_bytes(b"not an npy file at all")
    assert _run("reconstruct", "--kspace", bad, "--mask", full_mask, "--out", tmp_path / "z") == EXIT_FORMAT
    assert _run("nonsense") == EXIT_CONFIG
