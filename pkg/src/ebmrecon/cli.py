"""Command-line interface.

Every command reads an optional INI file (``--config``), applies
``-o section.key=value`` overrides, and writes its outputs together with a
``manifest.json`` into the run directory given by ``--out``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 missing input,
4 malformed input file, 5 numerical abort, 1 anything else. Failures print a
one-line JSON object to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import platform
import sys
import time
from dataclasses import fields, replace

import numpy as np

from . import __version__
from .data import (
    TensorFormatError,
    TensorMismatchError,
    UnsupportedDtypeError,
    acceleration_factor,
    blob_images,
    load_mask,
    load_tensor,
    make_mask,
    save_mask,
    save_tensor,
    shepp_logan,
    smooth_coils,
)
from .evaluation import (
    LAMBDA_GRID,
    lambda_fit,
    metric_report,
    psnr,
    radial_profile,
    spline_fit,
)
from .forward_model import simulate_measurement
from .recon import (
    BacktrackingError,
    IpalmConfig,
    NumericalError,
    PosteriorConfig,
    ReconProblem,
    denormalize,
    ipalm_solve,
    mmse_and_variance,
    n_kept,
    normalize_problem,
    posterior_sample,
    prox_nonneg,
)
from .regularizers import EbmArchitecture, load_checkpoint, make_regularizer
from .regularizers.ebm import ebm_forward_backward
from .training import DivergenceError, TrainConfig, train, ula_chain

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_FORMAT = 4
EXIT_NUMERICAL = 5


class ConfigError(ValueError):
    """Invalid configuration file, override or argument combination."""


# --------------------------------------------------------------------------- config

def _shape(text):
    parts = [p for p in str(text).replace("x", ",").split(",") if p.strip()]
    if len(parts) != 2:
        raise ValueError(f"expected 'rows,cols', got {text!r}")
    return tuple(int(p) for p in parts)


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(kind):
    def parse(text):
        return None if str(text).strip().lower() in ("", "none") else kind(text)

    return parse


def _ints(text):
    return tuple(int(p) for p in str(text).split(",") if p.strip())


def _floats(text):
    return tuple(float(p) for p in str(text).split(",") if p.strip())


def _from_dataclass(cls, skip=()):
    kinds = {}
    for f in fields(cls):
        if f.name in skip:
            continue
        default = f.default
        if isinstance(default, bool):
            kinds[f.name] = (_bool, default)
        elif isinstance(default, int):
            kinds[f.name] = (int, default)
        elif isinstance(default, float):
            kinds[f.name] = (float, default)
        elif isinstance(default, tuple):
            kinds[f.name] = (_ints, default)
        elif isinstance(default, str):
            kinds[f.name] = (str, default)
        elif f.name in ("ula_step", "tol"):
            kinds[f.name] = (_opt(float), default)
        else:
            kinds[f.name] = (_opt(str), default)
    return kinds


SCHEMA = {
    "run": {"seed": (int, 0)},
    "data": {
        "kind": (str, "shepp_logan"),
        "shape": (_shape, (128, 128)),
        "n_coils": (int, 4),
        "coil_width": (float, 0.45),
        "noise_std": (float, 0.0),
        "n_images": (int, 2000),
    },
    "mask": {
        "pattern": (str, "cartesian"),
        "shape": (_shape, None),
        "accel": (_opt(float), None),
        "acl_fraction": (_opt(float), None),
        "phase_dir": (_opt(str), None),
        "n_spokes": (_opt(int), None),
        "turns": (_opt(int), None),
        "sigma": (_opt(float), None),
    },
    "train": {
        **_from_dataclass(TrainConfig, skip=("seed",)),
        "layers": (int, 2),
        "base_features": (int, 8),
        "feature_ratio": (float, 1.75),
        "leak": (float, 0.05),
        "crop_shape": (_opt(_shape), None),
    },
    "recon": {
        **_from_dataclass(IpalmConfig),
        "normalize": (_bool, True),
        "single_coil": (_bool, False),
    },
    "posterior": {
        **_from_dataclass(PosteriorConfig, skip=("seed",)),
        "regularizer": (str, "tv"),
        "tv_epsilon": (float, 1e-3),
        "checkpoint": (_opt(str), None),
        "normalize": (_bool, True),
    },
    "synthesize": {
        "n_samples": (int, 64),
        "steps": (int, 500),
        "step": (_opt(float), None),
    },
    "eval": {
        "lambda_grid": (_floats, tuple(float(v) for v in LAMBDA_GRID)),
        "n_knots": (int, 5),
    },
}


def load_config(path=None, overrides=()):
    """Read an INI file plus ``section.key=value`` overrides into typed dicts.

    Unknown sections or keys raise :class:`ConfigError`.
    """
    raw = {section: {} for section in SCHEMA}
    if path is not None:
        if not os.path.exists(path):
            raise FileNotFoundError(f"config file not found: {path}")
        # no implicit DEFAULT section and case-sensitive keys (L_u, J_max)
        parser = configparser.ConfigParser(interpolation=None, default_section="\0")
        parser.optionxform = str
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        for section in parser.sections():
            for key, value in parser.items(section):
                raw.setdefault(section, {})[key] = value
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, value = item.split("=", 1)
        section, key = dotted.strip().split(".", 1)
        raw.setdefault(section, {})[key.strip()] = value.strip()

    cfg = {}
    for section, entries in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        schema = SCHEMA[section]
        unknown = set(entries) - set(schema)
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
        typed = {key: default for key, (_, default) in schema.items()}
        for key, value in entries.items():
            try:
                typed[key] = schema[key][0](value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{section}] {key} = {value!r}: {exc}") from None
        cfg[section] = typed
    return cfg


def _dataclass_from(cls, section, **extra):
    names = {f.name for f in fields(cls)}
    kwargs = {k: v for k, v in section.items() if k in names}
    kwargs.update(extra)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from None


# --------------------------------------------------------------------------- outputs

def save_png(path, image, vmax=None, vmin=0.0):
    """16-bit grayscale PNG with the window ``[vmin, vmax]`` (``vmax`` defaults to the image max)."""
    from PIL import Image

    image = np.asarray(image, dtype=np.float64)
    hi = float(image.max()) if vmax is None else float(vmax)
    span = hi - vmin
    scaled = np.zeros_like(image) if span <= 0 else np.clip((image - vmin) / span, 0.0, 1.0)
    Image.fromarray(np.rint(scaled * 65535).astype(np.uint16)).save(path)


class Run:
    """Run directory bookkeeping: outputs, seeds and the manifest."""

    def __init__(self, command, out_dir, cfg, argv):
        self.command = command
        self.dir = os.path.abspath(out_dir)
        os.makedirs(self.dir, exist_ok=True)
        self.cfg = cfg
        self.argv = list(argv)
        self.inputs = {}
        self.outputs = []
        self.results = {}
        self.t0 = time.perf_counter()

    def path(self, name):
        return os.path.join(self.dir, name)

    def tensor(self, name, array, png=False, vmax=None):
        save_tensor(array, self.path(name))
        self.outputs.append(name)
        if png:
            self.png(os.path.splitext(name)[0] + ".png", np.abs(array), vmax=vmax)

    def png(self, name, image, vmax=None):
        save_png(self.path(name), image, vmax=vmax)
        self.outputs.append(name)

    def json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
        self.outputs.append(name)

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        self.outputs.append(name)

    def input(self, label, path):
        if path is None:
            raise ConfigError(f"missing required input --{label.replace('_', '-')}")
        path = os.path.abspath(path)
        if not os.path.exists(path):
            raise FileNotFoundError(f"input {label} not found: {path}")
        self.inputs[label] = path
        return path

    def finish(self):
        import scipy

        manifest = {
            "command": self.command,
            "argv": self.argv,
            "config": _jsonable(self.cfg),
            "seed": self.cfg["run"]["seed"],
            "inputs": self.inputs,
            "outputs": sorted(set(self.outputs)),
            "results": _jsonable(self.results),
            "versions": {
                "ebmrecon": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "wall_clock_s": time.perf_counter() - self.t0,
        }
        with open(self.path("manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        return manifest


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


# --------------------------------------------------------------------------- commands

def cmd_phantom(args, run):
    """Phantom image (or toy dataset), coil maps and, given a mask, simulated k-space.

    ``data.n_coils = 1`` simulates a single-coil acquisition with a uniform map.
    """
    data, seed = run.cfg["data"], run.cfg["run"]["seed"]
    shape = data["shape"]
    if data["kind"] == "blobs":
        images = blob_images(data["n_images"], shape, seed=seed)
        run.tensor("dataset.npy", images)
        run.png("dataset_000.png", images[0])
        run.results["n_images"] = len(images)
        return
    if data["kind"] != "shepp_logan":
        raise ConfigError(f"unknown data.kind {data['kind']!r} (expected shepp_logan or blobs)")
    image = shepp_logan(shape)
    run.tensor("ground_truth.npy", image, png=True)
    if data["n_coils"] < 1:
        raise ConfigError("data.n_coils must be >= 1")
    if data["n_coils"] == 1:
        coils = np.ones((1,) + tuple(shape), dtype=np.complex128)
    else:
        coils = smooth_coils(shape, data["n_coils"], seed=seed, width=data["coil_width"]).coils
    run.tensor("coils.npy", coils)
    if args.mask is not None:
        mask = load_mask(run.input("mask", args.mask))
        if mask.mask.shape != tuple(shape):
            raise ConfigError(f"mask shape {mask.mask.shape} does not match data.shape {tuple(shape)}")
        measured = simulate_measurement(image, coils, mask, noise_std=data["noise_std"], seed=seed)
        run.tensor("kspace.npy", measured.planes)
        run.results["noise_std"] = data["noise_std"]


def cmd_mask(args, run):
    m = run.cfg["mask"]
    shape = m["shape"] or run.cfg["data"]["shape"]
    params = {k: v for k, v in m.items() if k not in ("pattern", "shape") and v is not None}
    try:
        mask = make_mask(m["pattern"], shape, params, seed=run.cfg["run"]["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    save_mask(mask, run.path("mask.npy"))
    run.outputs += ["mask.npy", "mask.json"]
    run.png("mask.png", mask.centered(), vmax=1.0)
    run.results.update({"acceleration": acceleration_factor(mask), "n_sampled": int(mask.mask.sum())})


def _architecture(section, image_shape):
    crop = section["crop_shape"] or tuple(image_shape)
    try:
        return EbmArchitecture(
            layers=section["layers"], base_features=section["base_features"],
            feature_ratio=section["feature_ratio"], leak=section["leak"], crop_shape=crop,
        )
    except ValueError as exc:
        raise ConfigError(f"architecture: {exc}") from None


def cmd_train(args, run):
    dataset = load_tensor(run.input("dataset", args.dataset), dtype="f8")
    if dataset.ndim != 3:
        raise ConfigError(f"dataset must be a (N, rows, cols) stack, got shape {dataset.shape}")
    section = run.cfg["train"]
    cfg = _dataclass_from(TrainConfig, section, seed=run.cfg["run"]["seed"])
    arch = _architecture(section, dataset.shape[1:])
    result = train(dataset, arch, cfg, out_dir=run.dir)
    run.outputs += ["log.csv"] + [f"theta_{h:06d}.npz" for h, _ in result.checkpoints]
    last = result.log[-1] if result.log else {}
    run.results.update({
        "parameter_count": result.theta.count,
        "final_checkpoint": f"theta_{cfg.total_updates:06d}.npz" if cfg.total_updates else None,
        "final_log_row": last,
        "ula_step": cfg.ula_step,
    })
    if cfg.total_updates == 0:
        from .regularizers import save_checkpoint

        save_checkpoint(run.path("theta_000000.npz"), result.theta, arch, extra={"update": 0, "ula_step": cfg.ula_step})
        run.outputs.append("theta_000000.npz")
        run.results["final_checkpoint"] = "theta_000000.npz"


def _problem(args, run, single_coil):
    z = load_tensor(run.input("kspace", args.kspace), dtype="c16")
    mask = load_mask(run.input("mask", args.mask))
    try:
        return ReconProblem(z, mask, single_coil=single_coil)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _reference(args, run):
    if args.reference is None:
        return None
    return load_tensor(run.input("reference", args.reference), dtype="f8")


def cmd_reconstruct(args, run):
    section = run.cfg["recon"]
    problem = _problem(args, run, section["single_coil"])
    cfg = _dataclass_from(IpalmConfig, section)
    if cfg.checkpoint is not None:
        cfg = replace(cfg, checkpoint=run.input("checkpoint", cfg.checkpoint))
    scale = 1.0
    if section["normalize"]:
        problem, scale = normalize_problem(problem)
    result = ipalm_solve(problem, cfg)
    u = denormalize(result.u, scale)
    run.tensor("u.npy", u, png=True)
    run.tensor("coils.npy", result.coils)
    rows = [[0, result.energy[0], "", ""]]
    rows += [[k, e, lu, ls] for k, (e, lu, ls) in enumerate(zip(result.energy[1:], result.L_u, result.L_sigma), start=1)]
    run.csv("energy.csv", ["iteration", "energy", "L_u", "L_sigma"], rows)
    run.results.update({"scale": scale, "iterations": result.iterations, "final_energy": result.energy[-1],
                        "solver_wall_clock_s": result.wall_clock})
    ref = _reference(args, run)
    if ref is not None:
        run.results["metrics"] = metric_report(u, ref)
        run.results["psnr_db"] = psnr(u, ref)
        run.png("difference.png", np.abs(u - ref) / max(ref.max(), 1e-300), vmax=0.2)


def cmd_posterior(args, run):
    section = run.cfg["posterior"]
    single = args.coils is None
    problem = _problem(args, run, single)
    coils = None if single else load_tensor(run.input("coils", args.coils), dtype="c16")
    cfg = _dataclass_from(PosteriorConfig, section, seed=run.cfg["run"]["seed"])
    checkpoint = section["checkpoint"]
    if checkpoint is not None:
        checkpoint = run.input("checkpoint", checkpoint)
    prior = make_regularizer(section["regularizer"], epsilon=section["tv_epsilon"], checkpoint=checkpoint)
    scale = 1.0
    if section["normalize"]:
        problem, scale = normalize_problem(problem)
    mean, var = mmse_and_variance(posterior_sample(problem, coils, prior, cfg))
    mean, var = denormalize(mean, scale), var * scale**2
    run.tensor("mmse_raw.npy", mean)
    # sampling is unconstrained; only the reported estimate is projected
    run.tensor("mmse.npy", prox_nonneg(mean), png=True)
    run.tensor("variance.npy", var, png=True)
    run.results.update({"n_samples": n_kept(cfg), "scale": scale})
    ref = _reference(args, run)
    if ref is not None:
        run.results["metrics"] = metric_report(prox_nonneg(mean), ref)


def cmd_synthesize(args, run):
    theta, arch = load_checkpoint(run.input("checkpoint", args.checkpoint))
    section = run.cfg["synthesize"]
    step = section["step"]
    if step is None:
        with np.load(run.inputs["checkpoint"]) as archive:
            step = json.loads(str(archive["header"]))["extra"].get("ula_step")
    if step is None:
        raise ConfigError("synthesize.step is not set and the checkpoint does not record a ULA step")
    rng = np.random.default_rng(run.cfg["run"]["seed"])
    x0 = rng.random((section["n_samples"],) + arch.crop_shape)

    def grad_fn(x):
        return ebm_forward_backward(x, theta, arch, need_params=False)[1]

    samples, _ = ula_chain(x0, grad_fn, step, section["steps"], rng)
    run.tensor("samples.npy", samples)
    run.png("sample_000.png", samples[0])
    run.json("radial_profile.json", {"samples": radial_profile(samples).tolist()})
    run.results.update({"ula_step": step, "steps": section["steps"]})


def _stack(a):
    return a[None] if a.ndim == 2 else a


def cmd_eval(args, run):
    recon = _stack(load_tensor(run.input("recon", args.recon), dtype="f8"))
    ref = _stack(load_tensor(run.input("reference", args.reference), dtype="f8"))
    if recon.shape != ref.shape:
        raise ConfigError(f"recon shape {recon.shape} does not match reference shape {ref.shape}")
    rows = []
    for k, (x, r) in enumerate(zip(recon, ref)):
        rep = metric_report(x, r)
        rows.append([k, rep["psnr_db"], rep["nmse"], rep["ssim"]])
    table = np.array([r[1:] for r in rows])
    mean = table.mean(axis=0)
    rows.append(["mean", *mean])
    run.csv("metrics.csv", ["image", "psnr_db", "nmse", "ssim"], rows)
    report = {"per_image": [dict(zip(("psnr_db", "nmse", "ssim"), r[1:])) for r in rows[:-1]],
              "mean": dict(zip(("psnr_db", "nmse", "ssim"), mean))}
    run.json("metrics.json", report)
    run.png("difference.png", np.abs(recon[0] - ref[0]) / max(ref[0].max(), 1e-300), vmax=0.2)
    run.results.update(report["mean"])


def cmd_calibrate(args, run):
    if args.lambda_table is not None:
        path = run.input("lambda_table", args.lambda_table)
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if table.shape[1] != 2:
            raise ConfigError("lambda table must have two columns: residuum,lambda")
        slope, intercept, _ = lambda_fit(table[:, 0], table[:, 1])
        run.json("lambda_fit.json", {"slope": slope, "intercept": intercept, "n_points": len(table)})
        run.results.update({"slope": slope, "intercept": intercept})
        return
    recon = load_tensor(run.input("recon", args.recon), dtype="f8")
    ref = load_tensor(run.input("reference", args.reference), dtype="f8")
    if recon.shape != ref.shape:
        raise ConfigError(f"recon shape {recon.shape} does not match reference shape {ref.shape}")
    cal = spline_fit(recon, ref, n_knots=run.cfg["eval"]["n_knots"])
    calibrated = cal(recon)
    run.tensor("calibrated.npy", calibrated, png=recon.ndim == 2)
    run.json("spline.json", {"knots": cal.knots.tolist(), "t": cal.spline.t.tolist(),
                             "c": cal.spline.c.tolist(), "k": int(cal.spline.k)})
    run.results.update({"residual_before": float(np.sum((recon - ref) ** 2)),
                        "residual_after": float(np.sum((calibrated - ref) ** 2))})


COMMANDS = {
    "phantom": (cmd_phantom, "simulate a phantom, coil maps and (with --mask) k-space"),
    "mask": (cmd_mask, "generate a k-space sampling mask"),
    "train": (cmd_train, "maximum-likelihood training of the energy network"),
    "reconstruct": (cmd_reconstruct, "MAP reconstruction of image and coil maps"),
    "posterior": (cmd_posterior, "Langevin posterior sampling: MMSE and variance maps"),
    "synthesize": (cmd_synthesize, "draw samples from a trained energy starting at uniform noise"),
    "eval": (cmd_eval, "PSNR / NMSE / SSIM of reconstructions against references"),
    "calibrate": (cmd_calibrate, "spline intensity calibration or lambda regression"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="ebmrecon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="INI file with [run], [data], [mask], [train], ... sections")
        p.add_argument("-o", "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
        p.add_argument("--seed", type=int, help="shortcut for -o run.seed=N")
        p.add_argument("--out", default=f"run_{name}", help="run directory (created if needed)")
        if name in ("phantom", "reconstruct", "posterior"):
            p.add_argument("--mask", required=name != "phantom")
        if name in ("reconstruct", "posterior"):
            p.add_argument("--kspace", required=True)
            p.add_argument("--reference")
        if name == "posterior":
            p.add_argument("--coils", help="frozen coil maps; omitted means single-coil")
        if name == "train":
            p.add_argument("--dataset", required=True)
        if name == "synthesize":
            p.add_argument("--checkpoint", required=True)
        if name in ("eval", "calibrate"):
            p.add_argument("--recon")
            p.add_argument("--reference")
        if name == "calibrate":
            p.add_argument("--lambda-table", dest="lambda_table", help="CSV with header and columns residuum,lambda")
    return parser


def _fail(code, exc):
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        overrides = list(args.overrides) + ([f"run.seed={args.seed}"] if args.seed is not None else [])
        cfg = load_config(args.config, overrides)
        run = Run(args.command, args.out, cfg, argv)
        COMMANDS[args.command][0](args, run)
        run.finish()
    except (ConfigError, configparser.Error) as exc:
        return _fail(EXIT_CONFIG, exc)
    except FileNotFoundError as exc:
        return _fail(EXIT_MISSING, exc)
    except (TensorFormatError, UnsupportedDtypeError, TensorMismatchError) as exc:
        return _fail(EXIT_FORMAT, exc)
    except (DivergenceError, NumericalError, BacktrackingError, ZeroDivisionError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERICAL, exc)
    except ValueError as exc:
        return _fail(EXIT_CONFIG, exc)
    except Exception as exc:  # noqa: BLE001 - reported as machine-readable JSON
        return _fail(EXIT_UNEXPECTED, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
