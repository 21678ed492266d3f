"""``hrn-vo`` command line: run, eval, synth.

Exit codes: 0 ok, 2 config error, 3 data error, 4 evaluation error.
"""
import argparse
import configparser
import json
import logging
import os
import platform
import sys
from dataclasses import fields

import numpy as np

from . import __version__
from .errors import DatasetNotFound, DegenerateInput, FormatError, HrnError, InvalidArgument
from .evaluation import Trajectory, evaluate, parse_window
from .eventio import load_dataset, load_groundtruth, quats_to_euler
from .pipeline import RunConfig, run_events
from .resonator import ResonatorConfig
from .synth import MANIFEST_FILE, SceneSpec, TrajectorySpec, generate_dataset

log = logging.getLogger("hrnvo")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_EVAL = 0, 2, 3, 4


class ConfigError(HrnError):
    pass


# --- config files --------------------------------------------------------

def _coerce(value, default, key):
    if isinstance(default, bool):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    try:
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {value!r}") from exc
    if isinstance(default, tuple):
        return tuple(v.strip() for v in value.split(","))
    return value.strip()


def _apply(obj, items, where):
    known = {f.name: f for f in fields(obj)}
    for key, value in items:
        key = key.replace("-", "_")
        if key not in known or key == "resonator":
            raise ConfigError(f"[{where}] unknown key {key!r}")
        setattr(obj, key, _coerce(value, getattr(obj, key), key))
    return obj


def read_sections(path):
    """Flat ``key = value`` file with optional ``[section]`` headers."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), default_section="__none__")
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        if not text.lstrip().startswith("["):
            text = "[main]\n" + text
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return {s: list(parser.items(s)) for s in parser.sections()}


def load_run_config(path):
    """Sections ``[run]``/``[main]`` (run keys) and ``[resonator]``."""
    cfg = RunConfig()
    for section, items in read_sections(path).items():
        if section in ("run", "main", "dataset", "grid", "codebook", "output"):
            _apply(cfg, items, section)
        elif section in ("resonator", "fusion"):
            _apply(cfg.resonator, items, section)
        else:
            raise ConfigError(f"unknown section [{section}]")
    if cfg.dataset and not os.path.isabs(cfg.dataset):
        cfg.dataset = os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(path)), cfg.dataset))
    return cfg


def load_spec(path, cls):
    spec = cls()
    for section, items in read_sections(path).items():
        _apply(spec, items, section)
    return spec


# --- outputs -------------------------------------------------------------

class Outputs:
    """Tracks files written by one command; removes them on failure."""

    def __init__(self, directory):
        self.dir = directory
        self.created_dir = not os.path.isdir(directory)
        self.paths = []

    def path(self, name):
        os.makedirs(self.dir, exist_ok=True)
        p = os.path.join(self.dir, name)
        self.paths.append(p)
        return p

    def cleanup(self):
        for p in self.paths:
            if os.path.exists(p):
                os.remove(p)
        if self.created_dir and os.path.isdir(self.dir) and not os.listdir(self.dir):
            os.rmdir(self.dir)


def write_trajectory_csv(path, t, values):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,h,v,r\n")
        for ti, (h, v, r) in zip(t, values):
            fh.write(f"{ti:.9f},{h:.6f},{v:.6f},{r:.6f}\n")


def read_trajectory_csv(path):
    if not os.path.exists(path):
        raise DatasetNotFound(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
    if header.replace(" ", "") != "t,h,v,r":
        raise FormatError(f"{path}: expected header 't,h,v,r', got {header!r}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 4:
        raise FormatError(f"{path}: expected 4 columns")
    return Trajectory(data[:, 0], data[:, 1:], "network")


def groundtruth_trajectory(path, mode):
    gt, _ = load_groundtruth(path)
    if len(gt) == 0:
        raise DatasetNotFound(path)
    eul = quats_to_euler(gt.orientation)  # roll, pan, tilt
    if mode == "planar":
        vals = np.column_stack([gt.position[:, 0], gt.position[:, 1], eul[:, 0]])
    else:
        vals = np.column_stack([eul[:, 1], eul[:, 2], eul[:, 0]])
    return Trajectory(gt.t, vals, "groundtruth")


def _versions():
    import scipy

    return {"hrnvo": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def _sensor_dims(cfg, dataset):
    if cfg.sensor_width and cfg.sensor_height:
        return (cfg.sensor_width, cfg.sensor_height)
    manifest = os.path.join(cfg.dataset, MANIFEST_FILE)
    if os.path.exists(manifest):
        with open(manifest, encoding="utf-8") as fh:
            dims = json.load(fh).get("sensor_dims")
        if dims:
            return tuple(int(d) for d in dims)
    ev = dataset.events
    if len(ev) == 0:
        raise DegenerateInput("no events")
    return (int(ev.x.max()) + 1, int(ev.y.max()) + 1)


def _plot_eval(report, calibrated, gt, out):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    meta = {"Software": None}
    fig, axes = plt.subplots(3, 1, figsize=(8, 7), sharex=True)
    labels = ("a", "b", "roll")
    for j, ax in enumerate(axes):
        ax.plot(gt.t, gt.values[:, j], "k-", lw=1, label="ground truth")
        ax.plot(calibrated.t, calibrated.values[:, j], "r-", lw=0.8, label="network")
        ax.set_ylabel(labels[j])
    axes[0].legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("t [s]")
    fig.tight_layout()
    p1 = out.path("trajectory.png")
    fig.savefig(p1, dpi=100, metadata=meta)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(report.t, report.angle_errors, "b-", lw=0.8)
    ax.axhline(report.median_angle_error, color="k", ls="--", lw=0.8)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("angle error [deg]")
    fig.tight_layout()
    p2 = out.path("error.png")
    fig.savefig(p2, dpi=100, metadata=meta)
    plt.close(fig)
    return p1, p2


# --- commands ------------------------------------------------------------

def cmd_run(args):
    try:
        cfg = load_run_config(args.config)
        if args.out:
            cfg.out = args.out
        if args.fusion:
            cfg.resonator.fusion_enabled = True
        if args.seed is not None:
            cfg.seed = args.seed
        if not cfg.dataset:
            raise ConfigError("config needs a dataset path")
        cfg.validate()
    except (ConfigError, InvalidArgument) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG

    out = Outputs(cfg.out)
    try:
        dataset = load_dataset(cfg.dataset, cfg.dataset_format)
        dims = _sensor_dims(cfg, dataset)
        result = run_events(dataset.events, dims, cfg, dataset.imu)
        if len(result.t) == 0:
            raise DegenerateInput("fewer events than one package")
        write_trajectory_csv(out.path("trajectory.csv"), result.t, result.values)
        if cfg.save_profiles:
            np.savez_compressed(out.path("profiles.npz"), t=result.t, **result.profiles)
        manifest = {
            "command": "run",
            "config": cfg.flat(),
            "versions": _versions(),
            "seed": cfg.seed,
            "sensor_dims": list(dims),
            "package_count": int(len(result.t)),
            "event_count": int(len(dataset.events)),
            "skipped_lines": dataset.skipped,
        }
        with open(out.path("run_manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
    except (DatasetNotFound, FormatError, DegenerateInput) as exc:
        out.cleanup()
        log.error("data error: %s", exc)
        return EXIT_DATA
    except InvalidArgument as exc:
        out.cleanup()
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except BaseException:
        out.cleanup()
        raise
    print(os.path.join(cfg.out, "trajectory.csv"))
    return EXIT_OK


def cmd_eval(args):
    try:
        mode, explicit = parse_window(args.window)
        if args.mode not in ("rot3", "planar"):
            raise ConfigError(f"unknown mode {args.mode!r}")
    except (ValueError, ConfigError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    try:
        net = read_trajectory_csv(args.traj)
        gt = groundtruth_trajectory(args.gt, args.mode)
    except (DatasetNotFound, FormatError, InvalidArgument, ValueError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    if net.t[-1] <= gt.t[0] or gt.t[-1] <= net.t[0]:
        log.error("evaluation error: trajectories do not overlap in time")
        return EXIT_EVAL
    out = Outputs(args.out)
    try:
        report = evaluate(net, gt, args.mode, mode, explicit)
        with open(out.path("report.txt"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report.to_text())
        with open(out.path("errors.csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report.to_csv())
        if not args.no_plots:
            _plot_eval(report, report.calibration.apply(net), gt, out)
    except (InvalidArgument, DegenerateInput) as exc:
        out.cleanup()
        log.error("evaluation error: %s", exc)
        return EXIT_EVAL
    except BaseException:
        out.cleanup()
        raise
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_synth(args):
    try:
        scene = load_spec(args.scene, SceneSpec) if args.scene else SceneSpec()
        traj = load_spec(args.traj, TrajectorySpec) if args.traj else TrajectorySpec()
        if args.seed is not None:
            scene.seed = traj.seed = args.seed
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    out = Outputs(args.out)
    try:
        ds = generate_dataset(scene, traj, args.event_noise, out_dir=None)
        from .synth import write_dataset

        for name in ds.manifest["files"] + [MANIFEST_FILE]:
            out.path(name)
        path = write_dataset(ds, args.out)
    except InvalidArgument as exc:
        out.cleanup()
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except BaseException:
        out.cleanup()
        raise
    print(path)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="hrn-vo", description="Hierarchical resonator visual odometry")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="track a dataset")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--fusion", action="store_true")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="calibrate and score a trajectory")
    e.add_argument("--traj", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--mode", default="rot3")
    e.add_argument("--window", default="last-10s")
    e.add_argument("--out", default="eval")
    e.add_argument("--no-plots", action="store_true")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--scene")
    s.add_argument("--traj")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--event-noise", type=float, default=0.0)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
