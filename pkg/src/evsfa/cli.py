"""Command-line driver for the learn-then-track pipeline.

Every command reads a flat ``key = value`` config file (``--config``) whose
keys are the fields of :class:`~evsfa.pipeline.PipelineConfig`; any key can
also be overridden on the command line as ``--key value``. Outputs are
written atomically, and only after the whole command has succeeded.

Exit codes
----------
0  success
2  usage error (argparse)
3  missing input file
4  unknown or malformed config key
5  basis dimensions do not match the configuration
6  malformed or inconsistent data
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from .evaluation import PairingError, encode_curve
from .events import EventParseError, EventBoundsError, atomic_write, encode_events, filter_noise, load_events
from .matching import encode_matches
from .pipeline import PipelineConfig, evaluate, initial_points, scene_spec, track_all, train
from .scene import encode_trajectories, load_trajectories, synthesize_scene
from .subspace import BasisStateError, DegenerateDataError, encode_basis, load_basis
from .voxel import ShapeError, encode_grid, matricize

__all__ = ["main", "load_config", "CliError"]

log = logging.getLogger("evsfa")

EXIT_MISSING = 3
EXIT_BAD_KEY = 4
EXIT_DIMENSION = 5
EXIT_DATA = 6

COMMANDS = ("synth", "filter", "train", "track", "eval", "export-weights", "baseline-ts")
BASIS_FILES = {
    "pca": "pca.csv",
    "pca_smoothed": "pca_smoothed.csv",
    "sfa": "sfa.csv",
    "sfa_smoothed": "sfa_smoothed.csv",
    "sfa_reversed_smoothed": "sfa_reversed_smoothed.csv",
    "pca_track_smoothed": "pca_track_smoothed.csv",
}


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# configuration


def _convert(field: dataclasses.Field, raw: str, origin: str):
    name = field.name
    default = field.default
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            val = float(raw)
            if val != int(val):
                raise ValueError(raw)
            return int(val)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.replace(",", " ").split())
        return raw.strip()
    except ValueError:
        raise CliError(EXIT_BAD_KEY, f"{origin}: bad value {raw!r} for key {name!r}") from None


def load_config(path=None, overrides=None) -> PipelineConfig:
    """Build a config from an optional ``key = value`` file and override pairs.

    Blank lines and ``#`` comments are ignored. Unknown keys raise
    :class:`CliError` naming the key and where it came from.
    """
    fields = PipelineConfig.keys()
    values = {}
    if path is not None:
        if not os.path.isfile(path):
            raise CliError(EXIT_MISSING, f"config file not found: {path}")
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliError(EXIT_BAD_KEY, f"{path}:{lineno}: expected key = value")
                key, raw = (s.strip() for s in line.split("=", 1))
                if key not in fields:
                    raise CliError(EXIT_BAD_KEY, f"{path}:{lineno}: unknown config key {key!r}")
                values[key] = _convert(fields[key], raw, f"{path}:{lineno}")
    for key, raw in (overrides or {}).items():
        if key not in fields:
            raise CliError(EXIT_BAD_KEY, f"unknown config key {key!r}")
        values[key] = _convert(fields[key], raw, "command line")
    cfg = PipelineConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg: PipelineConfig):
    choices = {
        "spatial": ("diagonal", "eight"),
        "reference_window": ("fixed", "stretched"),
        "count_rule": ("min", "best"),
    }
    for key, allowed in choices.items():
        if getattr(cfg, key) not in allowed:
            raise CliError(EXIT_BAD_KEY, f"key {key!r} must be one of {allowed}")
    for key in ("a", "M", "T", "n_pca", "n_sfa", "k", "max_samples", "max_matches"):
        if getattr(cfg, key) <= 0:
            raise CliError(EXIT_BAD_KEY, f"key {key!r} must be positive")


# ---------------------------------------------------------------------------
# helpers


def _require(path, key):
    if not path or not os.path.isfile(path):
        raise CliError(EXIT_MISSING, f"input file for {key!r} not found: {path!r}")
    return path


def _out(cfg, name):
    return os.path.join(cfg.out_dir, name)


def _load_stream(path, key):
    _require(path, key)
    try:
        return load_events(path)
    except (EventParseError, EventBoundsError) as exc:
        raise CliError(EXIT_DATA, str(exc)) from None


def _load_trajs(path, key):
    _require(path, key)
    try:
        return load_trajectories(path)
    except ValueError as exc:
        raise CliError(EXIT_DATA, str(exc)) from None


def _load_basis(cfg, path, key="basis", check_dims=True):
    _require(path, key)
    try:
        basis = load_basis(path)
    except ValueError as exc:
        raise CliError(EXIT_DATA, str(exc)) from None
    if check_dims and basis.dims != cfg.box.dims:
        raise CliError(
            EXIT_DIMENSION,
            f"basis {path} has box dims {basis.dims} but config keys a={cfg.a}, M={cfg.M} "
            f"give {cfg.box.dims}",
        )
    return basis


def _write_all(outputs):
    """Write ``{path: bytes}`` after every payload has been produced."""
    for path in outputs:
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
    for path, data in outputs.items():
        atomic_write(path, data)
        log.info("wrote %s", path)


# ---------------------------------------------------------------------------
# commands


def cmd_synth(cfg: PipelineConfig):
    """Synthetic events, ground truth and initial points."""
    try:
        spec = scene_spec(cfg)
    except ValueError as exc:
        raise CliError(EXIT_BAD_KEY, f"scene keys: {exc}") from None
    stream, truth = synthesize_scene(spec)
    init = initial_points(truth, cfg.init_time, cfg.width, cfg.height)
    return {
        cfg.events: encode_events(stream, _fmt(cfg.events)),
        cfg.truth: encode_trajectories(truth),
        cfg.init_points: encode_trajectories(init),
    }


def _fmt(path):
    return "packed-binary" if path.lower().endswith((".bin", ".evs")) else "csv"


def cmd_filter(cfg: PipelineConfig):
    stream = _load_stream(cfg.events, "events")
    kept = filter_noise(stream, cfg.filter_half_width, cfg.filter_window)
    log.info("kept %d of %d events", len(kept), len(stream))
    return {cfg.filtered: encode_events(kept, _fmt(cfg.filtered))}


def cmd_train(cfg: PipelineConfig):
    stream = _load_stream(cfg.events, "events")
    try:
        res = train(stream, cfg)
    except (DegenerateDataError, ValueError) as exc:
        raise CliError(EXIT_DATA, f"training failed: {exc}") from None
    out = {_out(cfg, "filtered.csv"): encode_events(res.filtered, "csv")}
    for name, basis in res.bases().items():
        out[_out(cfg, BASIS_FILES[name])] = encode_basis(basis)
    out[_out(cfg, "matches.bin")] = encode_matches(res.matches.pairs, cfg.box.d)
    return out


def _track(cfg, basis):
    stream = _load_stream(cfg.events, "events")
    init = _load_trajs(cfg.init_points, "init_points")
    try:
        est = track_all(stream, init, cfg, basis, t_end_after=cfg.track_duration)
    except (ShapeError, BasisStateError) as exc:
        raise CliError(EXIT_DIMENSION, str(exc)) from None
    return {cfg.trajectories: encode_trajectories(est)}


def cmd_track(cfg: PipelineConfig):
    path = cfg.basis or _out(cfg, BASIS_FILES["sfa_smoothed"])
    basis = _load_basis(cfg, path)
    if not basis.smoothed:
        raise CliError(EXIT_DATA, f"basis {path} is not smoothed; use a *_smoothed file")
    if cfg.n_sfa < len(basis):
        basis = basis.head(cfg.n_sfa)
    return _track(cfg, basis)


def cmd_baseline_ts(cfg: PipelineConfig):
    return _track(cfg, None)


def cmd_eval(cfg: PipelineConfig):
    est = _load_trajs(cfg.estimates, "estimates")
    truth = _load_trajs(cfg.truth, "truth")
    missing = sorted(set(est) - set(truth))
    if missing:
        raise CliError(EXIT_DATA, f"estimate ids {missing} have no ground truth in {cfg.truth}")
    try:
        acc, dist = evaluate(est, truth, cfg)
    except (PairingError, ValueError) as exc:
        raise CliError(EXIT_DATA, str(exc)) from None
    return {
        _out(cfg, "accuracy.csv"): encode_curve(acc),
        _out(cfg, "displacement.csv"): encode_curve(dist),
    }


def cmd_export_weights(cfg: PipelineConfig):
    path = cfg.basis or _out(cfg, BASIS_FILES["sfa_smoothed"])
    basis = _load_basis(cfg, path, check_dims=False)
    lo, hi = cfg.index_start, min(cfg.index_stop, len(basis))
    if not 0 <= lo < hi:
        raise CliError(
            EXIT_BAD_KEY,
            f"index range [{cfg.index_start}, {cfg.index_stop}) selects nothing from {len(basis)} weights",
        )
    return {
        _out(cfg, f"weights_{i:03d}.csv"): encode_grid(matricize(basis.weights[i], basis.dims))
        for i in range(lo, hi)
    }


HANDLERS = {
    "synth": cmd_synth,
    "filter": cmd_filter,
    "train": cmd_train,
    "track": cmd_track,
    "eval": cmd_eval,
    "export-weights": cmd_export_weights,
    "baseline-ts": cmd_baseline_ts,
}

HELP = {
    "synth": "render a synthetic scene: events, truth and initial points",
    "filter": "drop isolated noise events",
    "train": "learn PCA and SFA bases; writes every intermediate into out_dir",
    "track": "track initial points with a smoothed basis",
    "eval": "accuracy and mean-displacement curves against ground truth",
    "export-weights": "dump weight vectors as a,a,M grids",
    "baseline-ts": "track initial points with time surfaces",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="evsfa", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(
            name,
            help=HELP[name],
            description=HELP[name],
            epilog="Any config key can also be given as --KEY VALUE: " + ", ".join(PipelineConfig.keys()),
        )
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", help="random seed (same as the 'seed' key)")
        p.add_argument("-v", "--verbose", action="store_true")
        for key in PipelineConfig.keys():
            if key == "seed":
                continue
            p.add_argument(f"--{key}", dest=f"cfg_{key}", metavar="VALUE", help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = {
        k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None
    }
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        cfg = load_config(args.config, overrides)
        outputs = HANDLERS[args.command](cfg)
        _write_all(outputs)
    except CliError as exc:
        print(f"evsfa {args.command}: {exc}", file=sys.stderr)
        return exc.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
