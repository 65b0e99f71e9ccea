#!/usr/bin/env python3
import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path

import numpy as np

from tractconn import __version__
from tractconn.bench import check_resolutions, run_bench, summarize
from tractconn.config import Settings, load_config_file, normalize_key, parse_bool
from tractconn.connectivity import (
    connectivity_from_tractogram,
    parcellate,
    proposed_connectivity,
    traditional_connectivity,
)
from tractconn.errors import ConfigurationError, InvalidArgumentError, TractconnError
from tractconn.formats.matrix import read_matrix, write_matrix
from tractconn.formats.nifti import load_label_volume, save_label_volume
from tractconn.formats.tck import read_tck, write_tck
from tractconn.glyph import Palette, load_label_names, render_pie_glyphs
from tractconn.grid import SourceRegion
from tractconn.phantoms import KINDS
from tractconn.streamline import EndpointMode, Tractogram
from tractconn.superres import superres_connectivity
from tractconn.tracking import RunParams, TrackParams, load_direction_field, track_per_voxel, track_region

LOGGER = logging.getLogger("tractconn.cli")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

# dests a config file may not set
_RESERVED_DESTS = {"help", "version", "config", "command"}


def setup_logging(level: str) -> None:
    numeric = getattr(logging, level.upper(), logging.INFO)
    logging.basicConfig(
        level=numeric,
        format="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )


def _float_list(text: str):
    try:
        return [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _add_tracker_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--step", type=float, default=0.5, help="Step size in mm")
    p.add_argument("--noise-deg", dest="noise_deg", type=float, default=0.0, help="Angular noise (degrees)")
    p.add_argument("--max-steps", dest="max_steps", type=int, default=1000)
    p.add_argument("--min-length", dest="min_length", type=float, default=0.0, help="Minimum streamline length in mm")
    p.add_argument("--seed", type=int, default=0, help="Master RNG seed")


def _add_source_flags(p: argparse.ArgumentParser, flag: str = "--source") -> None:
    p.add_argument(flag, dest="source", help="Source label volume (.nii/.nii.gz)")
    p.set_defaults(source_flag=flag)
    p.add_argument("--label", type=int, help="Source label inside the volume")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file supplying default flag values")
    common.add_argument("--log-level", dest="log_level", default=None, help="DEBUG, INFO, WARNING ... (default TRACTCONN_LOG_LEVEL or INFO)")
    common.add_argument("--threads", type=int, default=None, help="Worker processes (default TRACTCONN_THREADS or all CPUs)")
    common.add_argument("--version", action="version", version=f"tractconn {__version__}")

    parser = argparse.ArgumentParser(prog="tractconn", description="tractconn: voxel-to-region tractography connectivity")
    parser.add_argument("--version", action="version", version=f"tractconn {__version__}")
    sub = parser.add_subparsers(dest="command")
    subparsers = {}

    p = sub.add_parser("track", parents=[common], help="Generate a tractogram on a direction field")
    p.add_argument("--field", help="Direction field (4-D NIfTI, last axis 3)")
    _add_source_flags(p)
    p.add_argument("--algorithm", choices=["per-voxel", "region"], default="region")
    p.add_argument("--k", type=int, default=200, help="Streamlines per voxel (per-voxel)")
    p.add_argument("--kstar", type=int, default=100_000, help="Streamlines in total (region)")
    _add_tracker_flags(p)
    p.add_argument("--out", help="Output .tck")
    subparsers["track"] = p

    p = sub.add_parser("connectivity", parents=[common], help="Voxel-to-region connectivity matrix")
    p.add_argument("--algorithm", choices=["traditional", "proposed", "from-tck"], default="proposed")
    _add_source_flags(p)
    p.add_argument("--targets", help="Target label volume")
    p.add_argument("--field", help="Direction field (traditional, proposed)")
    p.add_argument("--tck", help="Tractogram (from-tck)")
    p.add_argument("--k", type=int, default=200)
    p.add_argument("--kstar", type=int, default=100_000)
    p.add_argument("--endpoint-mode", dest="endpoint_mode", choices=["last", "both"], default="both")
    _add_tracker_flags(p)
    p.add_argument("--out", help="Output matrix (.csv or .cmat)")
    subparsers["connectivity"] = p

    p = sub.add_parser("parcellate", parents=[common], help="Argmax parcellation of a matrix")
    p.add_argument("--matrix", help="Matrix file (.csv or .cmat)")
    _add_source_flags(p)
    p.add_argument("--out", help="Output label volume (.nii/.nii.gz)")
    subparsers["parcellate"] = p

    p = sub.add_parser("superres", parents=[common], help="Connectivity on a finer source grid")
    p.add_argument("--tck", help="Tractogram tracked on the diffusion grid")
    _add_source_flags(p, "--hi-source")
    p.add_argument("--targets", help="Target label volume")
    p.add_argument("--endpoint-mode", dest="endpoint_mode", choices=["last", "both"], default="both")
    p.add_argument("--verify", action="store_true", help="Check against accumulation without upsampling")
    p.add_argument("--out", help="Output matrix (.csv or .cmat)")
    subparsers["superres"] = p

    p = sub.add_parser("pieglyph", parents=[common], help="SVG pie glyphs for one slice")
    p.add_argument("--matrix", help="Matrix file (.csv or .cmat)")
    _add_source_flags(p)
    p.add_argument("--axis", choices=["x", "y", "z"], default="z")
    p.add_argument("--slice", dest="slice_index", type=int, default=None)
    p.add_argument("--min-fraction", dest="min_fraction", type=float, default=0.02)
    p.add_argument("--names", help="label<TAB>name[<TAB>#rrggbb] lookup table")
    p.add_argument("--out", help="Output .svg")
    subparsers["pieglyph"] = p

    p = sub.add_parser("bench", parents=[common], help="Scaling benchmark on a phantom")
    p.add_argument("--phantom", choices=list(KINDS), default="slab")
    p.add_argument("--resolutions", type=_float_list, default=[2.0, 1.0, 0.5], help="Comma-separated voxel sizes in mm, coarse to fine")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--kstar", type=int, default=2000)
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--endpoint-mode", dest="endpoint_mode", choices=["last", "both"], default="both")
    _add_tracker_flags(p)
    p.add_argument("--out", help="Output report .csv")
    subparsers["bench"] = p

    return parser, subparsers


def _config_defaults(sub: argparse.ArgumentParser, path: str) -> dict:
    """Config file values converted with each flag's own type."""
    actions = {a.dest: a for a in sub._actions if a.dest not in _RESERVED_DESTS}
    keys = set(actions)
    for a in actions.values():
        keys.update(normalize_key(s) for s in a.option_strings)
    values = load_config_file(path, keys)

    by_flag = {}
    for a in actions.values():
        by_flag[a.dest] = a
        for s in a.option_strings:
            by_flag[normalize_key(s)] = a

    defaults = {}
    for key, raw in values.items():
        action = by_flag[key]
        if isinstance(action, argparse._StoreTrueAction):
            value = parse_bool(key, raw)
        elif action.type is not None:
            try:
                value = action.type(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigurationError(f"{path}: bad value for {key}: {exc}") from exc
        else:
            value = raw
        if action.choices is not None and value not in action.choices:
            raise ConfigurationError(f"{path}: {key} must be one of {list(action.choices)}, got {value!r}")
        defaults[action.dest] = value
    return defaults


def _flag_name(args, name: str) -> str:
    if name == "source":
        return getattr(args, "source_flag", "--source")
    return "--" + name.replace("_", "-")


def _require(args, *names) -> None:
    missing = [_flag_name(args, n) for n in names if getattr(args, n) is None]
    if missing:
        raise InvalidArgumentError(f"{args.command}: missing required flag(s) {', '.join(missing)}")


def _region(args) -> SourceRegion:
    return SourceRegion(load_label_volume(args.source), args.label)


def _tractogram(args) -> Tractogram:
    tg = read_tck(args.tck)
    if len(tg) == 0:
        raise InvalidArgumentError(f"{args.tck}: tractogram holds no streamlines")
    return tg


def _track_params(args) -> TrackParams:
    return TrackParams(
        step_size=args.step,
        max_steps=args.max_steps,
        angular_noise_deg=args.noise_deg,
        min_length_mm=args.min_length,
        rng_seed=args.seed,
    )


# Each prepare_* validates flags and loads inputs (failures exit 2); the
# returned callable does the work (failures exit 1) and returns the summary.

def prepare_track(args, workers, settings):
    _require(args, "field", "source", "label", "out")
    field = load_direction_field(args.field)
    region = _region(args)
    tp = _track_params(args)
    rp = RunParams(k=args.k, k_star=args.kstar)

    def run():
        if args.algorithm == "region":
            tg = track_region(region, field, tp, rp.k_star, workers, progress=True)
        else:
            tg = track_per_voxel(region, field, tp, rp.k, workers, progress=True)
        write_tck(tg, args.out)
        return f"{len(tg)} streamlines", args.out

    return run


def prepare_connectivity(args, workers, settings):
    _require(args, "source", "label", "targets", "out")
    region = _region(args)
    targets = load_label_volume(args.targets)
    mode = EndpointMode.parse(args.endpoint_mode)
    if args.algorithm == "from-tck":
        _require(args, "tck")
        tg = _tractogram(args)

        def compute():
            return connectivity_from_tractogram(tg, region, targets, mode, workers, progress=True)
    else:
        _require(args, "field")
        field = load_direction_field(args.field)
        tp = _track_params(args)
        rp = RunParams(k=args.k, k_star=args.kstar, endpoint_mode=mode)
        algorithm = traditional_connectivity if args.algorithm == "traditional" else proposed_connectivity

        def compute():
            return algorithm(region, field=field, targets=targets, tp=tp, rp=rp, workers=workers, progress=True)

    def run():
        C = compute()
        write_matrix(C, args.out)
        return f"{C.n_rows} x {C.n_regions + 1} matrix", args.out

    return run


def prepare_parcellate(args, workers, settings):
    _require(args, "matrix", "source", "label", "out")
    C = read_matrix(args.matrix)
    region = _region(args)
    if not np.array_equal(C.row_voxels, region.voxels):
        raise InvalidArgumentError(f"{args.matrix}: rows do not match label {args.label} of {args.source}")

    def run():
        parcels = parcellate(C, region)
        save_label_volume(parcels, args.out)
        return f"parcellation of {C.n_rows} voxels", args.out

    return run


def prepare_superres(args, workers, settings):
    _require(args, "tck", "source", "label", "targets", "out")
    tg = _tractogram(args)
    region = _region(args)
    targets = load_label_volume(args.targets)
    mode = EndpointMode.parse(args.endpoint_mode)

    def run():
        C = superres_connectivity(tg, region, targets, mode, workers, progress=True, verify=args.verify or settings.debug)
        write_matrix(C, args.out)
        return f"{C.n_rows} x {C.n_regions + 1} super-resolved matrix", args.out

    return run


def prepare_pieglyph(args, workers, settings):
    _require(args, "matrix", "source", "label", "slice_index", "out")
    C = read_matrix(args.matrix)
    region = _region(args)
    if not np.array_equal(C.row_voxels, region.voxels):
        raise InvalidArgumentError(f"{args.matrix}: rows do not match label {args.label} of {args.source}")
    axis = "xyz".index(args.axis)
    if not 0 <= args.slice_index < region.volume.shape.dims[axis]:
        raise InvalidArgumentError(
            f"--slice {args.slice_index} is outside [0, {region.volume.shape.dims[axis]}) on axis {args.axis}"
        )
    names, colors = load_label_names(args.names) if args.names else ({}, {})
    palette = Palette.for_labels(C.col_labels, overrides=colors)

    def run():
        svg = render_pie_glyphs(C, region, args.axis, args.slice_index, palette, args.min_fraction, names or None)
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(svg, encoding="utf-8")
        return "pie glyphs", args.out

    return run


def prepare_bench(args, workers, settings):
    _require(args, "out")
    resolutions = check_resolutions(args.resolutions)
    tp = _track_params(args)
    RunParams(k=args.k, k_star=args.kstar, endpoint_mode=args.endpoint_mode)  # validates only

    def run():
        report = run_bench(args.phantom, resolutions, args.k, args.kstar, args.repeat, tp, args.endpoint_mode, workers, progress=True)
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        report.to_csv(out, index=False, lineterminator="\n")
        summary = summarize(report)
        for row in summary.table.itertuples(index=False):
            LOGGER.info("%.3g mm  N=%-6d traditional %.3fs  proposed %.3fs  speedup %.2fx",
                        row.resolution_mm, row.n_source_voxels, row.traditional_s, row.proposed_s, row.speedup)
        return f"{len(report)} benchmark rows", args.out

    return run


PREPARE = {
    "track": prepare_track,
    "connectivity": prepare_connectivity,
    "parcellate": prepare_parcellate,
    "superres": prepare_superres,
    "pieglyph": prepare_pieglyph,
    "bench": prepare_bench,
}


def main(argv=None) -> int:
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    start_ts = datetime.now()

    try:
        if args.config:
            subparsers[args.command].set_defaults(**_config_defaults(subparsers[args.command], args.config))
            args = parser.parse_args(argv)
        settings = Settings.from_env()
    except (ValueError, FileNotFoundError) as exc:
        print(f"tractconn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    setup_logging(args.log_level or settings.log_level)
    workers = args.threads if args.threads is not None else settings.threads

    try:
        if workers < 1:
            raise InvalidArgumentError(f"--threads must be >= 1, got {workers}")
        run = PREPARE[args.command](args, workers, settings)
    except (ValueError, FileNotFoundError) as exc:
        LOGGER.debug("Argument validation failed", exc_info=True)
        print(f"tractconn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        what, out_path = run()
    except (TractconnError, OSError) as exc:
        LOGGER.debug("Run failed", exc_info=True)
        print(f"tractconn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    elapsed = (datetime.now() - start_ts).total_seconds()
    print(f"tractconn: wrote {what} to {out_path} in {elapsed:.2f}s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
