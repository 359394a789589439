"""Command-line entry point.

Subcommands: ``map`` (build/save index maps), ``transform`` (resample an
image through a map), ``demo-forward`` (seeded decoder forward pass),
``eval`` (depth metrics), ``bench`` (timing studies).  A ``--config`` file
of ``key=value`` lines supplies defaults; explicit flags win.  Module
errors exit nonzero with a single ``category: message`` line on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys

import numpy as np

from .bench import bench_baselines, bench_swt, speedup
from .blocks import DecoderConfig, decoder_forward, init_decoder_params
from .errors import ConfigError, SphwinError
from .fileio import (
    read_depth,
    read_image,
    save_decoder_params,
    write_depth_png,
    write_feature_map,
    write_image,
    write_index_map,
    write_pfm,
)
from .metrics import DepthPair, evaluate, format_key_values, format_report, silog_loss
from .sphere import ErpGrid
from .tensor import FeatureMap, merge_windows
from .transform import (
    TemplateConfig,
    build_index_map_fast,
    build_index_map_naive,
    sample,
)


def _parse_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} does not exist")
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"config line without '=': {line!r}")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, config: dict):
    defaults = {}
    for action in parser._actions:
        if action.dest in config:
            raw = config[action.dest]
            if action.type is not None:
                defaults[action.dest] = action.type(raw)
            elif isinstance(action.default, bool):
                defaults[action.dest] = raw.lower() in ("1", "true", "yes", "on")
            else:
                defaults[action.dest] = raw
    parser.set_defaults(**defaults)


def _grid(args) -> ErpGrid:
    grid = ErpGrid(args.height, args.width)
    if not grid.is_canonical:
        print(
            f"note: {grid.height}x{grid.width} is not the canonical 2:1 ERP shape",
            file=sys.stderr,
        )
    return grid


def cmd_map(args) -> int:
    grid = _grid(args)
    cfg = TemplateConfig(
        grid=grid, rows=args.window, cols=args.window, dilation=args.dilation
    )
    if args.naive:
        index_map = build_index_map_naive(cfg, include_coords=args.with_coords)
    else:
        index_map = build_index_map_fast(
            cfg, include_coords=args.with_coords, threads=args.threads
        )
    write_index_map(index_map, args.out)
    nh, nw = index_map.layout
    print(f"wrote {nh}x{nw} window map ({args.window}x{args.window} nodes) to {args.out}")
    return 0


def cmd_transform(args) -> int:
    f = read_image(args.input)
    grid = ErpGrid(f.height, f.width)
    cfg = TemplateConfig(grid=grid, rows=args.window, cols=args.window, dilation=1)
    index_map = build_index_map_fast(
        cfg, include_coords=(args.mode == "bilinear"), threads=args.threads
    )
    windows = sample(f, index_map, mode=args.mode)
    out = merge_windows(windows)
    ext = os.path.splitext(args.out)[1].lower()
    if ext == ".fmap":
        write_feature_map(out, args.out)
    else:
        write_image(out, args.out)
    print(f"wrote transformed {out.height}x{out.width}x{out.channels} image to {args.out}")
    return 0


def cmd_demo_forward(args) -> int:
    channels = tuple(int(c) for c in args.channels.split(","))
    cfg = DecoderConfig(
        height=args.height,
        width=args.width,
        channels=channels,
        window=args.window,
        expansion=args.expansion,
        seed=args.seed,
    )
    params = init_decoder_params(cfg)
    rng = np.random.default_rng(cfg.seed)
    pyramid = [
        FeatureMap(
            rng.uniform(0.0, 1.0, size=(*cfg.level_shape(i), channels[i])).astype(
                np.float32
            )
        )
        for i in range(cfg.levels)
    ]
    depth = decoder_forward(pyramid, cfg, params, threads=args.threads)
    digest = hashlib.sha256(depth.values.tobytes()).hexdigest()
    print(
        f"depth {depth.height}x{depth.width} "
        f"min={float(depth.values.min()):.6f} max={float(depth.values.max()):.6f} "
        f"sha256={digest}"
    )
    if args.out:
        ext = os.path.splitext(args.out)[1].lower()
        if ext == ".pfm":
            write_pfm(depth.values, args.out)
        elif ext == ".png":
            write_depth_png(depth.values, args.out, args.png_scale)
        else:
            write_feature_map(depth, args.out)
        print(f"wrote depth map to {args.out}")
    if args.save_params:
        save_decoder_params(params, args.save_params)
        print(f"wrote parameter bundle to {args.save_params}")
    return 0


def cmd_eval(args) -> int:
    pred = read_depth(args.pred, args.png_scale)
    gt = read_depth(args.gt, args.png_scale)
    pair = DepthPair.from_arrays(pred, gt, min_depth=args.min_depth)
    metrics = evaluate(pair, align=args.align)
    loss = silog_loss(pair)
    print(format_report(metrics))
    print(f"silog    {loss:.6f}")
    print(f"observed {pair.observed}")
    if args.out:
        doc = format_key_values(metrics) + f"\nsilog={loss!r}\nobserved={pair.observed}\n"
        with open(args.out, "w") as fh:
            fh.write(doc)
        print(f"wrote metrics to {args.out}")
    return 0


def cmd_bench(args) -> int:
    grid = _grid(args)
    cfg = TemplateConfig(grid=grid, rows=args.window, cols=args.window, dilation=1)
    report = bench_swt(cfg, reps=args.reps, threads=args.threads)
    kernels = tuple(int(k) for k in args.kernels.split(","))
    base = bench_baselines(grid, kernels=kernels, reps=args.reps)
    report.cases.extend(base.cases)
    print(report.summary())
    size = f"{grid.height}x{grid.width}"
    ratio = speedup(report, f"swt_fast_{size}_m{args.window}", f"swt_naive_{size}_m{args.window}")
    print(f"decomposed over brute-force speedup: {ratio:.1f}x")
    tangent = report.case(f"tangent_k{kernels[0]}_{size}").median
    fast = report.case(f"swt_fast_{size}_m{args.window}").median
    print(f"window transform vs per-pixel tangent (k={kernels[0]}): "
          f"{fast:.4f}s vs {tangent:.4f}s")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(report.to_csv())
        print(f"wrote CSV report to {args.csv}")
    if args.kv:
        with open(args.kv, "w") as fh:
            fh.write(report.to_key_values())
        print(f"wrote key/value report to {args.kv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sphwin",
        description="Spherical window transform toolkit for equirectangular images",
    )
    parser.add_argument("--config", help="key=value file supplying flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("map", help="build an index map and write an SWTM file")
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--width", type=int, default=1024)
    p.add_argument("--window", type=int, default=8, help="nodes per window side")
    p.add_argument("--dilation", type=int, default=1)
    p.add_argument("--naive", action="store_true", help="use the brute-force builder")
    p.add_argument("--with-coords", action="store_true",
                   help="store continuous coordinates (needed for bilinear sampling)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("transform", help="resample an image through its window map")
    p.add_argument("--input", required=True, help="PNG or FMAP image")
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--mode", choices=("nearest", "bilinear"), default="nearest")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="PNG or FMAP output")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("demo-forward", help="seeded decoder forward pass")
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--channels", default="16,24,32,48",
                   help="comma-separated channels per level, finest first")
    p.add_argument("--window", type=int, default=4)
    p.add_argument("--expansion", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--png-scale", type=float, default=1000.0)
    p.add_argument("--out", help="FMAP, PFM, or 16-bit PNG output path")
    p.add_argument("--save-params", help="directory for the parameter bundle")
    p.set_defaults(func=cmd_demo_forward)

    p = sub.add_parser("eval", help="depth metrics between prediction and ground truth")
    p.add_argument("--pred", required=True, help="FMAP, PFM, or 16-bit PNG depth")
    p.add_argument("--gt", required=True)
    p.add_argument("--align", action="store_true", help="median-align before scoring")
    p.add_argument("--png-scale", type=float, default=1000.0,
                   help="PNG raw units per meter")
    p.add_argument("--min-depth", type=float, default=0.0,
                   help="ground-truth values at or below this are unobserved")
    p.add_argument("--out", help="key=value metrics file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="timing studies and baseline comparisons")
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--width", type=int, default=1024)
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--kernels", default="3,5,7,9")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--csv", help="CSV report path")
    p.add_argument("--kv", help="key/value report path")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        config = {}
        if "--config" in argv:
            at = argv.index("--config")
            if at + 1 >= len(argv):
                raise ConfigError("--config needs a path")
            config = _parse_config_file(argv[at + 1])
            del argv[at : at + 2]
        if config:
            for action in parser._subparsers._group_actions:
                for sp in action.choices.values():
                    _apply_config(sp, config)
        args = parser.parse_args(argv)
        return args.func(args)
    except SphwinError as err:
        print(f"{err.category}: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"io: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
