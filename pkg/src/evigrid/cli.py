"""Command-line interface.

Verbs: ``map-lidar``, ``map-stereo``, ``map-points`` build maps from files,
``synth`` builds one from a scene description, ``render`` converts a saved
map to an image, ``eval`` runs the synthetic method comparison and writes
per-frame confusion rates as CSV.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, PipelineConfig, load_config
from .io_formats import FormatError
from .pipeline import PipelineInputs, PipelineOutputs, run_pipeline


def _require(path):
    if path is not None and not os.path.exists(path):
        raise SystemExit(f"error: input file not found: {path}")
    return path


def _config(args) -> PipelineConfig:
    if args.config is None:
        return PipelineConfig()
    _require(args.config)
    return load_config(args.config)


def _outputs(args) -> PipelineOutputs:
    return PipelineOutputs(grid_map=args.output, render=args.render,
                           render_mode=args.render_mode)


def _add_common(p, with_render=True):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--output", required=True, help="output grid map (.evgm)")
    if with_render:
        p.add_argument("--render", help="also write a rendering (PNG)")
        p.add_argument("--render-mode", default="semantic",
                       choices=("occupancy", "semantic"))
    p.add_argument("--workers", type=int, default=1)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="evigrid",
                                 description="Evidential semantic grid mapping")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("map-lidar", help="map a binary point cloud via the range-image chain")
    p.add_argument("cloud")
    p.add_argument("--labels", help="per-point uint32 label file")
    _add_common(p)

    p = sub.add_parser("map-stereo", help="map a 16-bit disparity PNG")
    p.add_argument("disparity")
    p.add_argument("--semantic", help="per-pixel label image")
    _add_common(p)

    p = sub.add_parser("map-points", help="map a point cloud without the image chain")
    p.add_argument("cloud")
    p.add_argument("--labels")
    _add_common(p)

    p = sub.add_parser("synth", help="map a synthetic scene file")
    p.add_argument("--scene", required=True)
    _add_common(p)

    p = sub.add_parser("render", help="render a saved grid map")
    p.add_argument("map")
    p.add_argument("--output", required=True)
    p.add_argument("--mode", default="semantic", choices=("occupancy", "semantic"))

    p = sub.add_parser("eval", help="synthetic ground-method comparison, CSV output")
    p.add_argument("--scene", required=True)
    p.add_argument("--config")
    p.add_argument("--output", required=True)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)

    args = ap.parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, FormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.verb == "map-lidar":
        cfg = _config(args)
        cfg.sensor_kind = "lidar"
        inputs = PipelineInputs(point_cloud=_require(args.cloud),
                                labels=_require(args.labels))
        run_pipeline(cfg, inputs, _outputs(args), workers=args.workers)
        return 0

    if args.verb == "map-stereo":
        cfg = _config(args)
        cfg.sensor_kind = "stereo"
        inputs = PipelineInputs(disparity=_require(args.disparity),
                                semantic_image=_require(args.semantic))
        run_pipeline(cfg, inputs, _outputs(args), workers=args.workers)
        return 0

    if args.verb == "map-points":
        from .io_formats import load_point_cloud, save_grid_map
        from .pipeline import map_from_pointset

        cfg = _config(args)
        cloud = load_point_cloud(_require(args.cloud), _require(args.labels),
                                 class_map=cfg.class_map,
                                 sensor_origin=(cfg.sensor_origin_x,
                                                cfg.sensor_origin_y,
                                                cfg.sensor_origin_z))
        grid = map_from_pointset(cloud, cfg)
        save_grid_map(args.output, grid)
        if getattr(args, "render", None):
            from .viz import save_visualization

            save_visualization(args.render, grid, args.render_mode)
        return 0

    if args.verb == "synth":
        cfg = _config(args)
        inputs = PipelineInputs(scene=_require(args.scene))
        run_pipeline(cfg, inputs, _outputs(args), workers=args.workers)
        return 0

    if args.verb == "render":
        from .io_formats import load_grid_map
        from .viz import save_visualization

        grid = load_grid_map(_require(args.map))
        save_visualization(args.output, grid, args.mode)
        return 0

    if args.verb == "eval":
        from .evaluation import compare_methods, write_rates_csv
        from .synth import load_scene

        cfg = _config(args)
        scene = load_scene(_require(args.scene))
        rows = compare_methods(scene, cfg, n_frames=args.frames, seed=args.seed)
        write_rates_csv(args.output, rows)
        return 0

    raise AssertionError(args.verb)


if __name__ == "__main__":
    sys.exit(main())
