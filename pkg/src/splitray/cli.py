"""Command line interface: trace, compare, genscene."""

from __future__ import annotations

import argparse
import sys

from .errors import SplitrayError
from .harness import RunConfig, compare, run
from .query import EngineMode
from .scenes import GENERATORS, write_scene_files


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=[m.value for m in EngineMode], default=None,
                   help="override split.mode from the config file")
    p.add_argument("--multiplier", type=float, default=None,
                   help="override split.multiplier")
    p.add_argument("--spp", type=int, default=None, help="override samples per pixel")
    p.add_argument("--seed", type=int, default=None, help="override RNG seed")
    p.add_argument("--out", default=None, help="override output directory")


def _config_from_args(args) -> RunConfig:
    return RunConfig.from_file(
        args.config,
        mode=EngineMode(args.mode) if args.mode else None,
        multiplier=args.multiplier,
        spp=args.spp,
        seed=args.seed,
        out=args.out,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="splitray",
        description="Hybrid exact/distance-field ray tracer (AO and shadow passes)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_trace = sub.add_parser("trace", help="render one pass per the config file")
    p_trace.add_argument("--config", required=True)
    _add_overrides(p_trace)

    p_cmp = sub.add_parser("compare",
                           help="render exact_only, combined and field_only and tabulate")
    p_cmp.add_argument("--config", required=True)
    _add_overrides(p_cmp)

    p_gen = sub.add_parser("genscene", help="write a procedural scene to disk")
    p_gen.add_argument("name", choices=sorted(GENERATORS))
    p_gen.add_argument("--out", required=True, help="output directory")

    args = parser.parse_args(argv)
    try:
        if args.command == "trace":
            result = run(_config_from_args(args))
            print(f"image: {result.image_path}")
            print(f"stats: {result.stats_path}")
        elif args.command == "compare":
            table = compare(_config_from_args(args))
            print(f"wrote {table['out'] / 'compare.csv'} and compare.md")
            for row in table["rows"]:
                print(f"  {row['mode']:>11}: work={row['work_score']:.0f} "
                      f"tri={row['triangle_tests']} steps={row['sphere_trace_steps']} "
                      f"rmse={row['rmse_vs_exact']:.5f}")
        else:
            paths = write_scene_files(args.name, args.out)
            print(f"scene: {paths['scene']}")
            print(f"run config: {paths['run']}")
    except SplitrayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
