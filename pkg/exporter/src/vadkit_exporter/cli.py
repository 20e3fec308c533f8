"""Command line for the feature exporter: run (images -> FMAP) and verify."""

from __future__ import annotations

import argparse
import json
import sys

from .export import DEFAULT_MODEL, ExportError, ExportJob, export, verify


def build_parser():
    parser = argparse.ArgumentParser(prog="vadkit-export")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="export dense backbone features to FMAP files")
    p.add_argument("--images", nargs="+", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--model", default=DEFAULT_MODEL)
    p.add_argument("--resize", type=int, default=252)
    p.add_argument("--stride", type=int, default=7)
    p.add_argument("--expect-grid", type=int, default=35)
    p.add_argument("--expect-channels", type=int)
    p.add_argument("--untrained", action="store_true",
                   help="seeded random-init backbone (no weight download)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("verify", help="validate an exported FMAP file")
    p.add_argument("--fmap", required=True)
    p.add_argument("--height", type=int, default=35)
    p.add_argument("--width", type=int, default=35)
    p.add_argument("--channels", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        job = ExportJob(
            inputs=args.images,
            out_dir=args.out_dir,
            model=args.model,
            resize=args.resize,
            stride=args.stride,
            expected_grid=args.expect_grid,
            expected_channels=args.expect_channels,
            untrained=args.untrained,
            seed=args.seed,
        )
        try:
            records = export(job)
        except ExportError as exc:
            print(json.dumps({"error": str(exc)}))
            return 1
        print(json.dumps({"exported": records}, indent=2))
        return 0
    result = verify(args.fmap, args.height, args.width, args.channels)
    print(json.dumps(result, indent=2))
    return 0 if result["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
