"""Thin command-line client for the pipeline service.

Every subcommand builds the same request model the HTTP API accepts.  By
default the request is executed in-process (no server needed); with
``--server URL`` it is POSTed to a running ``vadkit serve`` instance instead.
Stdout carries a JSON payload on every non-usage-error path.

Exit codes: 0 success, 1 detection-positive (check), 2 usage/config error,
3 data or format error, 4 insufficient data.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import pipeline
from .errors import VadkitError
from .service.models import (EvalRequest, FeaturizeRequest, FitRequest,
                             GeometryRequest, RoiRequest, ScoreRequest,
                             SelectChannelsRequest, SynthRequest)

_KIND_EXIT = {
    "invalid-argument": 2,
    "config-error": 2,
    "format-error": 3,
    "io-error": 3,
    "invalid-input": 3,
    "degenerate-input": 3,
    "insufficient-data": 4,
}

_RUNNERS = {
    "synth": (SynthRequest, pipeline.run_synth),
    "roi": (RoiRequest, pipeline.run_roi),
    "featurize": (FeaturizeRequest, pipeline.run_featurize),
    "select-channels": (SelectChannelsRequest, pipeline.run_select_channels),
    "fit": (FitRequest, pipeline.run_fit),
    "score": (ScoreRequest, pipeline.run_score),
    "check": (ScoreRequest, pipeline.run_check),
    "eval": (EvalRequest, pipeline.run_eval),
    "dump-geometry": (GeometryRequest, pipeline.run_dump_geometry),
}


def _anchor(text: str) -> tuple[int, int]:
    try:
        u, v = text.split(",")
        return (int(u), int(v))
    except ValueError:
        raise argparse.ArgumentTypeError(f"anchor must be 'U,V', got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vadkit", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--server", help="URL of a running service; default runs in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--kind", required=True, choices=("needle", "loop", "cortex"))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--normal", type=int, default=0)
    p.add_argument("--anomalous", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint")
    p.add_argument("--raw-px", type=int, default=320)
    p.add_argument("--roi-px", type=int, default=256)
    p.add_argument("--anomaly-location", default="near-anchor",
                   choices=("near-anchor", "far-from-anchor"))

    p = sub.add_parser("roi", help="extract an anchor-aligned ROI from a raw image")
    p.add_argument("--image", required=True)
    p.add_argument("--anchor", required=True, type=_anchor)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--roi-px", type=int)

    p = sub.add_parser("featurize", help="turn manifest entries into FMAP files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--config")
    p.add_argument("--backend")
    p.add_argument("--augment", action="store_true",
                   help="apply the checkpoint's flip augmentation")

    p = sub.add_parser("select-channels", help="rank channels by SNR and write a mask")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--config")
    p.add_argument("--fraction", type=float)
    p.add_argument("--bottom", action="store_true",
                   help="keep the bottom fraction instead (ablation baseline)")

    p = sub.add_parser("fit", help="fit the per-location normality bank")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--config")
    p.add_argument("--epsilon", type=float)

    for name, help_text in (("score", "score one input against a bank"),
                            ("check", "score and compare against the threshold")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--bank", required=True)
        p.add_argument("--image")
        p.add_argument("--anchor", type=_anchor)
        p.add_argument("--fmap")
        p.add_argument("--heatmap")
        p.add_argument("--tau", type=float)

    p = sub.add_parser("eval", help="evaluate a bank against a labeled manifest")
    p.add_argument("--bank", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.add_argument("--pr-csv")
    p.add_argument("--store-tau", action="store_true",
                   help="write the F1-max threshold back into the bank")

    p = sub.add_parser("dump-geometry", help="dump the sampling geometry as JSON")
    p.add_argument("--checkpoint")
    p.add_argument("--config")
    p.add_argument("--bank")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)

    return parser


def _request(args) -> dict:
    cmd = args.command
    if cmd == "synth":
        return SynthRequest(
            kind=args.kind, out_dir=args.out_dir, normal=args.normal,
            anomalous=args.anomalous, seed=args.seed, checkpoint=args.checkpoint,
            raw_px=args.raw_px, roi_px=args.roi_px,
            anomaly_location=args.anomaly_location,
        ).model_dump()
    if cmd == "roi":
        return RoiRequest(
            image=args.image, anchor_px=args.anchor, checkpoint=args.checkpoint,
            out=args.out, config=args.config, roi_px=args.roi_px,
        ).model_dump()
    if cmd == "featurize":
        return FeaturizeRequest(
            manifest=args.manifest, out_dir=args.out_dir, checkpoint=args.checkpoint,
            config=args.config, backend=args.backend, augment=args.augment,
        ).model_dump()
    if cmd == "select-channels":
        return SelectChannelsRequest(
            manifest=args.manifest, out=args.out, checkpoint=args.checkpoint,
            config=args.config, fraction=args.fraction, bottom=args.bottom,
        ).model_dump()
    if cmd == "fit":
        return FitRequest(
            manifest=args.manifest, mask=args.mask, out=args.out,
            checkpoint=args.checkpoint, config=args.config, epsilon=args.epsilon,
        ).model_dump()
    if cmd in ("score", "check"):
        return ScoreRequest(
            bank=args.bank, image=args.image, anchor_px=args.anchor,
            fmap=args.fmap, heatmap=args.heatmap, tau=args.tau,
        ).model_dump()
    if cmd == "eval":
        return EvalRequest(
            bank=args.bank, manifest=args.manifest, out=args.out,
            pr_csv=args.pr_csv, store_tau=args.store_tau,
        ).model_dump()
    if cmd == "dump-geometry":
        return GeometryRequest(
            checkpoint=args.checkpoint, config=args.config, bank=args.bank,
        ).model_dump()
    raise AssertionError(cmd)


def _call_remote(server: str, command: str, body: dict) -> tuple[dict, int]:
    import httpx

    url = server.rstrip("/") + "/v1/" + command
    resp = httpx.post(url, json=body, timeout=600.0)
    payload = resp.json()
    if isinstance(payload, dict) and "error" in payload:
        kind = payload["error"].get("kind", "error")
        return payload, _KIND_EXIT.get(kind, 3)
    return payload, 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service.app import app

        uvicorn.run(app, host=args.host, port=args.port)
        return 0
    body = _request(args)
    if args.server:
        payload, code = _call_remote(args.server, args.command, body)
    else:
        _, runner = _RUNNERS[args.command]
        try:
            payload, code = runner(**body), 0
        except VadkitError as exc:
            payload = {"error": {"kind": exc.kind, "message": str(exc)}}
            code = exc.exit_code
    print(json.dumps(payload, indent=2))
    if code == 0 and args.command == "check" and payload.get("anomalous"):
        code = 1
    return code


if __name__ == "__main__":
    sys.exit(main())
