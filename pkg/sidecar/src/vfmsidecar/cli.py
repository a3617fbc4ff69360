"""Command line entry point: load the model, then serve."""

from __future__ import annotations

import argparse
import sys

from .errors import ModelLoadError
from .model import load_model
from .service import DEFAULT_MAX_FRAMES, create_app


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vfm-sidecar",
        description="promptable segmentation model behind the wire protocol",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--model", default="flood", help="model registry name")
    parser.add_argument(
        "--tolerance", type=float, default=None,
        help="flood model color tolerance",
    )
    parser.add_argument(
        "--max-frames", type=int, default=DEFAULT_MAX_FRAMES,
        help="maximum frames accepted per session",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    options = {}
    if args.tolerance is not None:
        options["tolerance"] = args.tolerance
    try:
        model = load_model(args.model, **options)
        app = create_app(model, max_frames_per_session=args.max_frames)
    except ModelLoadError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
