"""Command line for the export toolchain.

Exit codes: 0 success, 2 partial failure (some images failed to export),
3 adapter error (bad checkpoint, self-test mismatch), 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import AdapterError
from .export import ExportJob, export_bundles, export_decoder_graph
from .model import (
    BOUNDARY_CONVENTIONS,
    CENTER_CONVENTIONS,
    ModelConfig,
    make_checkpoint,
)

EXIT_OK = 0
EXIT_PARTIAL = 2
EXIT_ERROR = 3
EXIT_USAGE = 64

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage failures exit with code 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _exit_code(exc: SystemExit) -> int:
    if isinstance(exc.code, int):
        return exc.code
    return EXIT_OK if exc.code is None else EXIT_USAGE


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return _exit_code(exc)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, parser)
    except SystemExit as exc:
        return _exit_code(exc)
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def _build_parser() -> _Parser:
    parser = _Parser(prog="promptseg-adapter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-checkpoint", help="write a seeded random demo checkpoint")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--input-size", type=int, default=64)
    p.add_argument("--embed-size", type=int, default=16)
    p.add_argument("--mask-planes", type=int, default=3)
    p.add_argument("--center-convention", choices=CENTER_CONVENTIONS,
                   default="zero_at_center")
    p.add_argument("--boundary-convention", choices=BOUNDARY_CONVENTIONS,
                   default="zero_at_boundary")
    p.set_defaults(func=cmd_make_checkpoint)

    p = sub.add_parser("export-bundles",
                       help="export prediction bundles and a manifest for a folder of images")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--images", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--tile-size", type=int, default=None)
    p.add_argument("--halo", type=int, default=8)
    p.add_argument("--device", default="cpu")
    p.add_argument("--name", default="export")
    p.add_argument("--modality", default="unknown")
    p.set_defaults(func=cmd_export_bundles)

    p = sub.add_parser("export-decoder",
                       help="serialize the prompt decoder as an inference graph")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_export_decoder)
    return parser


def cmd_make_checkpoint(args, parser) -> int:
    try:
        config = ModelConfig(
            embed_dim=args.embed_dim,
            input_size=args.input_size,
            embed_size=args.embed_size,
            num_mask_planes=args.mask_planes,
        )
    except ValueError as exc:
        parser.error(str(exc))
    conventions = {
        "center_dist": args.center_convention,
        "boundary_dist": args.boundary_convention,
    }
    args.out.parent.mkdir(parents=True, exist_ok=True)
    make_checkpoint(args.out, seed=args.seed, config=config, conventions=conventions)
    print(f"wrote checkpoint to {args.out}")
    return EXIT_OK


def cmd_export_bundles(args, parser) -> int:
    try:
        job = ExportJob(
            checkpoint=args.checkpoint,
            images=args.images,
            out=args.out,
            tile_size=args.tile_size,
            halo=args.halo,
            device=args.device,
            name=args.name,
            modality=args.modality,
        )
    except ValueError as exc:
        parser.error(str(exc))
    manifest_path = export_bundles(job)
    manifest = json.loads(manifest_path.read_text())
    failures = manifest["export"]["failures"]
    print(f"exported {len(manifest['items'])} bundle(s) to {args.out}")
    if failures:
        print(f"{len(failures)} image(s) failed: {', '.join(sorted(failures))}",
              file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_export_decoder(args, parser) -> int:
    path = export_decoder_graph(args.checkpoint, args.out)
    print(f"wrote decoder graph to {path}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
