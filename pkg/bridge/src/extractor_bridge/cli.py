"""Console entry points: semb-extract and semb-verify."""

from __future__ import annotations

import argparse
import logging
import sys

from .extract import extract
from .manifest import MODEL_NAMES, ManifestError, read_manifest_tsv
from .models import MissingCheckpointError
from .sembfile import verify_semb


def extract_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="semb-extract",
        description="Embed a manifest of audio files with a pretrained model "
        "and write an SEMB v1 store",
    )
    parser.add_argument("--model", required=True, choices=MODEL_NAMES)
    parser.add_argument("--manifest", required=True, help="TSV of `id <TAB> audio_path`")
    parser.add_argument("--out", required=True)
    parser.add_argument("--checkpoint", default=None, help="local pretrained weights")
    parser.add_argument("--device", default="cpu")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        manifest = read_manifest_tsv(args.manifest, args.model, args.out)
        result = extract(manifest, checkpoint=args.checkpoint, device=args.device)
    except ManifestError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (MissingCheckpointError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {result.written} embeddings (dim {result.dim}) to {result.out_path}")
    if result.skipped:
        print(f"skipped {len(result.skipped)} undecodable file(s)")
    return 0


def verify_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="semb-verify", description="Check a file against the SEMB v1 format"
    )
    parser.add_argument("paths", nargs="+")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    worst = 0
    for path in args.paths:
        try:
            report = verify_semb(path)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            worst = max(worst, 1)
            continue
        print(report.summary())
        if not report.ok:
            worst = max(worst, 1)
    return worst


def extract_entry() -> None:
    sys.exit(extract_main())


def verify_entry() -> None:
    sys.exit(verify_main())
