"""Command line: transcripts in, ranking-ready JSONL out.

    preprocess --in transcripts/ --labels labels.tsv --out corpus.jsonl

The parser backend and version come from the lock file next to the
package (or --lock); the manifest sidecar records both plus the tag
inventory actually used.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from .backends import LockError, ParserUnavailable, backend_from_lock
from .pipeline import PipelineError, process_directory, read_label_file

DEFAULT_LOCK = Path(__file__).resolve().parents[2] / "parser.lock"


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="preprocess",
        description="Segment, tokenize, and dependency-tag raw transcripts",
    )
    parser.add_argument("--in", dest="transcripts", required=True,
                        help="directory of *.txt transcript files")
    parser.add_argument("--labels", help="TSV: speech_id<TAB>sentence_index<TAB>label "
                                         "(or sentence_id<TAB>label)")
    parser.add_argument("--out", required=True, help="output JSONL path")
    parser.add_argument("--lock", default=str(DEFAULT_LOCK),
                        help="parser lock file (default: the package's parser.lock)")
    parser.add_argument("--max-unmatched", type=int, default=0,
                        help="tolerated number of sentences without labels")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        backend = backend_from_lock(args.lock)
        labels = read_label_file(args.labels) if args.labels else None
        lines, report = process_directory(
            args.transcripts, backend, labels, max_unmatched=args.max_unmatched
        )
        out = Path(args.out)
        tmp = out.with_name(f"{out.name}.tmp-{os.getpid()}")
        tmp.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
        os.replace(tmp, out)
        manifest = {
            "command": "preprocess",
            "parser": backend.identifier(),
            "tag_inventory": list(backend.tag_inventory()),
            "inputs": {
                str(p): _sha256_file(p)
                for p in sorted(Path(args.transcripts).glob("*.txt"))
            },
            "labels_file": args.labels,
            "sentences": len(lines),
            "labelled": report.matched,
            "unmatched_label_keys": report.unmatched_keys,
            "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        manifest_path = Path(str(out) + ".manifest.json")
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                 encoding="utf-8")
        if report.unmatched_keys:
            print(f"warning: {len(report.unmatched_keys)} label keys matched no sentence",
                  file=sys.stderr)
        print(f"wrote {len(lines)} sentences -> {out} ({backend.identifier()})")
        return 0
    except (PipelineError, LockError, ParserUnavailable, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
