"""Document-to-JSONL conversion and label alignment.

Emits the exact wire format the ranking package ingests, one JSON object
per line with the fixed key order id, speech_id, speaker, label, tokens
(json.dumps defaults, UTF-8, LF). Sentence ids are "<speech_id>-<index>"
with a four-digit zero-padded index in segmentation order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class PipelineError(ValueError):
    pass


@dataclass
class RawDocument:
    speech_id: str
    text: str
    speaker: str | None = None
    labels: list[float] | None = None

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise PipelineError(f"document {self.speech_id!r} has empty text")


def sentence_id(speech_id: str, index: int) -> str:
    return f"{speech_id}-{index:04d}"


def parse_document(doc: RawDocument, backend) -> list[str]:
    """One canonical JSONL line per parsed sentence.

    Per-sentence labels, when supplied, are aligned by sentence index and
    must cover every sentence the parser produces.
    """
    parsed = backend.parse(doc.text)
    if not parsed:
        raise PipelineError(f"document {doc.speech_id!r} produced no sentences")
    if doc.labels is not None and len(doc.labels) < len(parsed):
        raise PipelineError(
            f"document {doc.speech_id!r}: {len(doc.labels)} labels for "
            f"{len(parsed)} sentences"
        )
    lines = []
    for index, tokens in enumerate(parsed):
        label = doc.labels[index] if doc.labels is not None else None
        obj = {
            "id": sentence_id(doc.speech_id, index),
            "speech_id": doc.speech_id,
            "speaker": doc.speaker,
            "label": label,
            "tokens": [{"text": t.text, "dep": t.dep} for t in tokens],
        }
        lines.append(json.dumps(obj, ensure_ascii=False))
    return lines


# --- label alignment -------------------------------------------------------

def read_label_file(path: str | Path) -> dict[str, float]:
    """TSV labels keyed by sentence id, or by (speech_id, sentence_index).

    Two columns: sentence_id <tab> label. Three columns: speech_id <tab>
    sentence_index <tab> label (converted to the canonical sentence id).
    Duplicate keys are errors.
    """
    labels: dict[str, float] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) == 2:
            key = parts[0]
            value = parts[1]
        elif len(parts) == 3:
            try:
                key = sentence_id(parts[0], int(parts[1]))
            except ValueError:
                raise PipelineError(
                    f"{path}:{lineno}: sentence index {parts[1]!r} is not an integer"
                ) from None
            value = parts[2]
        else:
            raise PipelineError(f"{path}:{lineno}: expected 2 or 3 tab-separated columns")
        try:
            label = float(value)
        except ValueError:
            raise PipelineError(f"{path}:{lineno}: label {value!r} is not a number") from None
        if not (0.0 <= label <= 1.0):
            raise PipelineError(f"{path}:{lineno}: label {label} out of [0, 1]")
        if key in labels:
            raise PipelineError(f"{path}:{lineno}: duplicate label key {key!r}")
        labels[key] = label
    return labels


@dataclass
class AlignmentReport:
    matched: int = 0
    unmatched_sentences: list[str] = field(default_factory=list)
    unmatched_keys: list[str] = field(default_factory=list)


def align_labels(
    lines: list[str],
    labels: dict[str, float],
    max_unmatched: int = 0,
) -> tuple[list[str], AlignmentReport]:
    """Attach labels to parsed lines by sentence id.

    Sentences without a label keep null (fine for unlabelled output);
    more than ``max_unmatched`` of them is an error. Unmatched label keys
    are reported back to the caller.
    """
    report = AlignmentReport()
    seen: set[str] = set()
    out = []
    for line in lines:
        obj = json.loads(line)
        sid = obj["id"]
        seen.add(sid)
        if sid in labels:
            obj["label"] = labels[sid]
            report.matched += 1
        else:
            report.unmatched_sentences.append(sid)
        out.append(json.dumps(obj, ensure_ascii=False))
    report.unmatched_keys = sorted(set(labels) - seen)
    if len(report.unmatched_sentences) > max_unmatched:
        raise PipelineError(
            f"{len(report.unmatched_sentences)} sentences have no label "
            f"(over the limit of {max_unmatched}): "
            f"{', '.join(report.unmatched_sentences[:5])}"
        )
    return out, report


# --- document loading ---------------------------------------------------------

def load_transcript(path: str | Path) -> RawDocument:
    """A transcript file: speech id from the stem, optional speaker header.

    A first line of the form "speaker: NAME" names the speaker; everything
    else is the document text.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    speaker = None
    lines = text.splitlines()
    if lines and lines[0].lower().startswith("speaker:"):
        speaker = lines[0].split(":", 1)[1].strip() or None
        text = "\n".join(lines[1:])
    return RawDocument(speech_id=path.stem, text=text, speaker=speaker)


def process_directory(
    transcripts_dir: str | Path,
    backend,
    labels: dict[str, float] | None = None,
    max_unmatched: int = 0,
) -> tuple[list[str], AlignmentReport]:
    """Parse every *.txt transcript in name order and concatenate the lines."""
    paths = sorted(Path(transcripts_dir).glob("*.txt"))
    if not paths:
        raise PipelineError(f"no *.txt transcripts under {transcripts_dir}")
    lines: list[str] = []
    for path in paths:
        lines.extend(parse_document(load_transcript(path), backend))
    if labels is None:
        return lines, AlignmentReport(unmatched_sentences=[], unmatched_keys=[])
    return align_labels(lines, labels, max_unmatched=max_unmatched)
