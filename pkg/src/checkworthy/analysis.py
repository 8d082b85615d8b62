"""Corpus and model analyses: dependency-tag overlap and attention reports.

The overlap experiment measures how many unique dependency tags two
randomly sampled sentences share, separately for check-worthy pairs,
non-check-worthy pairs, and mixed pairs. The explanation report renders
per-token attention weights as shaded highlights next to the gold label
and the predicted score.
"""

from __future__ import annotations

import html
import json
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .corpus import Dataset, DatasetKind, DepTagSet, Sentence, Vocabulary
from .embedding import EmbeddingTable
from .encoder import EncoderConfig, encode
from .network import ModelParams, forward
from .seeds import rng_for


class AnalysisError(ValueError):
    pass


class PairGroup(str, Enum):
    CHECKWORTHY = "checkworthy"
    NON_CHECKWORTHY = "non_checkworthy"
    MIXED = "mixed"


@dataclass
class OverlapConfig:
    n: int = 10
    trials: int = 1000
    positive_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise AnalysisError("n must be >= 1")
        if self.trials < 1:
            raise AnalysisError("trials must be >= 1")


@dataclass
class OverlapResult:
    group: PairGroup
    mean_overlap: float
    std_overlap: float


def pair_overlap(s1: Sentence, s2: Sentence) -> int:
    """Number of unique dependency tag types the two sentences share."""
    return len(set(s1.dep_tags()) & set(s2.dep_tags()))


def _split_classes(dataset: Dataset, threshold: float) -> tuple[list[Sentence], list[Sentence]]:
    if dataset.kind is DatasetKind.UNLABELLED:
        raise AnalysisError("overlap experiment requires labelled data")
    if dataset.kind is DatasetKind.GOLD:
        positive = [s for s in dataset.sentences if s.label == 1.0]
        negative = [s for s in dataset.sentences if s.label != 1.0]
    else:
        positive = [s for s in dataset.sentences if s.label >= threshold]
        negative = [s for s in dataset.sentences if s.label < threshold]
    return positive, negative


def overlap_experiment(dataset: Dataset, config: OverlapConfig) -> list[OverlapResult]:
    """Mean and standard deviation of tag overlap for the three pair groups.

    Each trial draws ``n`` independent pairs (two distinct sentences from the
    group; for mixed pairs, one from each class) and contributes the mean
    overlap of its pairs; statistics are taken over trials.
    """
    positive, negative = _split_classes(dataset, config.positive_threshold)
    needed = max(2, config.n)
    if len(positive) < needed or len(negative) < needed:
        raise AnalysisError(
            f"each class needs at least {needed} sentences "
            f"(got {len(positive)} check-worthy, {len(negative)} non-check-worthy)"
        )
    results = []
    for group, pools in (
        (PairGroup.CHECKWORTHY, (positive, positive)),
        (PairGroup.NON_CHECKWORTHY, (negative, negative)),
        (PairGroup.MIXED, (positive, negative)),
    ):
        trial_means = np.empty(config.trials)
        for trial in range(config.trials):
            rng = rng_for(config.seed, group.value, trial)
            total = 0
            for _ in range(config.n):
                a_pool, b_pool = pools
                if group is PairGroup.MIXED:
                    s1 = a_pool[int(rng.integers(len(a_pool)))]
                    s2 = b_pool[int(rng.integers(len(b_pool)))]
                else:
                    i, j = rng.choice(len(a_pool), size=2, replace=False)
                    s1, s2 = a_pool[int(i)], a_pool[int(j)]
                total += pair_overlap(s1, s2)
            trial_means[trial] = total / config.n
        std = float(trial_means.std(ddof=1)) if config.trials > 1 else 0.0
        results.append(
            OverlapResult(
                group=group,
                mean_overlap=float(trial_means.mean()),
                std_overlap=std,
            )
        )
    return results


# --- Attention explanations ---------------------------------------------------

@dataclass
class Explanation:
    sentence_id: str
    score: float
    label: float | None
    tokens: list[tuple[str, float]]


def explain(
    sentence: Sentence,
    params: ModelParams,
    vocab: Vocabulary | None,
    table: EmbeddingTable | None,
    tags: DepTagSet | None,
    config: EncoderConfig,
) -> Explanation:
    """Score one sentence and align its attention weights to surface forms."""
    encoded = encode(sentence, vocab, table, tags, config)
    pred = forward(encoded, params, table)
    return Explanation(
        sentence_id=sentence.id,
        score=pred.score,
        label=sentence.label,
        tokens=[(t.text, float(a)) for t, a in zip(sentence.tokens, pred.attention)],
    )


def shade_bucket(alpha: float, max_alpha: float, buckets: int = 8) -> int:
    """Bucket index in [0, buckets-1]; the maximal weight gets the deepest."""
    if max_alpha <= 0.0:
        return 0
    return min(buckets - 1, int(alpha / max_alpha * buckets))


_ANSI_RAMP = (255, 224, 223, 217, 216, 210, 203, 196)

_HTML_HEADER = """<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>Attention report</title>
<style>
body { font-family: sans-serif; margin: 2em; }
table { border-collapse: collapse; }
td, th { padding: 6px 10px; border-bottom: 1px solid #ccc; vertical-align: top; }
span.tok { padding: 1px 2px; border-radius: 2px; }
</style></head><body>
<table>
<tr><th>Y</th><th>&Ytilde;</th><th>Sentence</th></tr>
"""


def render_report(explanations: Sequence[Explanation], format: str = "html") -> str:
    """Render explanations as html, ansi, or json.

    Highlight intensity is the attention weight normalized by the sentence
    maximum; the json form carries the raw values and round-trips exactly.
    """
    if not explanations:
        raise AnalysisError("no explanations to render")
    if format == "json":
        payload = [
            {
                "id": e.sentence_id,
                "score": e.score,
                "label": e.label,
                "tokens": [{"text": t, "alpha": a} for t, a in e.tokens],
            }
            for e in explanations
        ]
        return json.dumps(payload, ensure_ascii=False, indent=2)
    if format == "html":
        parts = [_HTML_HEADER]
        for e in explanations:
            max_alpha = max(a for _, a in e.tokens)
            spans = []
            for text, alpha in e.tokens:
                intensity = alpha / max_alpha if max_alpha > 0 else 0.0
                spans.append(
                    f'<span class="tok" style="background: rgba(255,59,48,{intensity:.4f})">'
                    f"{html.escape(text)}</span>"
                )
            label = "-" if e.label is None else f"{e.label:g}"
            parts.append(
                f"<tr><td>{label}</td><td>{e.score:.2f}</td><td>{' '.join(spans)}</td></tr>\n"
            )
        parts.append("</table></body></html>\n")
        return "".join(parts)
    if format == "ansi":
        lines = []
        for e in explanations:
            max_alpha = max(a for _, a in e.tokens)
            chunks = []
            for text, alpha in e.tokens:
                code = _ANSI_RAMP[shade_bucket(alpha, max_alpha)]
                chunks.append(f"\x1b[48;5;{code}m{text}\x1b[0m")
            label = "-" if e.label is None else f"{e.label:g}"
            lines.append(f"Y={label} Y~={e.score:.2f}  " + " ".join(chunks))
        return "\n".join(lines) + "\n"
    raise AnalysisError(f"unknown report format {format!r}")
