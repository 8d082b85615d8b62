"""Weak-supervision machinery: threshold transforms and pretraining.

A weakly labelled corpus carries continuous scores from an existing
check-worthiness system. Per fold, the threshold tau is chosen so the
fraction of check-worthy samples matches the gold training data, the weak
labels are transformed (hard binarization or soft truncate-and-scale), the
network is pretrained on the weak data, and then fine-tuned on gold.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .corpus import Dataset, DatasetKind, FoldPlan, Sentence
from .encoder import EncodedSentence
from .network import TrainConfig, TrainExample, TrainResult, train
from .evaluation import METRIC_NAMES, EvalReport, run_protocol
from .seeds import derive_seed, rng_for


class WeakSupError(ValueError):
    pass


class ThresholdMode(str, Enum):
    BINARIZE = "binarize"
    TRUNCATE_SCALE = "truncate_scale"


@dataclass
class ThresholdConfig:
    tau: float
    mode: ThresholdMode = ThresholdMode.TRUNCATE_SCALE

    def __post_init__(self) -> None:
        if not (0.0 < self.tau < 1.0):
            raise WeakSupError(f"tau {self.tau} out of (0, 1)")


@dataclass
class SweepConfig:
    fractions: list[float] = field(
        default_factory=lambda: [round(0.1 * i, 1) for i in range(11)]
    )
    resamples: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if any(not (0.0 <= f <= 1.0) for f in self.fractions):
            raise WeakSupError("fractions must lie in [0, 1]")
        if self.fractions != sorted(self.fractions):
            raise WeakSupError("fractions must be sorted ascending")
        if self.resamples < 1:
            raise WeakSupError("resamples must be >= 1")


class TauResult(NamedTuple):
    tau: float
    fraction: float
    error: float


def find_tau(weak_labels: Sequence[float], target_fraction: float) -> TauResult:
    """Smallest label value whose >=-fraction is closest to the target.

    Exact closeness ties prefer the larger achieved fraction (the smaller
    tau). The achieved fraction and its distance to the target are reported
    alongside.
    """
    if len(weak_labels) == 0:
        raise WeakSupError("empty weak label list")
    if not (0.0 < target_fraction <= 1.0):
        raise WeakSupError(f"target fraction {target_fraction} out of (0, 1]")
    labels = np.asarray(weak_labels, dtype=np.float64)
    if labels.min() < 0.0 or labels.max() > 1.0:
        raise WeakSupError("weak labels must lie in [0, 1]")
    n = len(labels)
    best: TauResult | None = None
    for value in np.unique(labels):
        fraction = float((labels >= value).sum()) / n
        error = abs(fraction - target_fraction)
        if (
            best is None
            or error < best.error
            or (error == best.error and fraction > best.fraction)
        ):
            best = TauResult(tau=float(value), fraction=fraction, error=error)
    return best


def binarize(labels: Sequence[float], tau: float) -> list[float]:
    """Hard thresholding: 1 when the label reaches tau, else 0."""
    return [1.0 if l >= tau else 0.0 for l in labels]


def truncate_scale(labels: Sequence[float], tau: float) -> list[float]:
    """Soft thresholding: truncate at tau, then rescale [0, tau] to [0, 1]."""
    if not (0.0 < tau < 1.0):
        raise WeakSupError(f"tau {tau} out of (0, 1)")
    return [min(l, tau) / tau for l in labels]


def transform_labels(labels: Sequence[float], threshold: ThresholdConfig) -> list[float]:
    if threshold.mode is ThresholdMode.BINARIZE:
        return binarize(labels, threshold.tau)
    return truncate_scale(labels, threshold.tau)


# --- Pretrain then fine-tune --------------------------------------------------

EncodeFn = Callable[[Sentence], EncodedSentence]


def weak_examples(
    weak: Dataset, threshold: ThresholdConfig, encode_fn: EncodeFn
) -> list[TrainExample]:
    """Encoded weak sentences with transformed targets.

    Ranking relevance (used only for validation MAP during pretraining) is
    defined by the same tau cut: original label >= tau.
    """
    labels = [s.label for s in weak.sentences]
    targets = transform_labels(labels, threshold)
    return [
        TrainExample(
            encoded=encode_fn(s),
            target=t,
            relevant=s.label >= threshold.tau,
            group=s.speech_id,
            sentence_id=s.id,
        )
        for s, t in zip(weak.sentences, targets)
    ]


def pretrain_finetune(
    weak: Dataset | None,
    gold_train: Sequence[TrainExample],
    gold_valid: Sequence[TrainExample],
    threshold: ThresholdConfig | None,
    pretrain_config: TrainConfig,
    finetune_config: TrainConfig,
    encode_fn: EncodeFn,
    table=None,
    trainable_embeddings: bool = True,
    pretrain_valid_fraction: float = 0.1,
) -> TrainResult:
    """Pretrain on thresholded weak data, then fine-tune on gold.

    An empty weak dataset reduces to plain gold training. The pretraining
    validation split is drawn from the weak data with the pretrain seed.
    """
    if weak is None or len(weak.sentences) == 0:
        return train(
            gold_train, gold_valid, finetune_config,
            table=table, trainable_embeddings=trainable_embeddings,
        )
    if weak.kind is not DatasetKind.WEAK:
        raise WeakSupError("pretraining data must be a weak dataset")
    if threshold is None:
        raise WeakSupError("thresholding config required when weak data is present")
    examples = weak_examples(weak, threshold, encode_fn)
    rng = rng_for(pretrain_config.seed, "pretrain-validation")
    n_valid = min(max(1, int(round(pretrain_valid_fraction * len(examples)))),
                  len(examples) - 1) if len(examples) > 1 else 0
    if n_valid == 0:
        raise WeakSupError("weak dataset too small to hold out a validation slice")
    valid_pos = set(rng.choice(len(examples), size=n_valid, replace=False).tolist())
    weak_train = [e for i, e in enumerate(examples) if i not in valid_pos]
    weak_valid = [e for i, e in enumerate(examples) if i in valid_pos]
    pretrained = train(
        weak_train, weak_valid, pretrain_config,
        table=table, trainable_embeddings=trainable_embeddings,
    )
    return train(
        gold_train, gold_valid, finetune_config,
        init=pretrained.params, table=table, trainable_embeddings=trainable_embeddings,
    )


def gold_examples(sentences: Sequence[Sentence], encode_fn: EncodeFn) -> list[TrainExample]:
    return [
        TrainExample(
            encoded=encode_fn(s),
            target=float(s.label),
            relevant=s.label == 1.0,
            group=s.speech_id,
            sentence_id=s.id,
        )
        for s in sentences
    ]


def standard_pipeline(
    encode_fn_factory: Callable[[], tuple[EncodeFn, object]],
    train_config: TrainConfig,
    weak: Dataset | None = None,
    mode: ThresholdMode = ThresholdMode.TRUNCATE_SCALE,
    pretrain_config: TrainConfig | None = None,
    trainable_embeddings: bool = True,
):
    """Build the per-fold pipeline used by the evaluation protocol.

    ``encode_fn_factory`` returns a fresh (encode_fn, table) pair per fold so
    fine-tuned embeddings never leak across folds. Per fold, tau is chosen to
    match the gold training data's check-worthy fraction; folds whose training
    portion has no positives skip pretraining.
    """
    from .network import forward  # local import to keep module load light

    def pipeline(fold_index, repetition, train_s, valid_s, test_s):
        encode_fn, table = encode_fn_factory()
        gold_train = gold_examples(train_s, encode_fn)
        gold_valid = gold_examples(valid_s, encode_fn)
        fold_seed = derive_seed(train_config.seed, "fold", fold_index, repetition)
        finetune = _reseeded(train_config, derive_seed(fold_seed, "finetune"))
        threshold = None
        weak_here = weak
        if weak is not None and len(weak.sentences) > 0:
            positive_fraction = float(np.mean([s.label == 1.0 for s in train_s]))
            if positive_fraction <= 0.0:
                weak_here = None
            else:
                tau = find_tau([s.label for s in weak.sentences], positive_fraction).tau
                tau = min(max(tau, 1e-9), 1.0 - 1e-9)
                threshold = ThresholdConfig(tau=tau, mode=mode)
        pre_cfg = _reseeded(pretrain_config or train_config, derive_seed(fold_seed, "pretrain"))
        result = pretrain_finetune(
            weak_here, gold_train, gold_valid, threshold,
            pre_cfg, finetune, encode_fn,
            table=table, trainable_embeddings=trainable_embeddings,
        )
        use_table = table if trainable_embeddings else None
        scores = {}
        for s in test_s:
            pred = forward(encode_fn(s), result.params, use_table)
            scores[s.id] = pred.score
        return scores

    return pipeline


def _reseeded(config: TrainConfig, seed: int) -> TrainConfig:
    from dataclasses import replace

    return replace(config, seed=seed)


# --- Weak-data fraction sweep ---------------------------------------------------

@dataclass
class SweepRow:
    fraction: float
    resample: int
    metrics: dict[str, float]


@dataclass
class SweepResult:
    rows: list[SweepRow]
    fraction_means: dict[float, dict[str, float]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["fraction", "repetition", *METRIC_NAMES])
        for row in self.rows:
            writer.writerow(
                [f"{row.fraction:.2f}", row.resample]
                + [f"{row.metrics[m]:.6f}" for m in METRIC_NAMES]
            )
        return buf.getvalue()


def weak_fraction_sweep(
    weak: Dataset,
    gold: Dataset,
    plan: FoldPlan,
    sweep: SweepConfig,
    pipeline_factory: Callable[[Dataset | None], object],
) -> SweepResult:
    """Run the full protocol on random weak-data subsets of growing size.

    ``pipeline_factory(weak_subset)`` builds the protocol pipeline for one
    subset (``None`` for the empty subset). Each (fraction, resample) cell
    draws its subset from a generator derived from (seed, fraction, index).
    """
    rows: list[SweepRow] = []
    n = len(weak.sentences)
    for fraction in sweep.fractions:
        for resample in range(sweep.resamples):
            if fraction == 0.0:
                subset = None
            else:
                rng = rng_for(sweep.seed, "subset", f"{fraction:.6f}", resample)
                size = int(round(fraction * n))
                if size == 0:
                    subset = None
                else:
                    picked = sorted(rng.choice(n, size=size, replace=False).tolist())
                    subset = Dataset(
                        sentences=[weak.sentences[i] for i in picked],
                        kind=DatasetKind.WEAK,
                    )
            report: EvalReport = run_protocol(gold, plan, pipeline_factory(subset))
            rows.append(
                SweepRow(fraction=fraction, resample=resample, metrics=dict(report.grand_means))
            )
    fraction_means = {
        fraction: {
            m: float(np.mean([r.metrics[m] for r in rows if r.fraction == fraction]))
            for m in METRIC_NAMES
        }
        for fraction in sweep.fractions
    }
    return SweepResult(rows=rows, fraction_means=fraction_means)
