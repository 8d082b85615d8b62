"""Data model, JSONL ingestion, vocabularies, and by-speech fold planning.

Sentences arrive pre-tokenized and pre-parsed: every token carries its
surface form and its syntactic dependency tag. The JSONL wire format
(one object per line) is the contract with the preprocessing pipeline:

    {"id": str, "speech_id": str, "speaker": str|null, "label": float|null,
     "tokens": [{"text": str, "dep": str}, ...]}

Labels are null only for unlabelled datasets; gold datasets carry binary
labels and weak datasets continuous labels in [0, 1].
"""

from __future__ import annotations

import json
import hashlib
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .seeds import rng_for

UNK_WORD = "<unk>"
UNK_DEP = "<unk-dep>"


class CorpusError(ValueError):
    """Raised for malformed corpus files or inconsistent datasets."""


class DatasetKind(str, Enum):
    GOLD = "gold"
    WEAK = "weak"
    UNLABELLED = "unlabelled"


@dataclass(frozen=True)
class Token:
    """A word with its syntactic dependency tag.

    ``norm`` is the lowercased form used for vocabulary lookup; the surface
    form is kept for display and reports.
    """

    text: str
    dep: str
    norm: str = ""

    def __post_init__(self) -> None:
        if not self.text:
            raise CorpusError("token text must be non-empty")
        if not self.dep:
            raise CorpusError("token dependency tag must be non-empty")
        if not self.norm:
            object.__setattr__(self, "norm", self.text.lower())
        elif self.norm != self.text.lower():
            raise CorpusError(f"norm {self.norm!r} is not lowercase of {self.text!r}")


@dataclass
class Sentence:
    """A token sequence with its label and grouping metadata.

    The label is a real in [0, 1]: binary for gold data, continuous for
    weakly labelled data, and ``None`` for unlabelled corpora.
    """

    id: str
    speech_id: str
    tokens: list[Token]
    label: float | None = None
    speaker: str | None = None

    def __post_init__(self) -> None:
        if not self.tokens:
            raise CorpusError(f"sentence {self.id!r} has no tokens")
        if self.label is not None and not (0.0 <= self.label <= 1.0):
            raise CorpusError(f"sentence {self.id!r} label {self.label} out of [0, 1]")

    def norms(self) -> list[str]:
        return [t.norm for t in self.tokens]

    def dep_tags(self) -> list[str]:
        return [t.dep for t in self.tokens]


@dataclass
class Dataset:
    sentences: list[Sentence]
    kind: DatasetKind

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for s in self.sentences:
            if s.id in seen:
                raise CorpusError(f"duplicate sentence id {s.id!r}")
            seen.add(s.id)
            _check_label_for_kind(s.label, self.kind, where=f"sentence {s.id!r}")

    def __len__(self) -> int:
        return len(self.sentences)

    def speech_ids(self) -> list[str]:
        """Distinct speech ids in first-appearance order."""
        out: list[str] = []
        seen: set[str] = set()
        for s in self.sentences:
            if s.speech_id not in seen:
                seen.add(s.speech_id)
                out.append(s.speech_id)
        return out

    def by_speech(self) -> dict[str, list[Sentence]]:
        groups: dict[str, list[Sentence]] = {}
        for s in self.sentences:
            groups.setdefault(s.speech_id, []).append(s)
        return groups


def _check_label_for_kind(label: float | None, kind: DatasetKind, where: str) -> None:
    if kind is DatasetKind.UNLABELLED:
        if label is not None:
            raise CorpusError(f"{where}: unlabelled dataset carries label {label}")
        return
    if label is None:
        raise CorpusError(f"{where}: {kind.value} dataset requires a label")
    if kind is DatasetKind.GOLD and label not in (0.0, 1.0):
        raise CorpusError(f"{where}: gold dataset requires binary label, got {label}")


# --- JSONL serialization ------------------------------------------------

def _sentence_from_obj(obj: dict, where: str) -> Sentence:
    if not isinstance(obj, dict):
        raise CorpusError(f"{where}: expected a JSON object")
    try:
        sid = obj["id"]
        speech_id = obj["speech_id"]
        speaker = obj.get("speaker")
        label = obj.get("label")
        raw_tokens = obj["tokens"]
    except KeyError as exc:
        raise CorpusError(f"{where}: missing field {exc.args[0]!r}") from None
    if not isinstance(sid, str) or not isinstance(speech_id, str):
        raise CorpusError(f"{where}: id and speech_id must be strings")
    if speaker is not None and not isinstance(speaker, str):
        raise CorpusError(f"{where}: speaker must be a string or null")
    if label is not None:
        if isinstance(label, bool) or not isinstance(label, (int, float)):
            raise CorpusError(f"{where}: label must be a number or null")
        label = float(label)
    if not isinstance(raw_tokens, list) or not raw_tokens:
        raise CorpusError(f"{where}: tokens must be a non-empty list")
    tokens = []
    for i, t in enumerate(raw_tokens):
        if not isinstance(t, dict) or "text" not in t or "dep" not in t:
            raise CorpusError(f"{where}: token {i} must have 'text' and 'dep'")
        if not isinstance(t["text"], str) or not isinstance(t["dep"], str):
            raise CorpusError(f"{where}: token {i} fields must be strings")
        try:
            tokens.append(Token(text=t["text"], dep=t["dep"]))
        except CorpusError as exc:
            raise CorpusError(f"{where}: token {i}: {exc}") from None
    try:
        return Sentence(id=sid, speech_id=speech_id, tokens=tokens, label=label, speaker=speaker)
    except CorpusError as exc:
        raise CorpusError(f"{where}: {exc}") from None


def sentence_to_obj(sentence: Sentence) -> dict:
    return {
        "id": sentence.id,
        "speech_id": sentence.speech_id,
        "speaker": sentence.speaker,
        "label": sentence.label,
        "tokens": [{"text": t.text, "dep": t.dep} for t in sentence.tokens],
    }


def load_jsonl(path: str | Path, kind: DatasetKind | str) -> Dataset:
    """Load a JSONL sentence file, validating labels against the dataset kind.

    Errors name the offending line number.
    """
    kind = DatasetKind(kind)
    path = Path(path)
    sentences: list[Sentence] = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            where = f"{path.name}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: malformed JSON ({exc.msg})") from None
            sentence = _sentence_from_obj(obj, where)
            if sentence.id in seen_ids:
                raise CorpusError(f"{where}: duplicate sentence id {sentence.id!r}")
            seen_ids.add(sentence.id)
            _check_label_for_kind(sentence.label, kind, where)
            sentences.append(sentence)
    if not sentences:
        raise CorpusError(f"{path}: empty dataset")
    return Dataset(sentences=sentences, kind=kind)


def save_jsonl(dataset: Dataset, path: str | Path) -> None:
    """Write the canonical JSONL form (UTF-8, LF, fixed key order)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for s in dataset.sentences:
            fh.write(json.dumps(sentence_to_obj(s), ensure_ascii=False))
            fh.write("\n")


# --- Vocabulary and dependency tag set ----------------------------------

@dataclass
class Vocabulary:
    """Maps lowercased word forms to contiguous indices; index 0 is UNK."""

    word_to_index: dict[str, int]
    min_count: int

    @property
    def unk_index(self) -> int:
        return self.word_to_index[UNK_WORD]

    def __len__(self) -> int:
        return len(self.word_to_index)

    def __contains__(self, word: str) -> bool:
        return word in self.word_to_index

    def index(self, word: str) -> int:
        return self.word_to_index.get(word, self.unk_index)

    def words(self) -> list[str]:
        """Words ordered by index."""
        out = [""] * len(self.word_to_index)
        for w, i in self.word_to_index.items():
            out[i] = w
        return out

    def content_hash(self) -> str:
        payload = json.dumps(self.words(), ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def build_vocabulary(datasets: Sequence[Dataset], min_count: int = 1) -> Vocabulary:
    """Vocabulary over norm forms with frequency >= min_count.

    Indices are deterministic: UNK first, then descending frequency with
    lexicographic tie-break.
    """
    if not datasets:
        raise CorpusError("at least one dataset is required")
    if min_count < 1:
        raise CorpusError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for ds in datasets:
        for s in ds.sentences:
            counts.update(s.norms())
    kept = [(w, c) for w, c in counts.items() if c >= min_count]
    if not kept:
        raise CorpusError(f"no word occurs at least {min_count} times")
    kept.sort(key=lambda wc: (-wc[1], wc[0]))
    word_to_index = {UNK_WORD: 0}
    for w, _ in kept:
        word_to_index[w] = len(word_to_index)
    return Vocabulary(word_to_index=word_to_index, min_count=min_count)


@dataclass
class DepTagSet:
    """Closed set of dependency tags; unseen tags map to the UNK tag."""

    tag_to_index: dict[str, int]

    @property
    def unk_index(self) -> int:
        return self.tag_to_index[UNK_DEP]

    def __len__(self) -> int:
        return len(self.tag_to_index)

    def index(self, tag: str) -> int:
        return self.tag_to_index.get(tag, self.unk_index)

    def tags(self) -> list[str]:
        out = [""] * len(self.tag_to_index)
        for t, i in self.tag_to_index.items():
            out[i] = t
        return out

    def content_hash(self) -> str:
        payload = json.dumps(self.tags(), ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def build_dep_tags(datasets: Sequence[Dataset]) -> DepTagSet:
    """Dependency tag set over all datasets; same index rule as the vocabulary."""
    if not datasets:
        raise CorpusError("at least one dataset is required")
    counts: Counter[str] = Counter()
    for ds in datasets:
        for s in ds.sentences:
            counts.update(s.dep_tags())
    ordered = sorted(counts.items(), key=lambda tc: (-tc[1], tc[0]))
    tag_to_index = {UNK_DEP: 0}
    for t, _ in ordered:
        tag_to_index[t] = len(tag_to_index)
    return DepTagSet(tag_to_index=tag_to_index)


# --- Fold planning --------------------------------------------------------

@dataclass(frozen=True)
class Fold:
    test_speech_ids: tuple[str, ...]
    train_speech_ids: tuple[str, ...]


@dataclass
class FoldPlan:
    """Leave-one-speech-out cross-validation plan.

    Validation sentences are drawn per repetition from the fold's training
    portion with a generator derived from (seed, fold index, repetition).
    """

    folds: list[Fold]
    validation_fraction: float
    repetitions: int
    seed: int

    def __post_init__(self) -> None:
        if not (0.0 < self.validation_fraction < 1.0):
            raise CorpusError("validation_fraction must be in (0, 1)")
        if self.repetitions < 1:
            raise CorpusError("repetitions must be >= 1")

    def split(
        self, dataset: Dataset, fold_index: int, repetition: int
    ) -> tuple[list[Sentence], list[Sentence], list[Sentence]]:
        """(train, validation, test) sentences for one fold and repetition."""
        fold = self.folds[fold_index]
        test_ids = set(fold.test_speech_ids)
        train_pool = [s for s in dataset.sentences if s.speech_id not in test_ids]
        test = [s for s in dataset.sentences if s.speech_id in test_ids]
        if len(train_pool) < 2:
            raise CorpusError(
                f"fold {fold_index} leaves {len(train_pool)} training sentences; "
                "cannot hold out validation data"
            )
        rng = rng_for(self.seed, "validation", fold_index, repetition)
        n_valid = int(round(self.validation_fraction * len(train_pool)))
        n_valid = min(max(n_valid, 1), len(train_pool) - 1)
        valid_pos = set(rng.choice(len(train_pool), size=n_valid, replace=False).tolist())
        train = [s for i, s in enumerate(train_pool) if i not in valid_pos]
        valid = [s for i, s in enumerate(train_pool) if i in valid_pos]
        return train, valid, test


def build_fold_plan(
    dataset: Dataset,
    validation_fraction: float = 0.1,
    repetitions: int = 5,
    seed: int = 0,
) -> FoldPlan:
    """One fold per speech: that speech is the test set, the rest train."""
    speeches = sorted(dataset.speech_ids())
    if len(speeches) < 2:
        raise CorpusError("cross-validation requires at least 2 distinct speech ids")
    folds = [
        Fold(
            test_speech_ids=(sp,),
            train_speech_ids=tuple(s for s in speeches if s != sp),
        )
        for sp in speeches
    ]
    return FoldPlan(
        folds=folds,
        validation_fraction=validation_fraction,
        repetitions=repetitions,
        seed=seed,
    )


# --- Statistics -----------------------------------------------------------

@dataclass
class DatasetStats:
    num_docs: int
    num_sentences: int
    mean_sentence_length: float
    num_unique_words: int
    mean_label: float | None


def dataset_stats(dataset: Dataset) -> DatasetStats:
    """Summary counts in the shape of the corpus statistics table."""
    if not dataset.sentences:
        raise CorpusError("empty dataset")
    lengths = [len(s.tokens) for s in dataset.sentences]
    norms: set[str] = set()
    for s in dataset.sentences:
        norms.update(s.norms())
    labels = [s.label for s in dataset.sentences if s.label is not None]
    return DatasetStats(
        num_docs=len(set(s.speech_id for s in dataset.sentences)),
        num_sentences=len(dataset.sentences),
        mean_sentence_length=float(np.mean(lengths)),
        num_unique_words=len(norms),
        mean_label=float(np.mean(labels)) if labels else None,
    )
