"""Word embeddings: skip-gram negative-sampling training and table I/O.

Tables can be trained on a domain corpus, imported from a pretrained
word2vec file (text or binary), or initialized at random -- the three
pretraining regimes compared in the ablation study, plus "none".
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .corpus import Dataset, Vocabulary
from .seeds import rng_for


class EmbeddingError(ValueError):
    """Raised for malformed embedding files or config conflicts."""


class Provenance(str, Enum):
    TRAINED = "trained"
    IMPORTED = "imported"
    RANDOM = "random"
    NONE = "none"


@dataclass
class EmbeddingTable:
    """Dense vectors indexed by vocabulary index (row 0 is UNK)."""

    dim: int
    vectors: np.ndarray
    provenance: Provenance

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise EmbeddingError("embedding dim must be >= 1")
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.dim:
            raise EmbeddingError(
                f"vector matrix shape {self.vectors.shape} does not match dim {self.dim}"
            )
        if not np.all(np.isfinite(self.vectors)):
            raise EmbeddingError("embedding table contains non-finite entries")

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.dim, self.vectors.copy(), self.provenance)


@dataclass
class SkipGramConfig:
    window: int = 5
    negatives_per_word: int = 25
    dim: int = 300
    epochs: int = 5
    learning_rate: float = 0.025
    seed: int = 0
    subsample_threshold: float = 1e-3

    def __post_init__(self) -> None:
        if self.window < 1:
            raise EmbeddingError("window must be >= 1")
        if self.negatives_per_word < 1:
            raise EmbeddingError("negatives_per_word must be >= 1")
        if self.dim < 1:
            raise EmbeddingError("dim must be >= 1")


def random_table(vocab: Vocabulary, dim: int, seed: int = 0) -> EmbeddingTable:
    """Uniform entries in [-0.5/dim, +0.5/dim), the word2vec init convention."""
    if dim < 1:
        raise EmbeddingError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    vectors = (rng.random((len(vocab), dim)) - 0.5) / dim
    return EmbeddingTable(dim=dim, vectors=vectors, provenance=Provenance.RANDOM)


# --- Negative-sampling objective -----------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))

def negative_sampling_loss(
    center: np.ndarray, targets: np.ndarray, labels: np.ndarray
) -> float:
    """-log sigma(c.t) summed over positives plus -log sigma(-c.t) over negatives."""
    scores = targets @ center
    eps = 1e-12
    pos = labels * np.log(_sigmoid(scores) + eps)
    neg = (1.0 - labels) * np.log(_sigmoid(-scores) + eps)
    return float(-(pos + neg).sum())


def negative_sampling_grads(
    center: np.ndarray, targets: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the negative-sampling loss for one (center, targets) group.

    Returns (d_center, d_targets); ``targets`` stacks the positive context
    vector and the sampled negatives, with ``labels`` 1/0 respectively.
    """
    scores = _sigmoid(targets @ center)
    err = scores - labels
    d_center = err @ targets
    d_targets = np.outer(err, center)
    return d_center, d_targets


def train_skipgram(
    corpus: Dataset,
    vocab: Vocabulary,
    config: SkipGramConfig,
    loss_log: list[float] | None = None,
) -> EmbeddingTable:
    """Train input vectors with skip-gram negative sampling (single-threaded).

    Negatives are drawn from the unigram distribution raised to 3/4; the
    learning rate decays linearly to 1e-4 of its initial value over all
    epochs. Deterministic for a fixed seed. When ``loss_log`` is given, the
    mean per-pair objective of each epoch is appended to it.
    """
    if not corpus.sentences:
        raise EmbeddingError("empty corpus")
    indexed = [np.array([vocab.index(n) for n in s.norms()], dtype=np.int64)
               for s in corpus.sentences]
    counts = np.zeros(len(vocab), dtype=np.float64)
    for idx in indexed:
        np.add.at(counts, idx, 1.0)
    total = counts.sum()

    # Noise distribution: unigram^(3/4), normalized over seen words.
    noise = counts ** 0.75
    noise_sum = noise.sum()
    if noise_sum == 0:
        raise EmbeddingError("corpus has no usable tokens")
    noise_cdf = np.cumsum(noise / noise_sum)

    # Keep-probability for frequent-word subsampling (word2vec formula).
    keep_prob = np.ones(len(vocab), dtype=np.float64)
    t = config.subsample_threshold
    if t > 0:
        freq = counts / total
        with np.errstate(divide="ignore", invalid="ignore"):
            kp = (np.sqrt(freq / t) + 1.0) * (t / np.maximum(freq, 1e-300))
        keep_prob = np.minimum(kp, 1.0)
        keep_prob[counts == 0] = 1.0

    table = random_table(vocab, config.dim, config.seed)
    syn0 = table.vectors
    syn1 = np.zeros_like(syn0)

    rng = np.random.default_rng(config.seed)
    lr0 = config.learning_rate
    lr_floor = lr0 * 1e-4
    total_words = max(1, config.epochs * int(total))
    processed = 0

    for _epoch in range(config.epochs):
        epoch_loss = 0.0
        epoch_pairs = 0
        for idx in indexed:
            processed += len(idx)
            lr = max(lr_floor, lr0 * (1.0 - processed / total_words))
            kept = idx[rng.random(len(idx)) < keep_prob[idx]]
            n = len(kept)
            for pos in range(n):
                center = kept[pos]
                b = int(rng.integers(1, config.window + 1))
                lo, hi = max(0, pos - b), min(n, pos + b + 1)
                for ctx_pos in range(lo, hi):
                    if ctx_pos == pos:
                        continue
                    context = kept[ctx_pos]
                    draws = np.searchsorted(
                        noise_cdf, rng.random(config.negatives_per_word)
                    )
                    negs = draws[draws != context]
                    targets_idx = np.concatenate(([context], negs))
                    labels = np.zeros(len(targets_idx))
                    labels[0] = 1.0
                    if loss_log is not None:
                        epoch_loss += negative_sampling_loss(
                            syn0[center], syn1[targets_idx], labels
                        )
                        epoch_pairs += 1
                    d_center, d_targets = negative_sampling_grads(
                        syn0[center], syn1[targets_idx], labels
                    )
                    np.add.at(syn1, targets_idx, -lr * d_targets)
                    syn0[center] -= lr * d_center
        if loss_log is not None:
            loss_log.append(epoch_loss / max(1, epoch_pairs))

    return EmbeddingTable(dim=config.dim, vectors=syn0, provenance=Provenance.TRAINED)


# --- word2vec-format I/O ---------------------------------------------------

def save_word2vec_text(table: EmbeddingTable, vocab: Vocabulary, path: str | Path) -> None:
    """Standard text format: header "count dim", then "word v1 ... vd" rows."""
    path = Path(path)
    words = vocab.words()
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(words)} {table.dim}\n")
        for i, word in enumerate(words):
            values = " ".join(f"{v:.6f}" for v in table.vectors[i])
            fh.write(f"{word} {values}\n")


def _read_word2vec_text(path: Path) -> tuple[int, int, dict[str, np.ndarray]]:
    with path.open("r", encoding="utf-8", errors="strict") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbeddingError(f"{path}: unreadable word2vec header")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise EmbeddingError(f"{path}: unreadable word2vec header") from None
        rows: dict[str, np.ndarray] = {}
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise EmbeddingError(f"{path}: row for {parts[0]!r} has wrong width")
            rows[parts[0]] = np.array([float(v) for v in parts[1:]])
        return count, dim, rows


def _read_word2vec_binary(path: Path) -> tuple[int, int, dict[str, np.ndarray]]:
    with path.open("rb") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbeddingError(f"{path}: unreadable word2vec header")
        count, dim = int(header[0]), int(header[1])
        rows: dict[str, np.ndarray] = {}
        row_bytes = 4 * dim
        for _ in range(count):
            word_chars = []
            while True:
                ch = fh.read(1)
                if ch == b"":
                    raise EmbeddingError(f"{path}: truncated binary file")
                if ch == b" ":
                    break
                if ch != b"\n":
                    word_chars.append(ch)
            word = b"".join(word_chars).decode("utf-8")
            buf = fh.read(row_bytes)
            if len(buf) != row_bytes:
                raise EmbeddingError(f"{path}: truncated vector for {word!r}")
            rows[word] = np.frombuffer(buf, dtype=np.float32).astype(np.float64)
        return count, dim, rows


def import_word2vec(
    path: str | Path,
    vocab: Vocabulary,
    expected_dim: int | None = None,
    seed: int = 0,
    binary: bool | None = None,
) -> EmbeddingTable:
    """Copy rows for in-vocabulary words from a word2vec file.

    Words missing from the file get random-scheme rows. File words are
    matched on their lowercased form; the first match wins.
    """
    path = Path(path)
    if binary is None:
        binary = path.suffix == ".bin"
    _count, dim, rows = (_read_word2vec_binary if binary else _read_word2vec_text)(path)
    if expected_dim is not None and dim != expected_dim:
        raise EmbeddingError(f"{path}: file dim {dim} conflicts with requested {expected_dim}")
    table = random_table(vocab, dim, rng_for(seed, "import-fill").integers(2**31))
    copied = 0
    filled: set[int] = set()
    for word, vec in rows.items():
        idx = vocab.word_to_index.get(word.lower())
        if idx is not None and idx not in filled:
            table.vectors[idx] = vec
            filled.add(idx)
            copied += 1
    if copied == 0:
        warnings.warn(f"{path}: no overlap with vocabulary; table is all-random")
    return EmbeddingTable(dim=dim, vectors=table.vectors, provenance=Provenance.IMPORTED)


def save_table_npz(table: EmbeddingTable, vocab: Vocabulary, path: str | Path) -> None:
    """Compact binary sidecar for fast reload."""
    import json

    np.savez_compressed(
        Path(path),
        vectors=table.vectors,
        words=np.array(json.dumps(vocab.words(), ensure_ascii=False)),
        provenance=np.array(table.provenance.value),
    )


def load_table_npz(path: str | Path) -> tuple[EmbeddingTable, list[str]]:
    import json

    with np.load(Path(path)) as data:
        vectors = data["vectors"]
        words = json.loads(str(data["words"]))
        provenance = Provenance(str(data["provenance"]))
    table = EmbeddingTable(dim=vectors.shape[1], vectors=vectors, provenance=provenance)
    return table, words
