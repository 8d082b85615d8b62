"""Dual per-word input representation.

Each word row is the concatenation of its embedding vector and a one-hot
encoding of its syntactic dependency tag; either channel can be switched
off for ablations, but never both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Dataset, DepTagSet, Sentence, Token, Vocabulary
from .embedding import EmbeddingTable, Provenance


class EncoderError(ValueError):
    pass


@dataclass
class EncoderConfig:
    use_embeddings: bool = True
    use_dep_onehot: bool = True
    embedding_source: Provenance = Provenance.TRAINED
    trainable_embeddings: bool = True

    def __post_init__(self) -> None:
        if not (self.use_embeddings or self.use_dep_onehot):
            raise EncoderError("at least one input channel must be enabled")


@dataclass
class EncodedSentence:
    """T x D input matrix plus the lookups needed to rebuild it.

    ``rows`` is assembled at encode time. When embeddings are fine-tuned the
    embedding block must be re-read from the live table, so the word indices
    and the static dependency block are kept alongside; ``input_rows`` builds
    a fresh matrix from the current table state.
    """

    rows: np.ndarray
    token_refs: list[Token]
    word_indices: np.ndarray | None
    dep_block: np.ndarray | None
    emb_dim: int

    def __len__(self) -> int:
        return len(self.token_refs)

    @property
    def width(self) -> int:
        return self.rows.shape[1]

    def input_rows(self, table: EmbeddingTable | None = None) -> np.ndarray:
        if table is None or self.word_indices is None:
            return self.rows
        parts = [table.vectors[self.word_indices]]
        if self.dep_block is not None:
            parts.append(self.dep_block)
        return np.concatenate(parts, axis=1)


def encode(
    sentence: Sentence,
    vocab: Vocabulary | None,
    table: EmbeddingTable | None,
    tags: DepTagSet | None,
    config: EncoderConfig,
) -> EncodedSentence:
    """Encode one sentence; OOV words and unseen tags fall back to UNK rows."""
    word_indices = None
    dep_block = None
    emb_dim = 0
    parts = []
    if config.use_embeddings:
        if vocab is None or table is None:
            raise EncoderError("embedding channel enabled but vocabulary/table missing")
        if table.vectors.shape[0] != len(vocab):
            raise EncoderError(
                f"table has {table.vectors.shape[0]} rows for a vocabulary of {len(vocab)}"
            )
        word_indices = np.array([vocab.index(n) for n in sentence.norms()], dtype=np.int64)
        emb_dim = table.dim
        parts.append(table.vectors[word_indices])
    if config.use_dep_onehot:
        if tags is None:
            raise EncoderError("dependency channel enabled but tag set missing")
        dep_idx = np.array([tags.index(d) for d in sentence.dep_tags()], dtype=np.int64)
        dep_block = np.zeros((len(sentence.tokens), len(tags)))
        dep_block[np.arange(len(dep_idx)), dep_idx] = 1.0
        parts.append(dep_block)
    rows = np.concatenate(parts, axis=1)
    return EncodedSentence(
        rows=rows,
        token_refs=list(sentence.tokens),
        word_indices=word_indices,
        dep_block=dep_block,
        emb_dim=emb_dim,
    )


def encode_dataset(
    dataset: Dataset,
    vocab: Vocabulary | None,
    table: EmbeddingTable | None,
    tags: DepTagSet | None,
    config: EncoderConfig,
) -> list[EncodedSentence]:
    return [encode(s, vocab, table, tags, config) for s in dataset.sentences]


def input_width(
    vocab: Vocabulary | None,
    table: EmbeddingTable | None,
    tags: DepTagSet | None,
    config: EncoderConfig,
) -> int:
    width = 0
    if config.use_embeddings:
        if table is None:
            raise EncoderError("embedding channel enabled but no table given")
        width += table.dim
    if config.use_dep_onehot:
        if tags is None:
            raise EncoderError("dependency channel enabled but tag set missing")
        width += len(tags)
    return width
