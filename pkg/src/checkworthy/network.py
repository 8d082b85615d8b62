"""GRU-with-attention scorer: forward pass, analytic backward pass, RMSprop.

The network reads a T x D encoded sentence, runs a GRU over the rows,
pools the hidden states with a softmax attention over a learned affine
score, and predicts a check-worthiness score through a ReLU dense layer
and a sigmoid output. Training minimizes binary cross entropy, which
accepts continuous targets so weakly labelled data can be used directly.

All gradients are derived by hand and verified against central finite
differences in the test suite; no autodiff framework is involved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import DepTagSet, FoldPlan, Vocabulary
from .embedding import EmbeddingTable, Provenance
from .encoder import EncodedSentence, EncoderConfig
from .evaluation import average_precision, rank_items
from .seeds import derive_seed

PRED_CLAMP = 1e-7


class NetworkError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


# --- Parameters -----------------------------------------------------------

MATRIX_PARAMS = ("W_z", "U_z", "W_r", "U_r", "W_h", "U_h", "W_d")
VECTOR_PARAMS = ("b_z", "b_r", "b_h", "attn_w", "b_d", "out_w")
SCALAR_PARAMS = ("attn_b", "out_b")
PARAM_NAMES = (
    "W_z", "U_z", "b_z",
    "W_r", "U_r", "b_r",
    "W_h", "U_h", "b_h",
    "attn_w", "attn_b",
    "W_d", "b_d",
    "out_w", "out_b",
)


@dataclass
class ModelParams:
    """All trainable tensors of the scorer.

    Input-to-hidden matrices are D x H, hidden-to-hidden H x H. The dense
    layer is H x F with F defaulting to H/4 (the tuned layer-size ratio).
    """

    W_z: np.ndarray
    U_z: np.ndarray
    b_z: np.ndarray
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray
    attn_w: np.ndarray
    attn_b: np.ndarray
    W_d: np.ndarray
    b_d: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.W_z.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.W_z.shape[1]

    @property
    def dense_size(self) -> int:
        return self.W_d.shape[1]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.as_dict().items()})

    def check_finite(self) -> None:
        for name, value in self.as_dict().items():
            if not np.all(np.isfinite(value)):
                raise NetworkError(f"parameter {name} contains non-finite entries")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(
    input_dim: int,
    hidden_size: int,
    dense_size: int | None = None,
    seed: int = 0,
) -> ModelParams:
    """Glorot-uniform weights, zero biases. dense_size defaults to hidden/4."""
    if input_dim < 1 or hidden_size < 1:
        raise NetworkError("input_dim and hidden_size must be >= 1")
    if dense_size is None:
        dense_size = max(1, hidden_size // 4)
    rng = np.random.default_rng(seed)
    d, h, f = input_dim, hidden_size, dense_size
    return ModelParams(
        W_z=_glorot(rng, d, h, (d, h)),
        U_z=_glorot(rng, h, h, (h, h)),
        b_z=np.zeros(h),
        W_r=_glorot(rng, d, h, (d, h)),
        U_r=_glorot(rng, h, h, (h, h)),
        b_r=np.zeros(h),
        W_h=_glorot(rng, d, h, (d, h)),
        U_h=_glorot(rng, h, h, (h, h)),
        b_h=np.zeros(h),
        attn_w=_glorot(rng, h, 1, (h,)),
        attn_b=np.zeros(()),
        W_d=_glorot(rng, h, f, (h, f)),
        b_d=np.zeros(f),
        out_w=_glorot(rng, f, 1, (f,)),
        out_b=np.zeros(()),
    )


def zero_grads_like(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(value) for name, value in params.as_dict().items()}


@dataclass
class Gradients:
    """BCE gradients w.r.t. every parameter plus the touched embedding rows."""

    by_name: dict[str, np.ndarray]
    emb_rows: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass
class Prediction:
    score: float
    attention: np.ndarray


# --- Forward / backward -----------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x)
    e = np.exp(shifted)
    return e / e.sum()


@dataclass
class _Trace:
    X: np.ndarray
    Z: np.ndarray
    R: np.ndarray
    C: np.ndarray      # candidate (tanh output) per step
    H: np.ndarray
    scores: np.ndarray
    alphas: np.ndarray
    ctx: np.ndarray
    u: np.ndarray
    f: np.ndarray
    o: float
    p_raw: float


def _forward_trace(X: np.ndarray, params: ModelParams) -> _Trace:
    T, d = X.shape
    if d != params.input_dim:
        raise NetworkError(f"input width {d} does not match model width {params.input_dim}")
    h_size = params.hidden_size
    Z = np.empty((T, h_size))
    R = np.empty((T, h_size))
    C = np.empty((T, h_size))
    H = np.empty((T, h_size))
    h_prev = np.zeros(h_size)
    for t in range(T):
        x = X[t]
        z = _sigmoid(x @ params.W_z + h_prev @ params.U_z + params.b_z)
        r = _sigmoid(x @ params.W_r + h_prev @ params.U_r + params.b_r)
        c = np.tanh(x @ params.W_h + (r * h_prev) @ params.U_h + params.b_h)
        h = (1.0 - z) * h_prev + z * c
        Z[t], R[t], C[t], H[t] = z, r, c, h
        h_prev = h
    scores = H @ params.attn_w + params.attn_b
    alphas = _softmax(scores)
    ctx = alphas @ H
    u = ctx @ params.W_d + params.b_d
    f = np.maximum(u, 0.0)
    o = float(f @ params.out_w + params.out_b)
    p_raw = float(_sigmoid(np.array([o]))[0])
    if not np.isfinite(o):
        raise TrainingDivergedError("non-finite activation in forward pass")
    return _Trace(X=X, Z=Z, R=R, C=C, H=H, scores=scores, alphas=alphas,
                  ctx=ctx, u=u, f=f, o=o, p_raw=p_raw)


def forward(
    encoded: EncodedSentence,
    params: ModelParams,
    table: EmbeddingTable | None = None,
) -> Prediction:
    """Score one sentence; returns the clamped score and the attention weights."""
    trace = _forward_trace(encoded.input_rows(table), params)
    score = float(np.clip(trace.p_raw, PRED_CLAMP, 1.0 - PRED_CLAMP))
    return Prediction(score=score, attention=trace.alphas.copy())


def loss(prediction: float, label: float) -> float:
    """Binary cross entropy with a continuous target in [0, 1]."""
    if not (0.0 <= label <= 1.0):
        raise NetworkError(f"label {label} out of [0, 1]")
    p = min(max(prediction, PRED_CLAMP), 1.0 - PRED_CLAMP)
    return float(-(label * np.log(p) + (1.0 - label) * np.log(1.0 - p)))


def _backward_trace(
    trace: _Trace,
    params: ModelParams,
    label: float,
    encoded: EncodedSentence | None = None,
    collect_emb: bool = False,
) -> Gradients:
    T = trace.X.shape[0]
    g = zero_grads_like(params)

    d_o = trace.p_raw - label
    g["out_w"] = d_o * trace.f
    g["out_b"] = np.asarray(d_o)
    d_f = d_o * params.out_w
    d_u = d_f * (trace.u > 0.0)
    g["W_d"] = np.outer(trace.ctx, d_u)
    g["b_d"] = d_u
    d_ctx = params.W_d @ d_u

    d_alpha = trace.H @ d_ctx
    d_scores = trace.alphas * (d_alpha - float(trace.alphas @ d_alpha))
    g["attn_w"] = trace.H.T @ d_scores
    g["attn_b"] = np.asarray(d_scores.sum())
    # Per-step gradient into h_t from the aggregation stage.
    G = np.outer(trace.alphas, d_ctx) + np.outer(d_scores, params.attn_w)

    d_x = np.empty_like(trace.X)
    carry = np.zeros(params.hidden_size)
    for t in range(T - 1, -1, -1):
        h_prev = trace.H[t - 1] if t > 0 else np.zeros(params.hidden_size)
        x, z, r, c = trace.X[t], trace.Z[t], trace.R[t], trace.C[t]
        delta = G[t] + carry
        d_z = delta * (c - h_prev)
        d_c = delta * z * (1.0 - c * c)
        d_m = d_c @ params.U_h.T            # m = r * h_prev
        d_r = d_m * h_prev
        d_a = d_z * z * (1.0 - z)
        d_b = d_r * r * (1.0 - r)
        g["W_h"] += np.outer(x, d_c)
        g["U_h"] += np.outer(r * h_prev, d_c)
        g["b_h"] += d_c
        g["W_z"] += np.outer(x, d_a)
        g["U_z"] += np.outer(h_prev, d_a)
        g["b_z"] += d_a
        g["W_r"] += np.outer(x, d_b)
        g["U_r"] += np.outer(h_prev, d_b)
        g["b_r"] += d_b
        d_x[t] = d_a @ params.W_z.T + d_b @ params.W_r.T + d_c @ params.W_h.T
        carry = (
            delta * (1.0 - z)
            + d_m * r
            + d_a @ params.U_z.T
            + d_b @ params.U_r.T
        )

    emb_rows: dict[int, np.ndarray] = {}
    if collect_emb and encoded is not None and encoded.word_indices is not None:
        k = encoded.emb_dim
        for t, row_index in enumerate(encoded.word_indices.tolist()):
            block = d_x[t, :k]
            if row_index in emb_rows:
                emb_rows[row_index] = emb_rows[row_index] + block
            else:
                emb_rows[row_index] = block.copy()
    return Gradients(by_name=g, emb_rows=emb_rows)


def backward(
    encoded: EncodedSentence,
    params: ModelParams,
    label: float,
    table: EmbeddingTable | None = None,
    collect_emb: bool = True,
) -> Gradients:
    """Analytic BCE gradients for one sentence.

    The dependency one-hot block is input, not parameters, and receives no
    gradient; embedding rows are collected when the sentence carries word
    indices and ``collect_emb`` is set.
    """
    trace = _forward_trace(encoded.input_rows(table), params)
    return _backward_trace(trace, params, label, encoded=encoded, collect_emb=collect_emb)


# --- RMSprop ----------------------------------------------------------------

@dataclass
class GridSpec:
    hidden_sizes: list[int] = field(default_factory=lambda: [50, 100, 200, 400])
    batch_sizes: list[int] = field(default_factory=lambda: [64, 128, 256, 512])


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8
    seed: int = 0
    hidden_size: int = 100
    dense_size: int | None = None
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise NetworkError("batch_size must be >= 1")
        if self.patience < 1:
            raise NetworkError("patience must be >= 1")
        if self.max_epochs < 0:
            raise NetworkError("max_epochs must be >= 0")
        if not (0.0 <= self.rmsprop_decay < 1.0):
            raise NetworkError("rmsprop_decay must be in [0, 1)")


@dataclass
class RmspropState:
    acc: dict[str, np.ndarray] = field(default_factory=dict)
    emb_acc: np.ndarray | None = None


def rmsprop_step(
    params: ModelParams,
    grads: Gradients,
    state: RmspropState,
    config: TrainConfig,
    table: EmbeddingTable | None = None,
) -> tuple[ModelParams, RmspropState]:
    """One in-place update: acc <- rho*acc + (1-rho)*g^2; theta -= lr*g/sqrt(acc+eps)."""
    rho = config.rmsprop_decay
    lr = config.learning_rate
    eps = config.rmsprop_epsilon
    for name, grad in grads.by_name.items():
        if name not in state.acc:
            state.acc[name] = np.zeros_like(grad)
        acc = state.acc[name]
        acc *= rho
        acc += (1.0 - rho) * grad * grad
        getattr(params, name)[...] = getattr(params, name) - lr * grad / np.sqrt(acc + eps)
    if grads.emb_rows:
        if table is None:
            raise NetworkError("embedding gradients present but no table to update")
        if state.emb_acc is None:
            state.emb_acc = np.zeros_like(table.vectors)
        for idx, grad in grads.emb_rows.items():
            acc_row = state.emb_acc[idx]
            acc_row *= rho
            acc_row += (1.0 - rho) * grad * grad
            table.vectors[idx] -= lr * grad / np.sqrt(acc_row + eps)
    return params, state


# --- Training loop ------------------------------------------------------------

@dataclass
class TrainExample:
    """One encoded sentence with its BCE target and ranking metadata.

    ``target`` feeds the loss (continuous for weak labels); ``relevant`` is
    the binary relevance used for validation MAP; ``group`` is the ranking
    query key (speech id).
    """

    encoded: EncodedSentence
    target: float
    relevant: bool
    group: str
    sentence_id: str


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_map: float


@dataclass
class TrainResult:
    params: ModelParams
    log: list[EpochRecord]
    best_epoch: int
    best_valid_map: float
    stopped_early: bool


def validation_map(
    examples: Sequence[TrainExample],
    params: ModelParams,
    table: EmbeddingTable | None = None,
) -> float:
    """Mean AP over speech groups, the model-selection metric."""
    by_group: dict[str, list[tuple[str, float, bool]]] = {}
    for ex in examples:
        pred = forward(ex.encoded, params, table)
        by_group.setdefault(ex.group, []).append((ex.sentence_id, pred.score, ex.relevant))
    aps = [average_precision(rank_items(items)) for _, items in sorted(by_group.items())]
    return float(np.mean(aps))


def train(
    train_examples: Sequence[TrainExample],
    valid_examples: Sequence[TrainExample],
    config: TrainConfig,
    init: ModelParams | None = None,
    table: EmbeddingTable | None = None,
    trainable_embeddings: bool = True,
) -> TrainResult:
    """Mini-batch RMSprop training with early stopping on validation MAP.

    Sentences are processed individually (no padding); the batch gradient is
    the mean of per-sentence gradients. The best-validation-MAP parameters
    (and fine-tuned embedding rows) are restored before returning. ``init``
    supports pretraining on weak data followed by fine-tuning.
    """
    if not train_examples or not valid_examples:
        raise NetworkError("train and validation sets must be non-empty")
    width = train_examples[0].encoded.width
    if init is not None:
        params = init.copy()
        if params.input_dim != width:
            raise NetworkError(
                f"init params width {params.input_dim} does not match input width {width}"
            )
    else:
        params = init_params(
            width, config.hidden_size, config.dense_size,
            seed=derive_seed(config.seed, "init"),
        )
    collect_emb = trainable_embeddings and table is not None
    rng = np.random.default_rng(derive_seed(config.seed, "shuffle"))
    state = RmspropState()
    log: list[EpochRecord] = []
    best_params = params.copy()
    best_table = table.vectors.copy() if collect_emb else None
    best_map = -np.inf
    best_epoch = 0
    epochs_since_best = 0
    stopped_early = False
    n = len(train_examples)

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            acc_grads = zero_grads_like(params)
            acc_emb: dict[int, np.ndarray] = {}
            for i in batch:
                ex = train_examples[int(i)]
                trace = _forward_trace(ex.encoded.input_rows(table if collect_emb else None), params)
                total_loss += loss(trace.p_raw, ex.target)
                grads = _backward_trace(trace, params, ex.target,
                                        encoded=ex.encoded, collect_emb=collect_emb)
                for name, grad in grads.by_name.items():
                    acc_grads[name] += grad
                for idx, grad in grads.emb_rows.items():
                    if idx in acc_emb:
                        acc_emb[idx] += grad
                    else:
                        acc_emb[idx] = grad.copy()
            scale = 1.0 / len(batch)
            for name in acc_grads:
                acc_grads[name] *= scale
            for idx in acc_emb:
                acc_emb[idx] *= scale
            rmsprop_step(params, Gradients(acc_grads, acc_emb), state, config, table)
        train_loss = total_loss / n
        if not np.isfinite(train_loss):
            raise TrainingDivergedError(
                f"non-finite training loss {train_loss} at epoch {epoch}"
            )
        vmap = validation_map(valid_examples, params, table if collect_emb else None)
        log.append(EpochRecord(epoch=epoch, train_loss=train_loss, valid_map=vmap))
        if vmap > best_map:
            best_map = vmap
            best_epoch = epoch
            best_params = params.copy()
            if collect_emb:
                best_table = table.vectors.copy()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.patience:
                stopped_early = True
                break

    if collect_emb and best_table is not None:
        table.vectors[...] = best_table
    if best_map == -np.inf:
        best_map = validation_map(valid_examples, best_params, table if collect_emb else None)
    return TrainResult(
        params=best_params,
        log=log,
        best_epoch=best_epoch,
        best_valid_map=float(best_map),
        stopped_early=stopped_early,
    )


def grid_search(
    plan: FoldPlan,
    run_trial: Callable[[int, int, TrainConfig], float],
    config: TrainConfig,
) -> list[TrainConfig]:
    """Pick the (hidden_size, batch_size) pair with the best mean validation MAP.

    ``run_trial(fold_index, repetition, trial_config)`` returns the validation
    MAP of one training run. Ties break toward the smaller hidden size, then
    the smaller batch size.
    """
    if not config.grid.hidden_sizes or not config.grid.batch_sizes:
        raise NetworkError("grid must be non-empty")
    choices: list[TrainConfig] = []
    for fold_index in range(len(plan.folds)):
        best_key = None
        best_trial = None
        for hidden in config.grid.hidden_sizes:
            for batch in config.grid.batch_sizes:
                trial = replace(config, hidden_size=hidden, batch_size=batch)
                maps = [
                    run_trial(fold_index, repetition, trial)
                    for repetition in range(plan.repetitions)
                ]
                key = (-float(np.mean(maps)), hidden, batch)
                if best_key is None or key < best_key:
                    best_key = key
                    best_trial = trial
        choices.append(best_trial)
    return choices


# --- Checkpoints ---------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(
    path: str | Path,
    params: ModelParams,
    encoder_config: EncoderConfig,
    vocab: Vocabulary | None,
    tags: DepTagSet | None,
    table: EmbeddingTable | None = None,
) -> None:
    """Versioned container with all tensors plus vocabulary/tag-set hashes."""
    meta = {
        "format": "checkworthy-model",
        "version": CHECKPOINT_VERSION,
        "input_dim": params.input_dim,
        "hidden_size": params.hidden_size,
        "dense_size": params.dense_size,
        "encoder": {
            "use_embeddings": encoder_config.use_embeddings,
            "use_dep_onehot": encoder_config.use_dep_onehot,
            "embedding_source": encoder_config.embedding_source.value,
            "trainable_embeddings": encoder_config.trainable_embeddings,
        },
        "vocab_hash": vocab.content_hash() if vocab is not None else None,
        "tags_hash": tags.content_hash() if tags is not None else None,
        "vocab_words": vocab.words() if vocab is not None else None,
        "vocab_min_count": vocab.min_count if vocab is not None else None,
        "tag_names": tags.tags() if tags is not None else None,
        "has_table": table is not None,
    }
    arrays = {f"param_{k}": v for k, v in params.as_dict().items()}
    if table is not None:
        arrays["emb_vectors"] = table.vectors
        arrays["emb_provenance"] = np.array(table.provenance.value)
    np.savez_compressed(Path(path), meta=np.array(json.dumps(meta)), **arrays)


@dataclass
class Checkpoint:
    params: ModelParams
    encoder_config: EncoderConfig
    table: EmbeddingTable | None
    vocab: Vocabulary | None
    tags: DepTagSet | None


def load_checkpoint(
    path: str | Path,
    vocab: Vocabulary | None = None,
    tags: DepTagSet | None = None,
) -> Checkpoint:
    """Load a checkpoint; vocabulary/tag-set hash mismatches are errors.

    The stored vocabulary and tag set are reconstructed so the model file is
    self-contained; passing ``vocab``/``tags`` verifies their hashes instead.
    """
    with np.load(Path(path)) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != "checkworthy-model":
            raise CheckpointError(f"{path}: not a model checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        if vocab is not None and meta["vocab_hash"] is not None:
            if vocab.content_hash() != meta["vocab_hash"]:
                raise CheckpointError(f"{path}: vocabulary hash mismatch")
        if tags is not None and meta["tags_hash"] is not None:
            if tags.content_hash() != meta["tags_hash"]:
                raise CheckpointError(f"{path}: dependency tag-set hash mismatch")
        params = ModelParams(**{name: data[f"param_{name}"] for name in PARAM_NAMES})
        encoder_config = EncoderConfig(
            use_embeddings=meta["encoder"]["use_embeddings"],
            use_dep_onehot=meta["encoder"]["use_dep_onehot"],
            embedding_source=Provenance(meta["encoder"]["embedding_source"]),
            trainable_embeddings=meta["encoder"]["trainable_embeddings"],
        )
        table = None
        if meta.get("has_table"):
            vectors = data["emb_vectors"]
            table = EmbeddingTable(
                dim=vectors.shape[1],
                vectors=vectors,
                provenance=Provenance(str(data["emb_provenance"])),
            )
        stored_vocab = None
        if meta.get("vocab_words") is not None:
            stored_vocab = Vocabulary(
                word_to_index={w: i for i, w in enumerate(meta["vocab_words"])},
                min_count=meta.get("vocab_min_count") or 1,
            )
        stored_tags = None
        if meta.get("tag_names") is not None:
            stored_tags = DepTagSet(
                tag_to_index={t: i for i, t in enumerate(meta["tag_names"])}
            )
    return Checkpoint(
        params=params,
        encoder_config=encoder_config,
        table=table,
        vocab=vocab if vocab is not None else stored_vocab,
        tags=tags if tags is not None else stored_tags,
    )
