import math

import numpy as np
import pytest

from checkworthy.corpus import DepTagSet, FoldPlan, Fold, Vocabulary
from checkworthy.embedding import EmbeddingTable, Provenance
from checkworthy.encoder import EncodedSentence, EncoderConfig, encode
from checkworthy.network import (
    GridSpec,
    ModelParams,
    NetworkError,
    PARAM_NAMES,
    RmspropState,
    TrainConfig,
    TrainExample,
    TrainingDivergedError,
    Gradients,
    backward,
    forward,
    grid_search,
    init_params,
    load_checkpoint,
    loss,
    rmsprop_step,
    save_checkpoint,
    train,
    zero_grads_like,
)
from helpers import make_sentence
from oracles import central_difference, oracle_forward_scalar, relative_error


def raw_encoded(X):
    return EncodedSentence(
        rows=np.asarray(X, dtype=np.float64),
        token_refs=[None] * len(X),
        word_indices=None,
        dep_block=None,
        emb_dim=0,
    )


def zero_params(d, h, f):
    params = init_params(d, h, f, seed=0)
    for name in PARAM_NAMES:
        getattr(params, name)[...] = 0.0
    return params


def randomized_params(d, h, f, seed, scale=0.6):
    rng = np.random.default_rng(seed)
    params = init_params(d, h, f, seed=seed)
    for name in PARAM_NAMES:
        arr = getattr(params, name)
        arr[...] = rng.normal(scale=scale, size=arr.shape)
    return params


class TestForward:
    def test_zero_params_give_half_score_uniform_attention(self):
        params = zero_params(3, 4, 1)
        enc = raw_encoded(np.random.default_rng(0).normal(size=(5, 3)))
        pred = forward(enc, params)
        assert pred.score == pytest.approx(0.5)
        np.testing.assert_allclose(pred.attention, np.full(5, 0.2))

    def test_single_token_attention_is_one(self):
        params = randomized_params(3, 2, 1, seed=4)
        pred = forward(raw_encoded([[0.3, -0.2, 0.5]]), params)
        assert pred.attention.tolist() == [1.0]

    def test_matches_scalar_oracle_on_tiny_model(self):
        # Independent scalar-by-scalar recomputation of the whole pass.
        params = randomized_params(2, 2, 1, seed=12)
        X = [[0.25, -0.5], [1.5, 0.75]]
        score, alphas = oracle_forward_scalar(X, params)
        pred = forward(raw_encoded(X), params)
        assert pred.score == pytest.approx(score, abs=1e-12)
        np.testing.assert_allclose(pred.attention, alphas, atol=1e-12)

    def test_width_mismatch(self):
        params = randomized_params(4, 2, 1, seed=0)
        with pytest.raises(NetworkError, match="width"):
            forward(raw_encoded([[1.0, 2.0]]), params)

    def test_score_strictly_inside_unit_interval(self):
        params = randomized_params(2, 2, 1, seed=1)
        params.out_b[...] = 50.0  # saturate the sigmoid
        pred = forward(raw_encoded([[1.0, 1.0]]), params)
        assert 0.0 < pred.score < 1.0


class TestAttentionContract:
    def test_normalization_and_nonnegativity(self):
        rng = np.random.default_rng(77)
        for trial in range(100):
            t = int(rng.integers(1, 9))
            d = int(rng.integers(1, 5))
            h = int(rng.integers(1, 5))
            params = randomized_params(d, h, 1, seed=trial)
            pred = forward(raw_encoded(rng.normal(size=(t, d))), params)
            assert abs(pred.attention.sum() - 1.0) <= 1e-6
            assert np.all(pred.attention >= 0.0)

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        params = randomized_params(3, 4, 1, seed=5)
        enc = raw_encoded(rng.normal(size=(6, 3)))
        base = forward(enc, params).attention
        for shift in (-100.0, -1.0, 0.5, 25.0):
            params.attn_b[...] = params.attn_b + shift
            shifted = forward(enc, params).attention
            params.attn_b[...] = params.attn_b - shift
            np.testing.assert_allclose(shifted, base, atol=1e-9)


class TestLoss:
    def test_half_prediction_true_label(self):
        assert loss(0.5, 1.0) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_perfect_predictions_near_zero(self):
        assert loss(1.0, 1.0) < 1e-6
        assert loss(0.0, 0.0) < 1e-6

    def test_soft_label_value(self):
        # Direct evaluation of -[y ln p + (1-y) ln(1-p)].
        expected = -(0.4 * math.log(0.8) + 0.6 * math.log(0.2))
        assert loss(0.8, 0.4) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(1.0549201679861442)

    def test_label_validation(self):
        with pytest.raises(NetworkError):
            loss(0.5, 1.5)


class TestBackward:
    def test_matches_finite_differences_random_models(self):
        rng = np.random.default_rng(42)
        for trial in range(10):
            t = int(rng.integers(1, 6))
            d = int(rng.integers(1, 7))
            h = int(rng.integers(1, 5))
            f = int(rng.integers(1, 3))
            params = randomized_params(d, h, f, seed=100 + trial)
            X = rng.normal(size=(t, d))
            enc = raw_encoded(X)
            y = float(rng.uniform(0.05, 0.95))
            grads = backward(enc, params, y)

            def loss_at():
                return loss(forward(enc, params).score, y)

            worst = 0.0
            for name in PARAM_NAMES:
                arr = getattr(params, name)
                grad = grads.by_name[name]
                it = np.nditer(arr, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    num = central_difference(loss_at, arr, idx)
                    ana = grad[idx] if grad.shape else float(grad)
                    worst = max(worst, relative_error(ana, num))
            assert worst < 1e-4

    def test_stationary_point_zero_output_gradient(self):
        # zero params + y = 0.5: p = 0.5 so the output-layer bias gradient is 0
        params = zero_params(2, 2, 1)
        grads = backward(raw_encoded([[1.0, -1.0]]), params, 0.5)
        assert float(grads.by_name["out_b"]) == 0.0

    def test_untouched_vocab_rows_absent(self):
        vocab = Vocabulary({"<unk>": 0, "a": 1, "b": 2, "c": 3}, min_count=1)
        tags = DepTagSet({"<unk-dep>": 0, "t": 1})
        table = EmbeddingTable(
            dim=2, vectors=np.random.default_rng(0).normal(size=(4, 2)),
            provenance=Provenance.RANDOM)
        sentence = make_sentence("s", "sp", [("a", "t"), ("a", "t")])
        enc = encode(sentence, vocab, table, tags, EncoderConfig())
        params = randomized_params(enc.width, 3, 1, seed=9)
        grads = backward(enc, params, 1.0, table=table)
        assert set(grads.emb_rows) == {1}   # only the row for "a"

    def test_dep_only_input_gets_no_embedding_gradient(self):
        tags = DepTagSet({"<unk-dep>": 0, "t": 1, "u": 2})
        sentence = make_sentence("s", "sp", [("a", "t"), ("b", "u")])
        enc = encode(sentence, None, None, tags, EncoderConfig(use_embeddings=False))
        params = randomized_params(enc.width, 2, 1, seed=2)
        grads = backward(enc, params, 0.0)
        assert grads.emb_rows == {}


class TestRmsprop:
    def make(self, h=2):
        params = randomized_params(2, h, 1, seed=3)
        config = TrainConfig(learning_rate=0.01, rmsprop_decay=0.9, rmsprop_epsilon=1e-8)
        return params, config

    def test_zero_gradient_leaves_params_unchanged(self):
        params, config = self.make()
        before = {k: v.copy() for k, v in params.as_dict().items()}
        rmsprop_step(params, Gradients(zero_grads_like(params)), RmspropState(), config)
        for name in PARAM_NAMES:
            np.testing.assert_array_equal(getattr(params, name), before[name])

    def test_first_step_magnitude(self):
        params, config = self.make()
        before = float(params.out_b)
        grads = Gradients(zero_grads_like(params))
        grads.by_name["out_b"] = np.asarray(1.0)
        rmsprop_step(params, grads, RmspropState(), config)
        delta = float(params.out_b) - before
        assert delta == pytest.approx(-0.01 / math.sqrt(0.1 + 1e-8), rel=1e-9)
        assert delta == pytest.approx(-0.031623, abs=1e-6)

    def test_second_identical_step_is_smaller(self):
        params, config = self.make()
        state = RmspropState()
        def step():
            before = float(params.out_b)
            grads = Gradients(zero_grads_like(params))
            grads.by_name["out_b"] = np.asarray(1.0)
            rmsprop_step(params, grads, state, config)
            return abs(float(params.out_b) - before)
        first, second = step(), step()
        assert second < first

    def test_embedding_row_update(self):
        params, config = self.make()
        table = EmbeddingTable(dim=2, vectors=np.ones((3, 2)), provenance=Provenance.RANDOM)
        grads = Gradients(zero_grads_like(params), emb_rows={1: np.array([1.0, 0.0])})
        state = RmspropState()
        rmsprop_step(params, grads, state, config, table=table)
        expected = 1.0 - 0.01 / math.sqrt(0.1 + 1e-8)
        assert table.vectors[1, 0] == pytest.approx(expected)
        assert table.vectors[1, 1] == 1.0
        assert table.vectors[0, 0] == 1.0


def separable_examples(n=20, seed=0):
    """Positive sentences use tag 'claim', negatives tag 'chatter'."""
    tags = DepTagSet({"<unk-dep>": 0, "claim": 1, "chatter": 2, "filler": 3})
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n):
        positive = i % 2 == 0
        length = int(rng.integers(2, 5))
        deps = [("claim" if positive else "chatter") if j == 0 else "filler"
                for j in range(length)]
        sentence = make_sentence(f"s{i}", f"sp{i % 2}", [(f"w{j}", d) for j, d in enumerate(deps)])
        enc = encode(sentence, None, None, tags, EncoderConfig(use_embeddings=False))
        examples.append(TrainExample(
            encoded=enc, target=1.0 if positive else 0.0,
            relevant=positive, group=sentence.speech_id, sentence_id=sentence.id))
    return examples


class TestTrain:
    def test_overfits_separable_toy_set(self):
        # dense_size 1 can die (single ReLU unit); 8/2 keeps the 4:1 ratio
        examples = separable_examples()
        config = TrainConfig(learning_rate=0.02, batch_size=4, max_epochs=200,
                             patience=200, seed=1, hidden_size=8, dense_size=2)
        result = train(examples, examples, config)
        assert result.log[-1].train_loss < 0.05

    def test_patience_stops_on_plateau(self):
        examples = separable_examples(8)
        # every validation sentence relevant: AP is 1 whatever the scores
        plateau_valid = [
            TrainExample(e.encoded, e.target, True, e.group, e.sentence_id)
            for e in examples[:4]
        ]
        config = TrainConfig(learning_rate=0.01, batch_size=4, max_epochs=50,
                             patience=1, seed=0, hidden_size=2, dense_size=1)
        result = train(examples, plateau_valid, config)
        assert result.stopped_early
        assert len(result.log) <= result.best_epoch + 1
        assert len(result.log) <= 2

    def test_zero_epochs_returns_init_unchanged(self):
        examples = separable_examples(6)
        init = randomized_params(examples[0].encoded.width, 3, 1, seed=8)
        config = TrainConfig(max_epochs=0, seed=0, hidden_size=3, dense_size=1)
        result = train(examples, examples, config, init=init)
        for name in PARAM_NAMES:
            np.testing.assert_array_equal(
                getattr(result.params, name), getattr(init, name))

    def test_training_log_is_deterministic(self):
        examples = separable_examples(10)
        config = TrainConfig(learning_rate=0.02, batch_size=3, max_epochs=6,
                             patience=10, seed=5, hidden_size=3, dense_size=1)
        a = train(examples, examples, config)
        b = train(examples, examples, config)
        assert [(r.train_loss, r.valid_map) for r in a.log] == \
               [(r.train_loss, r.valid_map) for r in b.log]

    def test_divergence_raises(self):
        examples = separable_examples(6)
        init = randomized_params(examples[0].encoded.width, 2, 1, seed=0)
        init.b_d[...] = 1e200      # relu output ~1e200 ...
        init.out_w[...] = 1e200    # ... times 1e200 overflows to inf
        config = TrainConfig(learning_rate=0.01, max_epochs=3, seed=0,
                             hidden_size=2, dense_size=1)
        with np.errstate(over="ignore"), pytest.raises(TrainingDivergedError):
            train(examples, examples, config, init=init)

    def test_finetunes_embedding_rows(self):
        vocab = Vocabulary({"<unk>": 0, "good": 1, "bad": 2}, min_count=1)
        tags = DepTagSet({"<unk-dep>": 0, "t": 1})
        table = EmbeddingTable(dim=2,
                               vectors=np.random.default_rng(1).normal(size=(3, 2)) * 0.1,
                               provenance=Provenance.RANDOM)
        before = table.vectors.copy()
        examples = []
        for i in range(8):
            word = "good" if i % 2 == 0 else "bad"
            sentence = make_sentence(f"s{i}", "sp", [(word, "t")])
            enc = encode(sentence, vocab, table, tags, EncoderConfig())
            examples.append(TrainExample(enc, float(i % 2 == 0), i % 2 == 0, "sp", f"s{i}"))
        config = TrainConfig(learning_rate=0.05, batch_size=4, max_epochs=5,
                             patience=10, seed=2, hidden_size=2, dense_size=1)
        train(examples, examples, config, table=table, trainable_embeddings=True)
        assert not np.array_equal(table.vectors[1], before[1])
        np.testing.assert_array_equal(table.vectors[0], before[0])  # UNK untouched


class TestGridSearch:
    def plan(self, folds=2, reps=2):
        return FoldPlan(
            folds=[Fold((f"sp{i}",), (f"sp{1-i}",)) for i in range(folds)],
            validation_fraction=0.1, repetitions=reps, seed=0)

    def test_single_point_grid(self):
        config = TrainConfig(grid=GridSpec(hidden_sizes=[8], batch_sizes=[4]))
        chosen = grid_search(self.plan(), lambda fi, rep, c: 0.5, config)
        assert [(c.hidden_size, c.batch_size) for c in chosen] == [(8, 4), (8, 4)]

    def test_rigged_data_selects_winning_config(self):
        config = TrainConfig(grid=GridSpec(hidden_sizes=[50, 100], batch_sizes=[64]))
        def run_trial(fold_index, repetition, trial):
            return 0.9 if trial.hidden_size == 100 else 0.2
        chosen = grid_search(self.plan(), run_trial, config)
        assert all(c.hidden_size == 100 for c in chosen)

    def test_ties_prefer_smaller_hidden_size(self):
        config = TrainConfig(grid=GridSpec(hidden_sizes=[100, 50], batch_sizes=[128, 64]))
        chosen = grid_search(self.plan(folds=1), lambda fi, rep, c: 0.4, config)
        assert (chosen[0].hidden_size, chosen[0].batch_size) == (50, 64)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, gold_mini):
        from checkworthy.corpus import build_dep_tags, build_vocabulary
        from checkworthy.embedding import random_table

        vocab = build_vocabulary([gold_mini])
        tags = build_dep_tags([gold_mini])
        table = random_table(vocab, 4, seed=0)
        params = randomized_params(4 + len(tags), 4, 1, seed=3)
        path = tmp_path / "model.npz"
        save_checkpoint(path, params, EncoderConfig(), vocab, tags, table)
        ckpt = load_checkpoint(path, vocab=vocab, tags=tags)
        for name in PARAM_NAMES:
            np.testing.assert_array_equal(getattr(ckpt.params, name), getattr(params, name))
        np.testing.assert_array_equal(ckpt.table.vectors, table.vectors)
        assert ckpt.vocab.word_to_index == vocab.word_to_index
        assert ckpt.tags.tag_to_index == tags.tag_to_index
        assert ckpt.encoder_config == EncoderConfig()

    def test_hash_mismatch_rejected(self, tmp_path, gold_mini):
        from checkworthy.corpus import build_dep_tags, build_vocabulary
        from checkworthy.network import CheckpointError

        vocab = build_vocabulary([gold_mini])
        tags = build_dep_tags([gold_mini])
        params = randomized_params(len(tags), 2, 1, seed=0)
        path = tmp_path / "model.npz"
        save_checkpoint(path, params,
                        EncoderConfig(use_embeddings=False), None, tags, None)
        other = DepTagSet({"<unk-dep>": 0, "other": 1})
        with pytest.raises(CheckpointError, match="tag-set hash"):
            load_checkpoint(path, tags=other)
