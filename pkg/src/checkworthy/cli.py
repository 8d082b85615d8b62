"""Command-line surface for the check-worthiness ranking pipeline.

Subcommands: embed, train, rank, eval, sweep, overlap, explain, stats.
Every command takes a single --seed from which all randomness is derived,
writes its primary outputs atomically, and records a manifest sidecar
(<out>.manifest.json) with the effective configuration, input hashes, and
timestamps. Outputs are byte-identical across runs with identical flags,
inputs, and seed; only the manifest carries timestamps.

Config files use one KEY=VALUE per line ('#' starts a comment); keys match
the long flag names with dashes replaced by underscores. Precedence is
flags > config file > built-in defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, corpus, embedding, encoder, evaluation, network, weaksup
from .corpus import DatasetKind, build_dep_tags, build_fold_plan, build_vocabulary, load_jsonl
from .embedding import Provenance, SkipGramConfig
from .encoder import EncoderConfig, encode
from .network import TrainConfig
from .seeds import derive_seed, rng_for
from .weaksup import SweepConfig, ThresholdMode


# --- plumbing ---------------------------------------------------------------

def _sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f"{path.name}.tmp-{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _atomic_savez(write_fn, path: str | Path) -> None:
    """np.savez appends .npz to unsuffixed names, so the temp name keeps it."""
    path = Path(path)
    tmp = path.with_name(f"{path.name}.tmp-{os.getpid()}.npz")
    write_fn(tmp)
    os.replace(tmp, path)


def _write_manifest(out_path: str | Path, command: str, args: argparse.Namespace,
                    inputs: list[str | Path], outputs: list[str | Path]) -> None:
    config = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func", "config") and not callable(v)
    }
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256_file(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "seed": getattr(args, "seed", None),
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    _atomic_write_text(str(out_path) + ".manifest.json",
                       json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_config_file(path: str | Path) -> dict:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise corpus.CorpusError(f"{path}:{lineno}: expected KEY=VALUE")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = _coerce(value)
    return values


def _coerce(value: str):
    lowered = value.lower()
    if lowered in ("true", "yes"):
        return True
    if lowered in ("false", "no"):
        return False
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def _parse_fractions(text: str) -> list[float]:
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        out = []
        value = start
        while value <= stop + 1e-9:
            out.append(round(value, 6))
            value += step
        return out
    return [float(v) for v in text.split(",") if v.strip()]


# --- shared model/encoder construction ---------------------------------------

def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--embeddings", default="random",
                        help="embedding source: a word2vec file, 'random', or 'none'")
    parser.add_argument("--dim", type=int, default=300,
                        help="embedding dim for random tables")
    parser.add_argument("--no-dep", action="store_true",
                        help="disable the dependency one-hot channel")
    parser.add_argument("--freeze-embeddings", action="store_true",
                        help="do not fine-tune embedding rows during training")
    parser.add_argument("--hidden", type=int, default=100, help="GRU hidden size")
    parser.add_argument("--dense", type=int, default=None,
                        help="dense layer size (default hidden/4)")
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--lr", type=float, default=1e-4)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--patience", type=int, default=10)
    parser.add_argument("--min-count", type=int, default=1)
    parser.add_argument("--valid-fraction", type=float, default=0.1)


def _build_encoder_setup(args, datasets):
    """(vocab, tags, base_table, encoder_config) from the shared model flags."""
    use_embeddings = args.embeddings != "none"
    use_dep = not args.no_dep
    if not use_embeddings and not use_dep:
        raise encoder.EncoderError(
            "--embeddings none and --no-dep together leave no input channel"
        )
    vocab = build_vocabulary(datasets, args.min_count) if use_embeddings else None
    tags = build_dep_tags(datasets) if use_dep else None
    base_table = None
    source = Provenance.NONE
    if use_embeddings:
        if args.embeddings == "random":
            base_table = embedding.random_table(vocab, args.dim, derive_seed(args.seed, "table"))
            source = Provenance.RANDOM
        else:
            base_table = embedding.import_word2vec(
                args.embeddings, vocab, seed=derive_seed(args.seed, "table")
            )
            source = Provenance.IMPORTED
    config = EncoderConfig(
        use_embeddings=use_embeddings,
        use_dep_onehot=use_dep,
        embedding_source=source,
        trainable_embeddings=use_embeddings and not args.freeze_embeddings,
    )
    return vocab, tags, base_table, config


def _train_config(args, purpose: str) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        max_epochs=args.epochs,
        patience=args.patience,
        seed=derive_seed(args.seed, purpose),
        hidden_size=args.hidden,
        dense_size=args.dense,
    )


# --- commands -----------------------------------------------------------------

def cmd_embed(args) -> int:
    ds = load_jsonl(args.corpus, args.kind)
    vocab = build_vocabulary([ds], args.min_count)
    config = SkipGramConfig(
        window=args.window,
        negatives_per_word=args.negatives,
        dim=args.dim,
        epochs=args.epochs,
        learning_rate=args.lr,
        seed=derive_seed(args.seed, "embed"),
        subsample_threshold=args.subsample,
    )
    table = embedding.train_skipgram(ds, vocab, config)
    out = Path(args.out)
    tmp = out.with_name(f"{out.name}.tmp-{os.getpid()}")
    embedding.save_word2vec_text(table, vocab, tmp)
    os.replace(tmp, out)
    sidecar = Path(str(out) + ".npz")
    _atomic_savez(lambda p: embedding.save_table_npz(table, vocab, p), sidecar)
    _write_manifest(out, "embed", args, [args.corpus], [out, sidecar])
    print(f"trained {len(vocab)} x {table.dim} embedding table -> {out}")
    return 0


def cmd_train(args) -> int:
    gold = load_jsonl(args.gold, DatasetKind.GOLD)
    weak = load_jsonl(args.weak, DatasetKind.WEAK) if args.weak else None
    datasets = [gold] + ([weak] if weak else [])
    vocab, tags, table, enc_config = _build_encoder_setup(args, datasets)

    def encode_fn(s):
        return encode(s, vocab, table, tags, enc_config)

    rng = rng_for(args.seed, "train-validation")
    sentences = gold.sentences
    n_valid = min(max(1, int(round(args.valid_fraction * len(sentences)))), len(sentences) - 1)
    valid_pos = set(rng.choice(len(sentences), size=n_valid, replace=False).tolist())
    gold_train = weaksup.gold_examples(
        [s for i, s in enumerate(sentences) if i not in valid_pos], encode_fn)
    gold_valid = weaksup.gold_examples(
        [s for i, s in enumerate(sentences) if i in valid_pos], encode_fn)

    threshold = None
    if weak is not None:
        positive_fraction = float(np.mean([s.label for s in sentences]))
        if positive_fraction <= 0.0:
            raise weaksup.WeakSupError("gold data has no check-worthy sentences; cannot match tau")
        tau = weaksup.find_tau([s.label for s in weak.sentences], positive_fraction).tau
        threshold = weaksup.ThresholdConfig(
            tau=min(max(tau, 1e-9), 1 - 1e-9), mode=ThresholdMode(args.mode.replace("-", "_"))
        )
    result = weaksup.pretrain_finetune(
        weak, gold_train, gold_valid, threshold,
        _train_config(args, "pretrain"), _train_config(args, "finetune"),
        encode_fn, table=table, trainable_embeddings=enc_config.trainable_embeddings,
    )
    out = Path(args.out)
    _atomic_savez(
        lambda p: network.save_checkpoint(p, result.params, enc_config, vocab, tags, table),
        out,
    )
    inputs = [args.gold] + ([args.weak] if args.weak else [])
    _write_manifest(out, "train", args, inputs, [out])
    print(f"best epoch {result.best_epoch}, validation MAP {result.best_valid_map:.4f} -> {out}")
    return 0


def cmd_rank(args) -> int:
    ckpt = network.load_checkpoint(args.model)
    ds = load_jsonl(args.data, args.kind)
    rows = []
    for s in ds.sentences:
        enc = encode(s, ckpt.vocab, ckpt.table, ckpt.tags, ckpt.encoder_config)
        pred = network.forward(enc, ckpt.params, ckpt.table)
        rows.append((s.id, s.speech_id, pred.score))
    rows.sort(key=lambda r: (-r[2], r[0]))
    lines = ["sentence_id,speech_id,score"]
    lines += [f"{sid},{speech},{score:.6f}" for sid, speech, score in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        _atomic_write_text(args.out, text)
        _write_manifest(args.out, "rank", args, [args.model, args.data], [args.out])
    else:
        sys.stdout.write(text)
    return 0


def _eval_report(args, gold, weak) -> evaluation.EvalReport:
    datasets = [gold] + ([weak] if weak else [])
    vocab, tags, base_table, enc_config = _build_encoder_setup(args, datasets)
    plan = build_fold_plan(
        gold, args.valid_fraction, args.repetitions, seed=derive_seed(args.seed, "plan")
    )

    def factory():
        table = base_table.copy() if base_table is not None else None

        def encode_fn(s):
            return encode(s, vocab, table, tags, enc_config)

        return encode_fn, table

    pipeline = weaksup.standard_pipeline(
        factory,
        _train_config(args, "train"),
        weak=weak,
        mode=ThresholdMode(args.mode.replace("-", "_")),
        trainable_embeddings=enc_config.trainable_embeddings,
    )
    return evaluation.run_protocol(
        gold, plan, pipeline, jobs=args.jobs, pooled=getattr(args, "pooled", False)
    )


def cmd_eval(args) -> int:
    gold = load_jsonl(args.gold, DatasetKind.GOLD)
    weak = load_jsonl(args.weak, DatasetKind.WEAK) if args.weak else None
    report = _eval_report(args, gold, weak)
    if args.compare:
        baseline = evaluation.EvalReport.from_dict(
            json.loads(Path(args.compare).read_text(encoding="utf-8"))
        )
        report.significance = evaluation.compare_reports(report, baseline)
    _atomic_write_text(args.out, report.to_json() + "\n")
    outputs = [args.out]
    if args.csv:
        _atomic_write_text(args.csv, report.per_fold_csv())
        outputs.append(args.csv)
    inputs = [args.gold] + ([args.weak] if args.weak else [])
    if args.compare:
        inputs.append(args.compare)
    _write_manifest(args.out, "eval", args, inputs, outputs)
    print(report.summary_table())
    if report.significance:
        for metric, stats in report.significance.items():
            print(f"{metric}: diff {stats['mean_diff']:+.4f}, p = {stats['p']:.4f}")
    return 0


def cmd_sweep(args) -> int:
    gold = load_jsonl(args.gold, DatasetKind.GOLD)
    weak = load_jsonl(args.weak, DatasetKind.WEAK)
    datasets = [gold, weak]
    vocab, tags, base_table, enc_config = _build_encoder_setup(args, datasets)
    plan = build_fold_plan(
        gold, args.valid_fraction, args.repetitions, seed=derive_seed(args.seed, "plan")
    )
    sweep_config = SweepConfig(
        fractions=_parse_fractions(args.fractions) if args.fractions else SweepConfig().fractions,
        resamples=args.resamples,
        seed=derive_seed(args.seed, "sweep"),
    )

    def factory():
        table = base_table.copy() if base_table is not None else None

        def encode_fn(s):
            return encode(s, vocab, table, tags, enc_config)

        return encode_fn, table

    def pipeline_factory(subset):
        return weaksup.standard_pipeline(
            factory,
            _train_config(args, "train"),
            weak=subset,
            mode=ThresholdMode(args.mode.replace("-", "_")),
            trainable_embeddings=enc_config.trainable_embeddings,
        )

    result = weaksup.weak_fraction_sweep(weak, gold, plan, sweep_config, pipeline_factory)
    _atomic_write_text(args.out, result.to_csv())
    _write_manifest(args.out, "sweep", args, [args.gold, args.weak], [args.out])
    for fraction in sweep_config.fractions:
        means = result.fraction_means[fraction]
        print(f"fraction {fraction:.1f}: MAP {means['MAP']:.4f}")
    return 0


def cmd_overlap(args) -> int:
    ds = load_jsonl(args.data, args.kind)
    config = analysis.OverlapConfig(
        n=args.n, trials=args.trials,
        positive_threshold=args.threshold, seed=derive_seed(args.seed, "overlap"),
    )
    results = analysis.overlap_experiment(ds, config)
    lines = ["group,mean_overlap,std_overlap"]
    lines += [f"{r.group.value},{r.mean_overlap:.6f},{r.std_overlap:.6f}" for r in results]
    text = "\n".join(lines) + "\n"
    if args.out:
        _atomic_write_text(args.out, text)
        _write_manifest(args.out, "overlap", args, [args.data], [args.out])
    for r in results:
        print(f"{r.group.value:18} {r.mean_overlap:6.2f} +/- {r.std_overlap:.2f}")
    return 0


def cmd_explain(args) -> int:
    ckpt = network.load_checkpoint(args.model)
    ds = load_jsonl(args.data, args.kind)
    sentences = ds.sentences[: args.limit] if args.limit else ds.sentences
    explanations = [
        analysis.explain(s, ckpt.params, ckpt.vocab, ckpt.table, ckpt.tags, ckpt.encoder_config)
        for s in sentences
    ]
    text = analysis.render_report(explanations, format=args.format)
    if args.out:
        _atomic_write_text(args.out, text)
        _write_manifest(args.out, "explain", args, [args.model, args.data], [args.out])
    else:
        sys.stdout.write(text)
    return 0


def cmd_stats(args) -> int:
    ds = load_jsonl(args.data, args.kind)
    stats = corpus.dataset_stats(ds)
    mean_label = "-" if stats.mean_label is None else f"{stats.mean_label:.4f}"
    print(f"documents:        {stats.num_docs}")
    print(f"sentences:        {stats.num_sentences}")
    print(f"mean length:      {stats.mean_sentence_length:.2f}")
    print(f"unique words:     {stats.num_unique_words}")
    print(f"mean label:       {mean_label}")
    outputs = []
    if args.out:
        header = "num_docs,num_sentences,mean_sentence_length,num_unique_words,mean_label"
        value = "" if stats.mean_label is None else f"{stats.mean_label:.6f}"
        row = (f"{stats.num_docs},{stats.num_sentences},"
               f"{stats.mean_sentence_length:.6f},{stats.num_unique_words},{value}")
        _atomic_write_text(args.out, f"{header}\n{row}\n")
        outputs.append(args.out)
    if args.histogram_out:
        _atomic_write_text(args.histogram_out, _label_histogram_csv(ds))
        outputs.append(args.histogram_out)
    if outputs:
        _write_manifest(outputs[0], "stats", args, [args.data], outputs)
    return 0


def _label_histogram_csv(ds, bins: int = 10) -> str:
    """Per-speaker label histogram, the CSV behind the score-distribution plot."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    by_speaker: dict[str, list[float]] = {}
    for s in ds.sentences:
        if s.label is None:
            continue
        by_speaker.setdefault(s.speaker or "(unknown)", []).append(s.label)
    lines = ["speaker,bin_lo,bin_hi,count"]
    for speaker in sorted(by_speaker):
        counts, _ = np.histogram(by_speaker[speaker], bins=edges)
        for i, count in enumerate(counts):
            lines.append(f"{speaker},{edges[i]:.1f},{edges[i + 1]:.1f},{int(count)}")
    return "\n".join(lines) + "\n"


# --- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="checkworthy",
        description="Neural check-worthiness sentence ranking pipeline",
    )
    parser.add_argument("--config", help="KEY=VALUE config file (flags take precedence)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1,
                       help="fold/trial parallelism (default 1, deterministic)")
        return p

    p = common(sub.add_parser("embed", help="train skip-gram word embeddings"))
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", default="unlabelled", choices=[k.value for k in DatasetKind])
    p.add_argument("--dim", type=int, default=300)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=25)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.025)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--subsample", type=float, default=1e-3)
    p.set_defaults(func=cmd_embed)

    p = common(sub.add_parser("train", help="train a scorer on gold (and weak) data"))
    p.add_argument("--gold", required=True)
    p.add_argument("--weak")
    p.add_argument("--mode", default="truncate-scale",
                   choices=["binarize", "truncate-scale"])
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("rank", help="score and rank sentences with a model"))
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--kind", default="unlabelled", choices=[k.value for k in DatasetKind])
    p.add_argument("--out")
    p.set_defaults(func=cmd_rank)

    p = common(sub.add_parser("eval", help="run the cross-validation protocol"))
    p.add_argument("--gold", required=True)
    p.add_argument("--weak")
    p.add_argument("--mode", default="truncate-scale",
                   choices=["binarize", "truncate-scale"])
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--pooled", action="store_true",
                   help="rank each fold's test sentences as one pooled query")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="also write raw per-fold metrics")
    p.add_argument("--compare", help="baseline report JSON for significance tests")
    _add_model_flags(p)
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("sweep", help="vary the weak-data fraction"))
    p.add_argument("--gold", required=True)
    p.add_argument("--weak", required=True)
    p.add_argument("--mode", default="truncate-scale",
                   choices=["binarize", "truncate-scale"])
    p.add_argument("--fractions", help="comma list or start:stop:step (default 0:1:0.1)")
    p.add_argument("--resamples", type=int, default=5)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = common(sub.add_parser("overlap", help="dependency-tag overlap statistics"))
    p.add_argument("--data", required=True)
    p.add_argument("--kind", default="gold", choices=[k.value for k in DatasetKind])
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_overlap)

    p = common(sub.add_parser("explain", help="attention-weight explanation report"))
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--kind", default="gold", choices=[k.value for k in DatasetKind])
    p.add_argument("--format", default="html", choices=["html", "ansi", "json"])
    p.add_argument("--limit", type=int, default=0, help="explain only the first N sentences")
    p.add_argument("--out")
    p.set_defaults(func=cmd_explain)

    p = common(sub.add_parser("stats", help="dataset summary statistics"))
    p.add_argument("--data", required=True)
    p.add_argument("--kind", default="gold", choices=[k.value for k in DatasetKind])
    p.add_argument("--out", help="write the summary row as CSV")
    p.add_argument("--histogram-out", help="write per-speaker label histogram CSV")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        config_values = _load_config_file(known.config)
        for action in parser._subparsers._group_actions[0].choices.values():
            valid = {a.dest for a in action._actions}
            action.set_defaults(**{k: v for k, v in config_values.items() if k in valid})
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
