import json
import os

import numpy as np
import pytest

from checkworthy.cli import main
from checkworthy.corpus import DatasetKind, load_jsonl, save_jsonl
from checkworthy.weaksup import SweepConfig
from synthbench import build_benchmark


@pytest.fixture
def data_dir(tmp_path):
    gold, weak = build_benchmark(seed=11, n_speeches=3, per_speech=8, weak_sentences=24)
    gold_path = tmp_path / "gold.jsonl"
    weak_path = tmp_path / "weak.jsonl"
    save_jsonl(gold, gold_path)
    save_jsonl(weak, weak_path)
    return tmp_path, gold_path, weak_path


FAST_EVAL = ["--hidden", "4", "--dense", "2", "--dim", "6", "--epochs", "2",
             "--patience", "2", "--batch", "8", "--lr", "0.01"]


def test_stats_prints_summary(data_dir, capsys):
    tmp, gold_path, _ = data_dir
    out_csv = tmp / "stats.csv"
    hist_csv = tmp / "hist.csv"
    code = main(["stats", "--data", str(gold_path), "--kind", "gold",
                 "--out", str(out_csv), "--histogram-out", str(hist_csv)])
    assert code == 0
    printed = capsys.readouterr().out
    assert "sentences:        24" in printed
    header = out_csv.read_text().splitlines()[0]
    assert header.startswith("num_docs,num_sentences")
    hist_lines = hist_csv.read_text().splitlines()
    assert hist_lines[0] == "speaker,bin_lo,bin_hi,count"
    assert len(hist_lines) == 1 + 10  # one unknown speaker, ten bins
    assert (tmp / "stats.csv.manifest.json").exists()


def test_stats_missing_file_is_error(tmp_path, capsys):
    code = main(["stats", "--data", str(tmp_path / "nope.jsonl")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_embed_defaults_and_dim_flag(data_dir, capsys):
    tmp, gold_path, _ = data_dir
    out = tmp / "vectors.txt"
    code = main(["embed", "--corpus", str(gold_path), "--kind", "gold",
                 "--out", str(out), "--window", "5", "--negatives", "25",
                 "--dim", "50", "--epochs", "1", "--seed", "3"])
    assert code == 0
    header = out.read_text().splitlines()[0].split()
    assert header[1] == "50"
    sidecar = tmp / "vectors.txt.npz"
    assert sidecar.exists()
    manifest = json.loads((tmp / "vectors.txt.manifest.json").read_text())
    assert manifest["command"] == "embed"
    assert manifest["config"]["window"] == 5
    assert manifest["config"]["negatives"] == 25


def test_embed_requires_corpus(capsys):
    with pytest.raises(SystemExit) as err:
        main(["embed", "--out", "x.txt"])
    assert err.value.code == 2


def test_train_rank_explain_round_trip(data_dir, capsys):
    tmp, gold_path, weak_path = data_dir
    model = tmp / "model.npz"
    code = main(["train", "--gold", str(gold_path), "--weak", str(weak_path),
                 "--mode", "truncate-scale", "--out", str(model),
                 "--seed", "1", *FAST_EVAL])
    assert code == 0
    assert model.exists()

    ranked = tmp / "ranked.csv"
    code = main(["rank", "--model", str(model), "--data", str(gold_path),
                 "--kind", "gold", "--out", str(ranked)])
    assert code == 0
    lines = ranked.read_text().splitlines()
    assert lines[0] == "sentence_id,speech_id,score"
    scores = [float(line.split(",")[2]) for line in lines[1:]]
    assert scores == sorted(scores, reverse=True)
    assert len(scores) == 24

    report = tmp / "explain.html"
    code = main(["explain", "--model", str(model), "--data", str(gold_path),
                 "--kind", "gold", "--format", "html", "--limit", "5",
                 "--out", str(report)])
    assert code == 0
    assert report.read_text().startswith("<!DOCTYPE html>")

    capsys.readouterr()  # drop output from the earlier commands
    code = main(["explain", "--model", str(model), "--data", str(gold_path),
                 "--kind", "gold", "--format", "json"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert len(payload) == 24
    for entry in payload:
        assert abs(sum(t["alpha"] for t in entry["tokens"]) - 1.0) < 1e-6


def test_eval_writes_report_and_is_deterministic(data_dir, capsys):
    tmp, gold_path, weak_path = data_dir
    args = ["eval", "--gold", str(gold_path), "--repetitions", "2",
            "--seed", "7", *FAST_EVAL]
    out_a, out_b = tmp / "a.json", tmp / "b.json"
    assert main(args + ["--out", str(out_a), "--csv", str(tmp / "a.csv")]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()
    report = json.loads(out_a.read_text())
    assert set(report["grand_means"]) == {"MAP", "P@5", "P@10", "P@20", "P@R"}
    assert len(report["per_repetition_means"]) == 2
    assert len(report["rows"]) == 2 * 3  # repetitions x folds
    csv_lines = (tmp / "a.csv").read_text().splitlines()
    assert csv_lines[0].startswith("repetition,fold_index,query_id")
    assert len(csv_lines) == 1 + 6


def test_eval_rejects_empty_encoder(data_dir, capsys):
    tmp, gold_path, _ = data_dir
    code = main(["eval", "--gold", str(gold_path), "--embeddings", "none",
                 "--no-dep", "--out", str(tmp / "r.json")])
    assert code == 1
    assert "channel" in capsys.readouterr().err


def test_eval_with_weak_supervision_and_compare(data_dir, capsys):
    tmp, gold_path, weak_path = data_dir
    base_out = tmp / "plain.json"
    assert main(["eval", "--gold", str(gold_path), "--repetitions", "2",
                 "--seed", "7", "--out", str(base_out), *FAST_EVAL]) == 0
    weak_out = tmp / "weak.json"
    assert main(["eval", "--gold", str(gold_path), "--weak", str(weak_path),
                 "--mode", "truncate-scale", "--repetitions", "2", "--seed", "7",
                 "--out", str(weak_out), "--compare", str(base_out), *FAST_EVAL]) == 0
    report = json.loads(weak_out.read_text())
    assert report["significance"] is not None
    assert "MAP" in report["significance"]
    assert 0.0 <= report["significance"]["MAP"]["p"] <= 1.0


def test_sweep_rows_cover_fractions_and_resamples(data_dir):
    tmp, gold_path, weak_path = data_dir
    out = tmp / "sweep.csv"
    code = main(["sweep", "--gold", str(gold_path), "--weak", str(weak_path),
                 "--fractions", "0,1", "--resamples", "2", "--repetitions", "1",
                 "--seed", "5", "--out", str(out), *FAST_EVAL])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "fraction,repetition,MAP,P@5,P@10,P@20,P@R"
    assert len(lines) == 1 + 4  # 2 fractions x 2 resamples


def test_sweep_defaults_cover_eleven_fractions_five_resamples():
    config = SweepConfig()
    assert config.fractions == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
    assert config.resamples == 5


def test_overlap_csv(data_dir):
    tmp, gold_path, _ = data_dir
    out = tmp / "overlap.csv"
    code = main(["overlap", "--data", str(gold_path), "--kind", "gold",
                 "--n", "3", "--trials", "20", "--seed", "2", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "group,mean_overlap,std_overlap"
    assert [line.split(",")[0] for line in lines[1:]] == [
        "checkworthy", "non_checkworthy", "mixed"]


def test_config_file_defaults_and_flag_precedence(data_dir):
    tmp, gold_path, _ = data_dir
    config = tmp / "run.conf"
    config.write_text("# defaults for quick runs\nn = 3\ntrials = 10\nseed = 9\n")
    out1 = tmp / "o1.csv"
    assert main(["--config", str(config), "overlap", "--data", str(gold_path),
                 "--kind", "gold", "--out", str(out1)]) == 0
    manifest = json.loads((tmp / "o1.csv.manifest.json").read_text())
    assert manifest["config"]["n"] == 3
    assert manifest["config"]["trials"] == 10
    assert manifest["seed"] == 9
    out2 = tmp / "o2.csv"
    assert main(["--config", str(config), "overlap", "--data", str(gold_path),
                 "--kind", "gold", "--trials", "15", "--out", str(out2)]) == 0
    manifest2 = json.loads((tmp / "o2.csv.manifest.json").read_text())
    assert manifest2["config"]["trials"] == 15   # flag beats config file


def test_manifest_records_input_hashes(data_dir):
    tmp, gold_path, _ = data_dir
    out = tmp / "s.csv"
    assert main(["stats", "--data", str(gold_path), "--kind", "gold",
                 "--out", str(out)]) == 0
    manifest = json.loads((tmp / "s.csv.manifest.json").read_text())
    assert str(gold_path) in manifest["inputs"]
    assert len(manifest["inputs"][str(gold_path)]) == 64
    assert "created_utc" in manifest
