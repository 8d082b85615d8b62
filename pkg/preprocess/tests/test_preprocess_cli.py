import json

from preprocess.cli import main


def test_end_to_end_matches_golden(golden_dir, tmp_path, capsys):
    out = tmp_path / "corpus.jsonl"
    code = main(["--in", str(golden_dir / "transcripts"),
                 "--labels", str(golden_dir / "labels.tsv"),
                 "--out", str(out)])
    assert code == 0
    assert out.read_bytes() == (golden_dir / "expected.jsonl").read_bytes()
    manifest = json.loads((tmp_path / "corpus.jsonl.manifest.json").read_text())
    assert manifest["parser"] == "builtin-1.0.0"
    assert manifest["sentences"] == 23
    assert manifest["labelled"] == 23
    assert "ROOT" in manifest["tag_inventory"]


def test_unlabelled_run(golden_dir, tmp_path):
    out = tmp_path / "corpus.jsonl"
    code = main(["--in", str(golden_dir / "transcripts"), "--out", str(out)])
    assert code == 0
    first = json.loads(out.read_text().splitlines()[0])
    assert first["label"] is None


def test_missing_transcripts_dir(tmp_path, capsys):
    code = main(["--in", str(tmp_path / "nope"), "--out", str(tmp_path / "o.jsonl")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_unmatched_over_threshold_fails(golden_dir, tmp_path, capsys):
    labels = tmp_path / "partial.tsv"
    labels.write_text("rally-2016-03-01\t0\t1\n")
    code = main(["--in", str(golden_dir / "transcripts"), "--labels", str(labels),
                 "--out", str(tmp_path / "o.jsonl")])
    assert code == 1
    assert "no label" in capsys.readouterr().err


def test_unmatched_keys_warn_but_do_not_fail(golden_dir, tmp_path, capsys):
    labels_text = (golden_dir / "labels.tsv").read_text()
    labels = tmp_path / "extra.tsv"
    labels.write_text(labels_text + "ghost-speech\t0\t1\n")
    out = tmp_path / "o.jsonl"
    code = main(["--in", str(golden_dir / "transcripts"), "--labels", str(labels),
                 "--out", str(out)])
    assert code == 0
    assert "matched no sentence" in capsys.readouterr().err
