"""Schema fuzzing: mutated corpus lines must be rejected by the ranking
package's loader with a diagnostic that names the offending line.
"""

import json
import random

import pytest

from checkworthy.corpus import CorpusError, DatasetKind, load_jsonl


def _drop_field(obj, rng):
    del obj[rng.choice(["id", "speech_id", "tokens"])]
    return obj


def _bad_label_high(obj, rng):
    obj["label"] = 1.0 + rng.random()
    return obj


def _bad_label_low(obj, rng):
    obj["label"] = -rng.random() - 0.01
    return obj


def _non_binary_gold(obj, rng):
    obj["label"] = round(rng.uniform(0.05, 0.95), 3)
    return obj


def _null_label(obj, rng):
    obj["label"] = None
    return obj


def _label_string(obj, rng):
    obj["label"] = "high"
    return obj


def _empty_tokens(obj, rng):
    obj["tokens"] = []
    return obj


def _token_missing_dep(obj, rng):
    del obj["tokens"][0]["dep"]
    return obj


def _token_empty_text(obj, rng):
    obj["tokens"][0]["text"] = ""
    return obj


def _token_non_string(obj, rng):
    obj["tokens"][0]["dep"] = 7
    return obj


def _id_non_string(obj, rng):
    obj["id"] = 42
    return obj


def _tokens_not_list(obj, rng):
    obj["tokens"] = {"text": "x", "dep": "y"}
    return obj


MUTATORS = [
    _drop_field, _bad_label_high, _bad_label_low, _non_binary_gold,
    _null_label, _label_string, _empty_tokens, _token_missing_dep,
    _token_empty_text, _token_non_string, _id_non_string, _tokens_not_list,
]


def test_hundred_mutated_lines_rejected_with_line_numbers(golden_dir, tmp_path):
    source_lines = (golden_dir / "expected.jsonl").read_text().splitlines()
    rng = random.Random(20240801)
    rejected = 0
    for case in range(100):
        base = [dict(json.loads(l)) for l in source_lines[:3]]
        target = rng.randrange(len(base))
        kind = rng.randrange(len(MUTATORS) + 2)
        lines = [json.dumps(obj, ensure_ascii=False) for obj in base]
        if kind == len(MUTATORS):            # structurally broken JSON
            lines[target] = lines[target][: len(lines[target]) // 2]
        elif kind == len(MUTATORS) + 1:      # duplicate id of a previous line
            target = max(1, target)
            lines[target] = lines[0]
        else:
            mutated = MUTATORS[kind](json.loads(lines[target]), rng)
            lines[target] = json.dumps(mutated, ensure_ascii=False)
        path = tmp_path / f"fuzz-{case:03d}.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(CorpusError) as err:
            load_jsonl(path, DatasetKind.GOLD)
        message = str(err.value)
        assert f"{path.name}:{target + 1}" in message, (
            f"case {case}: diagnostic {message!r} does not name line {target + 1}")
        rejected += 1
    assert rejected == 100


def test_cli_rejects_mutated_file_with_line_number(golden_dir, tmp_path, capsys):
    from checkworthy.cli import main as primary_main

    lines = (golden_dir / "expected.jsonl").read_text().splitlines()
    obj = json.loads(lines[1])
    obj["label"] = 2.5
    lines[1] = json.dumps(obj, ensure_ascii=False)
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines) + "\n", encoding="utf-8")
    code = primary_main(["stats", "--data", str(bad), "--kind", "gold"])
    assert code == 1
    assert "bad.jsonl:2" in capsys.readouterr().err
