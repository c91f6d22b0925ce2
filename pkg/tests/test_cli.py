"""Command-line tests: every subcommand end to end on a small corpus, exit
codes, config-file resolution, and pipeline caching."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from mailmasq.cli import main
from mailmasq.lstm_lm import load_checkpoint
from mailmasq.synthetic import make_corpus, write_corpus

TINY_MODEL = [
    "--layers", "1", "--hidden", "8", "--embed-dim", "4",
    "--seq-len", "5", "--batch-size", "2", "--epochs", "2",
]


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """A workspace with raw corpora, preprocessed corpora, and a tiny checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    legit_raw = root / "legit.jsonl"
    phish_raw = root / "phish.jsonl"
    write_corpus(legit_raw, make_corpus("legitimate", 30, seed=31))
    write_corpus(phish_raw, make_corpus("phishing", 20, seed=32))

    out = root / "out"
    assert main(["preprocess", "--in", str(legit_raw), "--label", "legitimate", "--out", str(out)]) == 0
    assert main(["preprocess", "--in", str(phish_raw), "--label", "phishing", "--out", str(out)]) == 0
    assert main([
        "train", "--legit", str(out / "preprocessed_legitimate.jsonl"),
        "--phish", str(out / "preprocessed_phishing.jsonl"),
        "--fraction", "0.2", "--seed", "5", "--out", str(out), *TINY_MODEL,
    ]) == 0
    return {"root": root, "out": out, "legit_raw": legit_raw, "phish_raw": phish_raw}


def read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


# -- top level -----------------------------------------------------------------------

def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_threads_must_be_positive(work):
    with pytest.raises(SystemExit) as exc:
        main(["stats", str(work["legit_raw"]), "--threads", "0"])
    assert exc.value.code == 2


# -- stats ----------------------------------------------------------------------------

def test_stats_prints_table_and_writes_json(work, tmp_path, capsys):
    code = main(["stats", str(work["legit_raw"]), "--json", "--out", str(tmp_path)])
    assert code == 0
    shown = capsys.readouterr().out
    assert "Count" in shown and "Avg. L" in shown and "Avg. V" in shown
    stats = json.loads((tmp_path / "stats.json").read_text())
    entry = stats[str(work["legit_raw"])]
    assert entry["count"] == 30
    assert entry["avg_vocab"] <= entry["avg_length"]


def test_stats_missing_path_exits_2(tmp_path):
    assert main(["stats", str(tmp_path / "ghost.jsonl")]) == 2


# -- preprocess -------------------------------------------------------------------------

def test_preprocess_artifacts(work):
    out = work["out"]
    rows = read_jsonl(out / "preprocessed_legitimate.jsonl")
    assert len(rows) == 30
    assert set(rows[0]) == {"id", "label", "tokens"}
    assert rows[0]["label"] == "legitimate"
    assert all(isinstance(t, str) for t in rows[0]["tokens"])
    report = json.loads((out / "filter_report_legitimate.json").read_text())
    assert report["kept"] == 30
    assert report["dropped"] == []


def test_preprocess_missing_input_exits_2(tmp_path):
    assert main(["preprocess", "--in", str(tmp_path / "none.jsonl"), "--out", str(tmp_path)]) == 2


def test_preprocess_with_spans_sidecar(tmp_path):
    corpus = tmp_path / "c.jsonl"
    corpus.write_text(json.dumps({"id": "m1", "body": "Meet Sarah at Enron"}) + "\n")
    sidecar = tmp_path / "spans.json"
    sidecar.write_text(json.dumps({"m1": [[5, 10], [14, 19]]}))
    assert main([
        "preprocess", "--in", str(corpus), "--spans", str(sidecar),
        "--ner", "spans", "--out", str(tmp_path),
    ]) == 0
    rows = read_jsonl(tmp_path / "preprocessed_legitimate.jsonl")
    assert rows[0]["tokens"] == ["meet", "<NET>", "at", "<NET>"]


# -- mix ---------------------------------------------------------------------------------

def test_mix_writes_selection(work, tmp_path):
    out = work["out"]
    code = main([
        "mix", "--legit", str(out / "preprocessed_legitimate.jsonl"),
        "--phish", str(out / "preprocessed_phishing.jsonl"),
        "--fraction", "0.25", "--seed", "3", "--out", str(tmp_path),
    ])
    assert code == 0
    mix = json.loads((tmp_path / "mix.json").read_text())
    assert mix["fraction"] == 0.25
    assert len(mix["legit_ids"]) == 30
    assert len(mix["phish_ids"]) == 5  # round_half_up(0.25 * 20)
    assert mix["phish_ids"] == sorted(mix["phish_ids"])


def test_mix_flag_overrides_config_file(work, tmp_path):
    out = work["out"]
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "legit": str(out / "preprocessed_legitimate.jsonl"),
        "phish": str(out / "preprocessed_phishing.jsonl"),
        "fraction": 0.25,
    }))
    assert main(["mix", "--config", str(cfg), "--fraction", "0.5", "--out", str(tmp_path)]) == 0
    mix = json.loads((tmp_path / "mix.json").read_text())
    assert mix["fraction"] == 0.5  # the flag wins over the config value
    assert len(mix["phish_ids"]) == 10


def test_mix_requires_corpora(tmp_path):
    assert main(["mix", "--fraction", "0.1", "--out", str(tmp_path)]) == 2


# -- train --------------------------------------------------------------------------------

def test_train_artifacts(work):
    out = work["out"]
    ck = load_checkpoint(out / "model.ckpt")
    assert ck.epoch == 2
    assert len(ck.loss_trace) == 2
    assert ck.config.hidden == 8
    trace = json.loads((out / "loss_trace.json").read_text())
    assert trace["loss_trace"] == ck.loss_trace
    assert trace["vocab_size"] == ck.vocab.size


def test_train_resume_extends_checkpoint(work, tmp_path):
    out = work["out"]
    code = main([
        "train", "--legit", str(out / "preprocessed_legitimate.jsonl"),
        "--phish", str(out / "preprocessed_phishing.jsonl"),
        "--fraction", "0.2", "--seed", "5", "--out", str(tmp_path),
        "--resume", str(out / "model.ckpt"), "--epochs", "3",
    ])
    assert code == 0
    resumed = load_checkpoint(tmp_path / "model.ckpt")
    assert resumed.epoch == 3
    assert resumed.loss_trace[:2] == load_checkpoint(out / "model.ckpt").loss_trace


def test_train_resume_rejects_non_increasing_epochs(work, tmp_path):
    out = work["out"]
    code = main([
        "train", "--legit", str(out / "preprocessed_legitimate.jsonl"),
        "--phish", str(out / "preprocessed_phishing.jsonl"),
        "--fraction", "0.2", "--out", str(tmp_path),
        "--resume", str(out / "model.ckpt"), "--epochs", "2",
    ])
    assert code == 2


def test_train_missing_mix_file_exits_2(work, tmp_path):
    out = work["out"]
    code = main([
        "train", "--legit", str(out / "preprocessed_legitimate.jsonl"),
        "--phish", str(out / "preprocessed_phishing.jsonl"),
        "--mix", str(tmp_path / "ghost.json"), "--out", str(tmp_path),
    ])
    assert code == 2


# -- sample --------------------------------------------------------------------------------

def test_sample_set_counts_and_reproducibility(work, tmp_path):
    ckpt = str(work["out"] / "model.ckpt")
    a, b = tmp_path / "a", tmp_path / "b"
    for dest in (a, b):
        assert main([
            "sample", "--ckpt", ckpt, "--temps", "0.5:2,1.0:1",
            "--n", "8", "--seed", "9", "--out", str(dest),
        ]) == 0
    rows = read_jsonl(a / "generated.jsonl")
    assert len(rows) == 3
    assert [r["temperature"] for r in rows] == [0.5, 0.5, 1.0]
    assert all(len(r["body"].split()) == 8 for r in rows)
    assert (a / "generated.jsonl").read_bytes() == (b / "generated.jsonl").read_bytes()
    diag = json.loads((a / "diagnostics.json").read_text())
    assert set(diag) == {r["id"] for r in rows}
    assert all("max_consecutive_repeat" in d for d in diag.values())


def test_sample_single_email_mode(work, tmp_path):
    ckpt = str(work["out"] / "model.ckpt")
    assert main([
        "sample", "--ckpt", ckpt, "--temp", "0.7", "--n", "5", "--out", str(tmp_path),
    ]) == 0
    rows = read_jsonl(tmp_path / "generated.jsonl")
    assert len(rows) == 1
    assert rows[0]["temperature"] == 0.7


def test_sample_greedy_mode_is_deterministic(work, tmp_path):
    ckpt = str(work["out"] / "model.ckpt")
    a, b = tmp_path / "a", tmp_path / "b"
    for dest, seed in ((a, "1"), (b, "2")):
        assert main([
            "sample", "--ckpt", ckpt, "--greedy", "--n", "6", "--seed", seed, "--out", str(dest),
        ]) == 0
    first = read_jsonl(a / "generated.jsonl")[0]["body"]
    second = read_jsonl(b / "generated.jsonl")[0]["body"]
    assert first == second  # greedy ignores the seed


def test_sample_rejects_bad_temps(work, tmp_path):
    ckpt = str(work["out"] / "model.ckpt")
    assert main(["sample", "--ckpt", ckpt, "--temps", "0.5:2,0.5:1", "--out", str(tmp_path)]) == 2
    assert main(["sample", "--ckpt", ckpt, "--temps", "warm", "--out", str(tmp_path)]) == 2
    assert main(["sample", "--ckpt", str(tmp_path / "no.ckpt"), "--out", str(tmp_path)]) == 2


# -- detect --------------------------------------------------------------------------------

def test_detect_writes_table_and_report(work, tmp_path, capsys):
    out = work["out"]
    code = main([
        "detect",
        "--train-legit", str(out / "preprocessed_legitimate.jsonl"),
        "--train-phish", str(out / "preprocessed_phishing.jsonl"),
        "--test-legit", str(out / "preprocessed_legitimate.jsonl"),
        "--test-generated", str(out / "preprocessed_phishing.jsonl"),
        "--out", str(tmp_path),
    ])
    assert code == 0
    shown = capsys.readouterr().out
    assert "SVM" in shown and "NB" in shown and "LR" in shown
    report = json.loads((tmp_path / "detection_report.json").read_text())
    assert set(report["reports"]) == {"svm", "nb", "lr"}
    assert report["split"]["test_generated"] == 20
    for entry in report["reports"].values():
        assert entry["positive_class"] == "legitimate"
        total = entry["tp"] + entry["fp"] + entry["tn"] + entry["fn"]
        assert total == 50  # 30 legit + 20 generated


def test_detect_requires_corpora(tmp_path):
    assert main(["detect", "--out", str(tmp_path)]) == 2


# -- pipeline -------------------------------------------------------------------------------

PIPELINE_OVERRIDES = [
    "--fraction", "0.3", "--n", "6", "--temps", "0.5:2,1.0:1",
    "--det-train-legit", "10", "--det-test-legit", "8",
    "--det-train-phish", "8", "--det-test-phish", "6",
    *TINY_MODEL,
]


def run_pipeline(work, dest, extra=()):
    return main([
        "pipeline", "--legit", str(work["legit_raw"]), "--phish", str(work["phish_raw"]),
        "--seed", "4", "--out", str(dest), *PIPELINE_OVERRIDES, *extra,
    ])


def test_pipeline_end_to_end_with_caching(work, tmp_path, capsys):
    dest = tmp_path / "run"
    assert run_pipeline(work, dest) == 0
    capsys.readouterr()

    manifest = json.loads((dest / "manifest.json").read_text())
    assert set(manifest["stages"]) == {"preprocess", "split", "mix", "train", "sample", "detect"}
    for stage in manifest["stages"].values():
        assert stage["key"] and stage["outputs"]
    for name in ("splits.json", "mix.json", "model.ckpt", "generated.jsonl", "detection_report.json"):
        assert (dest / name).exists(), name
    report = json.loads((dest / "detection_report.json").read_text())
    assert set(report["generated_evasion_rate"]) == {"svm", "nb", "lr"}
    assert set(report["real"]) == {"svm", "nb", "lr"}
    gen_rows = read_jsonl(dest / "generated.jsonl")
    assert len(gen_rows) == 3

    # An identical re-run into a fresh directory reproduces every digest.
    other = tmp_path / "again"
    assert run_pipeline(work, other) == 0
    capsys.readouterr()
    second = json.loads((other / "manifest.json").read_text())
    assert second["stages"] == manifest["stages"]

    # --skip-cached over the first directory reuses all six stages.
    assert run_pipeline(work, dest, extra=["--skip-cached"]) == 0
    shown = capsys.readouterr().out
    assert shown.count("cached, skipping") == 6
    assert json.loads((dest / "manifest.json").read_text())["stages"] == manifest["stages"]

    # Changing an input invalidates downstream stages.
    assert run_pipeline(work, dest, extra=["--skip-cached", "--seed", "5"]) == 0
    shown = capsys.readouterr().out
    assert shown.count("cached, skipping") < 6


def test_pipeline_missing_corpus_exits_2(work, tmp_path):
    code = main([
        "pipeline", "--legit", str(tmp_path / "ghost.jsonl"), "--phish", str(work["phish_raw"]),
        "--out", str(tmp_path),
    ])
    assert code == 2
