import csv
import json

import pytest

from stvslab.cli import main
from stvslab.core import read_dataset, read_header

SMALL = ["--n-buses", "3", "--n-samples", "150", "--steps", "20"]


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["generate", "--seed", "2", "--out", str(d / "raw.jsonl"), *SMALL]) == 0
    assert main(["label", "--in", str(d / "raw.jsonl"), "--out", str(d / "lab.jsonl")]) == 0
    return d


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_generate_header_and_manifest(work):
    h = read_header(work / "raw.jsonl")
    assert (h["L"], h["d"], h["m"]) == (3, 9, 20)
    man = json.loads((work / "raw.jsonl.manifest.json").read_text())
    assert man["seeds"]["master"] == 2 and "generate" in man["timings_s"]
    assert str(work / "raw.jsonl") in man["outputs"]


def test_generate_prints_balance_and_is_repeatable(capsys, tmp_path, work):
    code, out, _ = run(capsys, "generate", "--seed", 2, "--out", tmp_path / "again.jsonl", *SMALL)
    assert code == 0 and "truth balance" in out and "scenario grid" in out
    assert (tmp_path / "again.jsonl").read_bytes() == (work / "raw.jsonl").read_bytes()


def test_generate_from_config(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("grid:\n  n_buses: 4\n  n_samples: 20\n  m: 12\n")
    code, _, _ = run(capsys, "generate", "--config", cfg, "--out", tmp_path / "d.jsonl")
    assert code == 0 and read_header(tmp_path / "d.jsonl")["d"] == 12
    cfg.write_text("grid:\n  bogus: 1\n")
    code, _, err = run(capsys, "generate", "--config", cfg, "--out", tmp_path / "e.jsonl")
    assert code != 0 and "bogus" in err


def test_label_report_and_overwrite(capsys, work, tmp_path):
    code, out, _ = run(capsys, "label", "--in", work / "lab.jsonl", "--out", tmp_path / "re.jsonl",
                       "--report", tmp_path / "r.txt")
    assert code == 0
    assert "overwrote 150 existing labels" in out
    assert "seeds: stable" in out and "iterations" in out and "agreement" in out
    assert (tmp_path / "r.txt").read_text() == out
    assert all(i.label is not None for i in read_dataset(tmp_path / "re.jsonl"))


def test_label_errors(capsys, work, tmp_path):
    code, out, err = run(capsys, "label", "--in", tmp_path / "missing.jsonl", "--out", tmp_path / "x")
    assert code != 0 and "missing.jsonl" in err and out == ""
    code, _, err = run(capsys, "label", "--in", work / "raw.jsonl", "--out", tmp_path / "x.jsonl",
                       "--v-stable", "1.5")
    assert code != 0 and "adjust" in err


def test_train_dt_single_row_history_and_determinism(capsys, work, tmp_path):
    for name in ("a", "b"):
        code, _, _ = run(capsys, "train", "--in", work / "lab.jsonl", "--model", "dt", "--otw", 6,
                         "--out", tmp_path / f"{name}.json")
        assert code == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    rows = list(csv.reader(open(tmp_path / "a.history.csv")))
    assert rows[0] == ["epoch", "loss", "accuracy"] and len(rows) == 2


def test_train_lstm_writes_history(capsys, work, tmp_path):
    code, _, _ = run(capsys, "train", "--in", work / "lab.jsonl", "--model", "lstm", "--otw", 4,
                     "--hidden-dim", 4, "--epochs", 3, "--out", tmp_path / "l.json")
    assert code == 0
    ck = json.loads((tmp_path / "l.json").read_text())
    assert ck["kind"] == "lstm" and ck["otw_steps"] == 4 and len(ck["history"]) == 3
    assert ck["config"]["hidden_dim"] == 4 and ck["config"]["learning_rate"] == 1e-4


def test_train_errors(capsys, work, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--in", str(work / "lab.jsonl"), "--model", "rf", "--otw", "3", "--out", "x"])
    assert exc.value.code == 2
    code, _, err = run(capsys, "train", "--in", work / "raw.jsonl", "--model", "dt", "--otw", 3,
                       "--out", tmp_path / "u.json")
    assert code != 0 and "label" in err


@pytest.fixture(scope="module")
def dt_ckpt(work):
    path = work / "dt6.json"
    assert main(["train", "--in", str(work / "lab.jsonl"), "--model", "dt", "--otw", "6",
                 "--out", str(path)]) == 0
    return path


def test_evaluate_outputs(capsys, work, dt_ckpt, tmp_path):
    code, out, _ = run(capsys, "evaluate", "--in", work / "lab.jsonl", "--checkpoints", dt_ckpt,
                       "--otw", 6, "--partition", "train", "--out", tmp_path / "rep")
    assert code == 0
    row = out.strip().splitlines()[1].split(",")
    assert row[:2] == ["dt", "6"] and float(row[2]) >= 0.97
    for name in ("report.json", "table.csv", "roc_dt_otw6.csv", "accuracy_vs_otw.svg",
                 "f1_bars.svg", "roc_otw6.svg", "manifest.json"):
        assert (tmp_path / "rep" / name).exists()
    assert (tmp_path / "rep" / "f1_bars.svg").read_text().startswith("<svg")


def test_evaluate_errors(capsys, work, dt_ckpt, tmp_path):
    code, _, err = run(capsys, "evaluate", "--in", work / "lab.jsonl", "--checkpoints", dt_ckpt,
                       "--otw", "--out", tmp_path / "r")
    assert code == 2 and "otw" in err
    run(capsys, "generate", "--out", tmp_path / "wide.jsonl", "--n-buses", 4, "--n-samples", 10, "--steps", 20)
    code, _, err = run(capsys, "evaluate", "--in", tmp_path / "wide.jsonl", "--checkpoints", dt_ckpt,
                       "--otw", 6, "--out", tmp_path / "r")
    assert code != 0 and "dt6" in err


def test_assess_one_line_per_instance(capsys, work, dt_ckpt):
    code, out, _ = run(capsys, "assess", "--checkpoint", dt_ckpt, "--in", work / "lab.jsonl")
    lines = out.strip().splitlines()
    assert code == 0 and len(lines) == 1 + 150
    assert all(float(l.split(",")[4]) > 0 for l in lines[1:])


def test_assess_stream_and_noiseless_stable(capsys, work, tmp_path):
    run(capsys, "generate", "--seed", 2, "--noise-sigma", 0, "--out", tmp_path / "clean.jsonl", *SMALL)
    run(capsys, "label", "--in", tmp_path / "clean.jsonl", "--out", tmp_path / "clean_l.jsonl")
    run(capsys, "train", "--in", tmp_path / "clean_l.jsonl", "--model", "lstm", "--otw", 5,
        "--hidden-dim", 8, "--epochs", 40, "--learning-rate", 0.01, "--out", tmp_path / "l.json")
    ds = read_dataset(tmp_path / "clean_l.jsonl")
    sid = next(i.id for i in ds if i.truth.value == "stable")
    code, out, _ = run(capsys, "assess", "--checkpoint", tmp_path / "l.json", "--in",
                       tmp_path / "clean_l.jsonl", "--id", sid, "--stream", "--min-otw", 2)
    rows = [l.split(",") for l in out.strip().splitlines()[1:]]
    assert code == 0 and [int(r[1]) for r in rows] == list(range(2, 21))
    final = [r for r in rows if r[5] == "1"]
    assert len(final) == 1 and final[0][1] == "5"
    assert final[0][2] == "stable" and float(final[0][3]) > 0.5


def test_assess_skips_short_instances(capsys, work, tmp_path):
    run(capsys, "train", "--in", work / "lab.jsonl", "--model", "lstm", "--otw", 15,
        "--hidden-dim", 2, "--epochs", 1, "--out", tmp_path / "l15.json")
    run(capsys, "generate", "--out", tmp_path / "short.jsonl", "--n-buses", 3, "--n-samples", 3, "--steps", 12)
    code, out, err = run(capsys, "assess", "--checkpoint", tmp_path / "l15.json", "--in", tmp_path / "short.jsonl")
    assert code == 0 and out.strip().splitlines() == ["id,elapsed_steps,class,p_stable,latency_s,at_trained_otw"]
    assert err.count("skipped") == 3
