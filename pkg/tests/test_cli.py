import csv
import json
import os

import pytest

from codedkt import cli, experiment
from codedkt.ktmodels.config import ABLATION_VARIANTS

TINY = ["--hidden-size", "6", "--embedding-size", "6", "--epochs", "2", "--R", "6",
        "--pretrain-epochs", "1", "--reps", "1", "--seed", "3"]


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("syn") / "d"
    assert cli.main(["synthesize", "--out", str(out), "--students", "24", "--seed", "5",
                     "--corrupt", "0.1"]) == 0
    return str(out)


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_no_command_prints_help(capsys):
    assert cli.main([]) == 2
    assert "synthesize" in capsys.readouterr().out


def test_ingest_summary_and_dump(data, tmp_path, capsys):
    dump = tmp_path / "seq.jsonl"
    assert run("ingest", "--data", data, "--assignment", "A1", "--dump-sequences", dump) == 0
    out = capsys.readouterr().out
    assert "assignment A1: 24 sequences, M=9" in out
    lines = dump.read_text().splitlines()
    assert len(lines) == 24 and json.loads(lines[0])


def test_ingest_unknown_dir_is_an_error(tmp_path, capsys):
    assert run("ingest", "--data", tmp_path / "missing") == 1
    assert capsys.readouterr().err.startswith("error:")


@pytest.mark.parametrize("model", ["codedkt", "dkt", "dkt-tfidf", "dkt-expert"])
def test_evaluate_writes_report(data, tmp_path, model, capsys):
    out = tmp_path / model
    assert run("evaluate", "--data", data, "--assignment", "A1", "--model", model, "--out", out, *TINY) == 0
    rep = json.loads((out / "report.json").read_text())
    assert len(rep["seeds"]) == 1
    assert 0.0 <= rep["summary"]["overall_auc"]["mean"] <= 1.0
    rows = list(csv.reader(open(out / "report.csv")))
    assert rows[0][:2] and rows[1][1] == "ALL"
    rc = experiment.load_run_config(out / "run_config.json")
    assert rc.model == model.replace("-", "_") and rc.model_overrides["hidden_size"] == 6
    hist = json.loads((out / "loss_history.json").read_text())
    assert len(hist["0"]) == 2
    assert "overall AUC" in capsys.readouterr().out


def test_bkt_has_no_loss_history(data, tmp_path):
    out = tmp_path / "bkt"
    assert run("evaluate", "--data", data, "--assignment", "A1", "--model", "bkt", "--out", out,
               "--reps", "2") == 0
    assert (out / "report.json").exists() and not (out / "loss_history.json").exists()


def test_config_file_rerun_is_identical(data, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("evaluate", "--data", data, "--assignment", "A1", "--model", "dkt", "--out", a, *TINY) == 0
    assert run("evaluate", "--config", a / "run_config.json", "--out", b) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


def test_missing_required_flag_exits():
    with pytest.raises(SystemExit):
        run("evaluate", "--assignment", "A1")


def test_failed_run_leaves_no_partial_outputs(data, tmp_path, capsys):
    out = tmp_path / "nope"
    assert run("evaluate", "--data", data, "--assignment", "ZZ", "--out", out, *TINY) == 1
    assert "ZZ" in capsys.readouterr().err
    assert not out.exists()
    assert not [n for n in os.listdir(tmp_path) if n.startswith(".partial-")]


def test_train_then_heatmap_from_checkpoint(data, tmp_path, capsys):
    out = tmp_path / "train"
    assert run("train", "--data", data, "--assignment", "A1", "--out", out, *TINY) == 0
    for name in ("model.npz", "loss_history.json", "split.json", "run_config.json"):
        assert (out / name).exists(), name
    split = json.loads((out / "split.json").read_text())
    sid = split["test"][0]
    hm = tmp_path / "hm"
    capsys.readouterr()
    assert run("heatmap", "--data", data, "--assignment", "A1", "--out", hm, "--checkpoint",
               out / "model.npz", "--student", sid, *TINY) == 0
    printed = capsys.readouterr().out.split()
    assert printed == [str(hm / f"heatmap_{sid}.csv"), str(hm / f"heatmap_{sid}.svg")]
    rows = list(csv.reader(open(hm / f"heatmap_{sid}.csv")))
    assert len(rows) == 9 + 4


def test_heatmap_unknown_student_is_an_error(data, tmp_path):
    assert run("heatmap", "--data", data, "--assignment", "A1", "--out", tmp_path / "h",
               "--model", "dkt", "--student", "ghost", *TINY) == 1


def test_ablate_rows(data, tmp_path, capsys):
    out = tmp_path / "abl"
    assert run("ablate", "--data", data, "--assignment", "A1", "--out", out, *TINY) == 0
    d = json.loads((out / "ablation.json").read_text())
    assert [r["variant"] for r in d["rows"]] == [v for v, _ in ABLATION_VARIANTS]
    assert len(set(d["split_digests"])) == 1
    assert len(capsys.readouterr().out.strip().splitlines()) == 5


def test_tune_with_single_point_grid(data, tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"learning_rate": [0.01], "epochs": [2]}))
    out = tmp_path / "tune"
    assert run("tune", "--data", data, "--assignment", "A1", "--model", "dkt", "--out", out,
               "--grid", grid, "--tune-reps", "1", *TINY) == 0
    d = json.loads((out / "tuning.json").read_text())
    assert d["best"] == {"learning_rate": 0.01, "epochs": 2} and d["best_index"] == 0
    assert "best" in capsys.readouterr().out


def test_tuning_ties_go_to_earliest_point(data, tmp_path):
    rc = experiment.RunConfig(data=data, assignment="A1", model="dkt", repetitions=1, out=str(tmp_path / "t"),
                              model_overrides={"hidden_size": 4, "epochs": 1})
    d = experiment.run_tuning(rc, {"batch_size": [64, 64]}, repetitions=1)
    assert d["points"][0]["validation_auc"] == d["points"][1]["validation_auc"]
    assert d["best_index"] == 0


JAVA = 'public String greet(String input) { return "value"; }'


def test_parse_debug(tmp_path, capsys):
    f = tmp_path / "A.java"
    f.write_text(JAVA)
    assert run("parse-debug", f, "--json") == 0
    d = json.loads(capsys.readouterr().out)
    assert d["mode"] == "parsed" and d["tree"]
    assert run("parse-debug", f) == 0
    assert capsys.readouterr().out.startswith("# mode: parsed")


def test_paths_debug(tmp_path, capsys):
    f = tmp_path / "A.java"
    f.write_text(JAVA)
    assert run("paths-debug", f) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "start\tpath\tend" and len(lines) > 1
    assert all(len(line.split("\t")) == 3 for line in lines)
    assert any(line.split("\t")[0] == "input" and line.split("\t")[2] == "value" for line in lines[1:])


def test_hidden_gradcheck_dump(tmp_path, capsys):
    path = tmp_path / "g.csv"
    assert run("--dump-gradcheck", path, "--gradcheck-instances", "1") == 0
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["case", "instance", "max_relative_error"]
    assert all(float(r[2]) < 1e-4 for r in rows[1:])
    assert "worst relative error" in capsys.readouterr().out
