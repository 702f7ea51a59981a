import csv
import json
import re
import subprocess
import sys

import pytest

from kdlab.cli import run

SYN = {"synthetic": {"num_classes": 4, "dim": 5, "n_per_class": 30, "spread": 0.4, "seed": 3}}
SMALL = {"widths": [5, 8, 4], "epochs": 3, "lr": 0.05}


def write_cfg(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def cli(tmp_path, command, doc, out="out", *extra):
    cfg = write_cfg(tmp_path / f"{command}-{out}.json", doc)
    return run([command, "--config", cfg, "--out", str(tmp_path / out), *extra])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def trained(tmp_path):
    assert cli(tmp_path, "gen-data", {**SYN, "seed": 1}, "data") == 0
    d = {"train": str(tmp_path / "data/train.csv"), "test": str(tmp_path / "data/test.csv")}
    assert cli(tmp_path, "train", {"data": d, "train": SMALL}, "teacher") == 0
    return d, str(tmp_path / "teacher/model.json")


def test_gen_data_then_train(tmp_path, trained):
    d, model = trained
    header = (tmp_path / "data/train.csv").read_text().splitlines()[0]
    assert header == "f0,f1,f2,f3,f4,label"
    (row,) = rows(tmp_path / "teacher/results.csv")
    assert row["loss_kind"] == "ce" and 0 <= float(row["train_acc"]) <= 1
    assert len(rows(tmp_path / "teacher/losses.csv")) == 3


def test_gen_data_noise_keeps_clean_column(tmp_path):
    assert cli(tmp_path, "gen-data", {**SYN, "noise_fraction": 0.5}) == 0
    r = rows(tmp_path / "out/train.csv")
    assert sum(x["label"] != x["clean_label"] for x in r) == round(0.5 * len(r))


def test_distill_fresh_teacher_and_ensemble(tmp_path, trained):
    d, model = trained
    kd = {**SMALL, "loss": "kl", "tau": 4, "alpha": 0.5}
    assert cli(tmp_path, "distill", {"data": d, "teacher": {"train": SMALL}, "train": kd}, "fresh") == 0
    assert (tmp_path / "fresh/teacher.json").exists() and (tmp_path / "fresh/model.json").exists()
    assert cli(tmp_path, "distill", {"data": d, "teacher": model, "train": kd}, "one") == 0
    assert cli(tmp_path, "distill", {"data": d, "teacher": [model], "train": kd}, "ens") == 0
    assert (tmp_path / "one/model.json").read_bytes() == (tmp_path / "ens/model.json").read_bytes()


def test_distill_is_byte_identical(tmp_path, trained):
    d, model = trained
    doc = {"data": d, "teacher": model, "train": {**SMALL, "loss": "mse"}, "seed": 9}
    assert cli(tmp_path, "distill", doc, "a") == 0
    assert cli(tmp_path, "distill", doc, "b") == 0
    for name in ("model.json", "results.csv", "losses.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override(tmp_path):
    doc = {"data": SYN, "train": {**SMALL, "seed": 4}}
    assert cli(tmp_path, "train", doc, "a", "--seed", "7") == 0
    assert cli(tmp_path, "train", {"data": {"synthetic": {**SYN["synthetic"], "seed": 7}},
                                   "train": {**SMALL, "seed": 7}, "seed": 7}, "b") == 0
    assert cli(tmp_path, "train", doc, "c") == 0
    a, b, c = ((tmp_path / x / "model.json").read_bytes() for x in "abc")
    assert a == b and a != c


def test_sequential(tmp_path, trained):
    d, _ = trained
    doc = {"data": d, "stages": [
        {"train": SMALL},
        {"teacher": "previous", "train": {**SMALL, "loss": "kl", "tau": 2}},
        {"teacher": "previous", "train": {**SMALL, "loss": "mse"}},
    ]}
    assert cli(tmp_path, "sequential", doc) == 0
    for i in range(3):
        assert (tmp_path / f"out/stage_{i}.json").exists()
    assert [r["loss_kind"] for r in rows(tmp_path / "out/results.csv")] == ["ce", "kl", "mse"]


def test_sweep_and_grid_heat(tmp_path, trained):
    d, model = trained
    doc = {"data": d, "teacher": model, "alphas": [0.5, 1.0], "taus": [2, "inf"], "train": SMALL}
    assert cli(tmp_path, "sweep", doc, "s", "--jobs", "2") == 0
    r = rows(tmp_path / "s/results.csv")
    assert len(r) == 4 and {x["loss_kind"] for x in r} == {"kl", "kl_inf"}
    plot = {"input": str(tmp_path / "s/results.csv"), "kind": "grid-heat"}
    assert cli(tmp_path, "plot", plot, "p") == 0
    svg = (tmp_path / "p/results_grid-heat.svg").read_text()
    assert svg.count('class="cell"') == 4
    assert cli(tmp_path, "plot", plot, "p2") == 0
    assert (tmp_path / "p2/results_grid-heat.svg").read_bytes() == svg.encode()


def test_sweep_serial_equals_parallel(tmp_path, trained):
    d, model = trained
    doc = {"data": d, "teacher": model, "alphas": [0.3], "taus": [1, 5], "train": SMALL}
    assert cli(tmp_path, "sweep", doc, "one") == 0
    assert cli(tmp_path, "sweep", doc, "two", "--jobs", "2") == 0
    assert (tmp_path / "one/results.csv").read_bytes() == (tmp_path / "two/results.csv").read_bytes()


def test_noisy(tmp_path):
    doc = {"data": SYN, "fractions": [0.4], "taus": [0.5, "inf"], "teacher_train": SMALL,
           "train": SMALL}
    assert cli(tmp_path, "noisy", doc) == 0
    r = rows(tmp_path / "out/results.csv")
    assert [(x["loss_kind"], x["tau"]) for x in r] == [("rescaled_kl", "0.5"), ("kl_inf", "inf"), ("mse", "")]
    assert "teacher_test_acc" in json.loads(r[0]["extra_json"])


def test_bundles(tmp_path, trained):
    d, model = trained
    doc = {"data": d, "teacher": model, "quantiles": [[0, 0.5], [0.5, 1]], "train_ce": SMALL,
           "train_kd": {**SMALL, "loss": "mse"}}
    assert cli(tmp_path, "bundles", doc) == 0
    r = rows(tmp_path / "out/results.csv")
    assert len(r) == 4 and [x["q_hi"] for x in r] == ["0.5", "0.5", "1.0", "1.0"]


def test_diagnose_and_plots(tmp_path, trained):
    d, model = trained
    doc = {"data": d, "model": model, "teacher": model, "bins": 8,
           "which": ["tld", "entropy", "pcc", "logit_sum", "logit_distance", "prelogit_norm", "calibration",
                     "projection"]}
    assert cli(tmp_path, "diagnose", doc, "diag") == 0
    summary = json.loads((tmp_path / "diag/summary.json").read_text())
    assert set(summary) == {"pcc_entropy_tld", "mean_abs_logit_sum", "median_logit_distance", "ece"}
    assert summary["median_logit_distance"] == 0.0
    assert len(rows(tmp_path / "diag/tld_hist.csv")) == 8
    assert len(rows(tmp_path / "diag/reliability.csv")) == 10
    cases = [("tld_hist.csv", "histogram", 'class="bar"'), ("projection.csv", "scatter", 'class="point"')]
    for name, kind, marker in cases:
        assert cli(tmp_path, "plot", {"input": str(tmp_path / "diag" / name), "kind": kind}, "fig") == 0
        svg = (tmp_path / "fig" / f"{name[:-4]}_{kind}.svg").read_text()
        assert "<svg" in svg and marker in svg
    assert cli(tmp_path, "plot", {"input": str(tmp_path / "teacher/losses.csv"), "kind": "line"}, "fig") == 0
    assert 'class="series"' in (tmp_path / "fig/losses_line.svg").read_text()


def test_usage_errors_exit_1(tmp_path, capsys):
    assert run([]) == 1
    assert run(["bogus", "--config", "x", "--out", "y"]) == 1
    assert run(["train", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert all(line.startswith("kdlab: error:") for line in err)


@pytest.mark.parametrize("doc", [
    {"data": SYN, "train": {**SMALL, "unknown": 1}},
    {"data": SYN, "train": {**SMALL, "loss": "kl"}},  # kl without tau
    {"data": SYN, "train": {**SMALL, "loss": "mse"}},  # needs a teacher
    {"data": {"train": "/nope.csv", "test": "/nope.csv"}, "train": SMALL},
    {"data": SYN},
])
def test_config_errors_write_nothing(tmp_path, doc):
    assert cli(tmp_path, "train", doc) == 1
    assert not (tmp_path / "out").exists()


def test_data_error_exit_2(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("f0,label\n1.0,zero\n")
    assert cli(tmp_path, "train", {"data": {"train": str(bad), "test": str(bad)}, "train": SMALL}) == 2
    junk = tmp_path / "m.json"
    junk.write_text("{not json")
    doc = {"data": SYN, "teacher": str(junk), "train": {**SMALL, "loss": "mse"}}
    assert cli(tmp_path, "distill", doc, "o2") == 2


def test_runtime_error_exit_3(tmp_path, capsys):
    # widths disagree with the data dimension: valid config, fails while running
    assert cli(tmp_path, "train", {"data": SYN, "train": {**SMALL, "widths": [7, 8, 4]}}) == 3
    assert capsys.readouterr().err.startswith("kdlab: runtime failure:")


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "kdlab.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert re.search(r"gen-data.*train.*distill.*sequential.*sweep.*noisy.*bundles.*diagnose.*plot", out.stdout)
