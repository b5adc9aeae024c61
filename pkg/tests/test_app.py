import json

import pytest

import app
import metrics
import model

TINY_SET_ARGS = [
    "--set", "epochs=1", "--set", "bag_size=8", "--set", "bags_per_step=2",
    "--set", "hidden_sizes=8", "--set", "blob_classes=3", "--set", "blob_feature_dim=4",
    "--set", "blob_samples_per_class=20", "--set", "seed=0",
]


def run(*argv):
    return app.main(list(argv))


def test_train_writes_results(tmp_path, run_log):
    out = tmp_path / "run"
    assert run("train", *TINY_SET_ARGS, "--out", str(out)) == 0
    lines = (out / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["epoch"] == 0
    (row,) = metrics.read_summary(out / "summary.csv")
    assert row["mode"] == "dew" and row["bag_size"] == "8"
    assert model.load_params(out / "checkpoint.txt").hidden_sizes == (8,)
    assert (out / "bags.tsv").read_text().startswith("#llp-bags v1 C=3 M=8")
    assert "\ttrain:run\tdone\t" in run_log.read_text()


def test_missing_config_file(tmp_path):
    assert run("train", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path / "o")) == 2


def test_invalid_config_value(tmp_path):
    assert run("train", *TINY_SET_ARGS, "--set", "beta_b=0", "--out", str(tmp_path / "o")) == 2
    assert run("train", *TINY_SET_ARGS, "--set", "bogus=1", "--out", str(tmp_path / "o")) == 2


def test_refuses_to_clobber_without_overwrite(tmp_path):
    out = tmp_path / "run"
    assert run("train", *TINY_SET_ARGS, "--out", str(out)) == 0
    assert run("train", *TINY_SET_ARGS, "--out", str(out)) == 2
    assert run("train", *TINY_SET_ARGS, "--out", str(out), "--overwrite") == 0
    assert len((out / "metrics.jsonl").read_text().splitlines()) == 1


def test_dllp_mode_sets_lambda_zero(tmp_path):
    out = tmp_path / "run"
    assert run("train", *TINY_SET_ARGS, "--mode", "dllp", "--out", str(out)) == 0
    assert "lam = 0.0" in (out / "config.cfg").read_text().splitlines()
    assert metrics.read_summary(out / "summary.csv")[0]["mode"] == "dllp"


def test_deterministic_runs_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run("train", *TINY_SET_ARGS, "--set", "epochs=2", "--deterministic",
                   "--out", str(tmp_path / name)) == 0
    assert (tmp_path / "a" / "metrics.jsonl").read_bytes() == (tmp_path / "b" / "metrics.jsonl").read_bytes()


def test_config_file_and_set_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochs = 3\nlambda = 0.25\n")
    out = tmp_path / "run"
    assert run("train", "--config", str(cfg), *TINY_SET_ARGS, "--out", str(out)) == 0
    text = (out / "config.cfg").read_text()
    assert "epochs = 1" in text and "lam = 0.25" in text


def test_ablation_grid(tmp_path):
    out = tmp_path / "ablation"
    code = run("ablate", *TINY_SET_ARGS, "--bag-sizes", "4,8", "--seeds", "0,1,2,3,4", "--out", str(out))
    assert code == 0
    rows = metrics.read_summary(out / "summary.csv")
    assert len(rows) == 40
    assert {r["mode"] for r in rows} == {"dew", "bag-only", "instance-only", "unweighted"}
    table = metrics.read_summary(out / "ablation_table.csv")
    assert len(table) == 8
    assert all(t["runs"] == "5" for t in table)


def test_ablation_table_counts_only_finished_runs():
    rows = [
        {"mode": "dew", "bag_size": "8", "test_accuracy": "0.5"},
        {"mode": "dew", "bag_size": "8", "test_accuracy": "0.7"},
        {"mode": "dew", "bag_size": "8", "test_accuracy": ""},
        None,
    ]
    (cell,) = app.ablation_table(rows)
    assert cell["runs"] == 2
    assert float(cell["test_accuracy_mean"]) == pytest.approx(0.6)


def test_ablation_rejects_unknown_mode(tmp_path):
    assert run("ablate", *TINY_SET_ARGS, "--modes", "dew,softmatch", "--out", str(tmp_path / "o")) == 2


def test_beta_sweep_grid(tmp_path):
    out = tmp_path / "beta"
    assert run("sweep-beta", *TINY_SET_ARGS, "--beta-grid", "0.1,1,5", "--out", str(out)) == 0
    rows = metrics.read_summary(out / "beta_grid.csv")
    assert len(rows) == 9
    assert {(float(r["beta_b"]), float(r["beta_i"])) for r in rows} == {
        (b, i) for b in (0.1, 1.0, 5.0) for i in (0.1, 1.0, 5.0)}


def test_beta_sweep_rejects_non_positive_beta(tmp_path):
    out = tmp_path / "beta"
    assert run("sweep-beta", *TINY_SET_ARGS, "--beta-b", "0,1", "--out", str(out)) == 2
    assert not out.exists()


def test_oracle_check(capsys):
    assert run("oracle-check", "--cases", "0") == 0
    assert run("oracle-check", "--cases", "200", "--grad-cases", "5", "--seed", "7") == 0
    out = capsys.readouterr().out
    assert "dew" in out and "gradient" in out and "FAILED" not in out


def test_generated_data_feeds_training_and_export(tmp_path):
    data = tmp_path / "data"
    assert run("gen-data", *TINY_SET_ARGS, "--out", str(data)) == 0
    assert len((data / "train.csv").read_text().splitlines()) == 48

    out = tmp_path / "run"
    csv_args = ["--set", f"data_path={data / 'train.csv'}", "--set", f"test_data_path={data / 'test.csv'}",
                "--set", "class_count=3"]
    assert run("train", *TINY_SET_ARGS, *csv_args, "--bags", str(data / "bags.tsv"), "--out", str(out)) == 0
    assert (out / "bags.tsv").read_text() == (data / "bags.tsv").read_text()
    assert metrics.read_summary(out / "summary.csv")[0]["test_accuracy"] != ""

    feats = tmp_path / "features"
    assert run("export-features", "--checkpoint", str(out / "checkpoint.txt"),
               "--data", str(data / "test.csv"), "--out", str(feats)) == 0
    rows = (feats / "features.csv").read_text().splitlines()
    assert len(rows) == 12 and len(rows[0].split(",")) == 9
