import csv
import json

import pytest

from holdpose.cli import main
from holdpose.evaluation.report import OBJECT_TABLE_COLUMNS, OBJECT_TABLE_ROWS

TINY = ["--hidden", "8", "--embed-dim", "8", "--n-steps", "5", "--iterations", "4", "--anneal-at", "2"]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "ds"
    assert main(["synth", "--objects", "6", "--seed", "7", "--out", str(out)]) == 0
    return out


def _tree(path):
    return {p.relative_to(path): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def test_synth_outputs_and_determinism(synth_dir, tmp_path):
    meta = json.loads((synth_dir / "dataset.json").read_text())
    assert meta["meta"]["run_config"]["seed"] == 7
    catalog = json.loads((synth_dir / "catalog.json").read_text())
    assert len(catalog) == 6 if isinstance(catalog, list) else len(catalog["objects"]) == 6
    assert len(json.loads((synth_dir / "pose_space.json").read_text())) == 16
    out = tmp_path / "ds"
    assert main(["synth", "--objects", "3", "--seed", "7", "--out", str(out)]) == 0
    first = _tree(out)
    assert main(["synth", "--objects", "3", "--seed", "7", "--out", str(out)]) == 0
    assert _tree(out) == first


def test_synth_missing_catalog(tmp_path, capsys):
    assert main(["synth", "--catalog", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 1
    assert "nope.json" in capsys.readouterr().err


def test_stats_matches_generator(synth_dir, tmp_path, capsys):
    assert main(["stats", "--data", str(synth_dir), "--csv", str(tmp_path / "s.csv")]) == 0
    out = capsys.readouterr().out
    assert "generator ground truth: match" in out and "Grasp" in out
    assert (tmp_path / "s.csv").read_text().startswith("stage,pass,slip,drop")


def test_stats_errors(tmp_path, capsys):
    assert main(["stats", "--data", str(tmp_path / "missing")]) == 1
    from holdpose.core import Dataset
    from holdpose.storage import save_dataset

    save_dataset(Dataset(()), tmp_path / "empty")
    assert main(["stats", "--data", str(tmp_path / "empty")]) == 1
    assert "empty" in capsys.readouterr().err


def test_invalid_modality_is_usage_error(synth_dir, capsys):
    with pytest.raises(SystemExit) as err:
        main(["eval", "--data", str(synth_dir), "--modalities", "vx"])
    assert err.value.code == 2
    assert "modalit" in capsys.readouterr().err.lower()


def test_eval_writes_one_row(synth_dir, tmp_path):
    out = tmp_path / "run"
    rc = main(["eval", "--data", str(synth_dir), "--protocol", "pose-group", "--variant", "lstm-drs",
               "--modalities", "vt", "--out", str(out), *TINY])
    assert rc == 0
    with (out / "results.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert (rows[0]["protocol"], rows[0]["variant"], rows[0]["modalities"]) == ("PoseGroup", "LSTM+DRS", "VT")
    cfg = json.loads((out / "resolved_config.json").read_text())
    assert cfg["hidden"] == 8 and cfg["seed"] == 0
    assert (out / "model.npz").is_file()
    # scoring the stored checkpoint reproduces the row
    rescored = tmp_path / "again.csv"
    assert main(["eval", "--checkpoint", str(out / "model.npz"), "--data", str(synth_dir),
                 "--results", str(rescored)]) == 0
    with rescored.open() as fh:
        (row,) = list(csv.DictReader(fh))
    assert row["accuracy"] == rows[0]["accuracy"]


def test_config_file_precedence(synth_dir, tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"hidden": 6, "iterations": 4, "anneal_at": 2, "embed_dim": 8, "n_steps": 5}))
    out = tmp_path / "run"
    assert main(["eval", "--data", str(synth_dir), "--variant", "lstm", "--config", str(conf), "--hidden", "5",
                 "--out", str(out)]) == 0
    cfg = json.loads((out / "resolved_config.json").read_text())
    assert cfg["hidden"] == 5 and cfg["iterations"] == 4
    conf.write_text(json.dumps({"colour": 1}))
    assert main(["eval", "--data", str(synth_dir), "--config", str(conf), "--out", str(out)]) == 1


def test_sweep_table_preset(synth_dir, tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--data", str(synth_dir), "--preset", "paper-tables", "--splits", "1", "--seeds", "1",
                 "--out", str(out), *TINY]) == 0
    report = (out / "report.txt").read_text()
    for _, label in OBJECT_TABLE_ROWS + OBJECT_TABLE_COLUMNS:
        assert label in report
    assert "Pose Group" in report and "Uniform Random Split" in report
    assert (out / "unseen_poses.svg").is_file() and (out / "unseen_objects.svg").is_file()
    assert any((out / "manifests").iterdir())
    assert main(["report", "--results", str(out / "results.csv"), "--out", str(tmp_path / "rep")]) == 0
    assert (tmp_path / "rep" / "report.txt").read_text() == report
