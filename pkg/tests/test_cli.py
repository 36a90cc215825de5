import csv
import json

import pytest

from tempsort.cli import main
from tempsort.config import RunConfig, from_dict, load_config
from tempsort.errors import ConfigError


def test_config_defaults_and_lists(tmp_path):
    cfg = from_dict({})
    assert cfg == RunConfig()
    assert cfg.model.kind == "tpl" and cfg.eval.k == 5
    cfg = from_dict({"model": {"gamma": 6, "tau": [0.5]}, "eval": {"k": 3}})
    assert cfg.model.gamma == (6,) and cfg.model.tau == (0.5,)
    path = tmp_path / "c.yaml"
    path.write_text("model:\n  kind: mrnn\n  epochs: 7\n")
    assert load_config(path).model.epochs == 7


@pytest.mark.parametrize(
    "bad",
    [
        {"modle": {}},
        {"model": {"gama": 4}},
        {"model": {"kind": "forest"}},
        {"eval": {"k": "five"}},
        {"eval": {"k": 2.5}},
        {"output": {"plots": "yes"}},
    ],
)
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        from_dict(bad)


def test_generate_writes_file(tmp_path, capsys):
    out = tmp_path / "d.csv"
    assert main(["generate", "--kind", "basic", "--n", "100", "--seed", "7", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 101
    assert "class 2" in capsys.readouterr().out
    again = tmp_path / "e.csv"
    main(["generate", "--kind", "basic", "--n", "100", "--seed", "7", "--out", str(again)])
    assert out.read_bytes() == again.read_bytes()


def test_usage_errors_exit_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--kind", "bogus", "--out", str(tmp_path / "x.csv")])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text("model:\n  bogus: 1\n")
    assert main(["train", "--config", str(bad)]) == 2


def test_missing_model_exit_1(tmp_path, capsys):
    data = tmp_path / "d.csv"
    main(["generate", "--kind", "basic", "--n", "10", "--out", str(data)])
    code = main(["predict", "--model", str(tmp_path / "none.json"), "--data", str(data), "--out", str(tmp_path / "p.csv")])
    assert code == 1
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("kind", ["tpl", "mrnn"])
def test_end_to_end(tmp_path, kind, capsys):
    data = tmp_path / "d.csv"
    main(["generate", "--kind", "basic", "--n", "60", "--seed", "3", "--out", str(data)])
    cfg = tmp_path / "c.yaml"
    cfg.write_text(
        f"dataset:\n  path: {data}\nmodel:\n  kind: {kind}\n  epochs: 5\n  tau: [0.8]\n  c: [1.0]\n"
        f"eval:\n  k: 2\noutput:\n  dir: {tmp_path / 'out'}\n  plots: true\n"
    )
    assert main(["train", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    names = {"model.json", "report.json", "report.txt", "marginals.csv", "marginals.png"}
    if kind == "mrnn":
        names |= {"discounts.csv", "discounts.png"}
    assert names <= {p.name for p in out.iterdir()}

    assert main(["evaluate", "--config", str(cfg), "--model", str(out / "model.json"), "--out-dir", str(tmp_path / "ev")]) == 0
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert "macro F" in capsys.readouterr().out
    assert report["schema_version"] == 1 and 0 <= report["metrics"]["macro_f"] <= 1

    preds = tmp_path / "p.csv"
    assert main(["predict", "--model", str(out / "model.json"), "--data", str(data), "--out", str(preds)]) == 0
    with open(preds, newline="") as fh:
        rows = list(csv.DictReader(fh))
    counts = [[0, 0], [0, 0]]
    for r in rows:
        counts[int(r["label"]) - 1][int(r["predicted"]) - 1] += 1
    assert counts == report["confusion"]

    assert main(["evaluate", "--config", str(cfg), "--out-dir", str(tmp_path / "cv")]) == 0
    cv = json.loads((tmp_path / "cv" / "report.json").read_text())
    assert len(cv["folds"]) == 2 and "mean" in cv["summary"]["macro_f"]
    assert (tmp_path / "cv" / "fold_metrics.png").exists()
    assert (tmp_path / "cv" / cv["folds"][0]["model_file"]).exists()

    exp = tmp_path / "exp"
    assert main(["export", "--model", str(out / "model.json"), "--data", str(data), "--out", str(exp)]) == 0
    assert (exp / "marginals.csv").exists() and (exp / "marginals.png").exists()


def test_seed_flag_changes_and_fixes_runs(tmp_path):
    def run(seed, name):
        out = tmp_path / name
        cfg = tmp_path / "c.yaml"
        cfg.write_text(f"dgp:\n  n: 60\nmodel:\n  tau: [0.8]\n  c: [1.0]\noutput:\n  dir: {out}\n  plots: false\n")
        main(["train", "--config", str(cfg), "--seed", str(seed)])
        doc = json.loads((out / "report.json").read_text())
        doc["config"].pop("output")
        return doc

    a, b, c = run(1, "a"), run(1, "b"), run(2, "c")
    assert a == b
    assert a["metrics"] != c["metrics"]
    assert a["config"]["dgp"]["seed"] == 1 and c["config"]["eval"]["seed"] == 2
