import numpy as np
import pytest

from tempsort.config import from_dict
from tempsort.experiment import candidates, run_experiment, summarize


def test_smoke_two_folds():
    cfg = from_dict({"dgp": {"n": 100}, "eval": {"k": 2}, "model": {"tau": [0.8], "c": [0.1, 1.0]}})
    report = run_experiment(cfg)
    doc = report.to_dict()
    assert doc["schema_version"] == 1 and len(doc["folds"]) == 2
    for fold in doc["folds"]:
        assert fold["selected"]["c"] in (0.1, 1.0)
        assert len(fold["candidates"]) == 2
        assert sum(map(sum, fold["test_confusion"])) == 20
        assert fold["runtime_seconds"] > 0
    values = [f["test_metrics"]["macro_f"] for f in doc["folds"]]
    assert doc["summary"]["macro_f"]["mean"] == pytest.approx(np.mean(values))
    assert report.folds[0].model is not None


def test_candidate_grid():
    cfg = from_dict({"model": {"gamma": [4, 6], "tau": [0.5, 0.8], "c": [1.0]}})
    assert len(candidates(cfg)) == 4
    cfg = from_dict({"model": {"kind": "mrnn", "gamma": [4, 6]}})
    assert candidates(cfg) == [{"gamma": 4}, {"gamma": 6}]


class _Fold:
    def __init__(self, f1, acc):
        self.test_metrics = {
            "macro_f": f1, "accuracy": acc,
            "precision": [f1, acc], "recall": [acc, f1], "f_score": [f1, f1],
        }
        self.runtime_seconds = 1.0


def test_summary_two_pass_oracle():
    folds = [_Fold(0.9, 0.8), _Fold(0.7, 0.85), _Fold(0.8, 0.9)]
    s = summarize(folds)
    vals = [0.9, 0.7, 0.8]
    mean = sum(vals) / 3
    std = (sum((v - mean) ** 2 for v in vals) / 2) ** 0.5
    assert s["macro_f"]["mean"] == pytest.approx(mean) and s["macro_f"]["std"] == pytest.approx(std)
    assert s["recall"]["mean"][1] == pytest.approx(mean)


def test_parallel_matches_sequential():
    cfg = from_dict({"dgp": {"n": 80}, "eval": {"k": 2}, "model": {"kind": "mrnn", "epochs": 3}})
    a = run_experiment(cfg, jobs=1).to_dict()
    b = run_experiment(cfg, jobs=2).to_dict()
    strip = lambda d: [{k: v for k, v in f.items() if k != "runtime_seconds"} for f in d["folds"]]  # noqa: E731
    assert strip(a) == strip(b)
