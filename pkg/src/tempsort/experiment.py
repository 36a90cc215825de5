"""Cross-validated experiment harness.

Each fold builds its grid from its own training part, fits every
hyperparameter combination, keeps the one with the best validation macro F
(first in list order on ties) and scores it on the test part. Folds are
independent and seeded from ``(eval.seed, fold)``, so running them in a
process pool gives the same numbers as running them in sequence.
"""

from __future__ import annotations

import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import mrnn, tpl
from .config import RunConfig
from .core import Dataset, build_grid
from .dgp import DgpConfig, generate
from .io import load_dataset
from .metrics import confusion, kfold_split, mean_std, metrics

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


def load_source(cfg: RunConfig) -> Dataset:
    if cfg.dataset.path:
        return load_dataset(cfg.dataset.path, cfg.dataset.class_count)
    return generate(DgpConfig(cfg.dgp.kind, n_samples=cfg.dgp.n, seed=cfg.dgp.seed))[0]


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def candidates(cfg: RunConfig) -> list:
    mc = cfg.model
    if mc.kind == "tpl":
        return [{"gamma": g, "tau": t, "c": c} for g, t, c in itertools.product(mc.gamma, mc.tau, mc.c)]
    return [{"gamma": g} for g in mc.gamma]


def fit_candidate(cfg: RunConfig, params: dict, train: Dataset, validation: Dataset, seed: int):
    mc = cfg.model
    grid = build_grid(train, params["gamma"])
    if mc.kind == "tpl":
        return tpl.train(
            train, params["gamma"], params["tau"], params["c"], grid=grid, cap=mc.pair_cap,
            seed=seed, solver=mc.solver, tol=mc.tol, max_iter=mc.max_iter,
        )
    config = mrnn.MrnnConfig(
        m=train.m, T=train.horizon, gamma=params["gamma"], hidden_size=mc.hidden_size,
        class_count=train.class_count, q_hidden=mc.q_hidden, epochs=mc.epochs,
        learning_rate=mc.learning_rate, momentum=mc.momentum, batch_size=mc.batch_size,
        seed=seed, validation_patience=mc.validation_patience, grad_clip=mc.grad_clip,
        mode=mc.mode,
    )
    return mrnn.fit(train, validation, config, grid=grid)


def score(model, data: Dataset, beta: float):
    cm = confusion(data.labels, model.predict_many(data.series), data.class_count)
    return cm, metrics(cm, beta)


def select_and_fit(cfg: RunConfig, train: Dataset, validation: Dataset, seed: int):
    """Fit every candidate; return (best_model, best_params, validation scores)."""
    best = None
    tried = []
    for params in candidates(cfg):
        model = fit_candidate(cfg, params, train, validation, seed)
        _, rep = score(model, validation, cfg.eval.beta)
        tried.append({"params": params, "validation_macro_f": rep.macro_f})
        log.info("candidate %s: validation macro F %.4f", params, rep.macro_f)
        if best is None or rep.macro_f > best[2]:
            best = (model, params, rep.macro_f)
    return best[0], best[1], tried


@dataclass
class FoldResult:
    index: int
    params: dict
    candidates: list
    test_confusion: list
    test_metrics: dict
    runtime_seconds: float
    model: object = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "fold": self.index,
            "selected": self.params,
            "candidates": self.candidates,
            "test_confusion": self.test_confusion,
            "test_metrics": self.test_metrics,
            "runtime_seconds": self.runtime_seconds,
        }


def run_fold(cfg: RunConfig, data: Dataset, split, index: int) -> FoldResult:
    fold = split[index]
    start = time.perf_counter()
    train, validation, test = (data.subset(ix) for ix in (fold.train, fold.validation, fold.test))
    model, params, tried = select_and_fit(cfg, train, validation, fold_seed(cfg.eval.seed, index))
    cm, rep = score(model, test, cfg.eval.beta)
    elapsed = time.perf_counter() - start
    log.info("fold %d: test macro F %.4f (%.1fs)", index, rep.macro_f, elapsed)
    return FoldResult(index, params, tried, cm.to_list(), rep.to_dict(), elapsed, model)


def _run_fold_job(args):
    return run_fold(*args)


@dataclass
class ExperimentReport:
    config: dict
    folds: list
    summary: dict
    n: int
    class_count: int

    @property
    def macro_f(self) -> tuple:
        s = self.summary["macro_f"]
        return s["mean"], s["std"]

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "type": "cross_validation",
            "config": self.config,
            "n": self.n,
            "class_count": self.class_count,
            "folds": [f.to_dict() for f in self.folds],
            "summary": self.summary,
        }


def summarize(folds: list) -> dict:
    """Mean and (n - 1) std across folds for every scalar and per-class metric."""
    out = {}
    for key in ("macro_f", "accuracy"):
        mean, std = mean_std([f.test_metrics[key] for f in folds])
        out[key] = {"mean": mean, "std": std}
    for key in ("precision", "recall", "f_score"):
        per = np.array([f.test_metrics[key] for f in folds], dtype=float)
        stats = [mean_std(per[:, h]) for h in range(per.shape[1])]
        out[key] = {"mean": [s[0] for s in stats], "std": [s[1] for s in stats]}
    mean, std = mean_std([f.runtime_seconds for f in folds])
    out["runtime_seconds"] = {"mean": mean, "std": std, "total": float(sum(f.runtime_seconds for f in folds))}
    return out


def run_experiment(cfg: RunConfig, data: Dataset = None, jobs: int = None) -> ExperimentReport:
    """k-fold train / select / test; ``jobs`` > 1 runs folds in worker processes."""
    data = load_source(cfg) if data is None else data
    jobs = cfg.eval.jobs if jobs is None else jobs
    split = kfold_split(len(data), cfg.eval.k, cfg.eval.ratios, cfg.eval.seed)
    args = [(cfg, data, split, i) for i in range(len(split))]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            folds = list(pool.map(_run_fold_job, args))
    else:
        folds = [run_fold(*a) for a in args]
    folds.sort(key=lambda f: f.index)
    return ExperimentReport(cfg.to_dict(), folds, summarize(folds), len(data), data.class_count)


def format_report(report: ExperimentReport) -> str:
    s = report.summary
    cfg = report.config
    lines = [
        f"model: {cfg['model']['kind']}   folds: {len(report.folds)}   samples: {report.n}",
        "",
        "fold  macro_F  accuracy  seconds  selected",
    ]
    for f in report.folds:
        lines.append(
            f"{f.index:>4}  {f.test_metrics['macro_f']:.4f}   {f.test_metrics['accuracy']:.4f}"
            f"    {f.runtime_seconds:7.1f}  {f.params}"
        )
    lines += [
        "",
        f"macro F   {s['macro_f']['mean']:.4f} +- {s['macro_f']['std']:.4f}",
        f"accuracy  {s['accuracy']['mean']:.4f} +- {s['accuracy']['std']:.4f}",
    ]
    for h, (p, r, f1) in enumerate(zip(s["precision"]["mean"], s["recall"]["mean"], s["f_score"]["mean"]), 1):
        lines.append(f"class {h}: precision {p:.4f}  recall {r:.4f}  F {f1:.4f}")
    return "\n".join(lines) + "\n"
