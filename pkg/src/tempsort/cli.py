"""Command-line entry point: ``tempsort <command> ...``.

Exit codes: 0 success, 1 runtime error (bad file, failed training), 2 usage
error (bad flags or config).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .core import Dataset
from .dgp import DgpConfig, DgpKind, generate
from .errors import ConfigError, TempsortError
from .experiment import (
    REPORT_SCHEMA_VERSION,
    fold_seed,
    format_report,
    load_source,
    run_experiment,
    score,
    select_and_fit,
)
from .io import (
    discount_traces,
    export_tables,
    load_dataset,
    load_model,
    marginal_table,
    save_dataset,
    save_json,
    save_model,
    save_predictions,
)

log = logging.getLogger("tempsort")


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _outdir(cfg: RunConfig, args) -> Path:
    out = Path(args.out_dir or cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _plots(model, data: Dataset, out: Path) -> None:
    from . import plots

    values = marginal_table(model, data)
    plots.plot_marginals(model.grid.points, values, out / "marginals.png", list(data.criteria_names))
    if model.kind == "mrnn":
        plots.plot_discounts(discount_traces(model, data), out / "discounts.png", list(data.criteria_names))


def _metrics_text(title: str, cm, rep) -> str:
    lines = [title, "", "confusion (rows = true, columns = predicted):"]
    lines += ["  " + " ".join(f"{c:6d}" for c in row) for row in cm.to_list()]
    lines += ["", f"macro F   {rep.macro_f:.4f}", f"accuracy  {rep.accuracy:.4f}"]
    for h, (p, r, f1) in enumerate(zip(rep.precision, rep.recall, rep.f_score), 1):
        lines.append(f"class {h}: precision {p:.4f}  recall {r:.4f}  F {f1:.4f}")
    return "\n".join(lines) + "\n"


def cmd_generate(args) -> int:
    dataset, _ = generate(DgpConfig(args.kind, n_samples=args.n, seed=args.seed or 0))
    save_dataset(dataset, args.out)
    labels = dataset.labels
    for h in range(1, dataset.class_count + 1):
        count = int((labels == h).sum())
        print(f"class {h}: {count} ({count / len(labels):.1%})")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg, args)
    data = load_source(cfg)
    labeled = [i for i, y in enumerate(data.labels) if y > 0]
    data = data.subset(labeled)
    perm = np.random.default_rng(cfg.eval.seed).permutation(len(data))
    n_val = max(1, len(data) // 5)
    train = data.subset(sorted(perm[n_val:].tolist()))
    validation = data.subset(sorted(perm[:n_val].tolist()))
    model, params, tried = select_and_fit(cfg, train, validation, fold_seed(cfg.eval.seed, 0))
    cm, rep = score(model, data, cfg.eval.beta)
    save_model(model, out / "model.json")
    export_tables(model, data, out)
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "type": "train",
        "config": cfg.to_dict(),
        "selected": params,
        "candidates": tried,
        "confusion": cm.to_list(),
        "metrics": rep.to_dict(),
    }
    save_json(report, out / "report.json")
    (out / "report.txt").write_text(
        _metrics_text(f"{model.kind} trained on {len(data)} samples, selected {params}", cm, rep),
        encoding="utf-8",
    )
    if cfg.output.plots:
        _plots(model, data, out)
    print(f"selected {params}; in-sample macro F {rep.macro_f:.4f}; wrote {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg, args)
    data = load_source(cfg)
    if args.model:
        model = load_model(args.model)
        cm, rep = score(model, data, cfg.eval.beta)
        report = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "type": "evaluation",
            "model": str(args.model),
            "n": len(data),
            "confusion": cm.to_list(),
            "metrics": rep.to_dict(),
        }
        text = _metrics_text(f"{model.kind} model {args.model} on {len(data)} samples", cm, rep)
    else:
        result = run_experiment(cfg, data, jobs=args.jobs)
        folds_dir = out / "folds"
        folds_dir.mkdir(exist_ok=True)
        for f in result.folds:
            save_model(f.model, folds_dir / f"model_fold{f.index}.json")
        report = result.to_dict()
        for entry in report["folds"]:
            entry["model_file"] = f"folds/model_fold{entry['fold']}.json"
        text = format_report(result)
        if cfg.output.plots:
            from . import plots

            plots.plot_fold_metrics(report, out / "fold_metrics.png")
    save_json(report, out / "report.json")
    (out / "report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    data = load_dataset(args.data)
    values = model.comprehensive(data.series)
    predicted = model.predict_many(data.series)
    save_predictions(data.ids, data.labels, predicted, values, args.out)
    print(f"wrote {len(data)} predictions to {args.out}")
    return 0


def cmd_export(args) -> int:
    model = load_model(args.model)
    data = load_dataset(args.data)
    out = Path(args.out)
    paths = export_tables(model, data, out)
    if not args.no_plots:
        _plots(model, data, out)
    for p in paths:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tempsort", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def seeded(p):
        p.add_argument("--seed", type=int, default=None, help="override every seed in the run")
        return p

    p = seeded(sub.add_parser("generate", help="write a synthetic dataset CSV"))
    p.add_argument("--kind", required=True, choices=[k.value for k in DgpKind])
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    for name, func, text in (
        ("train", cmd_train, "fit one model (hyperparameters chosen on a 20% holdout)"),
        ("evaluate", cmd_evaluate, "k-fold experiment, or score a saved model with --model"),
    ):
        p = seeded(sub.add_parser(name, help=text))
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--out-dir", help="override output.dir")
        if name == "evaluate":
            p.add_argument("--model", help="score this saved model instead of cross-validating")
            p.add_argument("--jobs", type=int, default=None, help="worker processes for folds")
        p.set_defaults(func=func)

    p = seeded(sub.add_parser("predict", help="assign classes with a saved model"))
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = seeded(sub.add_parser("export", help="write marginal and discount tables"))
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if getattr(args, "n", 1) is not None and getattr(args, "n", 1) < 1:
        parser.error("--n must be positive")
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        parser.error("--jobs must be positive")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"tempsort: config error: {exc}", file=sys.stderr)
        return 2
    except (TempsortError, OSError, ValueError) as exc:
        print(f"tempsort: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
