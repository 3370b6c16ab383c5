"""Command-line harness.

Subcommands: gen-data, train, evaluate, exp1, exp2, exp3, exp4, final, plot.
Configuration comes from an optional JSON file (``--config``) whose keys
mirror the dataclass fields; command-line flags override the file and every
unset field falls back to its documented default. Exit status: 0 on
success, 2 on configuration or validation errors, 3 on training divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .dropout import DropoutConfig
from .experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    persist_test_set,
    make_domain_data,
    run_exp1,
    run_exp2,
    run_exp3,
    run_exp4,
    run_final,
    train_and_persist,
)
from .losses import LossConfig
from .metrics import evaluate
from .model import UNetConfig, load_checkpoint
from .plots import save_class_boxplot, save_heatmap, save_sweep
from .synth import PRESET_NAMES, AugmentConfig, generate_domain_dataset, preset_domain, save_dataset, load_dataset
from .train import TrainConfig, TrainingDiverged
from .types import ClassVocabulary


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return data


def _experiment_config(args: argparse.Namespace, experiment: str) -> ExperimentConfig:
    raw = _load_config(args.config)
    raw["experiment"] = experiment
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}; valid keys: {sorted(known)}")
    for key in ("seeds", "dropout_probs", "domains"):
        if key in raw:
            raw[key] = tuple(raw[key])
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out_dir"] = args.out
    if args.image_size is not None:
        raw["image_size"] = args.image_size
    if args.epochs is not None:
        raw["epochs"] = args.epochs
    if getattr(args, "dropout_prob", None) is not None:
        if experiment == "final":
            raw["final_dropout_prob"] = args.dropout_prob
        else:
            raw["dropout_probs"] = (0.0, args.dropout_prob)
    return ExperimentConfig(**raw)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--image-size", type=int, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--dropout-prob", type=float, default=None)


def cmd_gen_data(args: argparse.Namespace) -> int:
    vocab = ClassVocabulary()
    out = Path(args.out or "data")
    presets = args.preset or list(PRESET_NAMES)
    for name in presets:
        spec = preset_domain(name, args.image_size or 64)
        samples = generate_domain_dataset(spec, args.n, args.seed or 0)
        save_dataset(samples, out / name, vocab)
        print(f"wrote {len(samples)} samples to {out / name}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    raw = _load_config(args.config)
    domains = raw.get("domains", ["camus_like"])
    n = raw.get("n_per_domain", 150)
    image_size = args.image_size or raw.get("image_size", 64)
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    out = Path(args.out or raw.get("out_dir", "runs"))
    tr_raw = dict(raw.get("train", {}))
    if args.epochs is not None:
        tr_raw["epochs"] = args.epochs
    dropout_prob = args.dropout_prob if args.dropout_prob is not None else tr_raw.pop("dropout_prob", None)

    vocab = ClassVocabulary()
    run_root = out / "train"
    train_set, val_set, test_set = [], [], []
    for name in domains:
        data = make_domain_data(preset_domain(name, image_size), n, seed)
        train_set += list(data.train)
        val_set += list(data.val)
        test_set += persist_test_set(run_root, list(data.test), vocab)

    dropout = None
    if dropout_prob is not None:
        from .dropout import partially_labelled_classes

        eligible = partially_labelled_classes(train_set)
        dropout = DropoutConfig(dropout_prob, eligible)
    augment = AugmentConfig() if tr_raw.pop("augment", True) else None
    loss = LossConfig(tr_raw.pop("loss", "adaptive"))
    model_raw = tr_raw.pop("model", {})
    use_grid = tr_raw.pop("grid_search", False)
    model_cfg = UNetConfig(out_channels=vocab.K + 1, seed=seed, **model_raw)
    cfg = TrainConfig(loss=loss, dropout=dropout, augment=augment, seed=seed, model=model_cfg, **tr_raw)

    if use_grid:
        from .train import grid_search

        outcome = grid_search(cfg, train_set, val_set)
        cfg = outcome.config
        print(f"grid search chose lr={cfg.initial_lr:g} batch={cfg.batch_size} "
              f"out of {len(outcome.table)} points")

    run_path = run_root / f"{'-'.join(domains)}-{seed}"
    _, manifest, report = train_and_persist(cfg, train_set, val_set, test_set, vocab, run_path)
    print(f"run directory: {run_path}")
    print(f"best epoch {manifest.best_epoch}, val Dice {manifest.best_val_dice:.4f}")
    for domain in report.domains():
        print(f"test {domain}: mean foreground Dice {report.mean_foreground(domain):.4f}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    vocab = ClassVocabulary()
    model, meta = load_checkpoint(args.checkpoint)
    samples = []
    for data_dir in args.data_dir:
        samples += load_dataset(data_dir, vocab)
    report = evaluate(model, samples, vocab)
    out = Path(args.out or "evaluation")
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "metrics.csv")
    report.to_json(out / "metrics.json")
    print(f"checkpoint epoch {meta['epoch']} (val Dice {meta['val_dice']:.4f})")
    for domain in report.domains():
        print(f"{domain}: mean foreground Dice {report.mean_foreground(domain):.4f}")
    print(f"wrote {out / 'metrics.csv'}")
    return 0


def cmd_experiment(args: argparse.Namespace, experiment: str) -> int:
    cfg = _experiment_config(args, experiment)
    runner = {"exp1": run_exp1, "exp2": run_exp2, "exp3": run_exp3, "exp4": run_exp4, "final": run_final}[experiment]
    result = runner(cfg)
    if experiment == "exp1":
        print(f"cross-domain matrix ({', '.join(result.domains)}):")
        print(np.array_str(result.matrix, precision=3))
        print(f"wrote {result.matrix_csv} and {result.heatmap_png}")
    elif experiment == "exp2":
        for name, report in result.reports.items():
            print(f"{name}: " + "  ".join(f"{d}={report.mean_foreground(d):.3f}" for d in report.domains()))
        print(f"wrote {result.summary_csv} and {result.panels_png}")
    elif experiment == "exp3":
        for name in result.reports:
            print(f"{name}: mean foreground {result.mean_foreground(name):.3f}")
        print(f"wrote {result.summary_csv} and {result.boxplot_png}")
    elif experiment == "exp4":
        for p in result.probs:
            print(f"p={p:.1f}: {result.chamber_mean[p]:.3f} +- {result.chamber_std[p]:.3f}")
        print(f"benchmark: {result.benchmark_mean:.3f}")
        if result.wilcoxon is not None:
            print(f"Wilcoxon p=0 vs p=0.5: W={result.wilcoxon.statistic:.1f} p={result.wilcoxon.p_value:.4g}")
        print(f"wrote {result.sweep_csv} and {result.sweep_png}")
    else:
        for model, row in result.table.items():
            print(f"{model}: " + "  ".join(f"{c}={v:.3f}" for c, v in row.items()))
        for cname, w in result.wilcoxon.items():
            print(f"Wilcoxon {cname}: W={w.statistic:.1f} p={w.p_value:.4g}")
        print(f"wrote {result.table_csv} and {result.panels_png}")
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    """Re-render figures from an experiment directory's persisted CSVs."""
    exp_dir = Path(args.dir)
    experiment = args.experiment
    plots = exp_dir / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    if experiment == "exp1":
        with open(exp_dir / "matrix.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        domains = rows[0][1:]
        matrix = np.array([[float(x) for x in row[1:]] for row in rows[1:]])
        print(f"wrote {save_heatmap(matrix, domains, plots / 'heatmap.png')}")
    elif experiment == "exp3":
        data: dict[str, dict[str, list[float]]] = {}
        for run_dir in sorted(exp_dir.glob("*-*/metrics.csv")):
            model = run_dir.parent.name.rsplit("-", 1)[0]
            with open(run_dir, newline="") as fh:
                for rec in csv.DictReader(fh):
                    data.setdefault(model, {}).setdefault(rec["class_name"], []).append(float(rec["dice"]))
        print(f"wrote {save_class_boxplot(data, plots / 'boxplot.png')}")
    elif experiment == "exp4":
        with open(exp_dir / "sweep_summary.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        probs = [float(r["dropout_prob"]) for r in rows]
        means = [float(r["mean"]) for r in rows]
        stds = [float(r["std"]) for r in rows]
        print(f"wrote {save_sweep(probs, means, stds, plots / 'sweep.png')}")
    else:
        raise ValueError(f"plot supports exp1, exp3 and exp4 directories, got {experiment!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="partseg", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write synthetic domains in the ingestion format")
    p.add_argument("--preset", action="append", choices=PRESET_NAMES,
                   help="repeatable; default: all presets")
    p.add_argument("--n", type=int, default=100)
    _add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one model from a config file")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on dataset directories")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", action="append", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run {name}")
        _add_common(p)
        p.set_defaults(func=lambda a, _n=name: cmd_experiment(a, _n))

    p = sub.add_parser("plot", help="re-render figures from persisted CSVs")
    p.add_argument("--experiment", required=True, choices=("exp1", "exp3", "exp4"))
    p.add_argument("--dir", required=True, help="experiment directory, e.g. runs/exp1")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
