"""Configuration-driven experiment harness.

Five pipelines built from the same pieces:

exp1   per-domain single-structure models, cross-domain Dice matrix
exp2   combined partially labelled corpus: standard vs presence-aware losses
exp3   controlled label removal on one domain, no domain shift
exp4   label-dropout probability sweep on a two-domain corpus
final  combined corpus with and without label dropout

Every training run is persisted as
``<out>/<experiment>/<run-name>-<seed>/{manifest.json, checkpoint.pt,
metrics.csv, metrics.json, plots/}`` and every evaluation happens against a
test set that was first written to disk in the ingestion format and read
back, so all reported numbers are reproducible from persisted artifacts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .dropout import DropoutConfig, partially_labelled_classes
from .losses import LossConfig
from .metrics import (
    MetricsReport,
    WilcoxonResult,
    cross_domain_matrix,
    evaluate,
    predict_labels,
    wilcoxon_signed_rank,
)
from .model import UNet, UNetConfig, save_checkpoint
from .plots import save_class_boxplot, save_heatmap, save_prediction_panels, save_sweep
from .synth import (
    AugmentConfig,
    DomainSpec,
    SplitSpec,
    apply_label_removal,
    generate_domain_dataset,
    load_dataset,
    preset_domain,
    save_dataset,
    split_dataset,
)
from .train import (
    RunManifest,
    TrainConfig,
    TrainingDiverged,
    check_split_disjoint,
    dataset_fingerprint,
    train,
)
from .types import ClassVocabulary, SegmentationSample, presence_vector

EXPERIMENTS = ("exp1", "exp2", "exp3", "exp4", "final")

DEFAULT_N_PER_DOMAIN = {"exp1": 120, "exp2": 140, "exp3": 375, "exp4": 200, "final": 140}
DEFAULT_N_SECOND_DOMAIN = {"exp4": 120}
DEFAULT_EPOCHS = {"exp1": 16, "exp2": 20, "exp3": 20, "exp4": 30, "final": 25}

RING_CLASS = 1     # partially removed in exp3
CHAMBER_CLASS = 2  # removed from the second domain in exp4


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs for one experiment run; unset fields fall back to desk-scale
    defaults chosen so each pipeline finishes in minutes on CPU."""

    experiment: str
    out_dir: str = "runs"
    image_size: int = 64
    n_per_domain: Optional[int] = None
    n_second_domain: Optional[int] = None  # exp4: size of the label-removed domain
    epochs: Optional[int] = None
    batch_size: int = 16
    initial_lr: float = 0.1
    depth: int = 3
    base_channels: int = 8
    seed: int = 0
    seeds: tuple[int, ...] = (0, 1, 2)
    dropout_probs: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(11))
    removal_fraction: float = 0.5
    final_dropout_prob: float = 0.5
    domains: tuple[str, ...] = ("camus_like", "unity_like", "echonet_like")

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if any(not 0.0 <= p <= 1.0 for p in self.dropout_probs):
            raise ValueError(f"dropout probabilities must lie in [0, 1], got {self.dropout_probs}")
        if not 0.0 <= self.removal_fraction <= 1.0:
            raise ValueError(f"removal fraction must lie in [0, 1], got {self.removal_fraction}")

    @property
    def n(self) -> int:
        return self.n_per_domain or DEFAULT_N_PER_DOMAIN[self.experiment]

    @property
    def n_second(self) -> int:
        return self.n_second_domain or DEFAULT_N_SECOND_DOMAIN.get(self.experiment, self.n)

    @property
    def n_epochs(self) -> int:
        return self.epochs or DEFAULT_EPOCHS[self.experiment]

    def train_template(self, seed: int, loss: str, augment: Optional[AugmentConfig],
                       dropout: Optional[DropoutConfig], out_channels: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.n_epochs,
            batch_size=self.batch_size,
            initial_lr=self.initial_lr,
            loss=LossConfig(loss),
            dropout=dropout,
            augment=augment,
            seed=seed,
            model=UNetConfig(depth=self.depth, base_channels=self.base_channels,
                             out_channels=out_channels, seed=seed),
        )


@dataclass(frozen=True)
class DomainData:
    spec: DomainSpec
    train: tuple[SegmentationSample, ...]
    val: tuple[SegmentationSample, ...]
    test: tuple[SegmentationSample, ...]  # always fully labelled


def make_domain_data(spec: DomainSpec, n: int, seed: int,
                     fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)) -> DomainData:
    """Generate a domain with full ground truth, split it, then erase the
    classes the domain does not annotate from train and val only. The test
    split keeps every label, which is what makes quantitative evaluation of
    never-annotated structures possible on synthetic data."""
    full_spec = replace(spec, labels_present=(True, True, True))
    samples = generate_domain_dataset(full_spec, n, seed)
    tr, va, te = split_dataset(samples, SplitSpec(fractions, seed=seed))
    for c, flag in enumerate(spec.labels_present):
        if not flag:
            tr = apply_label_removal(tr, c, 1.0, seed)
            va = apply_label_removal(va, c, 1.0, seed)
    return DomainData(spec, tuple(tr), tuple(va), tuple(te))


def binary_view(samples: Sequence[SegmentationSample], class_index: int) -> list[SegmentationSample]:
    """Project samples onto a single-structure task: the chosen class becomes
    label 1, everything else background, presence [True]."""
    out = []
    for s in samples:
        out.append(replace(s, labels=(s.labels == class_index + 1).astype(np.uint8),
                           presence=presence_vector([True])))
    return out


def persist_test_set(out: Path, samples: Sequence[SegmentationSample], vocab: ClassVocabulary) -> list[SegmentationSample]:
    """Write one domain's test split in the ingestion format and read it back;
    evaluations use the reloaded copy so metrics derive from disk artifacts."""
    domain = samples[0].domain_id
    root = out / "data" / domain
    save_dataset(samples, root, vocab)
    return load_dataset(root, vocab)


def train_and_persist(
    train_cfg: TrainConfig,
    train_set: Sequence[SegmentationSample],
    val_set: Sequence[SegmentationSample],
    test_set: Sequence[SegmentationSample],
    vocab: ClassVocabulary,
    run_path: Path,
) -> tuple[UNet, RunManifest, MetricsReport]:
    """Train, check train/val/test disjointness, persist the run directory,
    evaluate on the test set. A divergence still writes the diagnostic
    manifest before propagating."""
    run_path.mkdir(parents=True, exist_ok=True)
    (run_path / "plots").mkdir(exist_ok=True)
    try:
        model, manifest = train(train_cfg, train_set, val_set)
    except TrainingDiverged as exc:
        exc.manifest.to_json(run_path / "manifest.json")
        raise
    manifest.dataset_fingerprints["test"] = dataset_fingerprint(test_set)
    check_split_disjoint(manifest.dataset_fingerprints)
    manifest.to_json(run_path / "manifest.json")
    save_checkpoint(run_path / "checkpoint.pt", model, manifest.best_epoch, manifest.best_val_dice)
    report = evaluate(model, test_set, vocab)
    report.to_csv(run_path / "metrics.csv")
    report.to_json(run_path / "metrics.json")
    return model, manifest, report


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([x if isinstance(x, str) else repr(x) for x in row])


# --- experiment 1: cross-domain matrix ----------------------------------------


@dataclass(frozen=True)
class Exp1Result:
    domains: tuple[str, ...]
    matrix: np.ndarray
    matrix_csv: Path
    heatmap_png: Path


def run_exp1(cfg: ExperimentConfig) -> Exp1Result:
    """One single-structure model per domain (standard loss, augmentation),
    evaluated on every domain's test set."""
    if len(cfg.domains) < 2:
        raise ValueError("exp1 needs at least 2 domains")
    out = Path(cfg.out_dir) / "exp1"
    vocab = ClassVocabulary((ClassVocabulary().names[0],))
    models: dict[str, UNet] = {}
    test_sets: dict[str, list[SegmentationSample]] = {}
    for name in cfg.domains:
        data = make_domain_data(preset_domain(name, cfg.image_size), cfg.n, cfg.seed)
        tr = binary_view(data.train, 0)
        va = binary_view(data.val, 0)
        te = binary_view(data.test, 0)
        test_sets[name] = persist_test_set(out, te, vocab)
        tcfg = cfg.train_template(cfg.seed, "standard", AugmentConfig(), None, out_channels=2)
        model, _, _ = train_and_persist(tcfg, tr, va, test_sets[name], vocab, out / f"{name}-{cfg.seed}")
        models[name] = model
    matrix, order = cross_domain_matrix(models, test_sets, vocab)
    matrix_csv = out / "matrix.csv"
    _write_csv(matrix_csv, ["trained_on", *order], [[d, *matrix[i]] for i, d in enumerate(order)])
    (out / "plots").mkdir(exist_ok=True)
    heatmap = save_heatmap(matrix, order, out / "plots" / "heatmap.png")
    return Exp1Result(order, matrix, matrix_csv, heatmap)


# --- experiment 2: combined partially labelled corpus --------------------------

EXP2_MODELS = (
    ("standard-aug", "standard", True),
    ("adaptive-noaug", "adaptive", False),
    ("adaptive-aug", "adaptive", True),
)


@dataclass(frozen=True)
class Exp2Result:
    reports: dict[str, MetricsReport]
    summary_csv: Path
    panels_png: Path


def _combined_corpus(cfg: ExperimentConfig) -> tuple[dict[str, DomainData], list, list]:
    per_domain = {name: make_domain_data(preset_domain(name, cfg.image_size), cfg.n, cfg.seed)
                  for name in cfg.domains}
    train_set = [s for d in per_domain.values() for s in d.train]
    val_set = [s for d in per_domain.values() for s in d.val]
    return per_domain, train_set, val_set


def run_exp2(cfg: ExperimentConfig) -> Exp2Result:
    """Standard loss vs presence-aware loss (with/without augmentation) on the
    combined corpus; evaluation on fully labelled per-domain test sets."""
    out = Path(cfg.out_dir) / "exp2"
    vocab = ClassVocabulary()
    per_domain, train_set, val_set = _combined_corpus(cfg)
    test_sets = {name: persist_test_set(out, list(d.test), vocab) for name, d in per_domain.items()}
    all_test = [s for te in test_sets.values() for s in te]

    reports: dict[str, MetricsReport] = {}
    models: dict[str, UNet] = {}
    for run_name, loss, use_aug in EXP2_MODELS:
        tcfg = cfg.train_template(cfg.seed, loss, AugmentConfig() if use_aug else None, None, vocab.K + 1)
        model, _, report = train_and_persist(tcfg, train_set, val_set, all_test, vocab, out / f"{run_name}-{cfg.seed}")
        reports[run_name] = report
        models[run_name] = model

    summary_rows = []
    for run_name, report in reports.items():
        for domain in report.domains():
            for cname in vocab.names:
                mean, std = report.mean_std(domain, cname)
                summary_rows.append([run_name, domain, cname, mean, std])
    summary_csv = out / "summary.csv"
    _write_csv(summary_csv, ["model", "domain", "class", "mean_dice", "std_dice"], summary_rows)

    (out / "plots").mkdir(exist_ok=True)
    panel_rows = []
    for name in cfg.domains:
        sample = test_sets[name][0]
        preds = {rn: predict_labels(models[rn], [sample])[0] for rn, _, _ in EXP2_MODELS}
        panel_rows.append((sample.image, sample.labels, preds))
    panels = save_prediction_panels(panel_rows, out / "plots" / "panels.png")
    return Exp2Result(reports, summary_csv, panels)


# --- experiment 3: controlled removal, no domain shift -------------------------

EXP3_MODELS = ("benchmark", "standard-removed", "adaptive-removed")


@dataclass(frozen=True)
class Exp3Result:
    reports: dict[str, dict[int, MetricsReport]]  # model -> seed -> report
    summary_csv: Path
    boxplot_png: Path
    wilcoxon: dict[str, WilcoxonResult]

    def mean_foreground(self, model: str) -> float:
        return float(np.mean([r.mean_foreground() for r in self.reports[model].values()]))

    def mean_class(self, model: str, class_name: str) -> float:
        return float(np.mean([r.mean_std(class_name=class_name)[0] for r in self.reports[model].values()]))


def run_exp3(cfg: ExperimentConfig) -> Exp3Result:
    """Benchmark (full labels) vs standard and presence-aware losses trained
    with the ring label removed from a fraction of the training data, all on
    one domain and without augmentation, across cfg.seeds."""
    out = Path(cfg.out_dir) / "exp3"
    vocab = ClassVocabulary()
    spec = replace(preset_domain(cfg.domains[0], cfg.image_size), labels_present=(True, True, True))
    data = make_domain_data(spec, cfg.n, cfg.seed)
    test_set = persist_test_set(out, list(data.test), vocab)

    reports: dict[str, dict[int, MetricsReport]] = {name: {} for name in EXP3_MODELS}
    for seed in cfg.seeds:
        removed = apply_label_removal(list(data.train), RING_CLASS, cfg.removal_fraction, seed)
        for run_name, loss, train_split in (
            ("benchmark", "standard", list(data.train)),
            ("standard-removed", "standard", removed),
            ("adaptive-removed", "adaptive", removed),
        ):
            tcfg = cfg.train_template(seed, loss, None, None, vocab.K + 1)
            _, _, report = train_and_persist(tcfg, train_split, list(data.val), test_set, vocab,
                                             out / f"{run_name}-{seed}")
            reports[run_name][seed] = report

    summary_rows = []
    for run_name, by_seed in reports.items():
        for cname in vocab.names:
            vals = [r.mean_std(class_name=cname)[0] for r in by_seed.values()]
            summary_rows.append([run_name, cname, float(np.mean(vals)), float(np.std(vals))])
        fg = [r.mean_foreground() for r in by_seed.values()]
        summary_rows.append([run_name, "foreground", float(np.mean(fg)), float(np.std(fg))])
    summary_csv = out / "summary.csv"
    _write_csv(summary_csv, ["model", "class", "mean_dice", "std_over_seeds"], summary_rows)

    box_data = {
        run_name: {cname: np.concatenate([r.values(class_name=cname) for r in by_seed.values()]).tolist()
                   for cname in vocab.names}
        for run_name, by_seed in reports.items()
    }
    (out / "plots").mkdir(exist_ok=True)
    boxplot = save_class_boxplot(box_data, out / "plots" / "boxplot.png")

    def paired_fg(model: str) -> list[float]:
        vals = []
        for seed in cfg.seeds:
            table = reports[model][seed].foreground_by_sample()
            vals.extend(table[sid] for sid in sorted(table))
        return vals

    wilcoxon: dict[str, WilcoxonResult] = {}
    for a, b in (("benchmark", "standard-removed"), ("benchmark", "adaptive-removed"),
                 ("adaptive-removed", "standard-removed")):
        try:
            wilcoxon[f"{a}_vs_{b}"] = wilcoxon_signed_rank(paired_fg(a), paired_fg(b))
        except ValueError:
            pass  # fewer than 6 non-zero differences: identical models
    (out / "wilcoxon.json").write_text(json.dumps(
        {k: {"statistic": r.statistic, "p_value": r.p_value, "n": r.n, "method": r.method}
         for k, r in wilcoxon.items()}, indent=2, sort_keys=True))
    return Exp3Result(reports, summary_csv, boxplot, wilcoxon)


# --- experiment 4: label-dropout probability sweep ------------------------------


@dataclass(frozen=True)
class Exp4Result:
    probs: tuple[float, ...]
    chamber_mean: dict[float, float]          # prob -> mean Dice over seeds
    chamber_std: dict[float, float]           # prob -> std of per-seed means
    sample_tables: dict[tuple[float, int], dict[str, float]]  # (prob, seed) -> sample Dice
    benchmark_mean: float
    wilcoxon: Optional[WilcoxonResult]
    sweep_csv: Path
    sweep_png: Path

    def improvement(self, prob: float) -> float:
        return self.chamber_mean[prob] - self.chamber_mean[0.0]


def run_exp4(cfg: ExperimentConfig) -> Exp4Result:
    """Sweep the label-dropout probability on a two-domain corpus where the
    second domain's training masks had the lower chamber erased; report that
    chamber's Dice on the second domain's fully labelled test set."""
    if len(cfg.domains) < 2:
        raise ValueError("exp4 needs two domains")
    out = Path(cfg.out_dir) / "exp4"
    vocab = ClassVocabulary()
    chamber_name = vocab.names[CHAMBER_CLASS]
    first = make_domain_data(preset_domain(cfg.domains[0], cfg.image_size), cfg.n, cfg.seed)
    second = make_domain_data(preset_domain(cfg.domains[1], cfg.image_size), cfg.n_second, cfg.seed)
    # the chamber label is absent from ALL of the second domain's training-time
    # masks, validation included: checkpoint selection must not see labels the
    # scenario says do not exist
    second_train = apply_label_removal(list(second.train), CHAMBER_CLASS, 1.0, cfg.seed)
    second_val = apply_label_removal(list(second.val), CHAMBER_CLASS, 1.0, cfg.seed)
    train_set = list(first.train) + second_train
    val_set = list(first.val) + second_val
    test_set = persist_test_set(out, list(second.test), vocab)
    eligible = partially_labelled_classes(train_set)

    sample_tables: dict[tuple[float, int], dict[str, float]] = {}
    per_seed_mean: dict[float, list[float]] = {p: [] for p in cfg.dropout_probs}
    rows = []
    for prob in cfg.dropout_probs:
        for seed in cfg.seeds:
            tcfg = cfg.train_template(seed, "adaptive", AugmentConfig(),
                                      DropoutConfig(prob, eligible), vocab.K + 1)
            run_name = f"dropout-p{int(round(prob * 100)):03d}"
            _, _, report = train_and_persist(tcfg, train_set, val_set, test_set, vocab,
                                             out / f"{run_name}-{seed}")
            table = report.sample_table(class_name=chamber_name)
            sample_tables[(prob, seed)] = table
            mean = float(np.mean(list(table.values())))
            per_seed_mean[prob].append(mean)
            rows.append([prob, seed, mean])

    bench_means = []
    bench_train = list(first.train) + list(second.train)  # fully labelled
    for seed in cfg.seeds:
        tcfg = cfg.train_template(seed, "standard", AugmentConfig(), None, vocab.K + 1)
        _, _, report = train_and_persist(tcfg, bench_train, val_set, test_set, vocab,
                                         out / f"benchmark-{seed}")
        bench_means.append(report.mean_std(class_name=chamber_name)[0])
    benchmark_mean = float(np.mean(bench_means))

    chamber_mean = {p: float(np.mean(v)) for p, v in per_seed_mean.items()}
    chamber_std = {p: float(np.std(v)) for p, v in per_seed_mean.items()}

    sweep_csv = out / "sweep.csv"
    _write_csv(sweep_csv, ["dropout_prob", "seed", f"mean_{chamber_name}_dice"], rows)
    _write_csv(out / "sweep_summary.csv", ["dropout_prob", "mean", "std"],
               [[p, chamber_mean[p], chamber_std[p]] for p in cfg.dropout_probs])

    wilcoxon = None
    if 0.0 in cfg.dropout_probs and 0.5 in cfg.dropout_probs:
        base, against = [], []
        for seed in cfg.seeds:
            t0, t5 = sample_tables[(0.0, seed)], sample_tables[(0.5, seed)]
            for sid in sorted(t0):
                base.append(t0[sid])
                against.append(t5[sid])
        wilcoxon = wilcoxon_signed_rank(base, against)
        (out / "wilcoxon.json").write_text(json.dumps(
            {"comparison": "p=0.0 vs p=0.5", "statistic": wilcoxon.statistic,
             "p_value": wilcoxon.p_value, "n": wilcoxon.n, "method": wilcoxon.method},
            indent=2, sort_keys=True))

    (out / "plots").mkdir(exist_ok=True)
    probs = tuple(cfg.dropout_probs)
    sweep_png = save_sweep(probs, [chamber_mean[p] for p in probs], [chamber_std[p] for p in probs],
                           out / "plots" / "sweep.png", benchmark=benchmark_mean,
                           ylabel=f"{chamber_name} Dice ({cfg.domains[1]})")
    return Exp4Result(probs, chamber_mean, chamber_std, sample_tables, benchmark_mean,
                      wilcoxon, sweep_csv, sweep_png)


# --- final experiment: combined corpus with label dropout ----------------------

FINAL_MODELS = ("adaptive-aug", "adaptive-aug-ld")


@dataclass(frozen=True)
class FinalResult:
    table: dict[str, dict[str, float]]  # model -> class -> mean Dice on the held-out domain
    wilcoxon: dict[str, WilcoxonResult]
    table_csv: Path
    panels_png: Path
    reports: dict[str, MetricsReport]


def run_final(cfg: ExperimentConfig) -> FinalResult:
    """Repeat the combined-corpus training with and without label dropout and
    compare per-class Dice on the fully labelled test set of the domain that
    annotates only the blood pool."""
    out = Path(cfg.out_dir) / "final"
    vocab = ClassVocabulary()
    per_domain, train_set, val_set = _combined_corpus(cfg)
    partial_domain = None
    for name, d in per_domain.items():
        if not all(d.spec.labels_present):
            partial_domain = name
    if partial_domain is None:
        raise ValueError("final experiment needs one domain with missing annotations")
    test_set = persist_test_set(out, list(per_domain[partial_domain].test), vocab)
    eligible = partially_labelled_classes(train_set)

    reports: dict[str, MetricsReport] = {}
    models: dict[str, UNet] = {}
    for run_name, dropout in (
        ("adaptive-aug", None),
        ("adaptive-aug-ld", DropoutConfig(cfg.final_dropout_prob, eligible)),
    ):
        tcfg = cfg.train_template(cfg.seed, "adaptive", AugmentConfig(), dropout, vocab.K + 1)
        model, _, report = train_and_persist(tcfg, train_set, val_set, test_set, vocab,
                                             out / f"{run_name}-{cfg.seed}")
        reports[run_name] = report
        models[run_name] = model

    table = {rn: {c: reports[rn].mean_std(class_name=c)[0] for c in vocab.names} for rn in FINAL_MODELS}
    table_csv = out / "table.csv"
    _write_csv(table_csv, ["model", *vocab.names],
               [[rn, *(table[rn][c] for c in vocab.names)] for rn in FINAL_MODELS])

    wilcoxon: dict[str, WilcoxonResult] = {}
    for cname in vocab.names:
        a = reports["adaptive-aug"].sample_table(class_name=cname)
        b = reports["adaptive-aug-ld"].sample_table(class_name=cname)
        try:
            wilcoxon[cname] = wilcoxon_signed_rank([a[s] for s in sorted(a)], [b[s] for s in sorted(b)])
        except ValueError:
            pass
    (out / "wilcoxon.json").write_text(json.dumps(
        {k: {"statistic": r.statistic, "p_value": r.p_value, "n": r.n, "method": r.method}
         for k, r in wilcoxon.items()}, indent=2, sort_keys=True))

    (out / "plots").mkdir(exist_ok=True)
    panel_rows = []
    for sample in test_set[:3]:
        preds = {rn: predict_labels(models[rn], [sample])[0] for rn in FINAL_MODELS}
        panel_rows.append((sample.image, sample.labels, preds))
    panels = save_prediction_panels(panel_rows, out / "plots" / "panels.png")
    return FinalResult(table, wilcoxon, table_csv, panels, reports)
