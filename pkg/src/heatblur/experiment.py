"""Config-driven experiment harness: attack -> clean -> evaluate pipelines.

A JSON config describes the model, data source, attack, defense, relevance
rule, and evaluation coverages; unknown keys are rejected.  Runs are
deterministic given (config, seed): reports contain no timestamps and all
randomness flows from the configured seeds, so repeated runs produce
byte-identical files.

Evaluation groups follow the attack-then-clean protocol:

* Adv      - successful adversarial examples, undefended
* Cleaned  - the same adversarial examples after heat-and-blur
* Control  - the benign originals after heat-and-blur

Images whose benign prediction is already wrong are skipped, and failed
attacks are counted but excluded, so every image lands in exactly one of
{skipped_misclassified, attack_failed, evaluated}.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .attack import AttackConfig, run_attack
from .data import Dataset, generate_synthetic_dataset, load_dataset, split_dataset
from .defense import DefenseConfig, heat_and_blur
from .imageio import export_heatmap_png
from .imageops import distance
from .layers import Conv2D, Dense, Flatten, MaxPool2D, ReLU
from .lrp import RuleConfig
from .metrics import NdcgReport, ndcg_curve, ndcg_report
from .model import Model, Prediction, forward, load_model
from .training import TrainingConfig

__all__ = [
    "ConfigError",
    "SyntheticSpec",
    "DatasetConfig",
    "NdcgConfig",
    "TrainSettings",
    "ExperimentConfig",
    "load_config",
    "build_architecture",
    "resolve_datasets",
    "run_experiment",
    "ExperimentResult",
    "sigma_sweep",
    "SweepResult",
]


class ConfigError(Exception):
    """The experiment config is malformed; the message names the offending key."""


@dataclass
class SyntheticSpec:
    classes: int = 3
    size: int = 600
    side: int = 16
    seed: int = 0
    noise: float = 0.08


@dataclass
class DatasetConfig:
    path: Path | None = None
    synthetic: SyntheticSpec | None = None
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.path is not None and self.synthetic is not None:
            raise ConfigError("dataset: give either 'path' or 'synthetic', not both")
        if self.path is None and self.synthetic is None:
            self.synthetic = SyntheticSpec()
        if not 0.0 <= self.train_fraction <= 1.0:
            raise ConfigError(f"dataset.train_fraction must lie in [0, 1], got {self.train_fraction}")


@dataclass
class NdcgConfig:
    coverage_benign: float = 0.99
    coverage_adversarial: float = 0.99
    k_max: int = 5

    def __post_init__(self):
        for name, value in (("coverage_benign", self.coverage_benign),
                            ("coverage_adversarial", self.coverage_adversarial)):
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"ndcg.{name} must lie in [0, 1], got {value}")
        if self.k_max < 1:
            raise ConfigError(f"ndcg.k_max must be >= 1, got {self.k_max}")

    @property
    def ks(self) -> list:
        return list(range(1, self.k_max + 1))


@dataclass
class TrainSettings:
    epochs: int = 8
    learning_rate: float = 0.08
    batch_size: int = 16
    architecture: str = "small_cnn"


@dataclass
class ExperimentConfig:
    seed: int = 0
    output_dir: Path = Path("out")
    model_path: Path = Path("model.json")
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    defense: DefenseConfig = field(default_factory=DefenseConfig)
    rules: RuleConfig = field(default_factory=RuleConfig)
    ndcg: NdcgConfig = field(default_factory=NdcgConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    sweep_sigmas: list | None = None
    export_heatmaps: bool = False
    limit: int | None = None


_TOP_KEYS = {
    "seed", "output_dir", "model", "dataset", "attack", "defense", "lrp", "ndcg",
    "train", "sweep", "export_heatmaps", "limit",
}


def _check_keys(section: dict, allowed, where: str):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _build(cls, section: dict, where: str, **extra):
    try:
        return cls(**section, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON config; relative paths resolve against the file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    _check_keys(doc, _TOP_KEYS, "config")
    base = path.parent

    model_section = dict(doc.get("model", {}))
    _check_keys(model_section, {"path"}, "model")
    model_path = base / model_section.get("path", "model.json")

    dataset_section = dict(doc.get("dataset", {}))
    _check_keys(dataset_section, {"path", "synthetic", "train_fraction"}, "dataset")
    synthetic = None
    if "synthetic" in dataset_section:
        synth_section = dict(dataset_section.pop("synthetic"))
        _check_keys(synth_section, {"classes", "size", "side", "seed", "noise"}, "dataset.synthetic")
        synthetic = _build(SyntheticSpec, synth_section, "dataset.synthetic")
    data_path = dataset_section.pop("path", None)
    dataset = _build(
        DatasetConfig,
        dataset_section,
        "dataset",
        path=base / data_path if data_path is not None else None,
        synthetic=synthetic,
    )

    attack_section = dict(doc.get("attack", {}))
    _check_keys(
        attack_section,
        {"kind", "epsilon", "step", "iterations", "targeted", "target_class", "random_start", "seed"},
        "attack",
    )
    attack = _build(AttackConfig, attack_section, "attack")

    defense_section = dict(doc.get("defense", {}))
    _check_keys(defense_section, {"sigma", "mask_mode"}, "defense")
    defense = _build(DefenseConfig, defense_section, "defense")

    lrp_section = dict(doc.get("lrp", {}))
    _check_keys(lrp_section, {"rule", "alpha", "beta", "epsilon"}, "lrp")
    rules = _build(RuleConfig, lrp_section, "lrp")

    ndcg_section = dict(doc.get("ndcg", {}))
    _check_keys(ndcg_section, {"coverage_benign", "coverage_adversarial", "k_max"}, "ndcg")
    ndcg = _build(NdcgConfig, ndcg_section, "ndcg")

    train_section = dict(doc.get("train", {}))
    _check_keys(train_section, {"epochs", "learning_rate", "batch_size", "architecture"}, "train")
    train = _build(TrainSettings, train_section, "train")

    sweep_section = dict(doc.get("sweep", {}))
    _check_keys(sweep_section, {"sigmas"}, "sweep")
    sweep_sigmas = sweep_section.get("sigmas")
    if sweep_sigmas is not None:
        sweep_sigmas = [float(s) for s in sweep_sigmas]

    seed = doc.get("seed", 0)
    limit = doc.get("limit")
    if limit is not None and int(limit) < 1:
        raise ConfigError(f"limit must be >= 1, got {limit}")
    return ExperimentConfig(
        seed=int(seed),
        output_dir=base / doc.get("output_dir", "out"),
        model_path=model_path,
        dataset=dataset,
        attack=attack,
        defense=defense,
        rules=rules,
        ndcg=ndcg,
        train=train,
        sweep_sigmas=sweep_sigmas,
        export_heatmaps=bool(doc.get("export_heatmaps", False)),
        limit=int(limit) if limit is not None else None,
    )


def build_architecture(name: str, input_shape, class_names) -> Model:
    """Weightless model presets for the train subcommand."""
    h, w, c = input_shape
    classes = len(class_names)
    if name == "small_cnn":
        if h % 4 or w % 4:
            raise ConfigError(f"small_cnn needs height/width divisible by 4, got {h}x{w}")
        layers = [
            Conv2D(c, 6, 3, 3, stride=1, padding=1),
            ReLU(),
            MaxPool2D(2),
            Conv2D(6, 12, 3, 3, stride=1, padding=1),
            ReLU(),
            MaxPool2D(2),
            Flatten(),
            Dense((h // 4) * (w // 4) * 12, classes),
        ]
    elif name == "mlp":
        layers = [Flatten(), Dense(h * w * c, 32), ReLU(), Dense(32, classes)]
    else:
        raise ConfigError(f"unknown architecture {name!r}, expected 'small_cnn' or 'mlp'")
    return Model(layers, class_names, input_shape)


def resolve_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Materialize (train, held-out) splits from the configured source."""
    if cfg.dataset.path is not None:
        full = load_dataset(cfg.dataset.path)
    else:
        spec = cfg.dataset.synthetic
        full = generate_synthetic_dataset(spec.classes, spec.size, spec.side, spec.seed, spec.noise)
    return split_dataset(full, cfg.dataset.train_fraction, seed=cfg.seed)


def training_config(cfg: ExperimentConfig) -> TrainingConfig:
    return TrainingConfig(
        epochs=cfg.train.epochs,
        learning_rate=cfg.train.learning_rate,
        batch_size=cfg.train.batch_size,
        seed=cfg.seed,
    )


# --- experiment run ---------------------------------------------------------


@dataclass
class ExperimentResult:
    records: list
    reports: dict
    counts: dict
    clean_accuracy: float
    output_dir: Path
    files: list


def _prediction_fields(prediction: Prediction) -> dict:
    return {
        "top1": prediction.top1,
        "logits": [float(v) for v in prediction.logits],
        "ranking": [int(v) for v in prediction.ranking],
    }


def _per_image_attack(cfg: ExperimentConfig, index: int) -> AttackConfig:
    # Vary the random-start seed per image while keeping the run reproducible.
    return replace(cfg.attack, seed=cfg.attack.seed + index)


def _eval_images(cfg: ExperimentConfig) -> Dataset:
    _, held_out = resolve_datasets(cfg)
    if cfg.limit is not None and cfg.limit < len(held_out):
        return held_out.subset(np.arange(cfg.limit))
    return held_out


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run attack -> clean -> evaluate over the held-out split and write reports.

    Writes records.jsonl (one object per image), summary.csv (one row per
    evaluation group), run_meta.json, and manifest.json into
    cfg.output_dir.  On failure the manifest records status "aborted" plus
    the files written so far.
    """
    model = load_model(cfg.model_path)
    eval_set = _eval_images(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    records = []
    evaluated = []  # (index, label, pred_benign, pred_adv, pred_cleaned, pred_control)
    counts = {"total": len(eval_set), "skipped_misclassified": 0, "attack_failed": 0, "evaluated": 0}
    correct_benign = 0

    for i in range(len(eval_set)):
        image = eval_set.images[i]
        label = int(eval_set.labels[i])
        pred_benign, _ = forward(model, image)
        record = {"index": i, "label": label, "benign": _prediction_fields(pred_benign)}
        if pred_benign.top1 != label:
            counts["skipped_misclassified"] += 1
            record["status"] = "skipped_misclassified"
            records.append(record)
            continue
        correct_benign += 1

        outcome = run_attack(model, image, label, _per_image_attack(cfg, i))
        record["attack"] = {
            "success": outcome.success,
            "predicted_class": outcome.predicted_class,
            "linf": outcome.linf,
            "l2": outcome.l2,
            "iterations_used": outcome.iterations_used,
        }
        if not outcome.success:
            counts["attack_failed"] += 1
            record["status"] = "attack_failed"
            records.append(record)
            continue

        counts["evaluated"] += 1
        record["status"] = "evaluated"
        adversarial = outcome.image
        cleaned_def = heat_and_blur(model, adversarial, cfg.defense, cfg.rules)
        control_def = heat_and_blur(model, image, cfg.defense, cfg.rules)
        pred_adv, _ = forward(model, adversarial)
        pred_cleaned, _ = forward(model, cleaned_def.cleaned)
        pred_control, _ = forward(model, control_def.cleaned)

        ks = cfg.ndcg.ks
        cb, ca = cfg.ndcg.coverage_benign, cfg.ndcg.coverage_adversarial
        record["adv"] = _prediction_fields(pred_adv)
        record["cleaned"] = _prediction_fields(pred_cleaned)
        record["control"] = _prediction_fields(pred_control)
        record["ndcg"] = {
            "adv": [float(v) for v in ndcg_curve(pred_benign, pred_adv, ks, cb, ca)],
            "cleaned": [float(v) for v in ndcg_curve(pred_benign, pred_cleaned, ks, cb, ca)],
            "control": [float(v) for v in ndcg_curve(pred_benign, pred_control, ks, cb, ca)],
        }
        record["distances"] = {
            "adv_linf": outcome.linf,
            "adv_l2": outcome.l2,
            "cleaned_linf": distance(cleaned_def.cleaned, image, "linf"),
            "cleaned_l2": distance(cleaned_def.cleaned, image, "l2"),
        }
        record["mask_fraction"] = float(cleaned_def.mask.mean())
        records.append(record)
        evaluated.append((i, label, pred_benign, pred_adv, pred_cleaned, pred_control))

        if cfg.export_heatmaps:
            export_heatmap_png(cleaned_def.heatmap, out / "heatmaps" / f"{i:05d}_adv_heat.png")
            export_heatmap_png(cleaned_def.mask, out / "heatmaps" / f"{i:05d}_adv_mask.png")

    labels = [row[1] for row in evaluated]
    benign_preds = [row[2] for row in evaluated]
    reports = {
        "adv": ndcg_report(benign_preds, [row[3] for row in evaluated], labels,
                           cfg.ndcg.ks, cfg.ndcg.coverage_benign, cfg.ndcg.coverage_adversarial),
        "cleaned": ndcg_report(benign_preds, [row[4] for row in evaluated], labels,
                               cfg.ndcg.ks, cfg.ndcg.coverage_benign, cfg.ndcg.coverage_adversarial),
        "control": ndcg_report(benign_preds, [row[5] for row in evaluated], labels,
                               cfg.ndcg.ks, cfg.ndcg.coverage_benign, cfg.ndcg.coverage_adversarial),
    }
    clean_accuracy = correct_benign / len(eval_set) if len(eval_set) else 0.0

    files = []
    status = "completed"
    error = None
    try:
        records_path = out / "records.jsonl"
        with records_path.open("w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record) + "\n")
        files.append(records_path.name)

        summary_path = out / "summary.csv"
        with summary_path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["group", "count", "top1_accuracy"] + [f"ndcg@{k}" for k in cfg.ndcg.ks])
            for group in ("adv", "cleaned", "control"):
                report = reports[group]
                writer.writerow(
                    [group, report.count, repr(report.top1_accuracy)]
                    + [repr(float(v)) for v in report.mean_ndcg]
                )
        files.append(summary_path.name)

        meta_path = out / "run_meta.json"
        meta = {
            "seed": cfg.seed,
            "counts": counts,
            "clean_accuracy": clean_accuracy,
            "attack": {"kind": cfg.attack.kind, "epsilon": cfg.attack.epsilon,
                       "iterations": cfg.attack.iterations, "targeted": cfg.attack.targeted},
            "defense": {"sigma": cfg.defense.sigma, "mask_mode": cfg.defense.mask_mode},
            "ndcg": {"coverage_benign": cfg.ndcg.coverage_benign,
                     "coverage_adversarial": cfg.ndcg.coverage_adversarial, "k_max": cfg.ndcg.k_max},
        }
        meta_path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
        files.append(meta_path.name)
    except Exception as exc:
        status = "aborted"
        error = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        manifest = {"status": status, "files": files}
        if error:
            manifest["error"] = error
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    return ExperimentResult(records, reports, counts, clean_accuracy, out, files)


# --- sigma sweep ------------------------------------------------------------


@dataclass
class SweepResult:
    sigmas: list
    rows: list
    clean_accuracy: float
    attacked_count: int
    output_dir: Path


def sigma_sweep(cfg: ExperimentConfig, sigmas) -> SweepResult:
    """Trace defense quality across blur strengths and write sweep.csv.

    Per sigma: defended-benign accuracy over the whole held-out set (so the
    sigma=0 row equals clean accuracy exactly), defended-AE accuracy against
    the true label and against the attack's output class over the successful
    AEs, and the mean L-infinity distance between defended-benign images and
    their originals.
    """
    sigmas = [float(s) for s in sigmas]
    if not sigmas:
        raise ConfigError("sigma sweep needs a nonempty sigma list")
    model = load_model(cfg.model_path)
    eval_set = _eval_images(cfg)
    if len(eval_set) == 0:
        raise ConfigError("sigma sweep needs a nonempty evaluation set")

    benign_top1 = []
    attacked = []  # (image index, label, adversarial image, adversarial class)
    for i in range(len(eval_set)):
        image = eval_set.images[i]
        label = int(eval_set.labels[i])
        pred, _ = forward(model, image)
        benign_top1.append(pred.top1)
        if pred.top1 != label:
            continue
        outcome = run_attack(model, image, label, _per_image_attack(cfg, i))
        if outcome.success:
            adv_class = cfg.attack.target_class if cfg.attack.targeted else outcome.predicted_class
            attacked.append((i, label, outcome.image, int(adv_class)))

    clean_accuracy = float(np.mean([top1 == int(eval_set.labels[i])
                                    for i, top1 in enumerate(benign_top1)]))

    rows = []
    for sigma in sigmas:
        defense = DefenseConfig(sigma=sigma, mask_mode=cfg.defense.mask_mode)
        benign_hits = 0
        linf_sum = 0.0
        for i in range(len(eval_set)):
            result = heat_and_blur(model, eval_set.images[i], defense, cfg.rules)
            pred, _ = forward(model, result.cleaned)
            benign_hits += pred.top1 == int(eval_set.labels[i])
            linf_sum += distance(result.cleaned, eval_set.images[i], "linf")
        true_hits = 0
        adv_hits = 0
        for _, label, adv_image, adv_class in attacked:
            result = heat_and_blur(model, adv_image, defense, cfg.rules)
            pred, _ = forward(model, result.cleaned)
            true_hits += pred.top1 == label
            adv_hits += pred.top1 == adv_class
        n_adv = len(attacked)
        rows.append({
            "sigma": sigma,
            "benign_defended_accuracy": benign_hits / len(eval_set),
            "adv_true_label_accuracy": true_hits / n_adv if n_adv else float("nan"),
            "adv_class_accuracy": adv_hits / n_adv if n_adv else float("nan"),
            "mean_linf_distance": linf_sum / len(eval_set),
        })

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    sweep_path = out / "sweep.csv"
    with sweep_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sigma", "benign_defended_accuracy", "adv_true_label_accuracy",
                         "adv_class_accuracy", "mean_linf_distance"])
        for row in rows:
            writer.writerow([repr(row["sigma"]), repr(row["benign_defended_accuracy"]),
                             repr(row["adv_true_label_accuracy"]), repr(row["adv_class_accuracy"]),
                             repr(row["mean_linf_distance"])])
    meta = {"clean_accuracy": clean_accuracy, "attacked_count": len(attacked),
            "evaluated_images": len(eval_set)}
    (out / "sweep_meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return SweepResult(sigmas, rows, clean_accuracy, len(attacked), out)
