"""Command-line harness: train, attack, defend, evaluate, sweep, heatmap.

Every subcommand reads a JSON config (see experiment.load_config) and takes
targeted overrides.  Exit codes: 0 success, 1 usage or config error,
2 runtime or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .attack import run_attack
from .data import DatasetError
from .defense import heat_and_blur
from .experiment import (
    ConfigError,
    ExperimentConfig,
    build_architecture,
    load_config,
    resolve_datasets,
    run_experiment,
    sigma_sweep,
    training_config,
    _eval_images,
)
from .imageio import export_heatmap_png, load_image, save_image
from .lrp import relevance_heatmap
from .defense import binarize_heatmap
from .model import ModelLoadError, forward, load_model, save_model
from .training import train_toy

__all__ = ["main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.sigma is not None:
        cfg = replace(cfg, defense=replace(cfg.defense, sigma=args.sigma))
    if args.epsilon is not None:
        cfg = replace(cfg, attack=replace(cfg.attack, epsilon=args.epsilon, step=None))
    if args.coverage is not None:
        cfg = replace(cfg, ndcg=replace(cfg.ndcg, coverage_benign=args.coverage,
                                        coverage_adversarial=args.coverage))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, output_dir=Path(args.out))
    return cfg


def _cmd_train(cfg: ExperimentConfig, args) -> int:
    train_set, held_out = resolve_datasets(cfg)
    arch = build_architecture(cfg.train.architecture, train_set.image_shape, train_set.class_names)
    result = train_toy(arch, train_set, training_config(cfg), held_out if len(held_out) else None)
    save_model(result.model, cfg.model_path)
    print(f"trained {cfg.train.architecture} on {len(train_set)} images "
          f"({cfg.train.epochs} epochs)")
    print(f"train accuracy: {result.train_accuracy:.4f}")
    if result.test_accuracy is not None:
        print(f"test accuracy:  {result.test_accuracy:.4f}")
    print(f"model written to {cfg.model_path}")
    return 0


def _cmd_attack(cfg: ExperimentConfig, args) -> int:
    model = load_model(cfg.model_path)
    eval_set = _eval_images(cfg)
    out = Path(cfg.output_dir)
    (out / "adv").mkdir(parents=True, exist_ok=True)
    rows = []
    successes = 0
    for i in range(len(eval_set)):
        image = eval_set.images[i]
        label = int(eval_set.labels[i])
        pred, _ = forward(model, image)
        if pred.top1 != label:
            rows.append([i, label, "skipped_misclassified", pred.top1, "", "", ""])
            continue
        outcome = run_attack(model, image, label, replace(cfg.attack, seed=cfg.attack.seed + i))
        status = "success" if outcome.success else "failed"
        successes += outcome.success
        if outcome.success:
            save_image(outcome.image, out / "adv" / f"adv_{i:05d}.png")
        rows.append([i, label, status, outcome.predicted_class,
                     repr(outcome.linf), repr(outcome.l2), outcome.iterations_used])
    report = out / "attack_report.csv"
    with report.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label", "status", "predicted_class", "linf", "l2", "iterations_used"])
        writer.writerows(rows)
    print(f"{successes}/{len(eval_set)} attacks succeeded ({cfg.attack.kind}, "
          f"epsilon={cfg.attack.epsilon})")
    print(f"report written to {report}")
    return 0


def _cmd_defend(cfg: ExperimentConfig, args) -> int:
    model = load_model(cfg.model_path)
    eval_set = _eval_images(cfg)
    out = Path(cfg.output_dir)
    (out / "cleaned").mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(len(eval_set)):
        image = eval_set.images[i]
        result = heat_and_blur(model, image, cfg.defense, cfg.rules)
        pred_after, _ = forward(model, result.cleaned)
        save_image(result.cleaned, out / "cleaned" / f"cleaned_{i:05d}.png")
        rows.append([i, int(eval_set.labels[i]), result.prediction.top1, pred_after.top1,
                     repr(float(result.mask.mean()))])
    report = out / "defend_report.csv"
    with report.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label", "top1_before", "top1_after", "mask_fraction"])
        writer.writerows(rows)
    print(f"cleaned {len(eval_set)} images (sigma={cfg.defense.sigma})")
    print(f"report written to {report}")
    return 0


def _cmd_evaluate(cfg: ExperimentConfig, args) -> int:
    result = run_experiment(cfg)
    counts = result.counts
    print(f"evaluated {counts['evaluated']}/{counts['total']} images "
          f"(skipped {counts['skipped_misclassified']} misclassified, "
          f"{counts['attack_failed']} failed attacks)")
    for group in ("adv", "cleaned", "control"):
        report = result.reports[group]
        ndcg1 = report.mean_ndcg[0] if report.count else float("nan")
        print(f"{group:8s} top-1 accuracy {report.top1_accuracy:.4f}  mean NDCG@1 {ndcg1:.4f}")
    print(f"reports written to {result.output_dir}")
    return 0


def _cmd_sweep(cfg: ExperimentConfig, args) -> int:
    if args.sigmas is not None:
        sigmas = [float(s) for s in args.sigmas.split(",") if s.strip() != ""]
    elif cfg.sweep_sigmas is not None:
        sigmas = cfg.sweep_sigmas
    else:
        raise _UsageError("sweep needs --sigmas or a 'sweep': {'sigmas': [...]} config section")
    result = sigma_sweep(cfg, sigmas)
    print("sigma  benign_acc  adv_true_acc  adv_class_acc  mean_linf")
    for row in result.rows:
        print(f"{row['sigma']:<6g} {row['benign_defended_accuracy']:<11.4f} "
              f"{row['adv_true_label_accuracy']:<13.4f} {row['adv_class_accuracy']:<14.4f} "
              f"{row['mean_linf_distance']:.5f}")
    print(f"curves written to {result.output_dir / 'sweep.csv'}")
    return 0


def _cmd_heatmap(cfg: ExperimentConfig, args) -> int:
    model = load_model(cfg.model_path)
    out = Path(cfg.output_dir)
    jobs = []
    if args.image is not None:
        jobs.append((Path(args.image).stem, load_image(args.image)))
    else:
        eval_set = _eval_images(cfg)
        count = min(len(eval_set), cfg.limit or 8)
        for i in range(count):
            jobs.append((f"{i:05d}", eval_set.images[i]))
    for name, image in jobs:
        heatmap = relevance_heatmap(model, image, args.target, cfg.rules)
        mask = binarize_heatmap(heatmap, cfg.defense.mask_mode)
        export_heatmap_png(heatmap, out / f"{name}_heat.png")
        export_heatmap_png(mask, out / f"{name}_mask.png")
        export_heatmap_png(heatmap, out / f"{name}_overlay.png", overlay=image)
    print(f"wrote {3 * len(jobs)} heatmap images to {out}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "attack": _cmd_attack,
    "defend": _cmd_defend,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "heatmap": _cmd_heatmap,
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="heatblur", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, help_text in (
        ("train", "train a model on the configured dataset and save it"),
        ("attack", "craft adversarial examples and report outcomes"),
        ("defend", "run heat-and-blur over the evaluation images"),
        ("evaluate", "full attack -> clean -> evaluate pipeline with NDCG reports"),
        ("sweep", "trace defense quality across blur sigmas"),
        ("heatmap", "export relevance heatmaps and masks as PNGs"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the JSON experiment config")
        cmd.add_argument("--sigma", type=float, help="override defense blur sigma")
        cmd.add_argument("--epsilon", type=float, help="override attack epsilon")
        cmd.add_argument("--coverage", type=float, help="override both NDCG coverages")
        cmd.add_argument("--seed", type=int, help="override the experiment seed")
        cmd.add_argument("--out", help="override the output directory")
        if name == "sweep":
            cmd.add_argument("--sigmas", help="comma-separated sigma list, e.g. 0,0.5,1.0")
        if name == "heatmap":
            cmd.add_argument("--image", help="explain a single PNG/PPM image instead of the dataset")
            cmd.add_argument("--target", type=int, help="class index to explain (default: top-1)")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("a subcommand is required (train, attack, defend, evaluate, sweep, heatmap)")
        cfg = _apply_overrides(load_config(args.config), args)
        return _COMMANDS[args.command](cfg, args)
    except (_UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ModelLoadError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # defensive: runtime failures map to exit 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
