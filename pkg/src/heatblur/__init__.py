"""heatblur: relevance heatmaps, gradient attacks, and the heat-and-blur input defense.

A self-contained numpy toolkit: a small layered inference engine with
activation recording and exact input gradients, layer-wise relevance
propagation down to per-pixel heatmaps, FGSM/PGD plus a heatmap-masked
adaptive attack, the heat-and-blur cleaning defense, and ranking-based
(NDCG) evaluation of attack and defense quality.
"""

from .attack import AttackConfig, AttackOutcome, adaptive_attack, fgsm, pgd, run_attack
from .data import (
    Dataset,
    DatasetError,
    generate_synthetic_dataset,
    load_dataset,
    save_dataset,
    split_dataset,
)
from .defense import DefenseConfig, DefenseResult, binarize_heatmap, heat_and_blur
from .experiment import (
    ConfigError,
    ExperimentConfig,
    build_architecture,
    load_config,
    resolve_datasets,
    run_experiment,
    sigma_sweep,
)
from .imageio import export_heatmap_png, load_image, save_image
from .imageops import clip_image, distance, gaussian_blur, gaussian_kernel, validate_image
from .layers import AvgPool2D, Conv2D, Dense, Flatten, MaxPool2D, ReLU
from .lrp import Heatmap, RuleConfig, aggregate_channels, lrp, propagate_layer, relevance_heatmap
from .metrics import (
    NdcgReport,
    RelevanceScores,
    benign_relevance_scores,
    dcg,
    matched_relevance,
    ndcg,
    ndcg_curve,
    ndcg_report,
    topk_accuracy,
)
from .model import (
    ActivationTrace,
    Model,
    ModelError,
    ModelLoadError,
    Prediction,
    forward,
    input_gradient,
    load_model,
    save_model,
)
from .training import TrainingConfig, TrainingResult, evaluate_accuracy, train_toy

__version__ = "0.1.0"
