"""Gradient attacks (FGSM, PGD) and the heatmap-masked adaptive attack.

FGSM and PGD perturb within an L-infinity ball of radius epsilon around the
input and clip to the valid pixel range.  The adaptive attack wraps any
image-to-image attack callable: each round it recomputes the defense's
binarized heatmap of the current candidate and copies the attacked values
onto the candidate at masked positions only, so perturbations land exactly
where the defense would restore pixels.  Because the mask is recomputed per
round, repeated rounds can drift further than one base-attack budget from
the starting image; only the pixel-range clip of the procedure itself is
applied between rounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .defense import binarize_heatmap
from .imageops import clip_image, distance, validate_image
from .lrp import RuleConfig, lrp
from .model import Model, forward, input_gradient

__all__ = ["AttackConfig", "AttackOutcome", "fgsm", "pgd", "run_attack", "adaptive_attack"]


@dataclass
class AttackConfig:
    """Shared knobs for the gradient attacks.

    step defaults to epsilon / 4 when left unset.  The seed only matters for
    PGD's optional uniform random start.
    """

    kind: str = "fgsm"
    epsilon: float = 0.031
    step: float | None = None
    iterations: int = 40
    targeted: bool = False
    target_class: int | None = None
    random_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("fgsm", "pgd"):
            raise ValueError(f"unknown attack kind {self.kind!r}, expected 'fgsm' or 'pgd'")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.step is None:
            self.step = self.epsilon / 4.0
        if self.step <= 0:
            raise ValueError(f"step must be > 0, got {self.step}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.targeted and self.target_class is None:
            raise ValueError("targeted attacks need a target_class")


@dataclass
class AttackOutcome:
    """Result of one attack attempt.

    image is None when the attack gave up; success means the final top-1
    differs from the true label (untargeted) or equals the target.
    Distances are measured against the unmodified input.
    """

    image: np.ndarray | None
    success: bool
    predicted_class: int
    linf: float
    l2: float
    iterations_used: int


def _objective_class(label: int, config: AttackConfig) -> int:
    return int(config.target_class) if config.targeted else int(label)


def _is_adversarial(top1: int, label: int, targeted: bool, target_class: int | None) -> bool:
    if targeted:
        return top1 == int(target_class)
    return top1 != int(label)


def fgsm(model: Model, image, label: int, config: AttackConfig | None = None) -> AttackOutcome:
    """Single signed-gradient step of size epsilon, clipped to [0, 1]."""
    config = config or AttackConfig(kind="fgsm")
    image = validate_image(image)
    grad = input_gradient(model, image, _objective_class(label, config), "cross_entropy")
    direction = -np.sign(grad) if config.targeted else np.sign(grad)
    adversarial = clip_image(image + config.epsilon * direction)
    prediction, _ = forward(model, adversarial)
    return AttackOutcome(
        image=adversarial,
        success=_is_adversarial(prediction.top1, label, config.targeted, config.target_class),
        predicted_class=prediction.top1,
        linf=distance(adversarial, image, "linf"),
        l2=distance(adversarial, image, "l2"),
        iterations_used=1,
    )


def pgd(model: Model, image, label: int, config: AttackConfig | None = None) -> AttackOutcome:
    """Iterated signed-gradient steps projected onto the epsilon ball, early-stopping on success."""
    config = config or AttackConfig(kind="pgd")
    image = validate_image(image)
    objective = _objective_class(label, config)
    sign = -1.0 if config.targeted else 1.0

    x = image.copy()
    success = False
    if config.random_start:
        rng = np.random.default_rng(config.seed)
        x = clip_image(image + rng.uniform(-config.epsilon, config.epsilon, size=image.shape))
        top1 = forward(model, x)[0].top1
        success = _is_adversarial(top1, label, config.targeted, config.target_class)

    used = 0
    while used < config.iterations and not success:
        grad = input_gradient(model, x, objective, "cross_entropy")
        x = x + sign * config.step * np.sign(grad)
        x = clip_image(image + np.clip(x - image, -config.epsilon, config.epsilon))
        used += 1
        top1 = forward(model, x)[0].top1
        success = _is_adversarial(top1, label, config.targeted, config.target_class)
    return AttackOutcome(
        image=x,
        success=success,
        predicted_class=int(top1),
        linf=distance(x, image, "linf"),
        l2=distance(x, image, "l2"),
        iterations_used=used,
    )


def run_attack(model: Model, image, label: int, config: AttackConfig) -> AttackOutcome:
    """Dispatch on config.kind."""
    if config.kind == "fgsm":
        return fgsm(model, image, label, config)
    return pgd(model, image, label, config)


def adaptive_attack(
    model: Model,
    image,
    label: int,
    base_attack: Callable[[np.ndarray], np.ndarray],
    iterations: int = 10,
    rules: RuleConfig | None = None,
    mask_mode: str = "absolute",
    target_class: int | None = None,
) -> AttackOutcome:
    """Attack constrained to the pixels the defense's heatmap mask would restore.

    Each round attacks the current candidate with ``base_attack``, recomputes
    the binarized heatmap of the candidate (top-1 class, same procedure as
    the defense), copies attacked values onto the candidate at masked
    positions only, clips to the pixel range, and stops as soon as the
    candidate is adversarial.  After ``iterations`` unsuccessful rounds the
    outcome carries image=None, the defined empty result.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    image = validate_image(image)
    targeted = target_class is not None
    current = image.copy()
    top1 = forward(model, current)[0].top1
    for iteration in range(1, iterations + 1):
        attacked = validate_image(base_attack(current))
        prediction, trace = forward(model, current)
        mask = binarize_heatmap(lrp(model, trace, prediction.top1, rules), mask_mode)
        current = np.where(mask[:, :, None], attacked, current)
        current = clip_image(current)
        top1 = forward(model, current)[0].top1
        if _is_adversarial(top1, label, targeted, target_class):
            return AttackOutcome(
                image=current,
                success=True,
                predicted_class=int(top1),
                linf=distance(current, image, "linf"),
                l2=distance(current, image, "l2"),
                iterations_used=iteration,
            )
    return AttackOutcome(
        image=None,
        success=False,
        predicted_class=int(top1),
        linf=distance(current, image, "linf"),
        l2=distance(current, image, "l2"),
        iterations_used=iterations,
    )
