import numpy as np
import pytest

from heatblur import (
    AttackConfig,
    Dense,
    Flatten,
    Model,
    adaptive_attack,
    binarize_heatmap,
    distance,
    fgsm,
    forward,
    pgd,
    relevance_heatmap,
    run_attack,
)


def _zero_model():
    return Model([Flatten(), Dense(4, 2)], ["a", "b"], (2, 2, 1))


def _positive_gradient_model():
    # cross-entropy gradient for label 0 is strictly positive everywhere:
    # increasing any pixel raises logit 1 and lowers the label-0 probability
    weights = np.array([[-1.0, -1.0, -1.0, -1.0], [1.0, 1.0, 1.0, 1.0]])
    return Model([Flatten(), Dense(4, 2, weights=weights)], ["a", "b"], (2, 2, 1))


class TestAttackConfig:
    def test_step_defaults_to_quarter_epsilon(self):
        assert AttackConfig(epsilon=0.2).step == pytest.approx(0.05)

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            AttackConfig(epsilon=0.0)
        with pytest.raises(ValueError):
            AttackConfig(iterations=0)
        with pytest.raises(ValueError):
            AttackConfig(kind="cw")
        with pytest.raises(ValueError):
            AttackConfig(targeted=True)


class TestFgsm:
    def test_zero_gradient_leaves_image_unchanged(self):
        model = _zero_model()
        image = np.full((2, 2, 1), 0.5)
        outcome = fgsm(model, image, 0, AttackConfig(epsilon=0.1))
        np.testing.assert_array_equal(outcome.image, image)
        assert not outcome.success  # equal logits rank class 0 first, matching the label

    def test_positive_gradient_steps_every_pixel_up(self):
        model = _positive_gradient_model()
        image = np.full((2, 2, 1), 0.5)
        outcome = fgsm(model, image, 0, AttackConfig(epsilon=0.1))
        np.testing.assert_allclose(outcome.image, np.full((2, 2, 1), 0.6), atol=1e-12)

    def test_linf_bound_holds(self, pipeline):
        model, test = pipeline["model"], pipeline["test"]
        config = AttackConfig(kind="fgsm", epsilon=0.05)
        for i in range(10):
            outcome = fgsm(model, test.images[i], int(test.labels[i]), config)
            assert outcome.linf <= config.epsilon + 1e-9
            assert outcome.image.min() >= 0.0 and outcome.image.max() <= 1.0

    def test_input_not_mutated(self, pipeline):
        image = pipeline["test"].images[0].copy()
        original = image.copy()
        fgsm(pipeline["model"], image, int(pipeline["test"].labels[0]), AttackConfig(epsilon=0.1))
        np.testing.assert_array_equal(image, original)

    def test_targeted_moves_toward_target(self, pipeline):
        model, test = pipeline["model"], pipeline["test"]
        label = int(test.labels[0])
        target = (label + 1) % 3
        config = AttackConfig(kind="fgsm", epsilon=0.1, targeted=True, target_class=target)
        outcome = fgsm(model, test.images[0], label, config)
        if outcome.success:
            assert outcome.predicted_class == target


class TestPgd:
    def test_single_full_step_equals_fgsm(self, pipeline):
        model, test = pipeline["model"], pipeline["test"]
        image, label = test.images[0], int(test.labels[0])
        a = fgsm(model, image, label, AttackConfig(kind="fgsm", epsilon=0.08))
        b = pgd(model, image, label, AttackConfig(kind="pgd", epsilon=0.08, step=0.08, iterations=1))
        np.testing.assert_array_equal(a.image, b.image)

    def test_projection_invariants(self, pipeline):
        model, test = pipeline["model"], pipeline["test"]
        config = AttackConfig(kind="pgd", epsilon=0.06, iterations=8, random_start=True, seed=5)
        for i in range(8):
            outcome = pgd(model, test.images[i], int(test.labels[i]), config)
            assert outcome.linf <= config.epsilon + 1e-9
            assert outcome.image.min() >= 0.0 and outcome.image.max() <= 1.0

    def test_deterministic_given_seed(self, pipeline):
        model, test = pipeline["model"], pipeline["test"]
        config = AttackConfig(kind="pgd", epsilon=0.1, iterations=5, random_start=True, seed=9)
        a = pgd(model, test.images[1], int(test.labels[1]), config)
        b = pgd(model, test.images[1], int(test.labels[1]), config)
        np.testing.assert_array_equal(a.image, b.image)
        assert a.iterations_used == b.iterations_used

    def test_success_rate_at_least_fgsm(self, pipeline):
        # iterated attack dominates the single step at equal budget
        model, test = pipeline["model"], pipeline["test"]
        fgsm_cfg = AttackConfig(kind="fgsm", epsilon=0.1)
        pgd_cfg = AttackConfig(kind="pgd", epsilon=0.1, step=0.025, iterations=10)
        fgsm_hits = pgd_hits = 0
        count = 0
        for i in range(len(test)):
            image, label = test.images[i], int(test.labels[i])
            if forward(model, image)[0].top1 != label:
                continue
            count += 1
            fgsm_hits += fgsm(model, image, label, fgsm_cfg).success
            pgd_hits += pgd(model, image, label, pgd_cfg).success
        assert count >= 100
        assert pgd_hits >= fgsm_hits

    def test_run_attack_dispatch(self, pipeline):
        model, test = pipeline["model"], pipeline["test"]
        image, label = test.images[2], int(test.labels[2])
        a = run_attack(model, image, label, AttackConfig(kind="fgsm", epsilon=0.05))
        b = fgsm(model, image, label, AttackConfig(kind="fgsm", epsilon=0.05))
        np.testing.assert_array_equal(a.image, b.image)


class TestAdaptiveAttack:
    def test_identity_base_attack_returns_empty(self, pipeline):
        model, test = pipeline["model"], pipeline["test"]
        image, label = test.images[0], int(test.labels[0])
        outcome = adaptive_attack(model, image, label, lambda x: x, iterations=3)
        assert outcome.image is None
        assert not outcome.success
        assert outcome.iterations_used == 3

    def test_changes_confined_to_mask_union(self, pipeline):
        # a deliberately strong base attack so masked attempts succeed often
        model, test = pipeline["model"], pipeline["test"]
        config = AttackConfig(kind="pgd", epsilon=0.35, step=0.35 / 3, iterations=6)

        produced = 0
        for i in range(12):
            image, label = test.images[i], int(test.labels[i])
            if forward(model, image)[0].top1 != label:
                continue

            masks = []

            def base(x, label=label):
                return pgd(model, x, label, config).image

            # replicate the procedure to collect the per-round masks
            current = image.copy()
            for _ in range(6):
                attacked = base(current)
                mask = binarize_heatmap(relevance_heatmap(model, current))
                masks.append(mask)
                current = np.where(mask[:, :, None], attacked, current)
                if forward(model, current)[0].top1 != label:
                    break
            outcome = adaptive_attack(model, image, label, base, iterations=6)
            if outcome.image is None:
                continue
            produced += 1
            union = np.any(masks, axis=0)
            changed = np.any(outcome.image != image, axis=2)
            assert not np.any(changed & ~union)
        assert produced >= 1

    def test_output_in_pixel_range(self, pipeline):
        model, test = pipeline["model"], pipeline["test"]
        config = AttackConfig(kind="pgd", epsilon=0.35, step=0.35 / 3, iterations=5)
        for i in range(6):
            image, label = test.images[i], int(test.labels[i])
            outcome = adaptive_attack(
                model, image, label, lambda x, label=label: pgd(model, x, label, config).image,
                iterations=4,
            )
            if outcome.image is not None:
                assert outcome.image.min() >= 0.0 and outcome.image.max() <= 1.0
                assert outcome.success
                assert outcome.predicted_class != label

    def test_does_not_mutate_input(self, pipeline):
        model, test = pipeline["model"], pipeline["test"]
        image = test.images[0].copy()
        original = image.copy()
        adaptive_attack(model, image, int(test.labels[0]), lambda x: np.clip(x + 0.05, 0, 1), iterations=2)
        np.testing.assert_array_equal(image, original)

    def test_invalid_iterations_rejected(self, pipeline):
        with pytest.raises(ValueError):
            adaptive_attack(pipeline["model"], pipeline["test"].images[0], 0, lambda x: x, iterations=0)
