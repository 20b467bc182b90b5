"""Unit tests for the Pi-model cost."""

import pytest

from lvat_lab.data.datasets import AugmentConfig
from lvat_lab.exceptions import DataError
from lvat_lab.models.classifier import ClassifierModel
from lvat_lab.regularizer.pi_model import PiConfig, pi_cost


class TestPiCost:
    """Test the two-copy consistency cost."""

    def test_no_perturbation_costs_nothing(self, classifier, moons):
        """Identical copies agree exactly."""
        assert pi_cost(classifier, moons.features, PiConfig(noise_sigma=0.0), seed=0).item() == 0.0

    def test_noise_gives_positive_cost(self, classifier, moons):
        """Independent noise makes the copies disagree; the cost is seeded."""
        cfg = PiConfig(noise_sigma=0.3)
        cost = pi_cost(classifier, moons.features, cfg, seed=1).item()
        assert cost > 0.0
        assert cost == pi_cost(classifier, moons.features, cfg, seed=1).item()

    def test_small_noise_is_positive_for_every_seed(self, classifier, moons):
        """With sigma = 0.1 no seed yields two identical copies."""
        cfg = PiConfig(noise_sigma=0.1)
        costs = [pi_cost(classifier, moons.features[:8], cfg, seed=s).item() for s in range(100)]
        assert min(costs) > 0.0

    def test_augmentation_on_grid(self, grid):
        """Augmented grid copies are compared."""
        model = ClassifierModel.build(grid.dim, grid.num_classes, (8,), seed=0)
        cfg = PiConfig(noise_sigma=0.0, augment=AugmentConfig(translate=1, flip=True))
        cost = pi_cost(model, grid.features, cfg, seed=2, image_shape=grid.image_shape)
        assert cost.item() >= 0.0

    def test_augmentation_needs_grid(self, classifier, moons):
        """Point data cannot be translated."""
        cfg = PiConfig(augment=AugmentConfig(translate=1))
        with pytest.raises(DataError):
            pi_cost(classifier, moons.features, cfg, seed=0)
