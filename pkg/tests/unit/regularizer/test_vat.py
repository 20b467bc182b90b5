"""Unit tests for input-space VAT."""

import numpy as np
import pytest

from lvat_lab.autodiff.tensor import Tape
from lvat_lab.models.classifier import ClassifierModel, predict_logits
from lvat_lab.nets.layers import ParamSet
from lvat_lab.nets.losses import kl_categorical
from lvat_lab.regularizer.perturb import PerturbConfig
from lvat_lab.regularizer.vat import vat_cost


class TestVatCost:
    """Test the input-space consistency cost."""

    @pytest.mark.parametrize("epsilon", [0.5, 2.5, 10.0])
    def test_distance_is_epsilon(self, classifier, moons, epsilon):
        """Every adversarial example lies exactly epsilon away from its input."""
        result = vat_cost(classifier, moons.features[:16], PerturbConfig(epsilon=epsilon), seed=0)
        np.testing.assert_allclose(result.distances, epsilon, rtol=0, atol=1e-9)
        assert result.latent_distances is None

    def test_cost_is_mean_of_per_sample(self, classifier, moons):
        """The scalar cost averages the per-sample KL values."""
        result = vat_cost(classifier, moons.features[:10], PerturbConfig(), seed=1)
        assert result.cost.item() == pytest.approx(result.per_sample_cost.mean(), abs=1e-15)
        assert np.all(result.per_sample_cost >= -1e-15)
        assert result.batch_size == 10

    def test_rejects_latent_space(self, classifier, moons):
        """Input-space VAT does not accept latent settings."""
        with pytest.raises(ValueError):
            vat_cost(classifier, moons.features[:4], PerturbConfig(space="latent"), seed=0)

    def test_gradient_flows_through_perturbed_branch(self, classifier, moons):
        """Watched classifier weights receive a gradient."""
        tape = Tape()
        weights = classifier.params.watch(tape)
        result = vat_cost(classifier, moons.features[:12], PerturbConfig(epsilon=1.0), 3, weights)
        grads = tape.backward(result.cost).wrt(weights)
        assert set(grads) == set(classifier.params)
        assert any(np.abs(g).sum() > 0 for g in grads.values())

    def test_seeded(self, classifier, moons):
        """Same seed, same perturbation."""
        cfg = PerturbConfig(power_iters=2)
        a = vat_cost(classifier, moons.features[:8], cfg, seed=4)
        b = vat_cost(classifier, moons.features[:8], cfg, seed=4)
        np.testing.assert_array_equal(a.r, b.r)

    def test_distance_is_epsilon_over_many_batches(self, classifier, rng):
        """The epsilon norm holds on 100 independent random batches."""
        cfg = PerturbConfig(epsilon=0.7)
        worst = 0.0
        for seed in range(100):
            x = rng.standard_normal((int(rng.integers(1, 17)), 2))
            result = vat_cost(classifier, x, cfg, seed=seed)
            worst = max(worst, float(np.max(np.abs(result.distances - 0.7))))
        assert worst < 1e-9

    def test_constant_classifier_costs_nothing(self, classifier, moons):
        """All-zero weights predict the same distribution everywhere."""
        flat = ClassifierModel.from_checkpoint(
            classifier.header(),
            ParamSet({name: np.zeros_like(v) for name, v in classifier.params.items()}),
        )
        result = vat_cost(flat, moons.features[:8], PerturbConfig(epsilon=3.0), seed=0)
        assert result.cost.item() == 0.0


class TestVatDirection:
    """Test where the adversarial perturbation points."""

    @staticmethod
    def _kl_hessian(model: ClassifierModel, x: np.ndarray, h: float = 1e-3) -> np.ndarray:
        """Central-difference Hessian of r -> KL(f(x) || f(x + r)) at r = 0."""
        target = predict_logits(model, x)

        def kl(r: np.ndarray) -> float:
            return kl_categorical(target, predict_logits(model, x + r)).item()

        dim = x.shape[1]
        basis = np.eye(dim).reshape(dim, 1, dim)
        hessian = np.zeros((dim, dim))
        for i in range(dim):
            for j in range(dim):
                ei, ej = h * basis[i], h * basis[j]
                hessian[i, j] = (
                    kl(ei + ej) - kl(ei - ej) - kl(-ei + ej) + kl(-ei - ej)
                ) / (4 * h * h)
        return hessian

    @pytest.mark.parametrize("point", [[0.3, -0.2], [-1.0, 0.8], [0.0, 0.0]])
    def test_aligns_with_top_hessian_eigenvector(self, point):
        """On a linear-softmax classifier r_vat follows the dominant curvature."""
        model = ClassifierModel.build(2, 2, (), seed=0)
        model.params.update(
            {
                "classifier.0.weight": np.array([[0.5, -1.0], [1.5, 0.25]]),
                "classifier.0.bias": np.array([0.1, -0.1]),
            }
        )
        x = np.array([point])
        eigenvalues, eigenvectors = np.linalg.eigh(self._kl_hessian(model, x))
        top = eigenvectors[:, np.argmax(eigenvalues)]
        r = vat_cost(model, x, PerturbConfig(epsilon=1.0), seed=4).r[0]
        assert abs(r @ top) / np.linalg.norm(r) >= 0.99
