"""Central-difference gradient oracle and the registry of checked graphs."""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from ..models.classifier import ClassifierModel, predict_logits
from ..models.flow import build_flow, flow_log_likelihood
from ..models.vae import VaeModel, decode, elbo_loss, sample_noise
from ..nets import losses
from ..regularizer.lvat import lvat_cost
from ..regularizer.perturb import PerturbConfig
from ..regularizer.vat import vat_cost
from . import tensor as T
from .tensor import Tape, Tensor

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-6
DEFAULT_TOLERANCE = 1e-5

BuildFn = Callable[[Mapping[str, Tensor]], Tensor]


@dataclass(frozen=True)
class GradCheckCase:
    """A scalar-valued graph over named inputs."""

    name: str
    build: BuildFn
    inputs: dict[str, np.ndarray]


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    max_rel_error: float
    n_values: int
    passed: bool


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|a - n| / max(1, |n|), elementwise."""
    return np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))


def _evaluate(build: BuildFn, inputs: Mapping[str, np.ndarray]) -> float:
    return build({name: Tensor(value) for name, value in inputs.items()}).item()


def numerical_gradient(
    build: BuildFn, inputs: Mapping[str, np.ndarray], name: str, step: float = DEFAULT_STEP
) -> np.ndarray:
    """Central differences of ``build`` with respect to ``inputs[name]``."""
    base = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    target = base[name]
    grad = np.zeros_like(target)
    flat, flat_grad = target.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        upper = _evaluate(build, base)
        flat[i] = original - step
        lower = _evaluate(build, base)
        flat[i] = original
        flat_grad[i] = (upper - lower) / (2.0 * step)
    return grad


def analytic_gradient(build: BuildFn, inputs: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of ``build`` with respect to every input."""
    tape = Tape()
    leaves = tape.watch_all(inputs)
    root = build(leaves)
    if not root.is_recorded:
        return {name: np.zeros_like(leaf.values) for name, leaf in leaves.items()}
    return tape.backward(root).wrt(leaves)


def check_case(
    case: GradCheckCase, step: float = DEFAULT_STEP, tolerance: float = DEFAULT_TOLERANCE
) -> GradCheckResult:
    analytic = analytic_gradient(case.build, case.inputs)
    worst, count = 0.0, 0
    for name in case.inputs:
        numeric = numerical_gradient(case.build, case.inputs, name, step)
        errors = relative_error(analytic[name], numeric)
        count += errors.size
        if errors.size:
            worst = max(worst, float(errors.max()))
    result = GradCheckResult(case.name, worst, count, bool(worst < tolerance))
    logger.debug(f"gradcheck {case.name}: max rel err {worst:.3e} over {count} values")
    return result


def run_gradcheck(
    cases: Sequence[GradCheckCase] | None = None,
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
) -> list[GradCheckResult]:
    """Check every case; see ``default_cases`` for the registry."""
    if cases is None:
        cases = default_cases()
    return [check_case(c, step, tolerance) for c in cases]


# ============================================================================
# Registry
# ============================================================================


def _weighted(out: Tensor, weights: np.ndarray) -> Tensor:
    return T.reduce_sum(T.mul(out, weights))


def _unary(name: str, op, values: np.ndarray, rng: np.random.Generator) -> GradCheckCase:
    w = rng.standard_normal(values.shape)
    return GradCheckCase(name, lambda t: _weighted(op(t["a"]), w), {"a": values})


def _binary(name: str, op, a: np.ndarray, b: np.ndarray, rng) -> GradCheckCase:
    w = rng.standard_normal(np.broadcast_shapes(a.shape, b.shape))
    return GradCheckCase(name, lambda t: _weighted(op(t["a"], t["b"]), w), {"a": a, "b": b})


def _away_from_zero(rng: np.random.Generator, shape, low: float = 0.2) -> np.ndarray:
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(low, 1.5, size=shape)


def tensor_cases(seed: int = 0) -> list[GradCheckCase]:
    """Every primitive op on random inputs, with broadcasting where it applies."""
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal(4)
    positive = rng.uniform(0.5, 2.0, (3, 4))
    clipped = rng.choice([-0.9, -0.3, 0.2, 0.8], (3, 4))
    return [
        _binary("add", T.add, a, b, rng),
        _binary("sub", T.sub, a, rng.standard_normal((3, 1)), rng),
        _binary("mul", T.mul, a, b, rng),
        _binary("div", T.div, a, positive, rng),
        _unary("neg", T.neg, a, rng),
        _unary("exp", T.exp, a, rng),
        _unary("log", T.log, positive, rng),
        _unary("tanh", T.tanh, a, rng),
        _unary("sigmoid", T.sigmoid, a, rng),
        _unary("softplus", T.softplus, a, rng),
        _unary("leaky_relu", T.leaky_relu, _away_from_zero(rng, (3, 4)), rng),
        _unary("square", T.square, a, rng),
        _unary("clip", lambda t: T.clip(t, -0.5, 0.5), clipped, rng),
        _binary("matmul", T.matmul, rng.standard_normal((3, 4)), rng.standard_normal((4, 2)), rng),
        _unary("reduce_sum", lambda t: T.reduce_sum(t, axis=0), a, rng),
        _unary("reduce_mean", lambda t: T.reduce_mean(t, axis=1, keepdims=True), a, rng),
        _unary("reshape", lambda t: T.reshape(t, (2, 6)), a, rng),
        _unary("slice_axis", lambda t: T.slice_axis(t, 1, 3, axis=1), a, rng),
        _binary("concat", lambda x, y: T.concat([x, y], axis=0), a, rng.random((2, 4)), rng),
        _unary("take", lambda t: T.take(t, [2, 0, 2], axis=1), a, rng),
        _unary("softmax", lambda t: T.softmax(t, axis=1), a, rng),
        _unary("log_softmax", lambda t: T.log_softmax(t, axis=1), a, rng),
    ]


def loss_cases(seed: int = 0) -> list[GradCheckCase]:
    rng = np.random.default_rng(seed)
    labels = np.array([0, 2, 1, 2])
    return [
        GradCheckCase(
            "cross_entropy",
            lambda t: losses.cross_entropy(t["logits"], labels),
            {"logits": rng.standard_normal((4, 3))},
        ),
        GradCheckCase(
            "kl_categorical",
            lambda t: losses.kl_categorical(t["p"], t["q"]),
            {"p": rng.standard_normal((4, 3)), "q": rng.standard_normal((4, 3))},
        ),
        GradCheckCase(
            "gaussian_kl",
            lambda t: losses.gaussian_kl(t["mu"], t["log_var"]),
            {"mu": rng.standard_normal((4, 2)), "log_var": 0.5 * rng.standard_normal((4, 2))},
        ),
    ]


def model_cases(seed: int = 0) -> list[GradCheckCase]:
    """VAE, flow and the full VAT / LVAT graphs on tiny random models."""
    rng = np.random.default_rng(seed)
    dim, batch = 4, 5
    x = rng.standard_normal((batch, dim))
    x_unit = rng.uniform(0.05, 0.95, (batch, dim))
    classifier = ClassifierModel.build(dim, 3, (6,), seed)
    vae = VaeModel.build(dim, 2, (6,), "none", seed)
    vae_bernoulli = VaeModel.build(dim, 2, (6,), "sigmoid", seed)
    flow = build_flow(dim, n_couplings=3, hidden=(6,), seed=seed, zero_init=False)
    noise = sample_noise(seed, batch, vae.latent_dim)

    def with_params(model, loss):
        names = list(model.params)

        def build(t: Mapping[str, Tensor]) -> Tensor:
            weights = {n: t[n] for n in names}
            return loss(weights, t)

        return build, {n: model.params[n] for n in names}

    cases = []
    build, inputs = with_params(vae, lambda w, t: elbo_loss(vae, x, 0, w, noise))
    cases.append(GradCheckCase("vae_elbo_gaussian", build, inputs))
    build, inputs = with_params(
        vae_bernoulli, lambda w, t: elbo_loss(vae_bernoulli, x_unit, 0, w, noise)
    )
    cases.append(GradCheckCase("vae_elbo_bernoulli", build, inputs))
    w_dec = rng.standard_normal((batch, dim))
    cases.append(
        GradCheckCase(
            "vae_decode",
            lambda t: _weighted(decode(vae, t["z"]), w_dec),
            {"z": rng.standard_normal((batch, vae.latent_dim))},
        )
    )
    build, inputs = with_params(flow, lambda w, t: flow_log_likelihood(flow, x, w))
    cases.append(GradCheckCase("flow_log_likelihood", build, inputs))
    cases.append(
        GradCheckCase(
            "flow_log_likelihood_input", lambda t: flow_log_likelihood(flow, t["x"]), {"x": x}
        )
    )

    # Consistency graphs: the target is a constant, as inside vat_cost / lvat_cost.
    target = predict_logits(classifier, x).values

    def kl_at(weights: Mapping[str, Tensor], x_adv: np.ndarray) -> Tensor:
        return losses.kl_categorical(target, predict_logits(classifier, x_adv, weights))

    vat = vat_cost(classifier, x, PerturbConfig(epsilon=0.5, space="input"), seed)
    build, inputs = with_params(classifier, lambda w, t: kl_at(w, vat.x_adv))
    cases.append(GradCheckCase("vat_cost_params", build, inputs))
    cases.append(
        GradCheckCase(
            "vat_direction",
            lambda t: losses.kl_categorical(target, predict_logits(classifier, T.add(x, t["r"]))),
            {"r": 0.5 * vat.r},
        )
    )

    latent = PerturbConfig(epsilon=0.5, space="latent")
    for label, transformer in (("vae", vae), ("flow", flow)):
        z = transformer.to_latent(x)
        adv = lvat_cost(classifier, transformer, x, latent, seed)
        cases.append(
            GradCheckCase(
                f"lvat_{label}_direction",
                lambda t, tr=transformer, z=z: losses.kl_categorical(
                    target, predict_logits(classifier, tr.from_latent(T.add(z, t["r"])))
                ),
                {"r": adv.r},
            )
        )
    adv = lvat_cost(classifier, flow, x, latent, seed)
    build, inputs = with_params(classifier, lambda w, t: kl_at(w, adv.x_adv))
    cases.append(GradCheckCase("lvat_flow_cost_params", build, inputs))
    return cases


def default_cases(seed: int = 0) -> list[GradCheckCase]:
    """Registry checked by the ``gradcheck`` command."""
    return tensor_cases(seed) + loss_cases(seed) + model_cases(seed)
