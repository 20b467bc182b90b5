"""Two-stage training: transformer pre-training, then the regularized classifier."""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, replace
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..autodiff import tensor as T
from ..autodiff.tensor import Tape, Tensor
from ..data.datasets import AugmentConfig, BatchStream, Dataset, augment, batches
from ..exceptions import DataError, NonFiniteError, TrainingDivergedError
from ..models.classifier import ClassifierModel, error_rate, predict_logits
from ..models.flow import FlowModel, build_flow, flow_log_likelihood
from ..models.transformer import LatentTransformer
from ..models.vae import VaeModel, elbo_loss
from ..nets.losses import cross_entropy
from ..regularizer.lvat import lvat_cost
from ..regularizer.perturb import PerturbConfig
from ..regularizer.pi_model import PiConfig, pi_cost
from ..regularizer.vat import vat_cost
from ..utils.seeding import as_seed_sequence, epoch_seed
from .optimizer import AdamState, adam_step, exponential_decay, lr_schedule

logger = logging.getLogger(__name__)

RegularizerKind = Literal["vat", "lvat-vae", "lvat-flow", "pi", "none"]
TransformerKind = Literal["vae", "flow"]

DEFAULT_LATENT_DIM = 8
DEFAULT_IMAGE_LATENT_DIM = 16
DEFAULT_TRANSFORMER_LR: dict[str, float] = {"vae": 1e-3, "flow": 1e-4}

METRICS_COLUMNS = ("step", "lr", "loss_sl", "loss_usl", "loss_total", "test_error")
TRANSFORMER_COLUMNS = ("epoch", "lr", "loss", "held_out_loss")


# ============================================================================
# Configuration
# ============================================================================


class ClassifierConfig(BaseModel):
    """Classifier architecture."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    hidden: tuple[int, ...] = Field(default=(64, 64), description="Hidden layer widths")


class TransformerConfig(BaseModel):
    """Architecture and optimization of a VAE or flow."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    latent_dim: int | None = Field(
        default=None,
        ge=1,
        description="VAE latent dimension; by default 8 for points and 16 for images, at most D",
    )
    hidden: tuple[int, ...] = Field(default=(64, 64), description="Hidden layer widths")
    n_couplings: int = Field(default=8, ge=1, description="Flow coupling layers")
    s_max: float = Field(default=2.0, gt=0, description="Flow log-scale bound")
    output_activation: Literal["auto", "none", "sigmoid"] = Field(
        default="auto", description="VAE decoder output; auto picks sigmoid for [0, 1] grid data"
    )
    epochs: int = Field(default=50, ge=1)
    batch_size: int = Field(default=128, ge=1)
    lr: float | None = Field(
        default=None, gt=0, description="Initial learning rate; by default 1e-3 (vae), 1e-4 (flow)"
    )
    decay_rate: float = Field(default=0.97, gt=0, le=1, description="VAE per-step lr factor")
    decay_every: int = Field(default=2, ge=1, description="VAE epochs between lr decays")
    decay_start_epoch: int = Field(default=80, ge=0, description="VAE epoch where decay starts")
    held_out_fraction: float = Field(default=0.1, ge=0, lt=1)


class TrainConfig(BaseModel):
    """Classifier training under L_sl + alpha * L_usl."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(default=1.0, ge=0, description="Consistency coefficient")
    lr: float = Field(default=1e-3, gt=0, description="Initial learning rate")
    total_updates: int = Field(default=5000, ge=1)
    decay_updates: int = Field(default=1600, ge=0, description="Final updates with linear decay")
    batch_labeled: int = Field(default=32, ge=1)
    batch_unlabeled: int = Field(default=128, ge=1)
    regularizer: RegularizerKind = "vat"
    perturb: PerturbConfig = Field(default_factory=PerturbConfig)
    pi: PiConfig = Field(default_factory=PiConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    eval_every: int = Field(default=500, ge=1)
    log_every: int = Field(default=100, ge=1)

    @model_validator(mode="after")
    def check_consistency(self) -> TrainConfig:
        if self.decay_updates > self.total_updates:
            raise ValueError("decay_updates must not exceed total_updates")
        if self.regularizer.startswith("lvat") and self.perturb.space != "latent":
            raise ValueError(f"{self.regularizer} perturbs latent space; set perturb.space")
        if self.regularizer == "vat" and self.perturb.space != "input":
            raise ValueError("vat perturbs input space; set perturb.space")
        return self

    @property
    def transformer_kind(self) -> TransformerKind | None:
        if self.regularizer.startswith("lvat-"):
            return self.regularizer.removeprefix("lvat-")  # type: ignore[return-value]
        return None


# ============================================================================
# Results
# ============================================================================


class TransformerEpoch(BaseModel):
    epoch: int
    lr: float
    loss: float
    held_out_loss: float | None = None


class MetricsRow(BaseModel):
    step: int
    lr: float
    loss_sl: float
    loss_usl: float
    loss_total: float
    test_error: float | None = None


@dataclass
class TransformerRun:
    model: VaeModel | FlowModel
    history: list[TransformerEpoch] = field(default_factory=list)
    initial_held_out_loss: float | None = None
    final_held_out_loss: float | None = None


@dataclass
class ClassifierRun:
    model: ClassifierModel
    history: list[MetricsRow] = field(default_factory=list)
    final_test_error: float | None = None


# ============================================================================
# Transformer pre-training
# ============================================================================


def split_held_out(
    dataset: Dataset, fraction: float, seed: Any
) -> tuple[Dataset, Dataset | None]:
    """Seeded split of rows into a training part and a held-out part."""
    if fraction <= 0:
        return dataset, None
    n_held = max(1, int(round(fraction * dataset.n)))
    if n_held >= dataset.n:
        raise DataError(f"Held-out fraction {fraction} leaves no training rows")
    order = np.random.default_rng(as_seed_sequence(seed)).permutation(dataset.n)
    held, kept = np.sort(order[:n_held]), np.sort(order[n_held:])

    def subset(rows: np.ndarray) -> Dataset:
        labels = dataset.labels[rows] if dataset.labels is not None else None
        return replace(
            dataset,
            features=dataset.features[rows],
            labels=labels,
            labeled_mask=dataset.labeled_mask[rows],
        )

    return subset(kept), subset(held)


def resolve_latent_dim(cfg: TransformerConfig, dataset: Dataset) -> int:
    if cfg.latent_dim is not None:
        return cfg.latent_dim
    default = DEFAULT_IMAGE_LATENT_DIM if dataset.image_shape is not None else DEFAULT_LATENT_DIM
    return min(default, dataset.dim)


def resolve_lr(kind: TransformerKind, cfg: TransformerConfig) -> float:
    return cfg.lr if cfg.lr is not None else DEFAULT_TRANSFORMER_LR[kind]


def resolve_output_activation(cfg: TransformerConfig, dataset: Dataset) -> str:
    if cfg.output_activation != "auto":
        return cfg.output_activation
    in_unit = bool(np.all(dataset.features >= 0.0) and np.all(dataset.features <= 1.0))
    return "sigmoid" if dataset.image_shape is not None and in_unit else "none"


def build_transformer(
    kind: TransformerKind, dataset: Dataset, cfg: TransformerConfig, seed: Any
) -> VaeModel | FlowModel:
    """Freshly initialized transformer sized for ``dataset``."""
    if kind == "vae":
        return VaeModel.build(
            dataset.dim,
            resolve_latent_dim(cfg, dataset),
            cfg.hidden,
            resolve_output_activation(cfg, dataset),  # type: ignore[arg-type]
            seed,
        )
    if kind == "flow":
        return build_flow(dataset.dim, cfg.n_couplings, cfg.hidden, cfg.s_max, seed)
    raise ValueError(f"Unknown transformer kind {kind!r}")


def transformer_loss(
    model: VaeModel | FlowModel,
    x: np.ndarray,
    seed: Any,
    weights: Mapping[str, Tensor] | None = None,
) -> Tensor:
    """Negative ELBO for a VAE, negative mean log-likelihood for a flow."""
    if isinstance(model, VaeModel):
        return elbo_loss(model, x, seed, weights)
    return T.neg(flow_log_likelihood(model, x, weights))


def train_transformer(
    kind: TransformerKind,
    dataset: Dataset,
    cfg: TransformerConfig,
    seed: Any,
    held_out: Dataset | None = None,
) -> TransformerRun:
    """Fit a VAE or flow to the features of ``dataset``; labels are ignored.

    Args:
        kind: ``"vae"`` or ``"flow"``.
        dataset: Training rows.
        cfg: Architecture and optimization settings.
        seed: Seed for initialization, the held-out split, batching and VAE noise.
        held_out: Rows for the held-out loss; split off ``dataset`` when omitted.

    Returns:
        TransformerRun with one history entry per epoch.

    Raises:
        TrainingDivergedError: If a loss becomes non-finite.
    """
    init_seed, split_seed, batch_seed, noise_seed, eval_seed = as_seed_sequence(seed).spawn(5)
    train = dataset
    if held_out is None:
        train, held_out = split_held_out(dataset, cfg.held_out_fraction, split_seed)
    model = build_transformer(kind, train, cfg, init_seed)
    lr = resolve_lr(kind, cfg)
    state = AdamState.create(model.params, lr)

    def held_out_loss() -> float | None:
        if held_out is None:
            return None
        return transformer_loss(model, held_out.features, eval_seed).item()

    run = TransformerRun(model=model, initial_held_out_loss=held_out_loss())
    logger.info(
        f"Training {kind} on {train.n} rows for {cfg.epochs} epochs "
        f"({model.params.num_values()} parameters)"
    )
    step = 0
    for epoch in range(cfg.epochs):
        if kind == "vae":
            state.lr = exponential_decay(
                epoch, lr, cfg.decay_rate, cfg.decay_every, cfg.decay_start_epoch
            )
        losses = []
        for batch in batches(train, cfg.batch_size, batch_seed, epoch=epoch):
            tape = Tape()
            weights = model.params.watch(tape)
            try:
                noise = epoch_seed(noise_seed, step)
                loss = transformer_loss(model, batch.features, noise, weights)
                grads = tape.backward(loss).wrt(weights)
                adam_step(model.params, grads, state)
            except NonFiniteError as e:
                logger.error(f"{kind} training diverged at step {step}: {e}")
                raise TrainingDivergedError(step, f"{kind} loss", str(e)) from e
            losses.append(loss.item())
            step += 1
        try:
            held = held_out_loss()
        except NonFiniteError as e:
            raise TrainingDivergedError(step, f"{kind} held-out loss", str(e)) from e
        run.history.append(
            TransformerEpoch(
                epoch=epoch, lr=state.lr, loss=float(np.mean(losses)), held_out_loss=held
            )
        )
        logger.debug(f"{kind} epoch {epoch}: loss={np.mean(losses):.6f} held_out={held}")

    run.final_held_out_loss = run.history[-1].held_out_loss
    logger.info(
        f"Finished {kind}: held-out loss {run.initial_held_out_loss} -> {run.final_held_out_loss}"
    )
    return run


# ============================================================================
# Classifier training
# ============================================================================


ConsistencyFn = Callable[[np.ndarray, Any, Mapping[str, Tensor]], Tensor]


def consistency_fn(
    cfg: TrainConfig,
    model: ClassifierModel,
    transformer: LatentTransformer | None,
    image_shape: tuple[int, int] | None,
) -> ConsistencyFn:
    """The L_usl term selected by ``cfg.regularizer``."""
    if cfg.regularizer == "vat":
        return lambda x, seed, w: vat_cost(model, x, cfg.perturb, seed, w).cost
    if cfg.regularizer in ("lvat-vae", "lvat-flow"):
        return lambda x, seed, w: lvat_cost(model, transformer, x, cfg.perturb, seed, w).cost
    if cfg.regularizer == "pi":
        return lambda x, seed, w: pi_cost(model, x, cfg.pi, seed, w, image_shape)
    return lambda x, seed, w: Tensor(0.0)


def _check_transformer(cfg: TrainConfig, transformer: LatentTransformer | None) -> None:
    expected = cfg.transformer_kind
    if expected is None and transformer is not None:
        raise ValueError(f"Regularizer {cfg.regularizer} does not use a transformer")
    if expected is not None:
        if transformer is None:
            raise ValueError(f"Regularizer {cfg.regularizer} needs a trained {expected}")
        if transformer.kind != expected:
            raise ValueError(f"Regularizer {cfg.regularizer} got a {transformer.kind} transformer")


def train_classifier(
    dataset: Dataset,
    cfg: TrainConfig,
    seed: Any,
    transformer: LatentTransformer | None = None,
    test_set: Dataset | None = None,
    arch: ClassifierConfig | None = None,
) -> ClassifierRun:
    """Train a classifier on labeled batches plus a consistency cost on unlabeled batches.

    Every update draws ``batch_labeled`` labeled rows for cross-entropy and
    ``batch_unlabeled`` rows from the whole training set (labels ignored) for the
    consistency cost. The transformer is only read, never updated.

    Args:
        dataset: Training split with its labeled mask.
        cfg: Training settings.
        seed: Run seed; spawns independent streams for initialization, labeled batches,
            unlabeled batches and perturbations.
        transformer: Frozen VAE or flow, required for the lvat regularizers.
        test_set: Fully labeled rows for periodic error rates.
        arch: Classifier architecture.

    Returns:
        ClassifierRun with one metrics row per update.

    Raises:
        ValueError: If the transformer does not match the regularizer.
        DataError: If no row is labeled.
        TrainingDivergedError: If a loss becomes non-finite.
    """
    _check_transformer(cfg, transformer)
    if dataset.n_labeled == 0:
        raise DataError("Training needs at least one labeled row")
    arch = arch or ClassifierConfig()
    init_seed, labeled_seed, unlabeled_seed, step_seed = as_seed_sequence(seed).spawn(4)

    model = ClassifierModel.build(dataset.dim, dataset.num_classes, arch.hidden, init_seed)
    labeled = BatchStream(dataset, cfg.batch_labeled, labeled_seed, labeled_only=True)
    unlabeled = BatchStream(dataset, cfg.batch_unlabeled, unlabeled_seed)
    consistency = consistency_fn(cfg, model, transformer, dataset.image_shape)
    state = AdamState.create(model.params, cfg.lr)
    run = ClassifierRun(model=model)

    logger.info(
        f"Training classifier: regularizer={cfg.regularizer}, alpha={cfg.alpha}, "
        f"labeled={dataset.n_labeled}/{dataset.n}, updates={cfg.total_updates}"
    )
    for step in range(cfg.total_updates):
        state.lr, state.beta1 = lr_schedule(step, cfg)
        augment_l, augment_u, perturb_seed = epoch_seed(step_seed, step).spawn(3)
        lab, unl = next(labeled), next(unlabeled)
        x_l = augment(lab.features, dataset.image_shape, cfg.augment, augment_l)
        x_u = augment(unl.features, dataset.image_shape, cfg.augment, augment_u)

        tape = Tape()
        weights = model.params.watch(tape)
        try:
            loss_sl = cross_entropy(predict_logits(model, x_l, weights), lab.labels)
            loss_usl = consistency(x_u, perturb_seed, weights)
            total = T.add(loss_sl, T.mul(cfg.alpha, loss_usl))
            grads = tape.backward(total).wrt(weights)
            adam_step(model.params, grads, state)
        except NonFiniteError as e:
            logger.error(f"Classifier training diverged at step {step}: {e}")
            raise TrainingDivergedError(step, "classifier loss", str(e)) from e

        row = MetricsRow(
            step=step,
            lr=state.lr,
            loss_sl=loss_sl.item(),
            loss_usl=loss_usl.item(),
            loss_total=total.item(),
        )
        done = step + 1
        if test_set is not None and (done % cfg.eval_every == 0 or done == cfg.total_updates):
            row.test_error = error_rate(model, test_set)
            run.final_test_error = row.test_error
            logger.info(f"Step {done}: test error {row.test_error:.4f}")
        if done % cfg.log_every == 0:
            logger.info(
                f"Step {done}/{cfg.total_updates}: lr={state.lr:.2e} "
                f"sl={row.loss_sl:.5f} usl={row.loss_usl:.5f} total={row.loss_total:.5f}"
            )
        run.history.append(row)

    return run
