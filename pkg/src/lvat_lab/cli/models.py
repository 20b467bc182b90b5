"""Run configuration and the JSON documents written by the CLI."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..data.datasets import AugmentConfig
from ..regularizer.perturb import PerturbConfig
from ..regularizer.pi_model import PiConfig
from ..training.trainer import (
    ClassifierConfig,
    RegularizerKind,
    TrainConfig,
    TransformerConfig,
    TransformerKind,
)

DatasetKind = Literal["two_moons", "circles", "grid_patterns"]

# Labeled-set sizes of the two benchmark protocols.
N_LABELED_PRESETS: dict[str, int] = {"svhn_like": 1000, "cifar_like": 4000}

# Random shift of glyph images, in pixels.
GRID_TRANSLATE = 2

EPSILON_GRIDS: dict[str, tuple[float, ...]] = {
    "vat": (2.5, 3.5, 10.0, 8.0),
    "lvat_vae": (0.1, 0.25, 0.5, 0.75, 1.0, 1.5, *(float(e) for e in range(3, 16))),
    "lvat_flow": (0.5, 1.0, 1.5),
}


# ============================================================================
# Run configuration
# ============================================================================


class DataConfig(BaseModel):
    """Dataset generation (or loading) and the labeled subset."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dataset: DatasetKind = Field(default="two_moons", description="Synthetic dataset")
    n_train: int = Field(default=1000, ge=1, description="Training rows")
    n_test: int = Field(default=1000, ge=1, description="Test rows")
    noise: float = Field(default=0.1, ge=0, description="Gaussian noise std")
    size: int = Field(default=8, ge=4, description="Image side of grid_patterns")
    num_classes: int | None = Field(
        default=None, ge=2, description="Classes of grid_patterns (default 4)"
    )
    lift_dim: int | None = Field(
        default=None, ge=2, description="Embed 2-D point data into this many dimensions"
    )
    n_labeled: int | str | None = Field(
        default=10, description="Labeled rows, a preset name, or null for supervised mode"
    )
    standardize: bool = Field(default=True, description="Standardize point data")
    data_seed: int = Field(default=0, ge=0, description="Seed of the generated splits")
    train_csv: Path | None = Field(default=None, description="Load the training split from CSV")
    test_csv: Path | None = Field(default=None, description="Load the test split from CSV")

    @field_validator("n_labeled")
    @classmethod
    def resolve_preset(cls, v: int | str | None) -> int | None:
        """Replace a preset name by its size."""
        if isinstance(v, str):
            if v not in N_LABELED_PRESETS:
                raise ValueError(f"n_labeled preset must be one of {sorted(N_LABELED_PRESETS)}")
            return N_LABELED_PRESETS[v]
        if v is not None and v < 1:
            raise ValueError("n_labeled must be at least 1")
        return v

    @property
    def mode(self) -> Literal["sl", "ssl"]:
        return "sl" if self.n_labeled is None else "ssl"

    @property
    def input_dim(self) -> int | None:
        """Feature dimension of the generated data; None when loaded from CSV."""
        if self.train_csv is not None:
            return None
        if self.dataset == "grid_patterns":
            return self.size * self.size
        return self.lift_dim or 2

    def default_augment(self) -> AugmentConfig:
        if self.dataset == "grid_patterns":
            return AugmentConfig(translate=GRID_TRANSLATE)
        return AugmentConfig()


class TransformerSection(TransformerConfig):
    kind: TransformerKind = Field(default="flow", description="vae or flow")

    def to_config(self) -> TransformerConfig:
        return TransformerConfig(**self.model_dump(exclude={"kind"}))


class RegularizerConfig(BaseModel):
    """Consistency term and its weight alpha."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: RegularizerKind = Field(default="vat", description="vat, lvat-vae, lvat-flow, pi, none")
    epsilon: float = Field(default=1.0, gt=0, description="Perturbation magnitude")
    xi: float = Field(default=1e-6, gt=0, description="Power-method finite-difference step")
    power_iters: int = Field(default=1, ge=1, description="Power-method refinements")
    alpha: float = Field(default=1.0, ge=0, description="Consistency coefficient")
    pi: PiConfig = Field(default_factory=PiConfig)
    augment: AugmentConfig | None = Field(
        default=None,
        description="Augmentation; null shifts grid_patterns by up to 2 pixels, none otherwise",
    )

    @property
    def space(self) -> Literal["input", "latent"]:
        return "latent" if self.kind.startswith("lvat") else "input"

    def perturb(self) -> PerturbConfig:
        return PerturbConfig(
            epsilon=self.epsilon, xi=self.xi, power_iters=self.power_iters, space=self.space
        )


class TrainerSection(BaseModel):
    """Optimization of the classifier."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lr: float = Field(default=1e-3, gt=0)
    total_updates: int = Field(default=5000, ge=1)
    decay_updates: int = Field(default=1600, ge=0)
    batch_labeled: int = Field(default=32, ge=1)
    batch_unlabeled: int = Field(default=128, ge=1)
    eval_every: int = Field(default=500, ge=1)
    log_every: int = Field(default=100, ge=1)


class RunConfig(BaseModel):
    """One experiment: data, transformer, classifier, regularizer, optimizer and seeds."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    data: DataConfig = Field(default_factory=DataConfig)
    transformer: TransformerSection = Field(default_factory=TransformerSection)
    classifier: ClassifierConfig = Field(default_factory=ClassifierConfig)
    regularizer: RegularizerConfig = Field(default_factory=RegularizerConfig)
    trainer: TrainerSection = Field(default_factory=TrainerSection)
    output_dir: Path | None = Field(default=None, description="Artifact directory")
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, v: list[int]) -> list[int]:
        if len(set(v)) != len(v):
            raise ValueError("seeds must be distinct")
        if any(s < 0 for s in v):
            raise ValueError("seeds must be non-negative")
        return v

    @model_validator(mode="after")
    def check_transformer(self) -> RunConfig:
        kind = self.regularizer.kind
        if kind.startswith("lvat-") and kind.removeprefix("lvat-") != self.transformer.kind:
            raise ValueError(f"Regularizer {kind} needs transformer.kind={kind[5:]!r}")
        latent_dim, input_dim = self.transformer.latent_dim, self.data.input_dim
        if (
            self.transformer.kind == "vae"
            and latent_dim is not None
            and input_dim is not None
            and latent_dim > input_dim
        ):
            raise ValueError(
                f"transformer.latent_dim {latent_dim} exceeds the data dimension {input_dim}; "
                "lower it or set data.lift_dim"
            )
        return self

    @property
    def baseline(self) -> bool:
        """True when no consistency term contributes to the loss."""
        return self.regularizer.kind == "none" or self.regularizer.alpha == 0

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(
            alpha=self.regularizer.alpha,
            regularizer=self.regularizer.kind,
            perturb=self.regularizer.perturb(),
            pi=self.regularizer.pi,
            augment=self.regularizer.augment or self.data.default_augment(),
            **self.trainer.model_dump(),
        )

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form; the output directory is not part of it."""
        canonical = json.dumps(
            self.model_dump(mode="json", exclude={"output_dir"}),
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ============================================================================
# Output documents
# ============================================================================


class TransformerSummary(BaseModel):
    kind: TransformerKind
    config_hash: str
    epochs: int
    num_params: int
    initial_held_out_loss: float | None = None
    final_held_out_loss: float | None = None


class SeedResult(BaseModel):
    seed: int
    n_labeled: int
    final_test_error: float


class RunSummary(BaseModel):
    """Aggregate of a (multi-seed) classifier run."""

    config_hash: str = Field(..., description="SHA-256 of the run configuration")
    mode: Literal["sl", "ssl"] = Field(..., description="Fully or partially labeled training")
    regularizer: RegularizerKind
    baseline: bool = Field(..., description="No consistency term in the loss")
    seeds: list[int]
    per_seed: list[SeedResult]
    final_test_error: float = Field(..., description="Mean final test error over seeds")
    std_test_error: float = Field(..., description="Population std over seeds")


class EvalReport(BaseModel):
    n: int = Field(..., description="Evaluated rows")
    errors: int = Field(..., description="Mispredicted rows")
    error_rate: float = Field(..., description="errors / n")


class AdvReport(BaseModel):
    n: int
    space: Literal["input", "latent"]
    epsilon: float
    mean_input_distance: float
    std_input_distance: float
    coefficient_of_variation: float
