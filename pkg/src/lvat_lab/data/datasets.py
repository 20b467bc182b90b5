"""Synthetic datasets, labeled-subset sampling, augmentation and batching."""

from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import dataclass, replace
from typing import Any, Literal, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..exceptions import DataError, ShapeError
from ..utils.seeding import as_seed_sequence, epoch_seed

logger = logging.getLogger(__name__)

Split = Literal["train", "test"]
UNLABELED = -1


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with optional labels and a labeled-row mask.

    Grid data is stored flattened row-major with ``image_shape = (H, W)``. Rows outside
    the mask may carry ``UNLABELED`` (-1) as label.
    """

    features: np.ndarray
    labels: np.ndarray | None
    labeled_mask: np.ndarray
    num_classes: int
    split: Split = "train"
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise ShapeError(f"Features must be (N, D), got shape {features.shape}")
        mask = np.asarray(self.labeled_mask, dtype=bool)
        if mask.shape != (features.shape[0],):
            raise ShapeError("labeled_mask must have one entry per row")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labeled_mask", mask)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (features.shape[0],):
                raise ShapeError("labels must have one entry per row")
            known = labels[mask]
            if known.size and (known.min() < 0 or known.max() >= self.num_classes):
                raise DataError(f"Labels must lie in [0, {self.num_classes})")
            object.__setattr__(self, "labels", labels)
        elif mask.any():
            raise DataError("labeled_mask marks rows of a dataset without labels")
        if self.image_shape is not None:
            h, w = self.image_shape
            if h * w != features.shape[1]:
                raise ShapeError(f"image_shape {self.image_shape} does not match D={self.dim}")
            object.__setattr__(self, "image_shape", (int(h), int(w)))

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_labeled(self) -> int:
        return int(np.count_nonzero(self.labeled_mask))

    @property
    def fully_labeled(self) -> bool:
        return self.labels is not None and bool(self.labeled_mask.all())

    def class_counts(self) -> np.ndarray:
        """Labeled rows per class."""
        if self.labels is None:
            return np.zeros(self.num_classes, dtype=np.int64)
        return np.bincount(self.labels[self.labeled_mask], minlength=self.num_classes)

    def with_features(self, features: np.ndarray) -> Dataset:
        return replace(self, features=features)


def _shuffled(features, labels, rng) -> tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(len(labels))
    return features[order], labels[order]


def _class_sizes(n: int, num_classes: int) -> list[int]:
    return [n // num_classes + (1 if c < n % num_classes else 0) for c in range(num_classes)]


def _check_size(n: int, num_classes: int, noise: float) -> None:
    if n < 2 * num_classes:
        raise DataError(f"n must be at least {2 * num_classes}, got {n}")
    if noise < 0:
        raise DataError(f"noise must be non-negative, got {noise}")


def lift_points(points: np.ndarray, lift_dim: int, seed: Any) -> np.ndarray:
    """Embed 2-D points isometrically into ``lift_dim`` dimensions via a seeded orthonormal map."""
    if lift_dim < points.shape[1]:
        raise DataError(f"lift_dim {lift_dim} is smaller than the data dimension")
    gaussian = np.random.default_rng(seed).standard_normal((lift_dim, points.shape[1]))
    basis, _ = np.linalg.qr(gaussian)
    return points @ basis.T


def gen_two_moons(
    n: int,
    noise: float = 0.1,
    seed: Any = 0,
    lift_dim: int | None = None,
    lift_seed: int = 0,
    split: Split = "train",
) -> Dataset:
    """Two interleaving unit half-circles, one class per moon.

    Class 0 lies on the upper half-circle (cos t, sin t); class 1 on the shifted lower
    half-circle (1 - cos t, 0.5 - sin t), with t uniform in [0, pi].
    ``lift_seed`` fixes the embedding map independently of ``seed``, so train and test
    splits drawn with different seeds share one embedding.
    """
    _check_size(n, 2, noise)
    rng = np.random.default_rng(as_seed_sequence(seed))
    n0, n1 = _class_sizes(n, 2)
    t0 = rng.uniform(0.0, np.pi, n0)
    t1 = rng.uniform(0.0, np.pi, n1)
    upper = np.stack([np.cos(t0), np.sin(t0)], axis=1)
    lower = np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)
    features = np.concatenate([upper, lower])
    labels = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    if noise > 0:
        features = features + noise * rng.standard_normal(features.shape)
    features, labels = _shuffled(features, labels, rng)
    if lift_dim is not None:
        features = lift_points(features, lift_dim, lift_seed)
    return Dataset(features, labels, np.ones(n, dtype=bool), num_classes=2, split=split)


def gen_circles(
    n: int,
    noise: float = 0.05,
    seed: Any = 0,
    lift_dim: int | None = None,
    lift_seed: int = 0,
    split: Split = "train",
) -> Dataset:
    """Concentric circles of radius 1 (class 0) and 0.5 (class 1)."""
    _check_size(n, 2, noise)
    rng = np.random.default_rng(as_seed_sequence(seed))
    parts, labels = [], []
    for label, (size, radius) in enumerate(zip(_class_sizes(n, 2), (1.0, 0.5))):
        angle = rng.uniform(0.0, 2.0 * np.pi, size)
        parts.append(radius * np.stack([np.cos(angle), np.sin(angle)], axis=1))
        labels.append(np.full(size, label, dtype=np.int64))
    features = np.concatenate(parts)
    if noise > 0:
        features = features + noise * rng.standard_normal(features.shape)
    features, label_array = _shuffled(features, np.concatenate(labels), rng)
    if lift_dim is not None:
        features = lift_points(features, lift_dim, lift_seed)
    return Dataset(features, label_array, np.ones(n, dtype=bool), num_classes=2, split=split)


def glyph_templates(size: int) -> np.ndarray:
    """Procedural size x size glyphs: bars, diagonals, a box and a plus."""
    if size < 4:
        raise DataError(f"Grid size must be at least 4, got {size}")
    mid = size // 2
    eye = np.eye(size)
    hbar = np.zeros((size, size))
    hbar[mid - 1 : mid + 1, 1:-1] = 1.0
    vbar = hbar.T.copy()
    box = np.zeros((size, size))
    box[1:-1, 1:-1] = 1.0
    box[2:-2, 2:-2] = 0.0
    plus = np.maximum(hbar, vbar)
    return np.stack([hbar, vbar, eye, eye[:, ::-1], box, plus])


def gen_grid_patterns(
    n: int,
    size: int = 8,
    seed: Any = 0,
    num_classes: int = 4,
    noise: float = 0.1,
    split: Split = "train",
) -> Dataset:
    """Noisy glyph images in [0, 1], one glyph template per class.

    Each sample is its class template scaled by a random intensity in [0.7, 1] plus
    Gaussian pixel noise, clipped to [0, 1].
    """
    templates = glyph_templates(size)
    if not 2 <= num_classes <= len(templates):
        raise DataError(f"num_classes must be in [2, {len(templates)}], got {num_classes}")
    _check_size(n, num_classes, noise)
    rng = np.random.default_rng(as_seed_sequence(seed))
    labels = np.concatenate(
        [np.full(k, c, dtype=np.int64) for c, k in enumerate(_class_sizes(n, num_classes))]
    )
    rng.shuffle(labels)
    intensity = rng.uniform(0.7, 1.0, size=(n, 1, 1))
    images = templates[labels] * intensity
    if noise > 0:
        images = images + noise * rng.standard_normal(images.shape)
    features = np.clip(images, 0.0, 1.0).reshape(n, size * size)
    return Dataset(
        features,
        labels,
        np.ones(n, dtype=bool),
        num_classes=num_classes,
        split=split,
        image_shape=(size, size),
    )


def standardize(train: Dataset, test: Dataset | None = None) -> tuple[Dataset, Dataset | None]:
    """Zero mean and unit variance per dimension, using train-split statistics."""
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    scaled_train = train.with_features((train.features - mean) / std)
    if test is None:
        return scaled_train, None
    if test.dim != train.dim:
        raise ShapeError("Train and test splits differ in dimension")
    return scaled_train, test.with_features((test.features - mean) / std)


def subsample_labels(dataset: Dataset, n_labeled: int, seed: Any) -> Dataset:
    """Mark a class-balanced random subset of ``n_labeled`` rows as labeled.

    All rows stay in the dataset as the unlabeled pool; per-class counts differ by at
    most one.

    Raises:
        DataError: If the dataset has no labels, or a class cannot supply its share.
    """
    if dataset.labels is None:
        raise DataError("Cannot sample labels from an unlabeled dataset")
    if np.any(dataset.labels < 0):
        raise DataError("Every row needs a known label before subsampling")
    if not 1 <= n_labeled <= dataset.n:
        raise DataError(f"n_labeled must be in [1, {dataset.n}], got {n_labeled}")
    if n_labeled == dataset.n:
        return replace(dataset, labeled_mask=np.ones(dataset.n, dtype=bool))

    rng = np.random.default_rng(as_seed_sequence(seed))
    k = dataset.num_classes
    available = np.bincount(dataset.labels, minlength=k)
    quota = np.full(k, n_labeled // k, dtype=np.int64)
    spare = [c for c in rng.permutation(k) if available[c] > quota[c]]
    extra = n_labeled % k
    if len(spare) < extra:
        raise DataError(f"Not enough rows to label {n_labeled} samples in balance")
    quota[spare[:extra]] += 1
    short = np.flatnonzero(quota > available)
    if short.size:
        c = int(short[0])
        raise DataError(f"Class {c} has {int(available[c])} rows, needs {int(quota[c])}")

    mask = np.zeros(dataset.n, dtype=bool)
    for c in range(k):
        rows = np.flatnonzero(dataset.labels == c)
        mask[rng.choice(rows, size=int(quota[c]), replace=False)] = True
    logger.debug(f"Labeled {n_labeled} of {dataset.n} rows: {quota.tolist()} per class")
    return replace(dataset, labeled_mask=mask)


class AugmentConfig(BaseModel):
    """Random translation (edge padded) and horizontal flip for grid data."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    translate: int = Field(default=0, ge=0, le=8, description="Maximum shift in pixels")
    flip: bool = Field(default=False, description="Random horizontal flips")
    flip_prob: float = Field(default=0.5, ge=0, le=1, description="Flip probability")

    @property
    def active(self) -> bool:
        return self.translate > 0 or self.flip


def augment(
    batch: np.ndarray,
    image_shape: tuple[int, int] | None,
    cfg: AugmentConfig,
    seed: Any,
) -> np.ndarray:
    """Independently translate and flip every image of a flattened batch.

    Raises:
        DataError: If an active augmentation is requested for non-grid data.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if not cfg.active:
        return batch.copy()
    if image_shape is None or image_shape[0] * image_shape[1] != batch.shape[1]:
        raise DataError("Translation and flips need grid-shaped data")
    h, w = image_shape
    rng = np.random.default_rng(as_seed_sequence(seed))
    images = batch.reshape(-1, h, w)
    out = images.copy()

    if cfg.translate > 0:
        t = cfg.translate
        padded = np.pad(images, ((0, 0), (t, t), (t, t)), mode="edge")
        shifts = rng.integers(-t, t + 1, size=(len(images), 2))
        for i, (dy, dx) in enumerate(shifts):
            out[i] = padded[i, t + dy : t + dy + h, t + dx : t + dx + w]

    if cfg.flip:
        flips = rng.random(len(images)) < cfg.flip_prob
        out[flips] = out[flips, :, ::-1]

    return out.reshape(batch.shape)


class Batch(NamedTuple):
    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None


def _pool(dataset: Dataset, labeled_only: bool) -> np.ndarray:
    if not labeled_only:
        return np.arange(dataset.n)
    pool = np.flatnonzero(dataset.labeled_mask)
    if pool.size == 0:
        raise DataError("No labeled rows to draw from")
    return pool


def _make_batch(dataset: Dataset, indices: np.ndarray, labeled_only: bool) -> Batch:
    labels = dataset.labels[indices] if labeled_only else None
    return Batch(indices, dataset.features[indices], labels)


def batches(
    dataset: Dataset,
    batch_size: int,
    seed: Any,
    labeled_only: bool = False,
    epoch: int = 0,
) -> Iterator[Batch]:
    """One shuffled pass over the dataset (or its labeled rows).

    The last batch may be smaller. Labels are attached only to labeled-only batches.
    """
    if batch_size < 1:
        raise DataError(f"batch_size must be at least 1, got {batch_size}")
    pool = _pool(dataset, labeled_only)
    order = np.random.default_rng(epoch_seed(seed, epoch)).permutation(pool)
    for start in range(0, len(order), batch_size):
        yield _make_batch(dataset, order[start : start + batch_size], labeled_only)


class BatchStream:
    """Endless stream of full-size batches, reshuffled every epoch.

    A batch larger than the pool is filled from the following epochs.
    """

    def __init__(self, dataset: Dataset, batch_size: int, seed: Any, labeled_only: bool = False):
        if batch_size < 1:
            raise DataError(f"batch_size must be at least 1, got {batch_size}")
        self.dataset = dataset
        self.batch_size = batch_size
        self.labeled_only = labeled_only
        self._seed = as_seed_sequence(seed)
        self._pool = _pool(dataset, labeled_only)
        self._buffer = np.empty(0, dtype=np.int64)
        self.epoch = 0

    def __iter__(self) -> BatchStream:
        return self

    def __next__(self) -> Batch:
        while len(self._buffer) < self.batch_size:
            rng = np.random.default_rng(epoch_seed(self._seed, self.epoch))
            self._buffer = np.concatenate([self._buffer, rng.permutation(self._pool)])
            self.epoch += 1
        indices, self._buffer = self._buffer[: self.batch_size], self._buffer[self.batch_size :]
        return _make_batch(self.dataset, indices, self.labeled_only)
