"""K-class classifier f: X -> R^K and its evaluation."""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from ..autodiff.tensor import Tensor, as_tensor
from ..exceptions import CheckpointError, DataError, ShapeError
from ..nets.layers import Mlp, ParamSet, init_params

if TYPE_CHECKING:
    from ..data.datasets import Dataset

logger = logging.getLogger(__name__)

KIND = "classifier"


@dataclass
class ClassifierModel:
    """Dense network mapping D-dimensional inputs to K logits."""

    net: Mlp
    num_classes: int
    params: ParamSet

    def __post_init__(self):
        if self.num_classes < 2:
            raise ShapeError(f"A classifier needs at least 2 classes, got {self.num_classes}")
        if self.net.out_dim != self.num_classes:
            raise ShapeError(
                f"Network emits {self.net.out_dim} logits for {self.num_classes} classes"
            )

    @property
    def input_dim(self) -> int:
        return self.net.in_dim

    @property
    def hidden(self) -> tuple[int, ...]:
        return self.net.dims[1:-1]

    @classmethod
    def build(
        cls, input_dim: int, num_classes: int, hidden: Sequence[int], seed: Any
    ) -> ClassifierModel:
        """Create a freshly initialized classifier."""
        net = Mlp("classifier", (input_dim, *hidden, num_classes))
        return cls(net=net, num_classes=num_classes, params=init_params(net, seed))

    def header(self) -> dict[str, Any]:
        return {
            "kind": KIND,
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "hidden": list(self.hidden),
        }

    @classmethod
    def from_checkpoint(cls, header: Mapping[str, Any], params: ParamSet) -> ClassifierModel:
        if header.get("kind") != KIND:
            raise CheckpointError(f"Expected a {KIND} checkpoint, got {header.get('kind')!r}")
        net = Mlp(
            "classifier",
            (int(header["input_dim"]), *header["hidden"], int(header["num_classes"])),
        )
        missing = set(net.param_names()) - set(params)
        if missing:
            raise CheckpointError(f"Checkpoint lacks parameters: {sorted(missing)}")
        return cls(net=net, num_classes=int(header["num_classes"]), params=params)


def predict_logits(
    model: ClassifierModel, x: Any, weights: Mapping[str, Tensor] | None = None
) -> Tensor:
    """Logits f(x) for a batch.

    Args:
        model: Classifier.
        x: Batch of shape (B, D), array or tensor.
        weights: Parameter tensors to use instead of the model's constants, e.g. leaves
            watched on a training tape.

    Returns:
        Tensor of shape (B, K).
    """
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ShapeError(f"Classifier expects (B, {model.input_dim}) inputs, got {x.shape}")
    return model.net.forward(weights if weights is not None else model.params.constants(), x)


def predict_label(model: ClassifierModel, x: Any) -> np.ndarray:
    """Argmax class per row; ties go to the lowest class index."""
    return np.argmax(predict_logits(model, x).values, axis=1)


def count_errors(model: ClassifierModel, dataset: Dataset) -> int:
    """Number of rows whose predicted label differs from the true label.

    Raises:
        DataError: If the dataset has no labels or no rows.
    """
    if dataset.n == 0:
        raise DataError("Evaluation needs a non-empty dataset")
    if not dataset.fully_labeled:
        raise DataError("Evaluation needs a fully labeled dataset")
    predictions = predict_label(model, dataset.features)
    return int(np.count_nonzero(predictions != dataset.labels))


def error_rate(model: ClassifierModel, dataset: Dataset) -> float:
    """Fraction of mispredicted rows, in [0, 1]."""
    return count_errors(model, dataset) / dataset.n
