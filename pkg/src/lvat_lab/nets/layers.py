"""Dense layers, multi-layer perceptrons and named parameter sets."""

from __future__ import annotations

import logging
from collections.abc import Iterator, Mapping, MutableMapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from ..autodiff.tensor import DEFAULT_SLOPE, Tape, Tensor, add, leaky_relu, matmul, sigmoid, tanh
from ..exceptions import NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

OutputActivation = Literal["none", "sigmoid", "tanh"]


class ParamSet(MutableMapping[str, np.ndarray]):
    """Named float64 parameter arrays, in insertion order.

    Arrays are replaced rather than mutated in place, so a shallow ``copy()`` is a
    stable snapshot.
    """

    def __init__(self, arrays: Mapping[str, Any] | None = None):
        self._arrays: dict[str, np.ndarray] = {}
        for name, value in (arrays or {}).items():
            self[name] = value

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value: Any) -> None:
        array = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            raise NonFiniteError(f"Parameter {name} has non-finite values")
        self._arrays[name] = array

    def __delitem__(self, name: str) -> None:
        del self._arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def __repr__(self) -> str:
        return f"ParamSet({len(self)} tensors, {self.num_values()} values)"

    def num_values(self) -> int:
        return int(sum(a.size for a in self._arrays.values()))

    def copy(self) -> ParamSet:
        return ParamSet(self._arrays)

    def constants(self) -> dict[str, Tensor]:
        """Unrecorded tensors over the current values."""
        return {name: Tensor(a) for name, a in self._arrays.items()}

    def watch(self, tape: Tape) -> dict[str, Tensor]:
        """Leaves on ``tape`` for every parameter."""
        return tape.watch_all(self._arrays)

    def update(self, other: Mapping[str, Any] = (), **kwargs: Any) -> None:  # type: ignore
        for name, value in dict(other, **kwargs).items():
            self[name] = value

    def equals(self, other: Mapping[str, np.ndarray]) -> bool:
        """Bit-identical names, shapes and values."""
        if list(self) != list(other):
            return False
        return all(
            self[n].shape == other[n].shape and np.array_equal(self[n], other[n]) for n in self
        )

    def to_document(self) -> dict[str, dict[str, list]]:
        """JSON-ready mapping of name to {shape, values}."""
        return {
            name: {"shape": list(a.shape), "values": a.reshape(-1).tolist()}
            for name, a in self._arrays.items()
        }

    @classmethod
    def from_document(cls, document: Mapping[str, Mapping[str, Any]]) -> ParamSet:
        params = cls()
        for name, entry in document.items():
            shape = tuple(int(s) for s in entry["shape"])
            values = np.asarray(entry["values"], dtype=np.float64)
            if int(np.prod(shape)) != values.size:
                raise ShapeError(f"Parameter {name}: shape {shape} does not match values")
            params[name] = values.reshape(shape)
        return params


@dataclass(frozen=True)
class DenseLayer:
    """Affine map x @ W + b with W of shape (in_dim, out_dim)."""

    name: str
    in_dim: int
    out_dim: int

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ShapeError(f"Layer {self.name} needs positive dimensions")

    @property
    def weight_name(self) -> str:
        return f"{self.name}.weight"

    @property
    def bias_name(self) -> str:
        return f"{self.name}.bias"

    def forward(self, weights: Mapping[str, Tensor], x: Tensor) -> Tensor:
        return add(matmul(x, weights[self.weight_name]), weights[self.bias_name])

    def init(self, rng: np.random.Generator, zero: bool = False) -> dict[str, np.ndarray]:
        """Glorot-uniform weights (or zeros) and zero bias."""
        if zero:
            weight = np.zeros((self.in_dim, self.out_dim))
        else:
            limit = np.sqrt(6.0 / (self.in_dim + self.out_dim))
            weight = rng.uniform(-limit, limit, size=(self.in_dim, self.out_dim))
        return {self.weight_name: weight, self.bias_name: np.zeros(self.out_dim)}


@dataclass(frozen=True)
class Mlp:
    """Dense layers joined by leaky ReLU, with a configurable output activation."""

    name: str
    dims: tuple[int, ...]
    output_activation: OutputActivation = "none"
    slope: float = DEFAULT_SLOPE
    zero_last: bool = False
    layers: tuple[DenseLayer, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.dims) < 2:
            raise ShapeError(f"Mlp {self.name} needs at least input and output dimensions")
        if any(d <= 0 for d in self.dims):
            raise ShapeError(f"Mlp {self.name} has non-positive dimensions {self.dims}")
        layers = tuple(
            DenseLayer(f"{self.name}.{i}", d_in, d_out)
            for i, (d_in, d_out) in enumerate(zip(self.dims[:-1], self.dims[1:]))
        )
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "layers", layers)

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    def param_names(self) -> list[str]:
        return [n for layer in self.layers for n in (layer.weight_name, layer.bias_name)]

    def forward(
        self, weights: Mapping[str, Tensor], x: Tensor, *, pre_activation: bool = False
    ) -> Tensor:
        """Run the network.

        Args:
            weights: Tensors for every parameter name of this network.
            x: Batch of shape (B, in_dim).
            pre_activation: Return the last layer's output before the output activation.

        Returns:
            Batch of shape (B, out_dim).
        """
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"Mlp {self.name} expects (B, {self.in_dim}) input, got {x.shape}")
        h = x
        for i, layer in enumerate(self.layers):
            h = layer.forward(weights, h)
            if i < len(self.layers) - 1:
                h = leaky_relu(h, self.slope)
        if pre_activation or self.output_activation == "none":
            return h
        if self.output_activation == "sigmoid":
            return sigmoid(h)
        return tanh(h)

    def init(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        arrays: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.layers):
            arrays.update(layer.init(rng, zero=self.zero_last and i == len(self.layers) - 1))
        return arrays


def init_params(spec: Mlp | Sequence[Mlp], seed: int | np.random.SeedSequence) -> ParamSet:
    """Initialize parameters for one or more networks.

    Weights are drawn uniformly in ±sqrt(6 / (fan_in + fan_out)) and biases are zero.
    Networks are initialized in the order given, so the result depends only on
    ``(spec, seed)``.

    Args:
        spec: Network or networks to initialize.
        seed: Seed for the weight stream.

    Returns:
        ParamSet holding every parameter of every network.
    """
    mlps = [spec] if isinstance(spec, Mlp) else list(spec)
    rng = np.random.default_rng(seed)
    params = ParamSet()
    for mlp in mlps:
        for name, value in mlp.init(rng).items():
            if name in params:
                raise ValueError(f"Duplicate parameter name {name}")
            params[name] = value
    logger.debug(f"Initialized {len(params)} tensors ({params.num_values()} values)")
    return params
