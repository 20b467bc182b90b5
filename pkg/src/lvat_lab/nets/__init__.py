"""Dense networks, parameter sets and probabilistic losses."""

from .layers import DenseLayer, Mlp, ParamSet, init_params
from .losses import cross_entropy, gaussian_kl, kl_categorical, log_softmax, onehot, softmax

__all__ = [
    "DenseLayer",
    "Mlp",
    "ParamSet",
    "init_params",
    "cross_entropy",
    "gaussian_kl",
    "kl_categorical",
    "log_softmax",
    "onehot",
    "softmax",
]
