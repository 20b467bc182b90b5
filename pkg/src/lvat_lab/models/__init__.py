"""Classifier and latent transformers (VAE, coupling flow)."""

from .classifier import ClassifierModel, count_errors, error_rate, predict_label, predict_logits
from .flow import (
    AffineCoupling,
    FlowModel,
    Permutation,
    build_flow,
    compose_flows,
    flow_forward,
    flow_inverse,
    flow_log_likelihood,
    flow_sample,
)
from .transformer import TRANSFORMER_KINDS, LatentTransformer, load_transformer
from .vae import VaeModel, decode, elbo_loss, encode, encode_deterministic, reconstruction_loss

__all__ = [
    "ClassifierModel",
    "count_errors",
    "error_rate",
    "predict_label",
    "predict_logits",
    "AffineCoupling",
    "FlowModel",
    "Permutation",
    "build_flow",
    "compose_flows",
    "flow_forward",
    "flow_inverse",
    "flow_log_likelihood",
    "flow_sample",
    "TRANSFORMER_KINDS",
    "LatentTransformer",
    "load_transformer",
    "VaeModel",
    "decode",
    "elbo_loss",
    "encode",
    "encode_deterministic",
    "reconstruction_loss",
]
