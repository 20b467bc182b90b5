"""LVAT Lab.

A desk-scale laboratory for virtual adversarial training (VAT) and its latent-space
variant (LVAT): a tape-based autodiff core, dense classifiers, VAE and coupling-flow
transformers, consistency regularizers and a semi-supervised training harness.
"""

__version__ = "0.1.0"
