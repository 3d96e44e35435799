"""Linearly-sized deep networks with a gradient-descent trainability certificate."""

from lintrain.architect import ArchSpec, param_count, size_widths
from lintrain.data import Dataset, corrupt_labels, load_idx, synthesize
from lintrain.losses import LossSpec
from lintrain.net import Params, forward, grad_objective, init_params, jacobian_fX, softplus
from lintrain.trainer import CertificateReport, estimate_cz, lr_mask, min_norm_interpolant, train

__all__ = [
    "ArchSpec",
    "CertificateReport",
    "Dataset",
    "LossSpec",
    "Params",
    "corrupt_labels",
    "estimate_cz",
    "forward",
    "grad_objective",
    "init_params",
    "jacobian_fX",
    "load_idx",
    "lr_mask",
    "min_norm_interpolant",
    "param_count",
    "size_widths",
    "softplus",
    "synthesize",
    "train",
]

__version__ = "0.1.0"
