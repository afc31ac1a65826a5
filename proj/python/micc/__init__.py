"""MICC cross-modal rumor detection: python bindings over the C++ core."""

from micc._micc import (
    compute_metrics,
    default_config,
    eval,
    gen_data,
    gradcheck_primitives,
    infer,
    info_nce_loss,
    matmul,
    positional_encoding,
    pretrain,
    relu,
    softmax,
    tokenize,
    top_k_select,
    train,
)

__all__ = [
    "compute_metrics",
    "default_config",
    "eval",
    "gen_data",
    "gradcheck_primitives",
    "infer",
    "info_nce_loss",
    "matmul",
    "positional_encoding",
    "pretrain",
    "relu",
    "softmax",
    "tokenize",
    "top_k_select",
    "train",
]
