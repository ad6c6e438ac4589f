"""Core operations of the random-segment autoregressive pretraining pipeline.

Thin numpy-facing wrapper over the C++ module: tokenization, segment
sampling, serialization orders, and attention masks.
"""

from randsac._randsac import (
    blob_partition,
    decoder_self_mask,
    hierarchical_order,
    memory_mask,
    patchify,
    random_flat_order,
    sincos_positions,
    source_mask,
    square_partition,
    token_coordinates,
)

__all__ = [
    "blob_partition",
    "decoder_self_mask",
    "hierarchical_order",
    "memory_mask",
    "patchify",
    "random_flat_order",
    "sincos_positions",
    "source_mask",
    "square_partition",
    "token_coordinates",
]
