"""Contrastive-loss workbench: kernels, bound checks, a small trainable
encoder, a procedural biased dataset, and the experiment harness."""

from .contrast import (
    ContrastMasks,
    EmbeddingBatch,
    SimilarityMatrix,
    build_masks,
    logsumexp,
    similarity,
)
from .losses import (
    LikelihoodTerms,
    LossOutput,
    anchor_gradient,
    contex,
    contex_a,
    contex_b,
    cross_entropy,
    likelihood_terms,
    ntxent,
    supcon,
)

__all__ = [
    "ContrastMasks",
    "EmbeddingBatch",
    "SimilarityMatrix",
    "build_masks",
    "logsumexp",
    "similarity",
    "LikelihoodTerms",
    "LossOutput",
    "anchor_gradient",
    "contex",
    "contex_a",
    "contex_b",
    "cross_entropy",
    "likelihood_terms",
    "ntxent",
    "supcon",
]
