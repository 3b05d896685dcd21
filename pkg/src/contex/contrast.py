"""Sample-group index sets, temperature-scaled similarities, and stable log-sum-exp.

Every augmented batch of 2N samples induces, per anchor i, four index sets:

* self positive  ``pairs[i]``  -- the other view of the same original image
* self negatives -- everything except i and its self positive
* context positives -- all other samples with the anchor's label (the self
  positive is always a member)
* context negatives -- all samples with a different label

The masks are materialized as dense boolean matrices; batches stay small
enough (2N <= 4096) that dense wins on simplicity and cache behaviour.
All functions here are pure and operate on float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORM_ATOL = 1e-6


@dataclass(frozen=True)
class EmbeddingBatch:
    """Unit-norm embedding rows z (2N x D) plus the view-pairing map.

    ``pairs`` must be a fixed-point-free involution: pairs[pairs[i]] == i
    and pairs[i] != i.
    """

    z: np.ndarray
    pairs: np.ndarray

    @property
    def size(self) -> int:
        return self.z.shape[0]

    def validate(self) -> None:
        z = np.asarray(self.z)
        pairs = np.asarray(self.pairs)
        if z.ndim != 2:
            raise ValueError(f"embeddings must be 2-D, got shape {z.shape}")
        if pairs.shape != (z.shape[0],):
            raise ValueError(
                f"pairs has shape {pairs.shape}, expected ({z.shape[0]},)"
            )
        norms = np.linalg.norm(z, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_ATOL)
        if bad.size:
            raise ValueError(
                f"row {bad[0]} has norm {norms[bad[0]]:.9f}, expected 1 within {NORM_ATOL}"
            )
        _validate_pairs(pairs)


def _validate_pairs(pairs: np.ndarray) -> None:
    n = pairs.shape[0]
    idx = np.arange(n)
    if np.any(pairs == idx):
        i = int(np.flatnonzero(pairs == idx)[0])
        raise ValueError(f"pairs[{i}] == {i}: self-pairing is not allowed")
    if np.any((pairs < 0) | (pairs >= n)):
        raise ValueError("pairs contains out-of-range indices")
    if np.any(pairs[pairs] != idx):
        i = int(np.flatnonzero(pairs[pairs] != idx)[0])
        raise ValueError(f"pairs is not an involution at index {i}")


@dataclass(frozen=True)
class SimilarityMatrix:
    """Temperature-scaled dot products s[i][j] = (z_i . z_j) / tau.

    Keeps a reference to the rows it was built from so loss kernels can
    return gradients with respect to the embeddings.
    """

    s: np.ndarray
    tau: float
    z: np.ndarray

    @property
    def size(self) -> int:
        return self.s.shape[0]


@dataclass(frozen=True)
class ContrastMasks:
    """Boolean index-set matrices for one batch of 2N samples.

    ``self_pos`` is the pairing vector; the four matrices are (2N, 2N) with
    row i holding anchor i's set. ``all_others`` is everything but i itself,
    and per anchor: ctx_pos | ctx_neg == all_others, ctx_pos & ctx_neg == 0,
    self_neg == all_others minus the self positive.
    """

    self_pos: np.ndarray
    ctx_pos: np.ndarray
    ctx_neg: np.ndarray
    self_neg: np.ndarray
    all_others: np.ndarray

    @property
    def size(self) -> int:
        return self.self_pos.shape[0]


def build_masks(labels: np.ndarray, pairs: np.ndarray) -> ContrastMasks:
    """Derive the four sample-group masks from labels and the pairing map.

    Raises ValueError if the two views of an original disagree on the label
    or if ``pairs`` is not a fixed-point-free involution.
    """
    labels = np.asarray(labels)
    pairs = np.asarray(pairs)
    if labels.shape != pairs.shape:
        raise ValueError("labels and pairs must have the same length")
    _validate_pairs(pairs)
    mismatched = np.flatnonzero(labels != labels[pairs])
    if mismatched.size:
        i = int(mismatched[0])
        raise ValueError(
            f"label mismatch at index {i}: labels[{i}]={labels[i]} but its "
            f"pair {pairs[i]} has label {labels[pairs[i]]}"
        )
    n = labels.shape[0]
    eye = np.eye(n, dtype=bool)
    all_others = ~eye
    ctx_pos = (labels[:, None] == labels[None, :]) & all_others
    ctx_neg = all_others & ~ctx_pos
    self_neg = all_others.copy()
    self_neg[np.arange(n), pairs] = False
    return ContrastMasks(
        self_pos=pairs.copy(),
        ctx_pos=ctx_pos,
        ctx_neg=ctx_neg,
        self_neg=self_neg,
        all_others=all_others,
    )


def similarity(batch: EmbeddingBatch, tau: float) -> SimilarityMatrix:
    """Pairwise dot products of the (validated) unit rows, divided by tau."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    batch.validate()
    z = np.asarray(batch.z, dtype=np.float64)
    s = (z @ z.T) / tau
    return SimilarityMatrix(s=s, tau=float(tau), z=z)


def logsumexp(xs: np.ndarray) -> float:
    """log(sum(exp(xs))) computed with a max shift so large inputs never overflow."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.size == 0:
        raise ValueError("logsumexp of an empty vector is undefined")
    m = float(np.max(xs))
    return m + float(np.log(np.sum(np.exp(xs - m))))


def row_logsumexp(s: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-row log-sum-exp of ``s`` restricted to ``mask``.

    Rows whose mask is empty come back as -inf; callers own the degeneracy
    rule for those anchors.
    """
    masked = np.where(mask, s, -np.inf)
    m = np.max(masked, axis=1)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    e = np.where(mask, np.exp(s - m_safe[:, None]), 0.0)
    tot = e.sum(axis=1)
    with np.errstate(divide="ignore"):
        return np.where(tot > 0, m_safe + np.log(np.where(tot > 0, tot, 1.0)), -np.inf)


def masked_row_softmax(s: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-stochastic softmax of ``s`` restricted to ``mask``; empty rows are all zero."""
    masked = np.where(mask, s, -np.inf)
    m = np.max(masked, axis=1, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    e = np.where(mask, np.exp(s - m_safe), 0.0)
    tot = e.sum(axis=1, keepdims=True)
    return e / np.where(tot > 0, tot, 1.0)
