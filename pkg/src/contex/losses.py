"""Contrastive loss kernels with exact total gradients.

Five kernels share one backbone: each loss is a function of the scaled
similarity matrix S = Z Z^T / tau, so its total derivative with respect to
the embedding rows is

    dL/dZ = (G + G^T) @ Z / tau,      G[i][j] = dL/dS[i][j]

which accounts for every path through which a row z_j enters the loss,
including other anchors' denominators. The per-anchor closed forms
(``anchor_gradient``) cover only the direct dependence of the i-th summand
on z_i and exist to validate the algebra, not to train with.

Values are batch sums (cross entropy is a mean); callers divide by 2N for
logging. Everything runs in float64.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .contrast import (
    ContrastMasks,
    SimilarityMatrix,
    masked_row_softmax,
    row_logsumexp,
)

PART_B_VARIANTS = ("literal", "infonce")


@dataclass(frozen=True)
class LossOutput:
    """Scalar loss, total gradient d(value)/dZ, and the count of anchors
    dropped by degeneracy rules (empty required index sets)."""

    value: float
    grad: np.ndarray
    skipped_anchors: int = 0


@dataclass(frozen=True)
class LikelihoodTerms:
    """Row-stochastic likelihood matrices used by the closed-form gradients.

    ``x`` is the softmax of S restricted to each anchor's context negatives
    (rows with no context negative are all zero and flagged), ``p`` the
    softmax restricted to all-others, and ``zbar_pl`` the per-anchor mean of
    context-positive embedding rows.
    """

    x: np.ndarray
    p: np.ndarray
    zbar_pl: np.ndarray
    empty_neg_rows: np.ndarray


def _grad_from_ds(g: np.ndarray, z: np.ndarray, tau: float) -> np.ndarray:
    return (g + g.T) @ z / tau


def ntxent(sim: SimilarityMatrix, masks: ContrastMasks) -> LossOutput:
    """Temperature-scaled cross entropy of the self positive against all others."""
    s, n = sim.s, sim.size
    rows = np.arange(n)
    lse_all = row_logsumexp(s, masks.all_others)
    value = float(np.sum(-s[rows, masks.self_pos] + lse_all))
    g = masked_row_softmax(s, masks.all_others)
    g[rows, masks.self_pos] -= 1.0
    return LossOutput(value=value, grad=_grad_from_ds(g, sim.z, sim.tau))


def supcon(sim: SimilarityMatrix, masks: ContrastMasks) -> LossOutput:
    """Average log-likelihood of each context positive against all others."""
    s, n = sim.s, sim.size
    n_pos = masks.ctx_pos.sum(axis=1)
    lse_all = row_logsumexp(s, masks.all_others)
    mean_pos = np.sum(np.where(masks.ctx_pos, s, 0.0), axis=1) / n_pos
    value = float(np.sum(-mean_pos + lse_all))
    g = masked_row_softmax(s, masks.all_others)
    g -= masks.ctx_pos / n_pos[:, None]
    return LossOutput(value=value, grad=_grad_from_ds(g, sim.z, sim.tau))


def contex_a(sim: SimilarityMatrix, masks: ContrastMasks) -> LossOutput:
    """Context part: positives are scored against context negatives only.

    Anchors with no context negative (single-class batch) contribute zero
    and are counted in ``skipped_anchors``.
    """
    s, n = sim.s, sim.size
    active = masks.ctx_neg.any(axis=1)
    skipped = int(n - np.count_nonzero(active))
    if skipped == n:
        warnings.warn(
            "all anchors are degenerate (no context negatives); context loss is 0",
            stacklevel=2,
        )
        return LossOutput(0.0, np.zeros_like(sim.z), skipped_anchors=n)
    n_pos = masks.ctx_pos.sum(axis=1)
    lse_neg = row_logsumexp(s, masks.ctx_neg)
    mean_pos = np.sum(np.where(masks.ctx_pos, s, 0.0), axis=1) / n_pos
    per_anchor = np.where(active, -mean_pos + lse_neg, 0.0)
    value = float(np.sum(per_anchor))
    g = masked_row_softmax(s, masks.ctx_neg)
    g -= masks.ctx_pos / n_pos[:, None]
    g[~active] = 0.0
    return LossOutput(value=value, grad=_grad_from_ds(g, sim.z, sim.tau), skipped_anchors=skipped)


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def contex_b(sim: SimilarityMatrix, masks: ContrastMasks, variant: str = "literal") -> LossOutput:
    """Self part: the paired view is the only positive.

    ``literal`` scores -log(1 + exp(s_pos) / sum over self negatives), the
    written form of the loss (its value can be negative). ``infonce``
    scores the self positive against all others, the form whose per-anchor
    gradient decomposes over the self-positive / self-negative likelihoods.
    """
    if variant not in PART_B_VARIANTS:
        raise ValueError(f"unknown part-b variant {variant!r}, expected one of {PART_B_VARIANTS}")
    s, n = sim.s, sim.size
    rows = np.arange(n)
    if variant == "literal":
        t = s[rows, masks.self_pos] - row_logsumexp(s, masks.self_neg)
        value = float(-np.sum(np.logaddexp(0.0, t)))
        q = _sigmoid(t)
        g = q[:, None] * masked_row_softmax(s, masks.self_neg)
        g[rows, masks.self_pos] = -q
        return LossOutput(value=value, grad=_grad_from_ds(g, sim.z, sim.tau))
    lse_all = row_logsumexp(s, masks.all_others)
    value = float(np.sum(-s[rows, masks.self_pos] + lse_all))
    p = masked_row_softmax(s, masks.all_others)
    g = np.where(masks.self_neg, p, 0.0)
    g[rows, masks.self_pos] = p[rows, masks.self_pos] - 1.0
    return LossOutput(value=value, grad=_grad_from_ds(g, sim.z, sim.tau))


def contex(
    sim: SimilarityMatrix,
    masks: ContrastMasks,
    lam: float,
    variant: str = "literal",
) -> LossOutput:
    """Weighted combination lam * context part + (1 - lam) * self part.

    The endpoints short-circuit so lam=0 and lam=1 reproduce the parts
    bit for bit.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if lam == 1.0:
        return contex_a(sim, masks)
    if lam == 0.0:
        return contex_b(sim, masks, variant)
    part_a = contex_a(sim, masks)
    part_b = contex_b(sim, masks, variant)
    return LossOutput(
        value=lam * part_a.value + (1.0 - lam) * part_b.value,
        grad=lam * part_a.grad + (1.0 - lam) * part_b.grad,
        skipped_anchors=part_a.skipped_anchors,
    )


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> LossOutput:
    """Mean negative log-softmax of the true class; grad is w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    b, c = logits.shape
    if np.any((labels < 0) | (labels >= c)):
        i = int(np.flatnonzero((labels < 0) | (labels >= c))[0])
        raise ValueError(f"label {labels[i]} at row {i} is outside [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(b)
    value = float(np.mean(log_z - shifted[rows, labels]))
    softmax = np.exp(shifted - log_z[:, None])
    softmax[rows, labels] -= 1.0
    return LossOutput(value=value, grad=softmax / b)


def likelihood_terms(sim: SimilarityMatrix, masks: ContrastMasks) -> LikelihoodTerms:
    """Likelihood matrices and context-positive means entering the closed forms."""
    x = masked_row_softmax(sim.s, masks.ctx_neg)
    p = masked_row_softmax(sim.s, masks.all_others)
    counts = masks.ctx_pos.sum(axis=1)
    zbar = (masks.ctx_pos.astype(np.float64) @ sim.z) / counts[:, None]
    return LikelihoodTerms(
        x=x, p=p, zbar_pl=zbar, empty_neg_rows=~masks.ctx_neg.any(axis=1)
    )


def anchor_gradient(
    sim: SimilarityMatrix, masks: ContrastMasks, which: str, i: int
) -> np.ndarray:
    """Closed-form partial derivative of the i-th loss summand w.r.t. z_i.

    ``part_a`` is the context part, ``part_b`` the self part in its
    all-others (infonce) form, ``supcon`` the supervised baseline. Only the
    direct dependence on z_i is included; see module docstring.
    """
    terms = likelihood_terms(sim, masks)
    z, tau = sim.z, sim.tau
    if which == "part_a":
        if terms.empty_neg_rows[i]:
            raise ValueError(f"anchor {i} has no context negatives; part-a gradient undefined")
        return -(terms.zbar_pl[i] - terms.x[i] @ z) / tau
    if which == "part_b":
        ps = masks.self_pos[i]
        p_i = terms.p[i]
        self_neg_mass = np.where(masks.self_neg[i], p_i, 0.0) @ z
        return -(z[ps] - z[ps] * p_i[ps] - self_neg_mass) / tau
    if which == "supcon":
        p_i = terms.p[i]
        pos_mass = np.where(masks.ctx_pos[i], p_i, 0.0) @ z
        neg_mass = np.where(masks.ctx_neg[i], p_i, 0.0) @ z
        return (pos_mass + neg_mass - terms.zbar_pl[i]) / tau
    raise ValueError(f"unknown gradient form {which!r}")
