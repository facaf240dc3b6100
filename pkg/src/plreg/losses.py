"""The partial-logic regularization losses and the desk-scale main losses.

Three regularizer terms operate on latent features ``Z`` of shape B x dim:

* ``loss_p1``  -- binary cross-entropy training a shared linear classifier
  to tell gated features ``Z * M`` (defined, label 1) from the
  complement-gated ``Z * (1 - M)`` (undefined, label 0).
* ``loss_p2``  -- mean entropy of the row-softmaxed mask; minimizing it
  pushes each sample's gate away from the uniform distribution.
* ``loss_lreg`` -- entropy structure of ``a = softmax(Yhat^T Zin)`` taken
  over the class axis: mean per-dimension class entropy (sharpness) plus
  negative entropy of the class marginal (balance).

The weighted sum of the three is the regularizer; adding a task-specific
main loss gives the quantity actually minimized.  All logs inside loss
code clamp their argument at 1e-12 so boundary probabilities stay finite;
the raw :mod:`plreg.autodiff` ops are unclamped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError
from .model import BoundBundle, head_forward, mask_forward, partial_forward

EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Non-negative weights of the three regularizer terms."""

    w_p1: float = 0.0
    w_p2: float = 0.0
    w_lreg: float = 0.0

    def __post_init__(self) -> None:
        for name in ("w_p1", "w_p2", "w_lreg"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar value of every loss component at one step (or epoch mean)."""

    l_p1: float
    l_p2: float
    l_lreg: float
    l_main: float
    l_plreg: float
    l_final: float

    FIELDS = ("l_p1", "l_p2", "l_lreg", "l_main", "l_plreg", "l_final")


@dataclass
class PLRegTerms:
    """Regularizer tensors prior to adding a main loss."""

    l_p1: Tensor
    l_p2: Tensor
    l_lreg: Tensor
    l_plreg: Tensor


def _clamped_log(t: Tensor) -> Tensor:
    return ad.log(ad.clamp_min(t, EPS))


def loss_p1(z: Tensor, bound: BoundBundle, mask: Tensor | None = None) -> Tensor:
    """Defined/undefined binary cross-entropy over gated feature rows.

    Builds ``concat(Z*M, Z*(1-M))``, scores each row with the shared
    linear classifier and applies BCE with labels 1 for the first half and
    0 for the second, probabilities clamped to [1e-12, 1 - 1e-12].
    """
    if mask is None:
        mask = mask_forward(bound, z)
    defined = z * mask
    undefined = z * (1.0 - mask)
    probs = partial_forward(bound, ad.concat_rows(defined, undefined))
    b = z.rows
    labels = Tensor(np.concatenate([np.ones((b, 1)), np.zeros((b, 1))], axis=0))
    log_p = _clamped_log(probs)
    log_not_p = _clamped_log(1.0 - probs)
    per_row = labels * log_p + (1.0 - labels) * log_not_p
    return -ad.reduce_mean(per_row)


def loss_p2(mask: Tensor) -> Tensor:
    """Mean entropy of the row-softmaxed mask.

    Normalization is by batch * dim: a uniform row of width ``dim``
    contributes ln(dim)/dim, a one-hot row contributes 0.
    """
    m = ad.softmax(mask, axis="cols")
    plogp = m * _clamped_log(m)
    return -ad.reduce_mean(plogp)


def loss_lreg(yhat: Tensor, z_in: Tensor) -> Tensor:
    """Class-assignment entropy regularizer on ``softmax(Yhat^T Zin)``.

    ``a[:, i]`` is a distribution over classes for latent dimension ``i``
    (softmax over the class axis).  Returns the mean per-dimension entropy
    plus the negative entropy of the class marginal ``p_j = mean_i a[j, i]``.
    Minimal when each dimension commits to one class and the marginal is
    balanced; maximal-entropy and fully collapsed assignments both score 0.
    """
    row_sums = yhat.data.sum(axis=1)
    if np.max(np.abs(row_sums - 1.0)) > 1e-6:
        worst = int(np.argmax(np.abs(row_sums - 1.0)))
        raise ContractError(
            f"loss_lreg: yhat row {worst} sums to {row_sums[worst]}, not a probability vector")
    if yhat.rows != z_in.rows:
        raise ContractError(
            f"loss_lreg: yhat has {yhat.rows} rows but z_in has {z_in.rows}")
    dim = z_in.cols
    g = ad.matmul(_transpose(yhat), z_in)  # K x dim
    a = ad.softmax(g, axis="rows")
    term1 = -ad.reduce_sum(a * _clamped_log(a)) / dim
    p = reduce_class_marginal(a, dim)
    term2 = ad.reduce_sum(p * _clamped_log(p))
    return term1 + term2


def reduce_class_marginal(a: Tensor, dim: int) -> Tensor:
    """Per-class mean of the per-dimension assignments: K x 1."""
    return ad.reduce_sum(a, axis="cols") / dim


def _transpose(t: Tensor) -> Tensor:
    """Differentiable transpose via the existing op set is unnecessary;
    record a dedicated node instead."""
    td = t.data
    return Tensor._from_op(td.T.copy(), t.graph, "transpose",
                           (t.node,) if t.graph is not None else (),
                           ((lambda gout: gout.T.copy()),) if t.graph is not None else ())


def loss_plreg(z: Tensor, yhat: Tensor, bound: BoundBundle,
               weights: LossWeights, mask: Tensor | None = None) -> PLRegTerms:
    """Weighted combination of the three regularizer terms.

    ``yhat`` must hold the class probabilities used for the assignment
    regularizer.  All three terms see the same gate, computed from ``z``
    unless a precomputed ``mask`` is supplied.
    """
    if mask is None:
        mask = mask_forward(bound, z)
    p1 = loss_p1(z, bound, mask=mask)
    p2 = loss_p2(mask)
    lreg = loss_lreg(yhat, z * mask)
    total = p1 * weights.w_p1 + p2 * weights.w_p2 + lreg * weights.w_lreg
    return PLRegTerms(l_p1=p1, l_p2=p2, l_lreg=lreg, l_plreg=total)


def loss_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log softmax probability of the true class."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    b, k = logits.shape
    if labels.shape[0] != b:
        raise ContractError(f"cross_entropy: {labels.shape[0]} labels for {b} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        bad = labels[(labels < 0) | (labels >= k)][0]
        raise ContractError(f"cross_entropy: label {bad} outside [0, {k})")
    one_hot = np.zeros((b, k))
    one_hot[np.arange(b), labels] = 1.0
    probs = ad.softmax(logits, axis="cols")
    picked = ad.reduce_sum(Tensor(one_hot) * _clamped_log(probs), axis="cols")
    return -ad.reduce_mean(picked)


def loss_infomax(logits_unlabeled: Tensor) -> Tensor:
    """Mean per-sample prediction entropy minus entropy of the mean prediction.

    Minimizing sharpens individual predictions while spreading the batch
    across clusters; its minimum over K clusters is -ln K.
    """
    if logits_unlabeled.rows < 2:
        raise ContractError("infomax needs a batch of at least 2 samples")
    q = ad.softmax(logits_unlabeled, axis="cols")
    per_sample = -ad.reduce_sum(q * _clamped_log(q), axis="cols")  # B x 1
    mean_entropy = ad.reduce_mean(per_sample)
    marginal = ad.reduce_mean(q, axis="rows")  # 1 x K
    marginal_entropy = -ad.reduce_sum(marginal * _clamped_log(marginal))
    return mean_entropy - marginal_entropy


def loss_distill(logits_new: Tensor, logits_old: Tensor,
                 temperature: float = 2.0) -> Tensor:
    """Mean KL divergence from the softened old-model distribution to the new one.

    ``logits_old`` is treated as a constant (detached); only the new model
    receives gradient.
    """
    if temperature <= 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    if logits_new.shape != logits_old.shape:
        raise ContractError(
            f"distill: shape mismatch {logits_new.shape} vs {logits_old.shape}")
    shifted = logits_old.data / temperature
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    p_old = np.exp(shifted)
    p_old /= p_old.sum(axis=1, keepdims=True)
    log_p_old = np.log(np.maximum(p_old, EPS))
    p_new = ad.softmax(logits_new * (1.0 / temperature), axis="cols")
    log_ratio = Tensor(log_p_old) - _clamped_log(p_new)
    kl_rows = ad.reduce_sum(Tensor(p_old) * log_ratio, axis="cols")
    return ad.reduce_mean(kl_rows)


def total_loss(terms: PLRegTerms, l_main: Tensor) -> tuple[Tensor, LossBreakdown]:
    """Add the main loss to the regularizer and report every component."""
    final = terms.l_plreg + l_main
    breakdown = LossBreakdown(
        l_p1=terms.l_p1.item(), l_p2=terms.l_p2.item(), l_lreg=terms.l_lreg.item(),
        l_main=l_main.item(), l_plreg=terms.l_plreg.item(), l_final=final.item())
    return final, breakdown
