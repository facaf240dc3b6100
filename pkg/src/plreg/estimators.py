"""Scikit-learn style estimators for the two task pipelines.

:class:`PartialLogicGCD` is a semi-supervised classifier/clusterer: ``fit``
takes features plus integer labels where ``-1`` marks unlabeled samples
(the usual semi-supervised convention), trains the encoder, class head,
mask generator and defined/undefined classifier jointly, and ``predict``
returns hard class/cluster assignments over the declared total number of
classes.  :class:`PartialLogicCIL` learns sessions of disjoint classes via
repeated ``partial_fit`` calls, re-initializing the mask block and
distilling old-class logits against the pre-session snapshot each time.

Both follow the ``get_params``/``set_params`` contract so they compose
with model selection utilities from the wider ecosystem.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import autodiff as ad
from . import losses as lo
from . import model as mo
from .autodiff import Graph, Tensor
from .errors import ConfigError, ContractError
from .optim import Adam
from .validation import check_features, check_partial_labels, check_session_labels

_HEAD_INPUTS = ("masked", "raw")


def _mean_breakdown(parts: list[lo.LossBreakdown]) -> lo.LossBreakdown:
    return lo.LossBreakdown(*[float(np.mean([getattr(p, f) for p in parts]))
                              for f in lo.LossBreakdown.FIELDS])


class _CommonMixin:
    """Shared validation and pure-forward helpers (requires a fitted bundle_)."""

    def _check_common(self) -> None:
        if self.head_input not in _HEAD_INPUTS:
            raise ConfigError(f"head_input must be one of {_HEAD_INPUTS}, "
                              f"got {self.head_input!r}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        self._weights = lo.LossWeights(self.w_p1, self.w_p2, self.w_lreg)

    def _make_adam(self) -> Adam:
        return Adam(lr=self.lr, beta1=self.beta1, beta2=self.beta2,
                    epsilon=self.epsilon)

    def _latent(self, x: np.ndarray) -> tuple[Tensor, Tensor]:
        bound = self.bundle_.bind()
        z = mo.encode(bound, Tensor(x))
        return z, mo.mask_forward(bound, z)

    def _head_in(self, z: Tensor, mask: Tensor) -> Tensor:
        return z * mask if self.head_input == "masked" else z

    def _logits(self, x: np.ndarray) -> np.ndarray:
        bound = self.bundle_.bind()
        z = mo.encode(bound, Tensor(x))
        mask = mo.mask_forward(bound, z)
        return mo.head_forward(bound, self._head_in(z, mask)).data

    def predict(self, X) -> np.ndarray:
        x = check_features(X)
        return np.argmax(self._logits(x), axis=1)

    def predict_proba(self, X) -> np.ndarray:
        x = check_features(X)
        logits = self._logits(x)
        return ad.softmax(Tensor(logits), axis="cols").data

    def transform(self, X) -> np.ndarray:
        """Gated (defined-part) latent features."""
        x = check_features(X)
        z, mask = self._latent(x)
        return z.data * mask.data

    def mask_values(self, X) -> np.ndarray:
        x = check_features(X)
        return self._latent(x)[1].data

    def partial_separation_score(self, X) -> float:
        """Accuracy of the defined/undefined classifier on gated feature rows."""
        x = check_features(X)
        bound = self.bundle_.bind()
        z, mask = self._latent(x)
        p_def = mo.partial_forward(bound, z * mask).data
        p_undef = mo.partial_forward(bound, z * (1.0 - mask)).data
        correct = int((p_def > 0.5).sum()) + int((p_undef <= 0.5).sum())
        return correct / (2.0 * x.shape[0])


class PartialLogicGCD(_CommonMixin, TransformerMixin, BaseEstimator):
    """Generalized category discovery with partial-logic mask regularization.

    Parameters
    ----------
    n_classes : total class count, known plus novel (given in this task).
    dim : latent width of the encoder output.
    depth : number of encoder layers (ReLU between, none after the last).
    head_input : "masked" feeds the class head gated features, "raw" the
        ungated latent.
    w_p1, w_p2, w_lreg : regularizer term weights.
    lambda_infomax : weight of the unlabeled-batch sharpening/balancing loss.
    lr, beta1, beta2, epsilon : optimizer settings.
    epochs, batch_size : loop shape; each step draws one labeled and one
        unlabeled batch of equal size.
    eval_interval : epochs between validation checks when ``fit`` receives
        a validation set (0 disables checkpoint selection).
    random_state : seed controlling initialization and batch order.
    """

    def __init__(self, n_classes: int = 10, dim: int = 32, depth: int = 2,
                 head_input: str = "masked", w_p1: float = 1.0, w_p2: float = 0.5,
                 w_lreg: float = 0.1, lambda_infomax: float = 1.0, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8,
                 epochs: int = 50, batch_size: int = 16, eval_interval: int = 0,
                 random_state: int = 0):
        self.n_classes = n_classes
        self.dim = dim
        self.depth = depth
        self.head_input = head_input
        self.w_p1 = w_p1
        self.w_p2 = w_p2
        self.w_lreg = w_lreg
        self.lambda_infomax = lambda_infomax
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.epochs = epochs
        self.batch_size = batch_size
        self.eval_interval = eval_interval
        self.random_state = random_state

    def fit(self, X, y, X_val=None, y_val=None):
        """Train on a partially labeled pool; ``y == -1`` marks unlabeled rows.

        When a validation set is supplied together with a positive
        ``eval_interval``, the parameters giving the best validation
        accuracy on known classes are restored at the end (``best_epoch_``
        records the winning epoch).
        """
        self._check_common()
        x = check_features(X)
        y = check_partial_labels(y, x.shape[0], self.n_classes)
        labeled_idx = np.flatnonzero(y >= 0)
        unlabeled_idx = np.flatnonzero(y < 0)
        if labeled_idx.size == 0 or unlabeled_idx.size == 0:
            raise ConfigError("fit requires both labeled and unlabeled samples "
                              f"(got {labeled_idx.size} labeled, {unlabeled_idx.size} unlabeled)")
        if X_val is not None:
            x_val = check_features(X_val, "X_val")
            y_val = check_partial_labels(y_val, x_val.shape[0], self.n_classes)

        root = np.random.SeedSequence(self.random_state)
        init_ss, batch_ss = root.spawn(2)
        self.bundle_ = mo.init_bundle(dim=self.dim, num_classes=self.n_classes,
                                      depth=self.depth, seed=init_ss,
                                      in_dim=x.shape[1])
        self.known_classes_ = sorted(int(c) for c in np.unique(y[labeled_idx]))
        self.n_features_in_ = x.shape[1]
        adam = self._make_adam()
        rng = np.random.default_rng(batch_ss)
        steps = max(1, math.ceil(max(labeled_idx.size, unlabeled_idx.size)
                                 / self.batch_size))
        self.loss_trace_: list[lo.LossBreakdown] = []
        best = None  # (accuracy, epoch, params)
        for epoch in range(self.epochs):
            parts = []
            for _ in range(steps):
                bl = rng.choice(labeled_idx, size=self.batch_size,
                                replace=labeled_idx.size < self.batch_size)
                bu = rng.choice(unlabeled_idx, size=self.batch_size,
                                replace=unlabeled_idx.size < self.batch_size)
                parts.append(self._step(adam, x[bl], y[bl], x[bu]))
            self.loss_trace_.append(_mean_breakdown(parts))
            if (X_val is not None and self.eval_interval > 0
                    and ((epoch + 1) % self.eval_interval == 0
                         or epoch == self.epochs - 1)):
                acc = float((self.predict(x_val) == y_val).mean())
                if best is None or acc > best[0]:
                    best = (acc, epoch, self.bundle_.copy_parameters())
        if best is not None:
            self.bundle_.set_parameters(best[2])
            self.best_epoch_ = best[1]
            self.best_val_accuracy_ = best[0]
        return self

    def _step(self, adam: Adam, xl: np.ndarray, yl: np.ndarray,
              xu: np.ndarray) -> lo.LossBreakdown:
        graph = Graph()
        bound = self.bundle_.bind(graph)
        zl = mo.encode(bound, Tensor(xl))
        zu = mo.encode(bound, Tensor(xu))
        mask_l = mo.mask_forward(bound, zl)
        mask_u = mo.mask_forward(bound, zu)
        logits_l = mo.head_forward(bound, self._head_in(zl, mask_l))
        logits_u = mo.head_forward(bound, self._head_in(zu, mask_u))
        l_main = (lo.loss_cross_entropy(logits_l, yl)
                  + lo.loss_infomax(logits_u) * self.lambda_infomax)
        z = ad.concat_rows(zl, zu)
        mask = ad.concat_rows(mask_l, mask_u)
        z_masked = z * mask
        yhat = ad.softmax(mo.head_forward(bound, z_masked), axis="cols")
        terms = lo.loss_plreg(z, yhat, bound, self._weights, mask=mask)
        final, breakdown = lo.total_loss(terms, l_main)
        graph.backward(final)
        adam.step(self.bundle_.parameters(), bound.grads())
        return breakdown


class PartialLogicCIL(_CommonMixin, BaseEstimator):
    """Session-incremental classifier with per-session mask re-initialization.

    Each ``partial_fit`` call is one session over a disjoint set of new
    classes: the class head grows fresh columns, the mask generator (and,
    unless ``reinit_partial_cls`` is off, the defined/undefined classifier)
    is redrawn, and from the second session on the old-class logits are
    distilled against the frozen pre-session model, scaled by
    ``lambda_kd * sqrt(K_old / K_new)``.
    """

    def __init__(self, dim: int = 16, depth: int = 2, head_input: str = "masked",
                 w_p1: float = 1e-3, w_p2: float = 1e-3, w_lreg: float = 5e-3,
                 lambda_kd: float = 1.0, kd_temperature: float = 2.0,
                 reinit_partial_cls: bool = True, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8,
                 epochs: int = 50, batch_size: int = 16, random_state: int = 0):
        self.dim = dim
        self.depth = depth
        self.head_input = head_input
        self.w_p1 = w_p1
        self.w_p2 = w_p2
        self.w_lreg = w_lreg
        self.lambda_kd = lambda_kd
        self.kd_temperature = kd_temperature
        self.reinit_partial_cls = reinit_partial_cls
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def partial_fit(self, X, y, classes=None):
        """Train one session on samples of previously unseen classes."""
        self._check_common()
        x = check_features(X)
        y = check_session_labels(y, x.shape[0])
        new_classes = sorted(int(c) for c in np.unique(y)) if classes is None \
            else sorted(int(c) for c in classes)
        if not set(np.unique(y)) <= set(new_classes):
            raise ContractError("y contains class ids outside `classes`")

        first = not hasattr(self, "bundle_")
        if first:
            if len(new_classes) < 2:
                raise ConfigError("the first session needs at least 2 classes")
            self._seedseq = np.random.SeedSequence(self.random_state)
            init_ss = self._seedseq.spawn(1)[0]
            self.bundle_ = mo.init_bundle(dim=self.dim, num_classes=len(new_classes),
                                          depth=self.depth, seed=init_ss,
                                          in_dim=x.shape[1])
            self.classes_ = list(new_classes)
            self.session_ = 0
            self.mask_reports_: list[mo.MaskReport] = []
            self.session_traces_: list[list[lo.LossBreakdown]] = []
            self.n_features_in_ = x.shape[1]
            old_bundle = None
        else:
            overlap = set(new_classes) & set(self.classes_)
            if overlap:
                raise ContractError(f"classes {sorted(overlap)} were already learned")
            old_bundle = self.bundle_.clone()
            expand_ss, = self._seedseq.spawn(1)
            mo.expand_head(self.bundle_, len(new_classes), seed=expand_ss)
            self.classes_.extend(new_classes)

        mask_ss, batch_ss = self._seedseq.spawn(2)
        mo.reinit_mask(self.bundle_, seed=mask_ss,
                       reinit_partial_cls=self.reinit_partial_cls)
        col_of = {cid: i for i, cid in enumerate(self.classes_)}
        cols = np.array([col_of[int(c)] for c in y], dtype=np.int64)
        k_new = len(self.classes_)
        k_old = k_new - len(new_classes)
        kd_scale = self.lambda_kd * math.sqrt(k_old / k_new) if k_old else 0.0

        adam = self._make_adam()
        rng = np.random.default_rng(batch_ss)
        n = x.shape[0]
        trace: list[lo.LossBreakdown] = []
        for _ in range(self.epochs):
            order = rng.permutation(n)
            parts = []
            for start in range(0, n, self.batch_size):
                batch = order[start:start + self.batch_size]
                parts.append(self._session_step(adam, x[batch], cols[batch],
                                                old_bundle, k_old, kd_scale))
            trace.append(_mean_breakdown(parts))
        self.session_traces_.append(trace)
        self.mask_reports_.append(mo.snapshot_mask(self.bundle_, self.session_))
        self.session_ += 1
        return self

    def _session_step(self, adam: Adam, xb: np.ndarray, cols: np.ndarray,
                      old_bundle, k_old: int, kd_scale: float) -> lo.LossBreakdown:
        graph = Graph()
        bound = self.bundle_.bind(graph)
        z = mo.encode(bound, Tensor(xb))
        mask = mo.mask_forward(bound, z)
        logits = mo.head_forward(bound, self._head_in(z, mask))
        l_main = lo.loss_cross_entropy(logits, cols)
        if old_bundle is not None and kd_scale > 0.0:
            old_bound = old_bundle.bind()
            z_old = mo.encode(old_bound, Tensor(xb))
            mask_old = mo.mask_forward(old_bound, z_old)
            logits_old = mo.head_forward(old_bound, self._head_in(z_old, mask_old))
            selector = Tensor(np.eye(self.bundle_.num_classes)[:, :k_old])
            kd = lo.loss_distill(logits @ selector, Tensor(logits_old.data),
                                 temperature=self.kd_temperature)
            l_main = l_main + kd * kd_scale
        z_masked = z * mask
        yhat = ad.softmax(mo.head_forward(bound, z_masked), axis="cols")
        terms = lo.loss_plreg(z, yhat, bound, self._weights, mask=mask)
        final, breakdown = lo.total_loss(terms, l_main)
        graph.backward(final)
        adam.step(self.bundle_.parameters(), bound.grads())
        return breakdown

    def predict(self, X) -> np.ndarray:
        cols = super().predict(X)
        lookup = np.array(self.classes_, dtype=np.int64)
        return lookup[cols]
