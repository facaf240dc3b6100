"""Protocol drivers: discovery training, leave-one-domain-out selection and
the incremental-session loop, returning metrics and traces ready for CSV."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import data as da
from . import evaluation as ev
from . import losses as lo
from . import model as mo
from .errors import ConfigError, ContractError
from .estimators import PartialLogicCIL, PartialLogicGCD


def split_arrays(split: da.TaskSplit) -> tuple[np.ndarray, np.ndarray]:
    """Training pool of a split as (features, labels) with -1 for unlabeled."""
    xs, ys = [], []
    for s in split.labeled:
        xs.append(s.features)
        ys.append(s.class_id)
    for s in split.unlabeled:
        xs.append(s.features)
        ys.append(-1)
    if not xs:
        raise ContractError("split has no training samples")
    return np.stack(xs), np.array(ys, dtype=np.int64)


@dataclass
class GCDResult:
    estimator: PartialLogicGCD
    metrics: ev.Metrics | None
    traces: list[lo.LossBreakdown]
    held_out_domain: int | None = None
    best_epoch: int | None = None


def evaluate_split(estimator, split: da.TaskSplit) -> ev.Metrics:
    if not split.test:
        raise ContractError("split has no test samples")
    x, y, _ = da.sample_arrays(split.test)
    pred = estimator.predict(x)
    return ev.cluster_accuracy(pred, y, split.known_classes,
                               split.total_class_count)


def train_gcd(split: da.TaskSplit, **params) -> GCDResult:
    """Fit the discovery estimator on a split; evaluates when a test set exists."""
    x, y = split_arrays(split)
    est = PartialLogicGCD(n_classes=split.total_class_count, **params)
    est.fit(x, y)
    metrics = evaluate_split(est, split) if split.test else None
    return GCDResult(estimator=est, metrics=metrics, traces=est.loss_trace_)


def _carve_validation(split: da.TaskSplit, fraction: float,
                      seed: int) -> tuple[da.TaskSplit, np.ndarray, np.ndarray]:
    """Move a seeded fraction of the labeled pool into a validation set."""
    rng = np.random.default_rng(seed)
    labeled = list(split.labeled)
    n_val = max(1, int(round(len(labeled) * fraction)))
    if n_val >= len(labeled):
        raise ConfigError("validation fraction leaves no labeled training data")
    order = rng.permutation(len(labeled))
    val = [labeled[i] for i in order[:n_val]]
    train = [labeled[i] for i in order[n_val:]]
    trimmed = da.TaskSplit(labeled=train, unlabeled=split.unlabeled,
                           test=split.test, known_classes=split.known_classes,
                           total_class_count=split.total_class_count)
    x_val, y_val, _ = da.sample_arrays(val)
    return trimmed, x_val, y_val


def train_mdg_gcd(samples: list[da.Sample], num_known: int,
                  held_out_domains=None, eval_interval: int = 5,
                  val_fraction: float = 0.2, split_seed: int = 0,
                  **params) -> list[GCDResult]:
    """Leave-one-domain-out runs with seen-domain checkpoint selection.

    For every held-out domain the estimator trains on the remaining
    domains, a seeded fraction of the labeled pool serves as the
    known-class validation set, and the best-validation checkpoint is
    evaluated on the held-out domain.
    """
    domains = sorted({s.domain_id for s in samples})
    if len(domains) < 2:
        raise ConfigError(f"multi-domain runs need >= 2 domains, got {domains}")
    if held_out_domains is None:
        held_out_domains = domains
    results = []
    for held in held_out_domains:
        split = da.make_mdg_gcd_splits(samples, num_known, held, seed=split_seed)
        trimmed, x_val, y_val = _carve_validation(split, val_fraction, split_seed + held)
        x, y = split_arrays(trimmed)
        est = PartialLogicGCD(n_classes=split.total_class_count,
                              eval_interval=eval_interval, **params)
        est.fit(x, y, X_val=x_val, y_val=y_val)
        metrics = evaluate_split(est, split)
        results.append(GCDResult(estimator=est, metrics=metrics,
                                 traces=est.loss_trace_, held_out_domain=held,
                                 best_epoch=getattr(est, "best_epoch_", None)))
    return results


@dataclass
class CILResult:
    estimator: PartialLogicCIL
    metrics: ev.CILMetrics
    mask_reports: list[mo.MaskReport]
    traces: list[list[lo.LossBreakdown]] = field(repr=False)


def train_cil(schedule: da.CILSchedule, test_per_class: int = 20,
              data_seed: int = 0, **params) -> CILResult:
    """Run every session of a schedule and test on balanced seen classes."""
    est = PartialLogicCIL(**params)
    spec = schedule.spec
    preds, trues = [], []
    for session, (classes, _) in enumerate(schedule.sessions):
        train = da.cil_session_data(schedule, session, seed=data_seed + session)
        x, y, _ = da.sample_arrays(train)
        est.partial_fit(x, y, classes=classes)
        seen = schedule.classes_through(session)
        test = da.make_test_set(spec, seed=data_seed + 10_000 + session,
                                classes=seen, per_class=test_per_class,
                                domains=[0])
        x_t, y_t, _ = da.sample_arrays(test)
        preds.append(est.predict(x_t))
        trues.append(y_t)
    metrics = ev.cil_metrics(preds, trues)
    return CILResult(estimator=est, metrics=metrics,
                     mask_reports=est.mask_reports_, traces=est.session_traces_)


def unknown_generalization_gap(estimator, split: da.TaskSplit) -> float:
    """Disagreement with ground truth on unseen-class test samples, using the
    global cluster-to-class map fitted on the full test set."""
    if not split.test:
        raise ContractError("split has no test samples")
    x, y, _ = da.sample_arrays(split.test)
    pred = estimator.predict(x)
    contingency = np.zeros((split.total_class_count,) * 2, dtype=np.int64)
    np.add.at(contingency, (pred, y), 1)
    sizes = contingency.sum(axis=1)
    priority = sorted(range(split.total_class_count),
                      key=lambda r: (-sizes[r], r))
    mapping = ev.hungarian(-contingency.astype(np.float64), row_priority=priority)
    unknown = ~np.isin(y, list(split.known_classes))
    if not unknown.any():
        raise ContractError("test set contains no unknown-class samples")
    return ev.generalization_gap(mapping[pred][unknown], y[unknown])
