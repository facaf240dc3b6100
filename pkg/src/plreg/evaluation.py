"""Cluster-to-class matching metrics and incremental-session accuracy.

Predictions from a discovery model are arbitrary cluster ids, so accuracy
is computed after finding the cost-minimizing bijection between clusters
and classes (Kuhn-Munkres on the negated contingency matrix).  When
several bijections tie, a deterministic refinement picks one: rows are
visited in a priority order and each takes the smallest column that still
permits an optimal completion.  With the default natural row order this
yields the lexicographically smallest optimal assignment; cluster
accuracy instead prioritizes clusters by descending sample count so the
most populated cluster claims the lowest tied class id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

_TIE_TOL = 1e-9


def _km_min_cost(cost: np.ndarray) -> tuple[np.ndarray, float]:
    """O(n^3) potentials-based assignment; returns (row -> col, total cost)."""
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row matched to column j (1-based)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = -1
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            p[j0] = p[way[j0]]
            j0 = way[j0]
    assignment = np.zeros(n, dtype=np.int64)
    for j in range(1, n + 1):
        assignment[p[j] - 1] = j - 1
    total = float(cost[np.arange(n), assignment].sum())
    return assignment, total


def _validate_cost(cost) -> np.ndarray:
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1] or cost.shape[0] == 0:
        raise ContractError(f"cost matrix must be square and non-empty, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        i, j = np.argwhere(~np.isfinite(cost))[0]
        raise ContractError(f"non-finite cost {cost[i, j]} at ({i}, {j})")
    return cost


def hungarian(cost, row_priority=None) -> np.ndarray:
    """Cost-minimizing permutation ``pi`` with ``sum_i cost[i, pi(i)]`` minimal.

    ``row_priority`` orders the deterministic tie-break (default: natural
    row order, producing the lexicographically smallest optimal
    assignment).  The refinement re-solves shrunken subproblems, so keep
    ``n`` modest (matching class counts, not sample counts).
    """
    cost = _validate_cost(cost)
    n = cost.shape[0]
    _, best_total = _km_min_cost(cost)
    order = list(range(n)) if row_priority is None else list(row_priority)
    if sorted(order) != list(range(n)):
        raise ContractError("row_priority must be a permutation of all rows")
    tol = _TIE_TOL * max(1.0, abs(best_total))
    fixed: dict[int, int] = {}
    free_cols = list(range(n))
    for r in order:
        chosen = None
        for c in free_cols:
            trial_rows = [i for i in range(n) if i not in fixed and i != r]
            trial_cols = [j for j in free_cols if j != c]
            sub_total = 0.0
            if trial_rows:
                sub = cost[np.ix_(trial_rows, trial_cols)]
                _, sub_total = _km_min_cost(sub)
            fixed_cost = sum(cost[i, j] for i, j in fixed.items()) + cost[r, c]
            if fixed_cost + sub_total <= best_total + tol:
                chosen = c
                break
        assert chosen is not None, "optimal completion disappeared"
        fixed[r] = chosen
        free_cols.remove(chosen)
    out = np.zeros(n, dtype=np.int64)
    for r, c in fixed.items():
        out[r] = c
    return out


@dataclass(frozen=True)
class Metrics:
    """Mapped accuracy over all samples and the known/unknown partitions."""

    acc_all: float
    acc_known: float
    acc_unknown: float
    n_all: int
    n_known: int
    n_unknown: int


def cluster_accuracy(pred, true, known_classes, n_classes: int) -> Metrics:
    """Hungarian-mapped accuracy for all / known / unknown true classes.

    One global cluster-to-class map is computed over the full contingency
    matrix (``n_classes`` x ``n_classes``; absent ids simply give zero
    rows/columns) and then applied to both partitions.
    """
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    true = np.asarray(true, dtype=np.int64).reshape(-1)
    if pred.size == 0:
        raise ContractError("empty evaluation set")
    if pred.shape != true.shape:
        raise ContractError(f"{pred.size} predictions vs {true.size} labels")
    for name, arr in (("pred", pred), ("true", true)):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise ContractError(f"{name} ids must lie in [0, {n_classes})")
    contingency = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(contingency, (pred, true), 1)
    cluster_sizes = contingency.sum(axis=1)
    priority = sorted(range(n_classes), key=lambda r: (-cluster_sizes[r], r))
    mapping = hungarian(-contingency.astype(np.float64), row_priority=priority)
    mapped = mapping[pred]
    known = np.isin(true, list(known_classes))
    correct = mapped == true

    def rate(mask):
        return float(correct[mask].mean()) if mask.any() else float("nan")

    return Metrics(acc_all=float(correct.mean()),
                   acc_known=rate(known), acc_unknown=rate(~known),
                   n_all=int(pred.size), n_known=int(known.sum()),
                   n_unknown=int((~known).sum()))


@dataclass(frozen=True)
class CILMetrics:
    per_session_acc: list[float]
    average: float


def cil_metrics(per_session_pred, per_session_true) -> CILMetrics:
    """Plain (unmapped) accuracy per session and the session average."""
    if len(per_session_pred) != len(per_session_true):
        raise ContractError(
            f"{len(per_session_pred)} prediction sets vs {len(per_session_true)} label sets")
    accs = []
    for pred, true in zip(per_session_pred, per_session_true):
        pred = np.asarray(pred).reshape(-1)
        true = np.asarray(true).reshape(-1)
        if pred.size == 0 or pred.shape != true.shape:
            raise ContractError("session evaluation sets must be non-empty and aligned")
        accs.append(float((pred == true).mean()))
    return CILMetrics(per_session_acc=accs, average=float(np.mean(accs)))


def generalization_gap(assignments, oracle_labels) -> float:
    """Disagreement rate between hard assignments and ground-truth membership.

    Callers evaluating a discovery model should map cluster ids to classes
    (via :func:`cluster_accuracy`'s global map) before calling this.
    """
    a = np.asarray(assignments).reshape(-1)
    b = np.asarray(oracle_labels).reshape(-1)
    if a.size == 0:
        raise ContractError("empty evaluation subset")
    if a.shape != b.shape:
        raise ContractError(f"{a.size} assignments vs {b.size} labels")
    return float((a != b).mean())
