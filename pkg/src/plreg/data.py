"""Synthetic data with known defined/undefined feature structure, plus the
split builders for category discovery, multi-domain discovery and
incremental-session protocols.

Feature layout of one generated vector (``input_dim`` wide)::

    [ class-0 block | class-1 block | ... | noise dims | domain dims ]

Each class owns a private ``semantic_dims_per_class``-wide block set to 1.0
in its prototype, so the dimensions carrying meaning for any class subset
are known a priori.  Domains add a fixed offset of magnitude
``domain_shift`` on the domain dims; Gaussian noise of scale
``noise_sigma`` is added to every coordinate.  Per-class sample counts
follow the usual exponential long-tail profile
``n_c = max(1, round(n_max * rho^(c / (C - 1))))``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError


@dataclass(frozen=True)
class SyntheticSpec:
    """Everything needed to generate one synthetic dataset deterministically."""

    num_classes: int
    num_known: int
    input_dim: int
    semantic_dims_per_class: int = 2
    noise_dims: int = 0
    domain_dims: int = 0
    noise_sigma: float = 0.1
    num_domains: int = 1
    samples_per_class_max: int = 50
    imbalance_ratio: float = 1.0
    domain_shift: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_known >= self.num_classes or self.num_known < 1:
            raise ConfigError(
                f"num_known must be in [1, num_classes), got {self.num_known} "
                f"of {self.num_classes}")
        needed = (self.num_classes * self.semantic_dims_per_class
                  + self.noise_dims + self.domain_dims)
        if self.input_dim < needed:
            raise ConfigError(
                f"input_dim {self.input_dim} too small for layout needing {needed}")
        if not (0.0 < self.imbalance_ratio <= 1.0):
            raise ConfigError(
                f"imbalance_ratio must be in (0, 1], got {self.imbalance_ratio}")
        if self.num_domains < 1 or self.samples_per_class_max < 1:
            raise ConfigError("num_domains and samples_per_class_max must be >= 1")

    @property
    def semantic_width(self) -> int:
        return self.num_classes * self.semantic_dims_per_class


@dataclass
class Sample:
    features: np.ndarray
    class_id: int
    domain_id: int
    labeled: bool = False


@dataclass
class TaskSplit:
    labeled: list[Sample]
    unlabeled: list[Sample]
    test: list[Sample]
    known_classes: set[int]
    total_class_count: int

    def __post_init__(self) -> None:
        for s in self.labeled:
            if s.class_id not in self.known_classes:
                raise ContractError(
                    f"labeled sample of class {s.class_id} outside known classes")


@dataclass
class CILSchedule:
    """Ordered list of (class ids, per-class training counts) per session."""

    sessions: list[tuple[list[int], list[int]]]
    style: str
    spec: SyntheticSpec = field(repr=False)

    @property
    def num_sessions(self) -> int:
        return len(self.sessions)

    def classes_through(self, session: int) -> list[int]:
        seen: list[int] = []
        for classes, _ in self.sessions[:session + 1]:
            seen.extend(classes)
        return seen


def class_counts(spec: SyntheticSpec) -> list[int]:
    """Exponential long-tail per-class counts, non-increasing in class index."""
    c_total = spec.num_classes
    n_max = spec.samples_per_class_max
    rho = spec.imbalance_ratio
    if c_total == 1:
        return [n_max]
    return [max(1, round(n_max * rho ** (c / (c_total - 1)))) for c in range(c_total)]


def _domain_offsets(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    offsets = np.zeros((spec.num_domains, spec.domain_dims))
    for d in range(spec.num_domains):
        if spec.domain_dims == 0 or spec.domain_shift == 0.0:
            continue
        v = rng.normal(size=spec.domain_dims)
        offsets[d] = v / np.linalg.norm(v) * spec.domain_shift
    return offsets


def _prototype(spec: SyntheticSpec, class_id: int, offsets: np.ndarray,
               domain_id: int) -> np.ndarray:
    proto = np.zeros(spec.input_dim)
    s = spec.semantic_dims_per_class
    proto[class_id * s:(class_id + 1) * s] = 1.0
    if spec.domain_dims:
        start = spec.semantic_width + spec.noise_dims
        proto[start:start + spec.domain_dims] = offsets[domain_id]
    return proto


def _draw(spec: SyntheticSpec, rng: np.random.Generator, class_id: int,
          domain_id: int, offsets: np.ndarray, count: int) -> list[Sample]:
    proto = _prototype(spec, class_id, offsets, domain_id)
    noise = rng.normal(0.0, spec.noise_sigma, size=(count, spec.input_dim)) \
        if spec.noise_sigma > 0 else np.zeros((count, spec.input_dim))
    return [Sample(features=proto + noise[i], class_id=class_id, domain_id=domain_id)
            for i in range(count)]


def generate(spec: SyntheticSpec) -> list[Sample]:
    """Draw the full dataset: every domain carries the long-tail count profile."""
    rng = np.random.default_rng(spec.seed)
    offsets = _domain_offsets(spec, rng)
    counts = class_counts(spec)
    samples: list[Sample] = []
    for domain_id in range(spec.num_domains):
        for class_id in range(spec.num_classes):
            samples.extend(_draw(spec, rng, class_id, domain_id, offsets,
                                 counts[class_id]))
    return samples


def sample_arrays(samples: list[Sample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack a sample list into (features, class_ids, domain_ids)."""
    if not samples:
        raise ContractError("empty sample list")
    x = np.stack([s.features for s in samples])
    y = np.array([s.class_id for s in samples], dtype=np.int64)
    d = np.array([s.domain_id for s in samples], dtype=np.int64)
    return x, y, d


def make_test_set(spec: SyntheticSpec, seed: int,
                  classes: list[int] | None = None,
                  per_class: int | None = None,
                  domains: list[int] | None = None) -> list[Sample]:
    """Freshly sampled, balanced evaluation set (same prototypes, new noise).

    Domain offsets are re-derived from ``spec.seed`` so train and test share
    the same domain geometry while the noise stream differs via ``seed``.
    """
    proto_rng = np.random.default_rng(spec.seed)
    offsets = _domain_offsets(spec, proto_rng)
    rng = np.random.default_rng(seed)
    classes = list(range(spec.num_classes)) if classes is None else list(classes)
    domains = list(range(spec.num_domains)) if domains is None else list(domains)
    per_class = spec.samples_per_class_max if per_class is None else per_class
    out: list[Sample] = []
    for domain_id in domains:
        for class_id in classes:
            out.extend(_draw(spec, rng, class_id, domain_id, offsets, per_class))
    return out


def make_gcd_split(samples: list[Sample], num_known: int, seed: int,
                   spec: SyntheticSpec | None = None) -> TaskSplit:
    """Half the classes are known; half of each known class's samples are labeled.

    Classes ``[0, num_known)`` are known.  For each known class a uniformly
    random half (floor for odd counts, the spare sample going unlabeled)
    becomes the labeled pool; everything else, including all samples of the
    remaining classes, is unlabeled.  A class with a single sample
    contributes it to the unlabeled pool.  When ``spec`` is given, a fresh
    test set is drawn from it with a seed derived from ``seed``.
    """
    rng = np.random.default_rng(seed)
    class_ids = sorted({s.class_id for s in samples})
    total = max(class_ids) + 1
    labeled: list[Sample] = []
    unlabeled: list[Sample] = []
    for cid in class_ids:
        pool = [s for s in samples if s.class_id == cid]
        if cid >= num_known or len(pool) < 2:
            unlabeled.extend(pool)
            continue
        order = rng.permutation(len(pool))
        half = len(pool) // 2
        for rank, idx in enumerate(order):
            if rank < half:
                pool[idx].labeled = True
                labeled.append(pool[idx])
            else:
                unlabeled.append(pool[idx])
    test = make_test_set(spec, seed=seed + 7919) if spec is not None else []
    return TaskSplit(labeled=labeled, unlabeled=unlabeled, test=test,
                     known_classes=set(range(num_known)), total_class_count=total)


def make_mdg_gcd_splits(samples: list[Sample], num_known: int,
                        held_out_domain: int, seed: int = 0) -> TaskSplit:
    """Leave-one-domain-out split: the held-out domain is the test set,
    the remaining domains are split labeled/unlabeled as in the
    single-domain protocol."""
    domains = {s.domain_id for s in samples}
    if held_out_domain not in domains:
        raise ContractError(
            f"held_out_domain {held_out_domain} not among domains {sorted(domains)}")
    test = [s for s in samples if s.domain_id == held_out_domain]
    seen = [s for s in samples if s.domain_id != held_out_domain]
    inner = make_gcd_split(seen, num_known, seed)
    return TaskSplit(labeled=inner.labeled, unlabeled=inner.unlabeled, test=test,
                     known_classes=inner.known_classes,
                     total_class_count=inner.total_class_count)


def make_cil_schedule(spec: SyntheticSpec, num_incremental_sessions: int,
                      style: str = "ordered", seed: int = 0) -> CILSchedule:
    """Session 0 holds ceil(C/2) classes, the rest are chunked evenly over
    the incremental sessions.

    Ordered style keeps the long-tail profile aligned with ascending class
    ids (session 0 gets the most populated classes); shuffled style first
    permutes the class-to-count assignment with the given seed.
    """
    if style not in ("ordered", "shuffled"):
        raise ConfigError(f"style must be 'ordered' or 'shuffled', got {style!r}")
    c_total = spec.num_classes
    base = math.ceil(c_total / 2)
    rest = c_total - base
    s = num_incremental_sessions
    if s < 0:
        raise ConfigError("num_incremental_sessions must be >= 0")
    if s == 0:
        if rest:
            valid = sorted(k for k in range(1, rest + 1) if rest % k == 0)
            raise ConfigError(
                f"cannot fit {rest} incremental classes in 0 sessions; valid "
                f"session counts: {valid}")
        chunks = [list(range(c_total))]
    else:
        if rest % s != 0:
            valid = sorted(k for k in range(1, rest + 1) if rest % k == 0)
            raise ConfigError(
                f"{rest} incremental classes not divisible by {s} sessions; "
                f"valid session counts: {valid}")
        per = rest // s
        chunks = [list(range(base))]
        chunks += [list(range(base + i * per, base + (i + 1) * per)) for i in range(s)]
    profile = class_counts(spec)
    if style == "shuffled":
        perm = np.random.default_rng(seed).permutation(c_total)
        counts_by_class = {int(cls): profile[rank] for rank, cls in enumerate(perm)}
    else:
        counts_by_class = {cls: profile[cls] for cls in range(c_total)}
    sessions = [(chunk, [counts_by_class[c] for c in chunk]) for chunk in chunks]
    return CILSchedule(sessions=sessions, style=style, spec=spec)


def cil_session_data(schedule: CILSchedule, session: int, seed: int) -> list[Sample]:
    """Training samples for one session at its scheduled per-class counts."""
    spec = schedule.spec
    proto_rng = np.random.default_rng(spec.seed)
    offsets = _domain_offsets(spec, proto_rng)
    rng = np.random.default_rng(seed)
    classes, counts = schedule.sessions[session]
    out: list[Sample] = []
    for class_id, count in zip(classes, counts):
        out.extend(_draw(spec, rng, class_id, 0, offsets, count))
    return out


def ground_truth_defined_dims(spec: SyntheticSpec, classes) -> set[int]:
    """Union of the semantic blocks of the given classes."""
    s = spec.semantic_dims_per_class
    dims: set[int] = set()
    for c in classes:
        dims.update(range(c * s, (c + 1) * s))
    return dims


# -- serialization --------------------------------------------------------

def samples_to_csv(samples: list[Sample], path) -> None:
    if not samples:
        raise ContractError("empty sample list")
    width = samples[0].features.shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "domain_id", "labeled"]
                        + [f"f{i}" for i in range(width)])
        for s in samples:
            writer.writerow([s.class_id, s.domain_id, int(s.labeled)]
                            + [repr(float(v)) for v in s.features])


def samples_from_csv(path) -> list[Sample]:
    out: list[Sample] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        width = len(header) - 3
        for row in reader:
            out.append(Sample(
                features=np.array([float(v) for v in row[3:3 + width]]),
                class_id=int(row[0]), domain_id=int(row[1]),
                labeled=bool(int(row[2]))))
    return out


def schedule_manifest(schedule: CILSchedule) -> str:
    lines = [f"style: {schedule.style}", f"sessions: {schedule.num_sessions}"]
    for i, (classes, counts) in enumerate(schedule.sessions):
        lines.append(f"session {i}: classes={classes} counts={counts}")
    return "\n".join(lines) + "\n"
