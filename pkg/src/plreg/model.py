"""Networks used by the partial-logic regularizer.

A :class:`ModelBundle` packs four pieces: an MLP encoder ``g`` producing
latent features of width ``dim``, a linear class head ``h`` over ``K``
classes, a square linear-plus-sigmoid mask generator producing a per-sample
gate over latent dimensions, and a single-output linear classifier that
separates gated ("defined") from complementary-gated ("undefined") feature
rows.  Parameters live as plain float64 numpy arrays; a
:class:`BoundBundle` wraps them as tensors, optionally on a graph, so the
same forward code serves training and evaluation.
"""

from __future__ import annotations

import csv
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Tensor
from .errors import ConfigError, ShapeError


@dataclass
class LinearLayer:
    """Affine map parameters: ``weight`` is in x out, ``bias`` is 1 x out."""

    weight: np.ndarray
    bias: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def _init_layer(rng: np.random.Generator, fan_in: int, fan_out: int) -> LinearLayer:
    return LinearLayer(weight=_glorot(rng, fan_in, fan_out),
                       bias=np.zeros((1, fan_out)))


@dataclass
class ModelBundle:
    """Encoder stack, class head, mask generator and defined/undefined classifier."""

    encoder: list[LinearLayer]
    head: LinearLayer
    mask_gen: LinearLayer
    partial_cls: LinearLayer
    dim: int
    num_classes: int

    @property
    def in_dim(self) -> int:
        return self.encoder[0].in_dim

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        """Flat registry of live parameter arrays (mutated in place by optimizers)."""
        reg: OrderedDict[str, np.ndarray] = OrderedDict()
        for i, layer in enumerate(self.encoder):
            reg[f"enc{i}.weight"] = layer.weight
            reg[f"enc{i}.bias"] = layer.bias
        reg["head.weight"] = self.head.weight
        reg["head.bias"] = self.head.bias
        reg["mask.weight"] = self.mask_gen.weight
        reg["mask.bias"] = self.mask_gen.bias
        reg["partial.weight"] = self.partial_cls.weight
        reg["partial.bias"] = self.partial_cls.bias
        return reg

    def set_parameters(self, values: dict[str, np.ndarray]) -> None:
        for name, arr in self.parameters().items():
            arr[...] = values[name]

    def copy_parameters(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.parameters().items()}

    def bind(self, graph: Graph | None = None) -> "BoundBundle":
        return BoundBundle(self, graph)

    def clone(self) -> "ModelBundle":
        """Deep parameter copy, e.g. for freezing a distillation reference."""
        return ModelBundle(
            encoder=[LinearLayer(l.weight.copy(), l.bias.copy()) for l in self.encoder],
            head=LinearLayer(self.head.weight.copy(), self.head.bias.copy()),
            mask_gen=LinearLayer(self.mask_gen.weight.copy(), self.mask_gen.bias.copy()),
            partial_cls=LinearLayer(self.partial_cls.weight.copy(),
                                    self.partial_cls.bias.copy()),
            dim=self.dim, num_classes=self.num_classes)


def init_bundle(dim: int, num_classes: int, depth: int = 2, seed: int = 0,
                in_dim: int | None = None) -> ModelBundle:
    """Build a bundle with Glorot-uniform weights and zero biases.

    ``in_dim`` defaults to ``dim``; hidden widths equal ``dim``.  The same
    seed always yields bit-identical parameters.
    """
    if dim < 2 or num_classes < 2 or depth < 1:
        raise ConfigError(
            f"invalid sizes: dim={dim}, num_classes={num_classes}, depth={depth} "
            "(require dim >= 2, num_classes >= 2, depth >= 1)")
    in_dim = dim if in_dim is None else in_dim
    rng = np.random.default_rng(seed)
    widths = [in_dim] + [dim] * depth
    encoder = [_init_layer(rng, widths[i], widths[i + 1]) for i in range(depth)]
    head = _init_layer(rng, dim, num_classes)
    mask_gen = _init_layer(rng, dim, dim)
    partial_cls = _init_layer(rng, dim, 1)
    return ModelBundle(encoder=encoder, head=head, mask_gen=mask_gen,
                       partial_cls=partial_cls, dim=dim, num_classes=num_classes)


def reinit_mask(bundle: ModelBundle, seed: int, reinit_partial_cls: bool = True) -> None:
    """Redraw the mask generator (and by default the defined/undefined
    classifier) from the init distribution, leaving everything else alone."""
    rng = np.random.default_rng(seed)
    bundle.mask_gen.weight[...] = _glorot(rng, bundle.dim, bundle.dim)
    bundle.mask_gen.bias[...] = 0.0
    if reinit_partial_cls:
        bundle.partial_cls.weight[...] = _glorot(rng, bundle.dim, 1)
        bundle.partial_cls.bias[...] = 0.0


def expand_head(bundle: ModelBundle, extra_classes: int, seed: int) -> None:
    """Append freshly initialized head columns for new classes; old columns kept."""
    if extra_classes < 1:
        raise ConfigError(f"extra_classes must be >= 1, got {extra_classes}")
    rng = np.random.default_rng(seed)
    new_w = _glorot(rng, bundle.dim, extra_classes)
    bundle.head.weight = np.concatenate([bundle.head.weight, new_w], axis=1)
    bundle.head.bias = np.concatenate([bundle.head.bias, np.zeros((1, extra_classes))], axis=1)
    bundle.num_classes += extra_classes


class BoundBundle:
    """Tensors for every parameter of a bundle, optionally on a graph."""

    def __init__(self, bundle: ModelBundle, graph: Graph | None = None):
        self.bundle = bundle
        self.graph = graph
        self.tensors = OrderedDict(
            (name, Tensor(arr, graph)) for name, arr in bundle.parameters().items())

    @classmethod
    def from_tensors(cls, bundle: ModelBundle, tensors: dict[str, Tensor]) -> "BoundBundle":
        """Bind pre-built parameter tensors (e.g. grad-check leaves) to a bundle.

        ``bundle`` only supplies shape metadata; parameter values are read
        from ``tensors``, which must cover every name in ``bundle.parameters()``.
        """
        missing = set(bundle.parameters().keys()) - set(tensors.keys())
        if missing:
            raise ConfigError(f"from_tensors: missing parameters {sorted(missing)}")
        self = cls.__new__(cls)
        self.bundle = bundle
        self.graph = next(iter(tensors.values())).graph
        self.tensors = OrderedDict((name, tensors[name]) for name in bundle.parameters())
        return self

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def grads(self) -> dict[str, np.ndarray]:
        """Gradients per parameter name after ``graph.backward``."""
        if self.graph is None:
            raise ConfigError("bundle was bound without a graph; no gradients exist")
        return {name: self.graph.grad(t) for name, t in self.tensors.items()}


def _affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ad.add_bias(x @ w, b)


def encode(bound: BoundBundle, x: Tensor) -> Tensor:
    """Encoder forward pass: ReLU between layers, none after the last."""
    if x.cols != bound.bundle.in_dim:
        raise ShapeError(f"encode: input width {x.cols} != encoder width {bound.bundle.in_dim}")
    depth = len(bound.bundle.encoder)
    h = x
    for i in range(depth):
        h = _affine(h, bound[f"enc{i}.weight"], bound[f"enc{i}.bias"])
        if i < depth - 1:
            h = ad.relu(h)
    return h


def mask_forward(bound: BoundBundle, z: Tensor) -> Tensor:
    """Per-sample gate over latent dimensions, sigmoid of a square affine map."""
    if z.cols != bound.bundle.dim:
        raise ShapeError(f"mask_forward: width {z.cols} != dim {bound.bundle.dim}")
    return ad.sigmoid(_affine(z, bound["mask.weight"], bound["mask.bias"]))


def head_forward(bound: BoundBundle, z_in: Tensor) -> Tensor:
    """Class logits; callers apply softmax where probabilities are needed."""
    if z_in.cols != bound.bundle.dim:
        raise ShapeError(f"head_forward: width {z_in.cols} != dim {bound.bundle.dim}")
    return _affine(z_in, bound["head.weight"], bound["head.bias"])


def partial_forward(bound: BoundBundle, z_cat: Tensor) -> Tensor:
    """Probability that each row carries defined meaning (single sigmoid output)."""
    if z_cat.cols != bound.bundle.dim:
        raise ShapeError(f"partial_forward: width {z_cat.cols} != dim {bound.bundle.dim}")
    return ad.sigmoid(_affine(z_cat, bound["partial.weight"], bound["partial.bias"]))


@dataclass
class MaskReport:
    """Snapshot of mask-generator weights for one training session.

    ``row_importance[i]`` is the mean absolute weight of row ``i``;
    ``normalized`` min-max scales it to [0, 1] (all zeros when every row
    is equally important); ``binarized[i]`` is 1 iff normalized > 0.5.
    """

    session: int
    weights: np.ndarray
    row_importance: np.ndarray = field(init=False)
    normalized: np.ndarray = field(init=False)
    binarized: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.weights = np.array(self.weights, copy=True)
        imp = np.abs(self.weights).mean(axis=1)
        lo, hi = imp.min(), imp.max()
        if hi > lo:
            norm = (imp - lo) / (hi - lo)
        else:
            norm = np.zeros_like(imp)
        self.row_importance = imp
        self.normalized = norm
        self.binarized = (norm > 0.5).astype(np.int64)


def snapshot_mask(bundle: ModelBundle, session: int) -> MaskReport:
    return MaskReport(session=session, weights=bundle.mask_gen.weight)


MASK_CSV_HEADER = ["session", "dim_index", "normalized_importance", "binarized"]


def mask_reports_to_csv(reports: list[MaskReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MASK_CSV_HEADER)
        for rep in reports:
            for i in range(rep.normalized.shape[0]):
                writer.writerow([rep.session, i, repr(float(rep.normalized[i])),
                                 int(rep.binarized[i])])
