"""Named gradient checks covering every loss against central differences."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import losses as lo
from . import model as mo
from .autodiff import Tensor

TOLERANCE = 1e-4


def _bundle_and_data(seed: int, batch: int = 5, dim: int = 5, k: int = 3,
                     in_dim: int = 4):
    rng = np.random.default_rng(seed)
    bundle = mo.init_bundle(dim=dim, num_classes=k, depth=2, seed=seed,
                            in_dim=in_dim)
    x = rng.normal(size=(batch, in_dim))
    labels = rng.integers(0, k, size=batch)
    return bundle, x, labels


def _check_over_bundle(bundle, loss_of_bound) -> float:
    names = list(bundle.parameters().keys())

    def f(*leaves):
        bound = mo.BoundBundle.from_tensors(bundle, dict(zip(names, leaves)))
        return loss_of_bound(bound)

    return ad.grad_check(f, [arr.copy() for arr in bundle.parameters().values()])


def _final_loss(bound, x, labels, weights, head_input):
    z = mo.encode(bound, Tensor(x))
    mask = mo.mask_forward(bound, z)
    head_in = z * mask if head_input == "masked" else z
    logits = mo.head_forward(bound, head_in)
    yhat = ad.softmax(mo.head_forward(bound, z * mask), axis="cols")
    terms = lo.loss_plreg(z, yhat, bound, weights, mask=mask)
    l_main = lo.loss_cross_entropy(logits, labels) + lo.loss_infomax(logits)
    final, _ = lo.total_loss(terms, l_main)
    return final


def gradient_check_suite(instances: int = 3, seed: int = 0) -> list[tuple[str, float]]:
    """Run every named check over several random instances; returns
    (name, max relative error) pairs."""
    weights = lo.LossWeights(1.0, 0.5, 0.1)
    results: list[tuple[str, float]] = []

    def record(name, errs):
        results.append((name, max(errs)))

    rng_seeds = [seed + 100 * i for i in range(instances)]

    record("loss_p1", [
        _check_over_bundle(b, lambda bound, x=x: lo.loss_p1(
            mo.encode(bound, Tensor(x)), bound))
        for b, x, _ in map(_bundle_and_data, rng_seeds)])

    record("loss_p2", [
        ad.grad_check(lambda t: lo.loss_p2(t),
                      [np.random.default_rng(s).normal(size=(4, 6))])
        for s in rng_seeds])

    def lreg_build(yhat_logits, z_in):
        return lo.loss_lreg(ad.softmax(yhat_logits, axis="cols"), z_in)

    record("loss_lreg", [
        ad.grad_check(lreg_build,
                      [np.random.default_rng(s).normal(size=(4, 3)),
                       np.random.default_rng(s + 1).normal(size=(4, 6))])
        for s in rng_seeds])

    record("loss_plreg", [
        _check_over_bundle(b, lambda bound, x=x: lo.loss_plreg(
            mo.encode(bound, Tensor(x)),
            ad.softmax(mo.head_forward(
                bound, mo.encode(bound, Tensor(x))), axis="cols"),
            bound, weights).l_plreg)
        for b, x, _ in map(_bundle_and_data, rng_seeds)])

    for head_input in ("masked", "raw"):
        record(f"loss_final_{head_input}", [
            _check_over_bundle(b, lambda bound, x=x, y=y: _final_loss(
                bound, x, y, weights, head_input))
            for b, x, y in map(_bundle_and_data, rng_seeds)])

    record("loss_cross_entropy", [
        ad.grad_check(lambda t, y=y: lo.loss_cross_entropy(t, y),
                      [np.random.default_rng(s).normal(size=(5, 3))])
        for s, (_, _, y) in zip(rng_seeds, map(_bundle_and_data, rng_seeds))])

    record("loss_infomax", [
        ad.grad_check(lambda t: lo.loss_infomax(t),
                      [np.random.default_rng(s).normal(size=(6, 4))])
        for s in rng_seeds])

    record("loss_distill", [
        ad.grad_check(lambda t, s=s: lo.loss_distill(
            t, Tensor(np.random.default_rng(s + 7).normal(size=(4, 3)))),
            [np.random.default_rng(s).normal(size=(4, 3))])
        for s in rng_seeds])

    return results
