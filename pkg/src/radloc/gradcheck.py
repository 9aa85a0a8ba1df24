"""Finite-difference verification of every backward pass in the layer set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor
from .layers import BatchNorm, Conv2d, Linear

FD_STEP = 1e-5


@dataclass
class CheckReport:
    name: str
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def numeric_gradient(build_loss, leaf: Tensor, h: float = FD_STEP) -> np.ndarray:
    """Central finite differences of the scalar loss w.r.t. one leaf tensor."""
    grad = np.zeros_like(leaf.data)
    flat = leaf.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = build_loss().item()
        flat[i] = orig - h
        down = build_loss().item()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def check_gradients(build_loss, leaves: list[Tensor], h: float = FD_STEP) -> float:
    """Compare analytic gradients against central differences; returns max rel err."""
    for leaf in leaves:
        leaf.zero_grad()
    loss = build_loss()
    loss.backward()
    analytic = [leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data)
                for leaf in leaves]
    for leaf in leaves:
        leaf.zero_grad()
    worst = 0.0
    for leaf, ana in zip(leaves, analytic):
        num = numeric_gradient(build_loss, leaf, h=h)
        worst = max(worst, max_relative_error(ana, num))
    return worst


def _projected(out: Tensor, proj: np.ndarray) -> Tensor:
    """Reduce an arbitrary output to a scalar with a fixed random projection."""
    return ag.tsum(ag.mul(out, Tensor(proj)))


def _check_linear(rng) -> float:
    layer = Linear(5, 3, rng=rng)
    layer.bias.data[:] = rng.normal(size=3)
    x = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    proj = rng.normal(size=(4, 3))
    build = lambda: _projected(layer(x), proj)
    return check_gradients(build, [x, layer.weight, layer.bias])


def _check_conv(rng) -> float:
    layer = Conv2d(2, 3, 3, stride=1, padding=1, rng=rng)
    layer.bias.data[:] = rng.normal(size=3) * 0.1
    x = Tensor(rng.normal(size=(1, 2, 5, 5)), requires_grad=True)
    proj = rng.normal(size=(1, 3, 5, 5))
    build = lambda: _projected(ag.conv2d(x, layer.weight, layer.bias, 1, 1), proj)
    return check_gradients(build, [x, layer.weight, layer.bias])


def _check_maxpool(rng) -> float:
    # distinct values keep the argmax away from ties
    vals = rng.permutation(4 * 6 * 6).astype(float).reshape(1, 4, 6, 6)
    x = Tensor(vals / 7.0, requires_grad=True)
    proj = rng.normal(size=(1, 4, 3, 3))
    build = lambda: _projected(ag.maxpool2(x), proj)
    return check_gradients(build, [x])


def _check_leaky_relu(rng) -> float:
    vals = rng.normal(size=(4, 6))
    vals[np.abs(vals) < 0.05] += 0.1  # keep clear of the kink
    x = Tensor(vals, requires_grad=True)
    proj = rng.normal(size=(4, 6))
    build = lambda: _projected(ag.leaky_relu(x, 0.1), proj)
    return check_gradients(build, [x])


def _check_batch_norm(rng) -> float:
    layer = BatchNorm(4)
    layer.scale.data[:] = rng.uniform(0.5, 1.5, size=4)
    layer.shift.data[:] = rng.normal(size=4)
    x = Tensor(rng.normal(size=(8, 4)), requires_grad=True)
    proj = rng.normal(size=(8, 4))
    build = lambda: _projected(layer(x), proj)
    return check_gradients(build, [x, layer.scale, layer.shift])


def _check_softmax_ce(rng) -> float:
    x = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
    labels = rng.integers(0, 4, size=5)
    build = lambda: ag.cross_entropy(ag.softmax(x), labels)
    return check_gradients(build, [x])


def _check_bce(rng) -> float:
    x = Tensor(rng.normal(size=(6, 1)), requires_grad=True)
    target = rng.integers(0, 2, size=(6, 1)).astype(float)
    weights = rng.uniform(1.0, 2.0, size=(6, 1))
    build = lambda: ag.binary_cross_entropy(ag.sigmoid(x), target, weights)
    return check_gradients(build, [x])


def _check_grl_negation(rng) -> float:
    """Gradient with GRL must equal -lambda times the gradient without it."""
    layer = Linear(4, 1, rng=rng)
    x = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
    target = rng.integers(0, 2, size=(5, 1)).astype(float)
    lam = 1.0
    leaves = [x, layer.weight, layer.bias]

    def run(with_grl: bool):
        for leaf in leaves:
            leaf.zero_grad()
        feats = ag.grad_reverse(x, lam) if with_grl else x
        loss = ag.binary_cross_entropy(ag.sigmoid(layer(feats)), target)
        loss.backward()
        return [leaf.grad.copy() for leaf in leaves]

    with_grl = run(True)
    without = run(False)
    # only the path below the GRL flips; discriminator params keep their sign
    worst = max_relative_error(with_grl[0], -lam * without[0])
    worst = max(worst, max_relative_error(with_grl[1], without[1]))
    worst = max(worst, max_relative_error(with_grl[2], without[2]))
    return worst


def _check_mini_extractor(rng) -> float:
    """Two conv/pool/bn blocks plus a linear head, end to end."""
    conv1 = Conv2d(1, 2, 3, padding=1, rng=rng)
    bn1 = BatchNorm(2)
    conv2 = Conv2d(2, 2, 3, padding=1, rng=rng)
    bn2 = BatchNorm(2)
    head = Linear(2 * 2 * 2, 3, rng=rng)
    x = Tensor(rng.normal(size=(3, 1, 8, 8)), requires_grad=True)
    labels = rng.integers(0, 3, size=3)

    def build():
        h = ag.leaky_relu(conv1(x), 0.1)
        h = bn1(ag.maxpool2(h))
        h = ag.leaky_relu(conv2(h), 0.1)
        h = bn2(ag.maxpool2(h))
        h = ag.reshape(h, (3, -1))
        return ag.cross_entropy(ag.softmax(head(h)), labels)

    leaves = [x, conv1.weight, conv1.bias, bn1.scale, bn1.shift,
              conv2.weight, conv2.bias, bn2.scale, bn2.shift,
              head.weight, head.bias]
    return check_gradients(build, leaves)


_SUITE = [
    ("linear", _check_linear, 1e-6),
    ("conv2d", _check_conv, 1e-4),
    ("maxpool2", _check_maxpool, 1e-4),
    ("leaky_relu", _check_leaky_relu, 1e-4),
    ("batch_norm", _check_batch_norm, 1e-3),
    ("softmax_cross_entropy", _check_softmax_ce, 1e-4),
    ("sigmoid_bce", _check_bce, 1e-4),
    ("grl_composition", _check_grl_negation, 1e-6),
    ("mini_extractor", _check_mini_extractor, 1e-4),
]


def run_suite(seed: int = 0) -> list[CheckReport]:
    reports = []
    for i, (name, fn, tol) in enumerate(_SUITE):
        rng = np.random.default_rng([seed, i])
        reports.append(CheckReport(name, fn(rng), tol))
    return reports
