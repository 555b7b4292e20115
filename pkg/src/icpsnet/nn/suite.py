"""The standard gradient-check suite: one seeded case per layer and loss.

Every case reduces its op's output to a scalar through a fixed random
weighting, so each output element contributes a distinct gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..rng import numpy_rng
from . import functional as F
from .gradcheck import grad_check
from .tensor import Tensor

TOLERANCE = 1e-4


def _weighted(out: Tensor, w: np.ndarray) -> Tensor:
    return (out * Tensor(w)).sum()


def _away_from_zero(rng, shape, gap=0.1):
    # keeps relu kinks farther than the finite-difference step
    x = rng.uniform(gap, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def _distinct(rng, shape):
    # max-pool windows need well-separated values so the argmax cannot flip
    return rng.permutation(np.prod(shape)).reshape(shape) * 0.05 + rng.uniform(-0.01, 0.01, size=shape)


def _case_dense(rng):
    x, W, b = (Tensor(rng.normal(size=s)) for s in ((4, 5), (5, 3), (3,)))
    w = rng.normal(size=(4, 3))
    return lambda x, W, b: _weighted(F.dense(x, W, b), w), [x, W, b]


def _case_conv2d(rng):
    x, K, b = Tensor(rng.normal(size=(2, 5, 5, 2))), Tensor(rng.normal(size=(3, 3, 2, 3))), Tensor(rng.normal(size=3))
    w_same, w_valid = rng.normal(size=(2, 5, 5, 3)), rng.normal(size=(2, 2, 2, 3))
    return (lambda x, K, b: _weighted(F.conv2d(x, K, b, 1, "same"), w_same)
            + _weighted(F.conv2d(x, K, b, 2, "valid"), w_valid)), [x, K, b]


def _case_batchnorm(rng):
    x, g, b = Tensor(rng.normal(size=(6, 4))), Tensor(rng.uniform(0.5, 1.5, 4)), Tensor(rng.normal(size=4))
    w = rng.normal(size=(6, 4))
    stats = F.RunningStats.create(4)
    stats.mean[...] = rng.normal(size=4)
    stats.var[...] = rng.uniform(0.5, 2.0, 4)
    frozen = F.RunningStats(stats.mean.copy(), stats.var.copy())

    def fn(x, g, b):
        scratch = F.RunningStats(stats.mean.copy(), stats.var.copy())
        return _weighted(F.batchnorm(x, g, b, True, scratch), w) + _weighted(F.batchnorm(x, g, b, False, frozen), w)

    return fn, [x, g, b]


def _case_dropout(rng):
    x = Tensor(rng.normal(size=(5, 6)))
    w = rng.normal(size=(5, 6))
    # rate 0 is the identity; a positive rate with a re-seeded mask checks the scaling path too
    return (lambda x: _weighted(F.dropout(x, 0.0, True, numpy_rng(7)), w)
            + _weighted(F.dropout(x, 0.3, True, numpy_rng(7)), w)), [x]


def _case_swish(rng):
    x = Tensor(rng.normal(scale=2.0, size=(4, 5)))
    w = rng.normal(size=(4, 5))
    return lambda x: _weighted(F.swish(x), w), [x]


def _case_relu(rng):
    x = Tensor(_away_from_zero(rng, (4, 5)))
    w = rng.normal(size=(4, 5))
    return lambda x: _weighted(F.relu(x), w), [x]


def _case_max_pool(rng):
    x = Tensor(_distinct(rng, (2, 4, 5, 2)))
    w = rng.normal(size=(2, 2, 2, 2))
    return lambda x: _weighted(F.max_pool2d(x, 2), w), [x]


def _case_softmax_xent(rng):
    logits = Tensor(rng.normal(size=(5, 9)))
    y = F.one_hot(rng.integers(0, 9, size=5), 9)
    return lambda z: F.softmax_cross_entropy(z, y), [logits]


def _case_pose_loss(rng):
    p_hat, q_hat = Tensor(rng.normal(size=(4, 3))), Tensor(rng.normal(size=(4, 4)))
    p, q = rng.normal(size=(4, 3)), rng.normal(size=(4, 4))
    return lambda a, b: F.pose_loss(a, b, p, q, beta=2.5), [p_hat, q_hat]


def _case_activity_penalty(rng):
    a1, a2 = Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(3, 2)))
    return lambda a, b: F.activity_penalty([a, b], 0.3), [a1, a2]


@dataclass(frozen=True)
class GradCase:
    name: str
    build: Callable


CASES = (
    GradCase("dense", _case_dense),
    GradCase("conv2d", _case_conv2d),
    GradCase("batchnorm", _case_batchnorm),
    GradCase("dropout", _case_dropout),
    GradCase("swish", _case_swish),
    GradCase("relu", _case_relu),
    GradCase("max_pool", _case_max_pool),
    GradCase("softmax_xent", _case_softmax_xent),
    GradCase("pose_loss", _case_pose_loss),
    GradCase("activity_penalty", _case_activity_penalty),
)

CASE_NAMES = tuple(c.name for c in CASES)


def run_suite(seed: int = 0, names=None) -> dict[str, float]:
    """Max relative error per case, in suite order. Each case gets its own seeded generator."""
    results = {}
    for k, case in enumerate(CASES):
        if names is not None and case.name not in names:
            continue
        fn, inputs = case.build(numpy_rng(seed * 1000 + k))
        results[case.name] = grad_check(fn, inputs)
    return results
