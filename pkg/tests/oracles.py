"""Independent reference computations shared by unit and acceptance tests."""

import math

import numpy as np

from gfra.dmlp import MlpArchitecture, backward, bce_loss, forward_cache, init_model
from gfra.numerics import SeededRng


def random_net(seed: int, d_in=8, width=5, depth=2, k=3):
    """Small net with non-zero biases so every path is exercised."""
    rng = SeededRng(seed)
    model = init_model(MlpArchitecture(d_in, depth, width, k), None, rng.split("w"))
    model.biases = [rng.normal(0, 0.3, b.shape) for b in model.biases]
    x = rng.normal(size=(6, d_in))
    y = rng.bernoulli(0.5, size=(6, k))
    return model, x, y


def finite_difference_error(model, x, y, step=1e-5) -> float:
    """Max relative error of analytic gradients against central differences."""
    probs, acts = forward_cache(model, x)
    gw, gb = backward(model, probs, acts, y, "mean")
    worst = 0.0
    for params, grads in ((model.weights, gw), (model.biases, gb)):
        for p, g in zip(params, grads):
            it = np.nditer(p, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = p[idx]
                p[idx] = orig + step
                up = bce_loss(forward_cache(model, x)[0], y, "mean")
                p[idx] = orig - step
                down = bce_loss(forward_cache(model, x)[0], y, "mean")
                p[idx] = orig
                num = (up - down) / (2 * step)
                denom = max(abs(num), abs(g[idx]), 1e-7)
                worst = max(worst, abs(num - g[idx]) / denom)
    return worst


def parameter_count_by_shapes(arch: MlpArchitecture) -> int:
    return sum(o * i + o for o, i in arch.layer_shapes())


def pairwise_auc(scores, labels) -> float:
    pos = [s for s, a in zip(scores, labels) if a]
    neg = [s for s, a in zip(scores, labels) if not a]
    good = 0.0
    for p in pos:
        for n in neg:
            good += 1.0 if p > n else 0.5 if p == n else 0.0
    return good / (len(pos) * len(neg))


def majority_truth(votes) -> int:
    T = len(votes)
    need = T // 2 if T % 2 == 0 else (T + 1) // 2
    return int(sum(votes) >= need)


def naive_quantize(x: float, W: int, F: int) -> float:
    q = round(x * 2**F)  # Python rounds half to even
    q = min(max(q, -(2 ** (W - 1))), 2 ** (W - 1) - 1)
    return q / 2**F


def ln2() -> float:
    return math.log(2.0)
