"""Randomized instances of every differentiable op, shared between the
fast unit checks and the full acceptance gradient suite."""

import numpy as np

from zrforge.numerics import (
    Mlp,
    ParamStore,
    Tensor,
    bce,
    cross_entropy,
    dot,
    gru_cell,
    make_gru,
    matmul,
    mse,
    mul,
    scale,
    add,
    sigmoid,
    softmax,
    sum_all,
    tucker3,
)
from zrforge.rng import SplitMix64

OP_NAMES = ("mlp", "gru", "aggregate", "tucker3", "mse", "cross_entropy",
            "bce", "hpn_pattern_score")


def _randn(rng, *shape):
    return rng.normal_array(int(np.prod(shape))).reshape(shape)


def _leaf(rng, *shape):
    return Tensor(_randn(rng, *shape), requires_grad=True)


def build_instance(op: str, seed: int):
    """Returns (make_loss, tensors_to_check) for one random instance."""
    rng = SplitMix64(seed)
    d = 3
    if op == "mlp":
        params = ParamStore(seed)
        mlp = Mlp(params, "m", [d, d, d])
        x = _leaf(rng, d)
        probe = Tensor(_randn(rng, d))
        return (lambda: dot(mlp(x), probe)), [x] + params.tensors()
    if op == "gru":
        params = ParamStore(seed)
        gru = make_gru(params, "g", d, d)
        for t in gru.tensors():   # nonzero biases exercise every term
            t.data = _randn(rng, *t.data.shape).astype(t.data.dtype)
        x, h = _leaf(rng, d), _leaf(rng, d)
        probe = Tensor(_randn(rng, d))
        return (lambda: dot(gru_cell(x, h, gru), probe)), [x, h] + gru.tensors()
    if op == "aggregate":
        params = ParamStore(seed)
        mlp = Mlp(params, "agg", [d, d, d])
        members = _leaf(rng, 4, d)
        query = _leaf(rng, d)
        probe = Tensor(_randn(rng, d))

        def make_loss():
            weights = softmax(matmul(members, mlp(query)))
            return dot(matmul(weights, members), probe)

        return make_loss, [members, query] + params.tensors()
    if op == "tucker3":
        w = Tensor(0.5 * _randn(rng, d, d, d), requires_grad=True)
        a, b, c = (Tensor(0.5 * _randn(rng, d), requires_grad=True)
                   for _ in range(3))
        return (lambda: tucker3(w, a, b, c)), [w, a, b, c]
    if op == "mse":
        u, v = _leaf(rng, d), _leaf(rng, d)
        return (lambda: mse(u, v)), [u, v]
    if op == "cross_entropy":
        logits = _leaf(rng, 2, 4)
        targets = np.array([seed % 4, (seed // 4) % 4])
        return (lambda: cross_entropy(logits, targets)), [logits]
    if op == "bce":
        x = _leaf(rng, 2, 3)
        labels = (_randn(rng, 2, 3) > 0).astype(np.float64)
        return (lambda: bce(sigmoid(x), labels)), [x]
    if op == "hpn_pattern_score":
        # half-scale leaves keep the trilinear output O(1), which the
        # float32 finite-difference tolerance needs
        params = ParamStore(seed)
        mlp_hist = Mlp(params, "h", [d, d, d])
        gru = make_gru(params, "g", d, d)
        for t in gru.tensors():
            t.data = (0.5 * _randn(rng, *t.data.shape)).astype(t.data.dtype)
        w = Tensor(0.5 * _randn(rng, d, d, d), requires_grad=True)
        query = Tensor(0.5 * _randn(rng, d), requires_grad=True)
        h_s = Tensor(0.5 * _randn(rng, d), requires_grad=True)
        h_o = Tensor(0.5 * _randn(rng, d), requires_grad=True)

        def make_loss():
            predicted = add(scale(mlp_hist(query), 0.1), query)
            pattern = gru_cell(query, predicted, gru)
            return tucker3(w, h_s, pattern, h_o)

        return make_loss, [w, query, h_s, h_o] + params.tensors()
    raise ValueError(f"unknown op {op!r}")
