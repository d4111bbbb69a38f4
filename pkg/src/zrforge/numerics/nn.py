"""Trainable-parameter registry, initializers, and small network blocks."""

from __future__ import annotations

import numpy as np

from ..rng import derive_seed, uniform_array
from .autodiff import GruParams, Tensor, affine, default_dtype, relu, tanh


def xavier_uniform(seed: int, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    n = int(np.prod(shape))
    return (uniform_array(seed, n) * 2.0 * lim - lim).reshape(shape)


def uniform_init(seed: int, shape: tuple[int, ...], lim: float) -> np.ndarray:
    n = int(np.prod(shape))
    return (uniform_array(seed, n) * 2.0 * lim - lim).reshape(shape)


class ParamStore:
    """Name -> trainable Tensor registry.

    Every parameter draws from its own stream derived from (seed, name),
    so adding or removing unrelated parameters never perturbs the
    initialization of the rest.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self._params: dict[str, Tensor] = {}

    def new(self, name: str, shape: tuple[int, ...], init: str = "xavier",
            fan: tuple[int, int] | None = None, lim: float | None = None) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        stream = derive_seed(self.seed, "param", name)
        if init == "xavier":
            fan_in, fan_out = fan if fan is not None else (shape[0], shape[-1])
            data = xavier_uniform(stream, shape, fan_in, fan_out)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "uniform":
            if lim is None:
                raise ValueError("uniform init needs lim")
            data = uniform_init(stream, shape, lim)
        else:
            raise ValueError(f"unknown init {init!r}")
        t = Tensor(data.astype(default_dtype()), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def total_size(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ValueError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, t in self._params.items():
            arr = np.asarray(state[k], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {k}: {arr.shape} vs {t.data.shape}")
            t.data = arr.copy()


_ACTIVATIONS = {"tanh": tanh, "relu": relu, "linear": None}


class Mlp:
    """Affine stack with a hidden activation; final layer stays linear."""

    def __init__(self, params: ParamStore, name: str, sizes: list[int],
                 activation: str = "tanh"):
        if len(sizes) < 2:
            raise ValueError("mlp needs at least input and output sizes")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation
        self.layers = []
        for i, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
            w = params.new(f"{name}.w{i}", (n_in, n_out), init="xavier")
            b = params.new(f"{name}.b{i}", (n_out,), init="zeros")
            self.layers.append((w, b))

    def __call__(self, x) -> Tensor:
        act = _ACTIVATIONS[self.activation]
        for i, (w, b) in enumerate(self.layers):
            x = affine(x, w, b)
            if act is not None and i < len(self.layers) - 1:
                x = act(x)
        return x


def make_gru(params: ParamStore, name: str, d_in: int, d: int) -> GruParams:
    """GRU weights with xavier kernels and zero biases."""
    kw = {}
    for gate in ("z", "r", "h"):
        kw[f"w{gate}"] = params.new(f"{name}.w{gate}", (d_in, d), init="xavier")
        kw[f"u{gate}"] = params.new(f"{name}.u{gate}", (d, d), init="xavier")
        kw[f"b{gate}"] = params.new(f"{name}.b{gate}", (d,), init="zeros")
    return GruParams(**kw)
