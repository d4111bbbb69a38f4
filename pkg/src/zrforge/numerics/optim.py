"""Adam with global-norm gradient clipping."""

from __future__ import annotations

import numpy as np

from .nn import ParamStore


class Adam:
    """Adam over a ParamStore; clips the global gradient norm each step.

    Missing gradients count as zero (parameters not reached by the tape
    still advance their bias-correction step but do not move).
    """

    def __init__(self, params: ParamStore, lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 clip_norm: float = 1.0):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self._t = 0
        self._m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self._v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def _clip(self) -> float:
        sq = 0.0
        for t in self.params.tensors():
            if t.grad is not None:
                sq += float((t.grad.astype(np.float64) ** 2).sum())
        norm = float(np.sqrt(sq))
        if self.clip_norm is not None and norm > self.clip_norm and norm > 0.0:
            factor = self.clip_norm / norm
            for t in self.params.tensors():
                if t.grad is not None:
                    t.grad = t.grad * t.data.dtype.type(factor)
        return norm

    def step(self) -> float:
        """Apply one update; returns the pre-clip gradient norm."""
        norm = self._clip()
        self._t += 1
        b1t = 1.0 - self.beta1 ** self._t
        b2t = 1.0 - self.beta2 ** self._t
        for name, t in self.params.items():
            g = t.grad if t.grad is not None else np.zeros_like(t.data)
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            mhat = m / b1t
            vhat = v / b2t
            t.data = t.data - (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(t.data.dtype)
        return norm
