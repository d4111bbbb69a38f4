"""Dense tensors with tape-based reverse-mode differentiation.

Kernels are fused at the level the model needs (affine map, GRU cell,
softmax, trilinear product, losses, segment/index ops): each call records
one tape node with an analytic backward closure. Shapes are rank <= 3 and
ops accept either a single vector or a batch of row vectors where noted.

Default scalar type is float32; gradient-check builds switch to float64
via `using_dtype`.
"""

from __future__ import annotations

import contextlib
from typing import Callable

import numpy as np

_DEFAULT_DTYPE = np.float32


def default_dtype():
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    if dtype not in (np.float32, np.float64):
        raise ValueError("supported dtypes: float32, float64")
    _DEFAULT_DTYPE = dtype


@contextlib.contextmanager
def using_dtype(dtype):
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


class Tensor:
    """A dense array plus an accumulated-gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype != _DEFAULT_DTYPE:
            arr = arr.astype(_DEFAULT_DTYPE)
        if arr.ndim > 3:
            raise ValueError(f"rank {arr.ndim} > 3 unsupported")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad = self.grad + g

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Append-only record of executed ops, replayed in reverse for grads.

    One tape per training step; tapes are not shared across threads.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, list[tuple[Tensor, Callable]]]] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack.pop()
        return False

    def record(self, out: Tensor, edges: list[tuple[Tensor, Callable]]) -> None:
        kept = [(t, vjp) for t, vjp in edges
                if t.requires_grad or id(t) in self._produced]
        self._produced.add(id(out))
        self._nodes.append((out, kept))

    def backward(self, loss: Tensor, params=None) -> None:
        """Accumulate d(loss)/d(x) into x.grad for every reached tensor
        with requires_grad; registered but unreached parameters get zero.
        """
        if loss.data.shape != ():
            raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
        adjoint: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.data.dtype)}
        if loss.requires_grad:
            loss.accumulate_grad(adjoint[id(loss)])
        for out, edges in reversed(self._nodes):
            g = adjoint.pop(id(out), None)
            if g is None:
                continue
            for inp, vjp in edges:
                contrib = vjp(g)
                key = id(inp)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + contrib
                else:
                    adjoint[key] = contrib
                if inp.requires_grad and id(inp) not in self._produced:
                    inp.accumulate_grad(contrib)
        if params is not None:
            for t in params.tensors():
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)


_tape_stack: list[Tape] = []


def _active() -> Tape | None:
    return _tape_stack[-1] if _tape_stack else None


def _emit(out_data: np.ndarray, edges: list[tuple[Tensor, Callable]]) -> Tensor:
    out = Tensor(out_data)
    tape = _active()
    if tape is not None:
        tape.record(out, edges)
    return out


def _to_scalar_shape(g: np.ndarray, ref: np.ndarray) -> np.ndarray:
    # reduce a broadcast gradient back to a () operand
    return g.sum() if ref.shape == () and g.shape != () else g


# ---------------------------------------------------------------------------
# arithmetic


def _check_elementwise(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape and a.data.shape != () and b.data.shape != ():
        raise ValueError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "add")
    return _emit(a.data + b.data, [
        (a, lambda g: _to_scalar_shape(g, a.data)),
        (b, lambda g: _to_scalar_shape(g, b.data)),
    ])


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "sub")
    return _emit(a.data - b.data, [
        (a, lambda g: _to_scalar_shape(g, a.data)),
        (b, lambda g: _to_scalar_shape(-g, b.data)),
    ])


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "mul")
    return _emit(a.data * b.data, [
        (a, lambda g: _to_scalar_shape(g * b.data, a.data)),
        (b, lambda g: _to_scalar_shape(g * a.data, b.data)),
    ])


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _emit(a.data * a.data.dtype.type(c), [(a, lambda g: g * a.data.dtype.type(c))])


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise ValueError("matmul expects rank-1/2 operands")
    if ad.shape[-1] != (bd.shape[0] if bd.ndim >= 1 else None):
        raise ValueError(f"matmul: inner dims {ad.shape} @ {bd.shape}")
    out = ad @ bd

    def d_a(g):
        if ad.ndim == 1 and bd.ndim == 1:
            return g * bd
        if ad.ndim == 1:                      # [n] @ [n,k] -> [k]
            return bd @ g
        if bd.ndim == 1:                      # [m,n] @ [n] -> [m]
            return np.outer(g, bd)
        return g @ bd.T

    def d_b(g):
        if ad.ndim == 1 and bd.ndim == 1:
            return g * ad
        if ad.ndim == 1:
            return np.outer(ad, g)
        if bd.ndim == 1:
            return ad.T @ g
        return ad.T @ g

    return _emit(out, [(a, d_a), (b, d_b)])


def dot(a, b) -> Tensor:
    return matmul(a, b)


def affine(x, w, b=None) -> Tensor:
    """x @ w (+ b). x: [n_in] or [B, n_in]; w: [n_in, n_out]; b: [n_out]."""
    x, w = as_tensor(x), as_tensor(w)
    xd = x.data
    if xd.shape[-1] != w.data.shape[0]:
        raise ValueError(f"affine: {xd.shape} @ {w.data.shape}")
    out = xd @ w.data
    edges = [
        (x, lambda g: g @ w.data.T),
        (w, lambda g: np.outer(xd, g) if xd.ndim == 1 else xd.T @ g),
    ]
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
        edges.append((b, lambda g: g if g.ndim == 1 else g.sum(axis=0)))
    return _emit(out, edges)


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    z = np.exp(-np.abs(x.data))
    s = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return _emit(s, [(x, lambda g: g * s * (1.0 - s))])


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    return _emit(t, [(x, lambda g: g * (1.0 - t * t))])


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _emit(np.where(mask, x.data, 0.0).astype(x.data.dtype), [(x, lambda g: g * mask)])


def softmax(x) -> Tensor:
    """Softmax over the last axis, max-shifted for stability."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def d_x(g):
        return s * (g - (g * s).sum(axis=-1, keepdims=True))

    return _emit(s, [(x, d_x)])


# ---------------------------------------------------------------------------
# recurrent cell


class GruParams:
    """Weight bundle for one GRU cell (update z, reset r, candidate h)."""

    FIELDS = ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh")

    def __init__(self, wz, uz, bz, wr, ur, br, wh, uh, bh):
        self.wz, self.uz, self.bz = wz, uz, bz
        self.wr, self.ur, self.br = wr, ur, br
        self.wh, self.uh, self.bh = wh, uh, bh

    def tensors(self) -> list[Tensor]:
        return [getattr(self, f) for f in self.FIELDS]


def gru_cell(x, h, p: GruParams) -> Tensor:
    """One GRU step: h' = (1-z) * h + z * cand.

    z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
    cand = tanh(x Wh + (r*h) Uh + bh). Accepts [d] or [B, d] rows.
    """
    x, h = as_tensor(x), as_tensor(h)
    xd, hd = np.atleast_2d(x.data), np.atleast_2d(h.data)
    single = x.data.ndim == 1
    d_in, d = p.wz.data.shape
    if xd.shape[1] != d_in or hd.shape[1] != d or xd.shape[0] != hd.shape[0]:
        raise ValueError(f"gru_cell: x{x.data.shape} h{h.data.shape} "
                         f"vs params ({d_in}->{d})")

    def _sig(v):
        e = np.exp(-np.abs(v))
        return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    z = _sig(xd @ p.wz.data + hd @ p.uz.data + p.bz.data)
    r = _sig(xd @ p.wr.data + hd @ p.ur.data + p.br.data)
    rh = r * hd
    cand = np.tanh(xd @ p.wh.data + rh @ p.uh.data + p.bh.data)
    out = (1.0 - z) * hd + z * cand

    def backward(g):
        g2 = np.atleast_2d(g)
        dz = g2 * (cand - hd)
        dcand = g2 * z
        dh = g2 * (1.0 - z)
        dpre_c = dcand * (1.0 - cand * cand)
        drh = dpre_c @ p.uh.data.T
        dr = drh * hd
        dh = dh + drh * r
        dpre_r = dr * r * (1.0 - r)
        dpre_z = dz * z * (1.0 - z)
        dh = dh + dpre_r @ p.ur.data.T + dpre_z @ p.uz.data.T
        dx = dpre_c @ p.wh.data.T + dpre_r @ p.wr.data.T + dpre_z @ p.wz.data.T
        grads = {
            "wz": xd.T @ dpre_z, "uz": hd.T @ dpre_z, "bz": dpre_z.sum(0),
            "wr": xd.T @ dpre_r, "ur": hd.T @ dpre_r, "br": dpre_r.sum(0),
            "wh": xd.T @ dpre_c, "uh": rh.T @ dpre_c, "bh": dpre_c.sum(0),
            "x": dx[0] if single else dx,
            "h": dh[0] if single else dh,
        }
        return grads

    # all eleven edges share one backward evaluation per adjoint
    cache: list = [None, None]  # [adjoint array, grads dict]

    def vjp_for(key):
        def vjp(g):
            if cache[0] is not g:
                cache[0] = g
                cache[1] = backward(g)
            return cache[1][key]
        return vjp

    edges = [(x, vjp_for("x")), (h, vjp_for("h"))]
    edges += [(getattr(p, f), vjp_for(f)) for f in GruParams.FIELDS]
    return _emit(out[0] if single else out, edges)


# ---------------------------------------------------------------------------
# trilinear products


def tucker3(w, a, b, c) -> Tensor:
    """Full trilinear contraction of a cubic core with three vectors.

    Summation runs in C order (i outer, k inner) with sequential
    accumulation, so it is bit-comparable against a nested-loop sum.
    """
    w, a, b, c = as_tensor(w), as_tensor(a), as_tensor(b), as_tensor(c)
    d = w.data.shape[0]
    if w.data.shape != (d, d, d) or a.data.shape != (d,) or b.data.shape != (d,) or c.data.shape != (d,):
        raise ValueError(f"tucker3: core {w.data.shape} with vectors "
                         f"{a.data.shape}/{b.data.shape}/{c.data.shape}")
    terms = ((w.data * a.data.reshape(d, 1, 1)) * b.data.reshape(1, d, 1)) * c.data.reshape(1, 1, d)
    out = terms.ravel().cumsum()[-1]

    return _emit(np.asarray(out), [
        (w, lambda g: g * np.einsum("i,j,k->ijk", a.data, b.data, c.data)),
        (a, lambda g: g * np.einsum("ijk,j,k->i", w.data, b.data, c.data)),
        (b, lambda g: g * np.einsum("ijk,i,k->j", w.data, a.data, c.data)),
        (c, lambda g: g * np.einsum("ijk,i,j->k", w.data, a.data, b.data)),
    ])


def tucker_rows(w, a, b) -> Tensor:
    """Contract core modes 1 and 2 with row batches: out[n] = W x1 a[n] x2 b[n].

    The remaining mode-3 product against candidate vectors is a matmul.
    """
    w, a, b = as_tensor(w), as_tensor(a), as_tensor(b)
    d = w.data.shape[0]
    n = a.data.shape[0]
    w_flat = w.data.reshape(d, d * d)
    t = (a.data @ w_flat).reshape(n, d, d)           # [n, j, k] = W x1 a[n]
    out = np.matmul(b.data[:, None, :], t)[:, 0, :]  # contract mode 2

    def d_w(g):
        bg = (b.data[:, :, None] * g[:, None, :]).reshape(n, d * d)
        return (a.data.T @ bg).reshape(d, d, d)

    def d_a(g):
        bg = (b.data[:, :, None] * g[:, None, :]).reshape(n, d * d)
        return bg @ w_flat.T

    def d_b(g):
        return np.matmul(t, g[:, :, None])[:, :, 0]

    return _emit(out, [(w, d_w), (a, d_a), (b, d_b)])


# ---------------------------------------------------------------------------
# losses


def mse(u, v) -> Tensor:
    u, v = as_tensor(u), as_tensor(v)
    if u.data.shape != v.data.shape:
        raise ValueError(f"mse: {u.data.shape} vs {v.data.shape}")
    diff = u.data - v.data
    n = max(diff.size, 1)
    out = np.asarray((diff * diff).mean() if diff.size else 0.0, dtype=u.data.dtype)
    return _emit(out, [
        (u, lambda g: g * 2.0 * diff / n),
        (v, lambda g: g * -2.0 * diff / n),
    ])


def cross_entropy(logits, target) -> Tensor:
    """Mean softmax cross-entropy; target is an index (or index per row)."""
    logits = as_tensor(logits)
    ld = np.atleast_2d(logits.data)
    single = logits.data.ndim == 1
    idx = np.atleast_1d(np.asarray(target, dtype=np.int64))
    n, k = ld.shape
    if idx.shape != (n,):
        raise ValueError(f"cross_entropy: {n} rows vs targets {idx.shape}")
    if idx.min() < 0 or idx.max() >= k:
        raise IndexError("cross_entropy: target index out of range")
    m = ld.max(axis=1, keepdims=True)
    e = np.exp(ld - m)
    denom = e.sum(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(denom[:, 0])
    losses = lse - ld[np.arange(n), idx]
    out = np.asarray(losses.mean(), dtype=ld.dtype)

    def d_logits(g):
        soft = e / denom
        soft[np.arange(n), idx] -= 1.0
        grad = g * soft / n
        return grad[0] if single else grad

    return _emit(out, [(logits, d_logits)])


BCE_EPS = 1e-7


def bce(prob, label) -> Tensor:
    """Mean binary cross-entropy on probabilities clamped to [eps, 1-eps]."""
    prob = as_tensor(prob)
    y = np.asarray(label, dtype=prob.data.dtype)
    if y.shape not in ((), prob.data.shape):
        raise ValueError(f"bce: labels {y.shape} vs probs {prob.data.shape}")
    y = np.broadcast_to(y, prob.data.shape)
    p = np.clip(prob.data, BCE_EPS, 1.0 - BCE_EPS)
    inside = (prob.data > BCE_EPS) & (prob.data < 1.0 - BCE_EPS)
    n = max(p.size, 1)
    out = np.asarray(-(y * np.log(p) + (1.0 - y) * np.log1p(-p)).mean(), dtype=p.dtype)

    def d_prob(g):
        return g * inside * (-y / p + (1.0 - y) / (1.0 - p)) / n

    return _emit(out, [(prob, d_prob)])


# ---------------------------------------------------------------------------
# reductions


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    return _emit(np.asarray(x.data.sum(), dtype=x.data.dtype),
                 [(x, lambda g: np.broadcast_to(g, x.data.shape).astype(x.data.dtype))])


def mean_all(x) -> Tensor:
    x = as_tensor(x)
    n = max(x.data.size, 1)
    return _emit(np.asarray(x.data.mean(), dtype=x.data.dtype),
                 [(x, lambda g: np.broadcast_to(g / n, x.data.shape).astype(x.data.dtype))])


# ---------------------------------------------------------------------------
# index / segment ops (ragged attention and graph message passing)


def gather_rows(x, idx) -> Tensor:
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)

    def d_x(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g)
        return out

    return _emit(x.data[idx], [(x, d_x)])


def take_per_row(x, idx) -> Tensor:
    """Gather columns per row: out[i, j] = x[i, idx[i, j]]."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    if x.data.ndim != 2 or idx.ndim != 2 or idx.shape[0] != x.data.shape[0]:
        raise ValueError(f"take_per_row: {x.data.shape} with idx {idx.shape}")
    rows = np.arange(x.data.shape[0])[:, None]

    def d_x(g):
        out = np.zeros_like(x.data)
        np.add.at(out, (np.broadcast_to(rows, idx.shape), idx), g)
        return out

    return _emit(x.data[rows, idx], [(x, d_x)])


def segment_sum(x, seg_ids, n_segments: int) -> Tensor:
    """out[s] = sum of x rows whose segment id is s."""
    x = as_tensor(x)
    seg = np.asarray(seg_ids, dtype=np.int64)
    shape = (n_segments,) + x.data.shape[1:]
    out = np.zeros(shape, dtype=x.data.dtype)
    np.add.at(out, seg, x.data)
    return _emit(out, [(x, lambda g: g[seg])])


def segment_softmax(logits, seg_ids, n_segments: int) -> Tensor:
    """Softmax over each segment of a flat logit vector (max-shifted)."""
    logits = as_tensor(logits)
    seg = np.asarray(seg_ids, dtype=np.int64)
    maxes = np.full(n_segments, -np.inf, dtype=logits.data.dtype)
    np.maximum.at(maxes, seg, logits.data)
    e = np.exp(logits.data - maxes[seg])
    denom = np.zeros(n_segments, dtype=logits.data.dtype)
    np.add.at(denom, seg, e)
    s = e / denom[seg]

    def d_logits(g):
        t = g * s
        seg_dot = np.zeros(n_segments, dtype=logits.data.dtype)
        np.add.at(seg_dot, seg, t)
        return s * (g - seg_dot[seg])

    return _emit(s, [(logits, d_logits)])


def rows_scatter(values, positions, n_rows: int) -> Tensor:
    """Place value rows at unique row positions of a zero matrix."""
    values = as_tensor(values)
    pos = np.asarray(positions, dtype=np.int64)
    out = np.zeros((n_rows,) + values.data.shape[1:], dtype=values.data.dtype)
    out[pos] = values.data
    return _emit(out, [(values, lambda g: g[pos])])


def rows_replace(base, idx, rows) -> Tensor:
    """Copy of `base` with rows at unique indices `idx` replaced."""
    base, rows = as_tensor(base), as_tensor(rows)
    idx = np.asarray(idx, dtype=np.int64)
    out = base.data.copy()
    out[idx] = rows.data

    def d_base(g):
        gb = g.copy()
        gb[idx] = 0.0
        return gb

    return _emit(out, [(base, d_base), (rows, lambda g: g[idx])])


def broadcast_rows(v, n: int) -> Tensor:
    v = as_tensor(v)
    out = np.broadcast_to(v.data, (n,) + v.data.shape).copy()
    return _emit(out, [(v, lambda g: g.sum(axis=0))])


def transpose(x) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ValueError("transpose expects a matrix")
    return _emit(x.data.T.copy(), [(x, lambda g: g.T)])


def row_sum(x) -> Tensor:
    """Sum each row of a matrix: [n, d] -> [n]."""
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ValueError("row_sum expects a matrix")
    return _emit(x.data.sum(axis=1),
                 [(x, lambda g: np.repeat(g[:, None], x.data.shape[1], axis=1))])


def scale_rows(x, s) -> Tensor:
    """Multiply row i of a matrix by s[i]."""
    x, s = as_tensor(x), as_tensor(s)
    if x.data.ndim != 2 or s.data.shape != (x.data.shape[0],):
        raise ValueError(f"scale_rows: {x.data.shape} by {s.data.shape}")
    return _emit(x.data * s.data[:, None], [
        (x, lambda g: g * s.data[:, None]),
        (s, lambda g: (g * x.data).sum(axis=1)),
    ])


def concat_cols(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[0] != b.data.shape[0]:
        raise ValueError(f"concat_cols: {a.data.shape} vs {b.data.shape}")
    na = a.data.shape[1]
    return _emit(np.concatenate([a.data, b.data], axis=1), [
        (a, lambda g: g[:, :na]),
        (b, lambda g: g[:, na:]),
    ])
