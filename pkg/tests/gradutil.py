"""Central finite-difference gradient checking against the tape."""

import numpy as np

from zrforge.numerics import Tape


def gradcheck(make_loss, tensors, h, tol):
    """Max relative error between tape gradients and central differences.

    `make_loss` must rebuild the scalar loss from the given tensors'
    current data on every call. The relative error uses a unit floor so
    near-zero gradients compare absolutely.
    """
    for t in tensors:
        t.grad = None
    with Tape() as tape:
        tape.backward(make_loss())
    worst = 0.0
    for t in tensors:
        grad = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(make_loss().data)
            flat[i] = orig - h
            f_minus = float(make_loss().data)
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            err = abs(fd - gflat[i]) / max(1.0, abs(fd), abs(gflat[i]))
            worst = max(worst, err)
    assert worst <= tol, f"gradient mismatch: rel err {worst:.3e} > {tol}"
    return worst


FD_SETTINGS = {np.float32: (1e-3, 1e-3), np.float64: (1e-6, 1e-6)}
