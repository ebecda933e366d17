"""Central finite-difference checks for the autodiff engine."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad


def numeric_grad(fn, tensors, eps=1e-4):
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data, dtype=np.float64)
        flat, gflat = t.data.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            hi = float(fn().data)
            flat[k] = orig - eps
            lo = float(fn().data)
            flat[k] = orig
            gflat[k] = (hi - lo) / (2 * eps)
        grads.append(g)
    return grads


def analytic_grad(fn, tensors):
    for t in tensors:
        t.grad = None
    ad.backward(fn())
    out = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    for t in tensors:
        t.grad = None
    return out


def relative_error(a, n):
    """Norm-wise relative error ``|a - n| / max(|a|, |n|)``; 0 if both vanish."""
    a, n = np.ravel(a), np.ravel(n)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale < 1e-10:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def check_gradients(fn, tensors, eps=1e-4):
    """Largest relative error between analytic and numeric gradients over ``tensors``.

    ``fn`` rebuilds the scalar loss from the current tensor values.  Run in
    float64 (see :func:`vsgwm.autodiff.default_dtype`).
    """
    a = analytic_grad(fn, tensors)
    n = numeric_grad(fn, tensors, eps)
    return max(relative_error(x, y) for x, y in zip(a, n))
