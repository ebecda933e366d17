"""Adam with decoupled weight decay and global-norm gradient clipping."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor

log = logging.getLogger(__name__)


def global_norm(grads) -> float:
    total = 0.0
    for g in grads:
        if g is not None:
            total += float(np.sum(np.square(g, dtype=np.float64)))
    return float(np.sqrt(total))


def clip_global_norm(grads, max_norm=100.0):
    """Scale every gradient by ``max_norm / norm`` when the joint L2 norm exceeds it."""
    norm = global_norm(grads)
    if not np.isfinite(norm) or norm <= max_norm:
        return list(grads), norm
    scale = max_norm / norm
    return [None if g is None else (g * scale).astype(g.dtype, copy=False) for g in grads], norm


@dataclass
class AdamState:
    lr: float
    eps: float = 1e-5
    weight_decay: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    skipped: int = 0


def adam_step(params, grads, state: AdamState) -> bool:
    """Apply one AdamW update in place.  Returns False when the step was skipped."""
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    for g in grads:
        if g is not None and not np.all(np.isfinite(g)):
            state.skipped += 1
            log.warning("non-finite gradient at step %d; update skipped", state.step)
            return False
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * p.data
        p.data -= (state.lr * update).astype(p.data.dtype, copy=False)
    return True


class Adam:
    """Owns a parameter list; ``step()`` clips, updates and clears grads."""

    def __init__(self, params, lr, eps=1e-5, weight_decay=1e-6, clip=100.0):
        self.params: list[Tensor] = list(params)
        self.state = AdamState(lr=lr, eps=eps, weight_decay=weight_decay)
        self.clip = clip

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [p.grad for p in self.params]
        if self.clip:
            grads, norm = clip_global_norm(grads, self.clip)
        else:
            norm = global_norm(grads)
        ok = adam_step(self.params, grads, self.state)
        self.zero_grad()
        return norm, ok

    def state_arrays(self, prefix):
        out = {f"{prefix}/step": np.array([self.state.step], dtype=np.int64)}
        for i, (m, v) in enumerate(zip(self.state.m, self.state.v)):
            out[f"{prefix}/m{i}"] = m
            out[f"{prefix}/v{i}"] = v
        return out

    def load_state_arrays(self, prefix, arrays):
        key = f"{prefix}/step"
        if key not in arrays:
            return
        self.state.step = int(arrays[key][0])
        n = len(self.params)
        if f"{prefix}/m0" in arrays:
            self.state.m = [arrays[f"{prefix}/m{i}"].copy() for i in range(n)]
            self.state.v = [arrays[f"{prefix}/v{i}"].copy() for i in range(n)]
