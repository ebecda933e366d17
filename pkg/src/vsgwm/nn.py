"""Small layer library over :mod:`vsgwm.autodiff`."""
from __future__ import annotations

import copy

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def truncated_normal(rng, shape, fan_in):
    std = 1.0 / np.sqrt(fan_in)
    x = rng.standard_normal(shape)
    bad = np.abs(x) > 2
    while bad.any():
        x[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(x) > 2
    # rescale for the variance lost to truncation at 2 sigma
    return x * std / 0.87962566103423978


def orthogonal(rng, shape):
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


def param(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


class Module:
    def named_parameters(self, prefix=""):
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor):
                if val.requires_grad:
                    yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def frozen_copy(self):
        """Deep copy whose tensors no longer take gradients."""
        clone = copy.deepcopy(self)
        for p in clone.parameters():
            p.requires_grad = False
        return clone

    def load_from(self, other: "Module"):
        mine = dict(_all_tensors(self))
        for name, t in _all_tensors(other):
            mine[name].data = t.data.copy()


def _all_tensors(mod, prefix=""):
    for key, val in vars(mod).items():
        name = f"{prefix}{key}"
        if isinstance(val, Tensor):
            yield name, val
        elif isinstance(val, Module):
            yield from _all_tensors(val, name + ".")
        elif isinstance(val, (list, tuple)):
            for i, item in enumerate(val):
                if isinstance(item, Module):
                    yield from _all_tensors(item, f"{name}.{i}.")
                elif isinstance(item, Tensor):
                    yield f"{name}.{i}", item


class Linear(Module):
    def __init__(self, rng, n_in, n_out, bias=True, init=None):
        w = init if init is not None else truncated_normal(rng, (n_in, n_out), n_in)
        self.weight = param(w)
        self.bias = param(np.zeros(n_out)) if bias else None

    def __call__(self, x):
        return ad.linear(x, self.weight, self.bias)


class MLP(Module):
    """Stack of ELU-activated dense layers with an optional linear output."""

    def __init__(self, rng, n_in, hidden, n_out=None, layers=1):
        sizes = [n_in] + [hidden] * layers
        self.hidden = [Linear(rng, a, b) for a, b in zip(sizes[:-1], sizes[1:])]
        self.out = Linear(rng, sizes[-1], n_out) if n_out is not None else None

    def __call__(self, x):
        for layer in self.hidden:
            x = ad.elu(layer(x))
        return self.out(x) if self.out is not None else x


class ConvEncoder(Module):
    """Four stride-2 convolutions (kernel 4, padding 1) halving H and W each stage."""

    def __init__(self, rng, resolution, depth=8, channels=3, stages=4):
        if resolution % (2 ** stages):
            raise ValueError(f"resolution {resolution} not divisible by {2 ** stages}")
        self.channels = channels
        self.resolution = resolution
        self.convs = []
        c_in = channels
        for i in range(stages):
            c_out = depth * 2 ** i
            fan_in = c_in * 16
            self.convs.append(Conv2d(rng, c_in, c_out, fan_in))
            c_in = c_out
        side = resolution // 2 ** stages
        self.out_dim = c_in * side * side

    def __call__(self, image):
        """``image``: (..., H, W, C) in [-0.5, 0.5]; returns (..., out_dim)."""
        if image.shape[-1] != self.channels:
            raise ad.ShapeError(
                f"encode: expected {self.channels} channels, got image shape {image.shape}")
        lead = image.shape[:-3]
        x = image.reshape((-1,) + image.shape[-3:]).transpose(0, 3, 1, 2)
        for conv in self.convs:
            x = ad.elu(conv(x))
        return x.reshape(lead + (self.out_dim,))


class Conv2d(Module):
    def __init__(self, rng, c_in, c_out, fan_in, k=4, stride=2, padding=1):
        self.weight = param(truncated_normal(rng, (c_out, c_in, k, k), fan_in))
        self.bias = param(np.zeros(c_out))
        self.stride, self.padding = stride, padding

    def __call__(self, x):
        return ad.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    def __init__(self, rng, c_in, c_out, k=4, stride=2, padding=1):
        self.weight = param(truncated_normal(rng, (c_in, c_out, k, k), c_in * k * k // 4))
        self.bias = param(np.zeros(c_out))
        self.stride, self.padding = stride, padding

    def __call__(self, x):
        return ad.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvDecoder(Module):
    """Dense projection then stride-2 transposed convolutions back to (H, W, C)."""

    def __init__(self, rng, n_in, resolution, depth=8, channels=3, stages=4):
        self.side = resolution // 2 ** stages
        self.c0 = depth * 2 ** (stages - 1)
        self.channels = channels
        self.project = Linear(rng, n_in, self.c0 * self.side * self.side)
        self.deconvs = []
        c_in = self.c0
        for i in reversed(range(stages)):
            c_out = channels if i == 0 else depth * 2 ** (i - 1)
            self.deconvs.append(ConvTranspose2d(rng, c_in, c_out))
            c_in = c_out

    def __call__(self, feat):
        lead = feat.shape[:-1]
        x = self.project(feat).reshape((-1, self.c0, self.side, self.side))
        for i, deconv in enumerate(self.deconvs):
            x = deconv(x)
            if i < len(self.deconvs) - 1:
                x = ad.elu(x)
        x = x.transpose(0, 2, 3, 1)
        return x.reshape(lead + x.shape[1:])
