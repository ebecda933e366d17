"""Latent distributions, their samplers, and the KL terms of the model loss.

KL helpers return a scalar: summed over the latent dimension(s) and averaged
over every leading (batch / time) axis.  The ``*_elementwise`` variants keep
the per-dimension values for masking.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

PROB_CLAMP = 1e-6
MIN_STD = 0.1
LOG_2PI = float(np.log(2 * np.pi))


@dataclass
class DiagGaussian:
    mean: Tensor
    std: Tensor

    @classmethod
    def from_raw(cls, raw: Tensor, min_std=MIN_STD):
        """Split the last axis into (mean, raw std); std = softplus(raw) + floor."""
        n = raw.shape[-1] // 2
        mean, std_raw = ad.split(raw, [n, n], axis=-1)
        return cls(mean, ad.softplus(std_raw) + min_std)

    def detach(self):
        return DiagGaussian(ad.stop_gradient(self.mean), ad.stop_gradient(self.std))

    def mode(self):
        return self.mean

    def entropy(self):
        return ad.sum_(ad.log(self.std) + 0.5 * (1 + LOG_2PI), axis=-1)


@dataclass
class BernoulliVec:
    probs: Tensor

    @classmethod
    def from_probs(cls, probs: Tensor):
        return cls(ad.clip(probs, PROB_CLAMP, 1 - PROB_CLAMP))


@dataclass
class CategoricalLatent:
    """``logits`` shaped (..., groups, classes)."""

    logits: Tensor

    @classmethod
    def from_flat(cls, flat: Tensor, groups, classes):
        return cls(flat.reshape(flat.shape[:-1] + (groups, classes)))

    def probs(self, unimix=0.01):
        p = ad.softmax(self.logits, axis=-1)
        if unimix:
            p = p * (1 - unimix) + unimix / self.logits.shape[-1]
        return p

    def detach(self):
        return CategoricalLatent(ad.stop_gradient(self.logits))

    def mode(self):
        idx = np.argmax(self.logits.data, axis=-1)
        onehot = np.eye(self.logits.shape[-1], dtype=self.logits.data.dtype)[idx]
        flat = ad.straight_through(onehot, self.probs())
        return flat.reshape(flat.shape[:-2] + (-1,))


# -- sampling ----------------------------------------------------------------

def gaussian_rsample(d: DiagGaussian, noise) -> Tensor:
    noise = noise.data if isinstance(noise, Tensor) else np.asarray(noise)
    if noise.shape != d.mean.shape:
        raise ad.ShapeError(f"gaussian_rsample: noise {noise.shape} vs mean {d.mean.shape}")
    return d.mean + d.std * noise.astype(d.mean.data.dtype, copy=False)


def bernoulli_gate_sample(probs: Tensor, rng) -> Tensor:
    """Binary draw in the forward pass, identity gradient to ``probs``."""
    u = (rng.random(probs.shape) < probs.data).astype(probs.data.dtype)
    return ad.straight_through(u, probs)


def categorical_sample_st(c: CategoricalLatent, rng, unimix=0.01) -> Tensor:
    """One-hot sample per group, flattened to (..., groups * classes)."""
    probs = c.probs(unimix)
    p = probs.data.astype(np.float64)
    cdf = np.cumsum(p, axis=-1)
    draw = rng.random(p.shape[:-1] + (1,)) * cdf[..., -1:]
    idx = np.minimum((draw >= cdf).sum(axis=-1), p.shape[-1] - 1)
    onehot = np.eye(p.shape[-1], dtype=probs.data.dtype)[idx]
    out = ad.straight_through(onehot, probs)
    return out.reshape(out.shape[:-2] + (-1,))


# -- KL divergences ------------------------------------------------------------

def _batch_mean(x: Tensor) -> Tensor:
    return ad.mean(x) if x.ndim else x


def gaussian_kl_elementwise(q: DiagGaussian, p: DiagGaussian) -> Tensor:
    if q.mean.shape != p.mean.shape:
        raise ad.ShapeError(f"gaussian_kl: shapes {q.mean.shape} vs {p.mean.shape}")
    var_ratio = ad.square(q.std / p.std)
    diff = ad.square((q.mean - p.mean) / p.std)
    return 0.5 * (var_ratio + diff - 1.0 - ad.log(var_ratio))


def gaussian_kl(q: DiagGaussian, p: DiagGaussian) -> Tensor:
    return _batch_mean(ad.sum_(gaussian_kl_elementwise(q, p), axis=-1))


def categorical_kl_elementwise(q: CategoricalLatent, p: CategoricalLatent, unimix=0.01) -> Tensor:
    """Per-group KL, shape (..., groups)."""
    qp, pp = q.probs(unimix), p.probs(unimix)
    return ad.sum_(qp * (ad.log(qp) - ad.log(pp)), axis=-1)


def categorical_kl(q, p, unimix=0.01) -> Tensor:
    return _batch_mean(ad.sum_(categorical_kl_elementwise(q, p, unimix), axis=-1))


def bernoulli_kl_elementwise(q_probs: Tensor, kappa: float) -> Tensor:
    q = ad.clip(q_probs, PROB_CLAMP, 1 - PROB_CLAMP)
    return (q * (ad.log(q) - float(np.log(kappa)))
            + (1 - q) * (ad.log(1 - q) - float(np.log(1 - kappa))))


def bernoulli_kl(q_probs: Tensor, kappa: float) -> Tensor:
    """KL(Bern(q) || Bern(kappa)) summed over the last axis, mean elsewhere."""
    return _batch_mean(ad.sum_(bernoulli_kl_elementwise(q_probs, kappa), axis=-1))


def kl_elementwise(q, p) -> Tensor:
    if type(q) is not type(p):
        raise TypeError(f"KL between different families: {type(q).__name__} vs {type(p).__name__}")
    if isinstance(q, DiagGaussian):
        return gaussian_kl_elementwise(q, p)
    if isinstance(q, CategoricalLatent):
        return categorical_kl_elementwise(q, p)
    raise TypeError(f"no KL for {type(q).__name__}")


def balanced_kl(posterior, prior, balance=0.8, mask=None) -> Tensor:
    """``balance * KL(sg(q)||p) + (1 - balance) * KL(q||sg(p))``.

    ``mask`` (plain array broadcastable to the per-dim KL) zeroes dimensions
    before the sum, used for the masked KL of the single-path model.
    """
    lhs = kl_elementwise(posterior.detach(), prior)
    rhs = kl_elementwise(posterior, prior.detach())
    per_dim = balance * lhs + (1 - balance) * rhs
    if mask is not None:
        per_dim = per_dim * np.asarray(mask, dtype=per_dim.data.dtype)
    return _batch_mean(ad.sum_(per_dim, axis=-1))
