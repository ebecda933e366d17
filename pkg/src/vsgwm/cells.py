"""Recurrent transition cells: GRU (RSSM), VSG, SVSG and the stochastic SSM baseline."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .distributions import (DiagGaussian, PROB_CLAMP, bernoulli_gate_sample,
                            gaussian_rsample)
from .nn import MLP, Linear, Module, orthogonal, truncated_normal


@dataclass
class GateActivations:
    v: Tensor
    u_tilde: Tensor
    u: Tensor


def mix(u, candidate: Tensor, prev: Tensor) -> Tensor:
    """``u * candidate + (1 - u) * prev``."""
    return u * candidate + (1 - u) * prev


class GatedCell(Module):
    """Reset gate, update gate and candidate over ``[state, input]``.

    The three affine maps share the concatenated input; the state block of
    each weight matrix is orthogonally initialised.
    """

    def __init__(self, rng, state_dim, input_dim):
        self.state_dim = state_dim
        self.input_dim = input_dim
        self.W_v = self._linear(rng)
        self.W_u = self._linear(rng)
        self.W_c = self._linear(rng)

    def _linear(self, rng):
        d, n = self.state_dim, self.input_dim
        w = np.concatenate([orthogonal(rng, (d, d)),
                            truncated_normal(rng, (n, d), d + n)], axis=0)
        return Linear(rng, d + n, d, init=w)

    def gates(self, prev: Tensor, i: Tensor):
        if prev.shape[:-1] != i.shape[:-1]:
            raise ad.ShapeError(f"cell: state batch {prev.shape} vs input batch {i.shape}")
        x = ad.concat([prev, i], axis=-1)
        v = ad.sigmoid(self.W_v(x))
        u_tilde = ad.sigmoid(self.W_u(x))
        cand = ad.tanh(v * self.W_c(x))
        return v, u_tilde, cand


class GRUCell(GatedCell):
    def __call__(self, h_prev, i):
        return gru_step(self, h_prev, i)


def gru_step(cell: GatedCell, h_prev: Tensor, i: Tensor) -> Tensor:
    _, u, cand = cell.gates(h_prev, i)
    return mix(u, cand, h_prev)


class VSGCell(GatedCell):
    def __call__(self, h_prev, i, rng, relaxed=False, force_open=False):
        return vsg_step(self, h_prev, i, rng, relaxed, force_open)


def vsg_step(cell: GatedCell, h_prev: Tensor, i: Tensor, rng, relaxed=False, force_open=False):
    """One binary-gated update.

    ``relaxed`` substitutes the gate probability for the sample (used for
    the equivalence and finite-difference checks); ``force_open`` fixes every
    gate at 1.
    """
    v, u_tilde, cand = cell.gates(h_prev, i)
    u_tilde = ad.clip(u_tilde, PROB_CLAMP, 1 - PROB_CLAMP)
    if relaxed:
        u = u_tilde
    elif force_open:
        u = ad.straight_through(np.ones(u_tilde.shape), u_tilde)
    else:
        u = bernoulli_gate_sample(u_tilde, rng)
    return mix(u, cand, h_prev), GateActivations(v, u_tilde, u)


@dataclass
class SvsgState:
    s: Optional[Tensor]
    s_hat: Tensor
    prior: DiagGaussian
    posterior: Optional[DiagGaussian]
    gates: GateActivations


class SVSGCell(GatedCell):
    """Single stochastic path; prior and posterior heads read the shared candidate."""

    def __init__(self, rng, state_dim, input_dim, embed_dim, hidden=None):
        super().__init__(rng, state_dim, input_dim)
        hidden = hidden or state_dim
        self.embed_dim = embed_dim
        self.prior_head = MLP(rng, state_dim, hidden, 2 * state_dim, layers=1)
        self.post_head = MLP(rng, state_dim + embed_dim, hidden, 2 * state_dim, layers=1)

    def __call__(self, s_prev, i, obs_embed=None, rng=None, **kw):
        return svsg_step(self, s_prev, i, obs_embed, rng, **kw)


def svsg_step(cell: SVSGCell, s_prev: Tensor, i: Tensor, obs_embed=None, rng=None,
              posterior=None, sample=True, gate=None, relaxed=False) -> SvsgState:
    """One SVSG step; one gate draw is shared by the prior and posterior branch.

    ``gate`` overrides the Bernoulli draw with a fixed binary array.
    """
    if posterior is None:
        posterior = obs_embed is not None
    if posterior and obs_embed is None:
        raise ValueError("svsg_step: posterior requested without an observation embedding")
    v, u_tilde, cand = cell.gates(s_prev, i)
    u_tilde = ad.clip(u_tilde, PROB_CLAMP, 1 - PROB_CLAMP)
    if relaxed:
        u = u_tilde
    elif gate is not None:
        u = ad.straight_through(np.asarray(gate, dtype=u_tilde.data.dtype), u_tilde)
    else:
        u = bernoulli_gate_sample(u_tilde, rng)
    prior = DiagGaussian.from_raw(cell.prior_head(cand))
    z_hat = _draw(prior, rng, sample)
    s_hat = mix(u, z_hat, s_prev)
    post, s = None, None
    if posterior:
        post = DiagGaussian.from_raw(cell.post_head(ad.concat([cand, obs_embed], axis=-1)))
        z = _draw(post, rng, sample)
        s = mix(u, z, s_prev)
    return SvsgState(s, s_hat, prior, post, GateActivations(v, u_tilde, u))


def _draw(d: DiagGaussian, rng, sample):
    if not sample:
        return d.mean
    return gaussian_rsample(d, rng.standard_normal(d.mean.shape))


@dataclass
class SsmState:
    s: Optional[Tensor]
    s_hat: Tensor
    prior: DiagGaussian
    posterior: Optional[DiagGaussian]


class SSMCell(Module):
    """Purely stochastic transition: no gates, no deterministic path."""

    def __init__(self, rng, state_dim, input_dim, embed_dim, hidden=None):
        hidden = hidden or state_dim
        self.state_dim = state_dim
        self.embed_dim = embed_dim
        self.trunk = Linear(rng, state_dim + input_dim, hidden)
        self.prior_head = Linear(rng, hidden, 2 * state_dim)
        self.post_head = MLP(rng, hidden + embed_dim, hidden, 2 * state_dim, layers=1)

    def __call__(self, s_prev, i, obs_embed=None, rng=None, **kw):
        return ssm_step(self, s_prev, i, obs_embed, rng, **kw)


def ssm_step(cell: SSMCell, s_prev, i, obs_embed=None, rng=None, posterior=None, sample=True):
    if posterior is None:
        posterior = obs_embed is not None
    if posterior and obs_embed is None:
        raise ValueError("ssm_step: posterior requested without an observation embedding")
    if s_prev.shape[:-1] != i.shape[:-1]:
        raise ad.ShapeError(f"ssm_step: state batch {s_prev.shape} vs input batch {i.shape}")
    hid = ad.elu(cell.trunk(ad.concat([s_prev, i], axis=-1)))
    prior = DiagGaussian.from_raw(cell.prior_head(hid))
    s_hat = _draw(prior, rng, sample)
    post, s = None, None
    if posterior:
        post = DiagGaussian.from_raw(cell.post_head(ad.concat([hid, obs_embed], axis=-1)))
        s = _draw(post, rng, sample)
    return SsmState(s, s_hat, prior, post)
