"""World model: encoder, transition cell, predictor heads and the training loss."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .cells import GRUCell, SSMCell, SVSGCell, VSGCell, gru_step, ssm_step, svsg_step, vsg_step
from .distributions import (LOG_2PI, CategoricalLatent, DiagGaussian, balanced_kl,
                            bernoulli_kl, categorical_sample_st, gaussian_rsample)
from .nn import MLP, ConvDecoder, ConvEncoder, Linear, Module

log = logging.getLogger(__name__)

VARIANTS = ("rssm", "vsg", "svsg", "ssm")


class NonFiniteLoss(RuntimeError):
    pass


@dataclass
class LossWeights:
    beta: float = 1.0
    alpha: float = 0.1
    kappa: float = 0.3
    balance: float = 0.8

    def __post_init__(self):
        if self.beta < 0 or self.alpha < 0:
            raise ValueError("loss scales must be non-negative")
        if not 0 <= self.balance <= 1:
            raise ValueError(f"balance must lie in [0, 1], got {self.balance}")
        if not 0 < self.kappa < 1:
            raise ValueError(f"kappa must lie in (0, 1), got {self.kappa}")


@dataclass
class WorldModelConfig:
    variant: str = "vsg"
    obs_shape: tuple = (32, 32, 3)
    action_dim: int = 2
    deter: int = 128
    stoch: int = 32
    latent: str = "gaussian"
    groups: int = 32
    classes: int = 32
    svsg_state: int = 128
    units: int = 128
    head_layers: int = 2
    cnn_depth: int = 8
    embed_units: int = 128
    discount: float = 0.99
    kl_mask: bool = True
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        self.obs_shape = tuple(self.obs_shape)
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)

    @property
    def image_obs(self):
        return len(self.obs_shape) == 3

    @property
    def gated(self):
        return self.variant in ("vsg", "svsg")

    def to_dict(self):
        d = asdict(self)
        d["obs_shape"] = list(self.obs_shape)
        return d


@dataclass
class ModelState:
    """``h`` is the deterministic path (absent for svsg/ssm); ``z`` the stochastic one."""

    h: Optional[Tensor]
    z: Tensor

    @property
    def s(self) -> Tensor:
        return self.z if self.h is None else ad.concat([self.h, self.z], axis=-1)

    def detach(self):
        return ModelState(None if self.h is None else ad.stop_gradient(self.h),
                          ad.stop_gradient(self.z))


@dataclass
class StepInfo:
    prior: object
    posterior: object = None
    gates: object = None
    prior_state: object = None


@dataclass
class Trajectory:
    states: list
    actions: list
    entropies: list
    feats: list = field(default_factory=list)

    def __len__(self):
        return len(self.actions)


def unit_gaussian_nll(pred: Tensor, target, event_dims: int) -> Tensor:
    """Negative log-likelihood under N(pred, 1), summed over the trailing
    ``event_dims`` axes and averaged over the rest.  Includes the
    0.5 * log(2 pi) normalisation per element."""
    err = ad.square(pred - target)
    n = int(np.prod(err.shape[err.ndim - event_dims:])) if event_dims else 1
    if event_dims:
        err = ad.sum_(err.reshape(err.shape[:err.ndim - event_dims] + (n,)), axis=-1)
    return ad.mean(err) * 0.5 + 0.5 * LOG_2PI * n


def preprocess_obs(obs: np.ndarray, image: bool, dtype=None) -> np.ndarray:
    dtype = dtype or ad.get_default_dtype()
    if image:
        return np.asarray(obs, dtype=dtype) / 255.0 - 0.5
    return np.asarray(obs, dtype=dtype)


class WorldModel(Module):
    def __init__(self, cfg: WorldModelConfig, rng):
        self.cfg = cfg
        a = cfg.action_dim
        if cfg.image_obs:
            res, _, ch = cfg.obs_shape
            self.encoder = ConvEncoder(rng, res, cfg.cnn_depth, ch)
            embed = self.encoder.out_dim
        else:
            self.encoder = MLP(rng, cfg.obs_shape[0], cfg.embed_units, layers=2)
            embed = cfg.embed_units
        self.embed_dim = embed
        v = cfg.variant
        if v in ("rssm", "vsg"):
            zdim = cfg.groups * cfg.classes if cfg.latent == "categorical" else cfg.stoch
            self.z_dim = zdim
            self.input_embed = Linear(rng, zdim + a, cfg.deter)
            cell_cls = GRUCell if v == "rssm" else VSGCell
            self.cell = cell_cls(rng, cfg.deter, cfg.deter)
            out = zdim if cfg.latent == "categorical" else 2 * zdim
            self.prior_head = MLP(rng, cfg.deter, cfg.units, out, layers=1)
            self.post_head = MLP(rng, cfg.deter + embed, cfg.units, out, layers=1)
            self.feat_dim = cfg.deter + zdim
        else:
            sdim = cfg.svsg_state
            self.z_dim = sdim
            self.input_embed = Linear(rng, a, sdim)
            if v == "svsg":
                self.cell = SVSGCell(rng, sdim, sdim, embed, cfg.units)
            else:
                self.cell = SSMCell(rng, sdim, sdim, embed, cfg.units)
            self.feat_dim = sdim
        if cfg.image_obs:
            self.decoder = ConvDecoder(rng, self.feat_dim, cfg.obs_shape[0], cfg.cnn_depth,
                                       cfg.obs_shape[2])
        else:
            self.decoder = MLP(rng, self.feat_dim, cfg.units, cfg.obs_shape[0], layers=2)
        self.reward_head = MLP(rng, self.feat_dim, cfg.units, 1, layers=cfg.head_layers)
        self.discount_head = MLP(rng, self.feat_dim, cfg.units, 1, layers=cfg.head_layers)

    # -- state helpers ------------------------------------------------------
    def initial_state(self, batch):
        dt = ad.get_default_dtype()
        z = Tensor(np.zeros((batch, self.z_dim), dtype=dt))
        if self.cfg.variant in ("rssm", "vsg"):
            return ModelState(Tensor(np.zeros((batch, self.cfg.deter), dtype=dt)), z)
        return ModelState(None, z)

    def encode(self, obs: Tensor) -> Tensor:
        return self.encoder(obs)

    def _latent_dist(self, raw):
        if self.cfg.latent == "categorical":
            return CategoricalLatent.from_flat(raw, self.cfg.groups, self.cfg.classes)
        return DiagGaussian.from_raw(raw)

    def _latent_sample(self, dist, rng, sample=True):
        if isinstance(dist, CategoricalLatent):
            return categorical_sample_st(dist, rng) if sample else dist.mode()
        if not sample:
            return dist.mean
        return gaussian_rsample(dist, rng.standard_normal(dist.mean.shape))

    def _input(self, state: ModelState, action: Tensor):
        if self.cfg.variant in ("rssm", "vsg"):
            return ad.elu(self.input_embed(ad.concat([state.z, action], axis=-1)))
        return ad.elu(self.input_embed(action))

    def _deter(self, state, i, rng, relaxed, force_open):
        if self.cfg.variant == "rssm":
            return gru_step(self.cell, state.h, i), None
        return vsg_step(self.cell, state.h, i, rng, relaxed=relaxed, force_open=force_open)

    def obs_step(self, state: ModelState, action, embed, rng, sample=True, relaxed=False,
                 force_open=False):
        """Posterior step.  Returns (posterior state, StepInfo)."""
        i = self._input(state, action)
        v = self.cfg.variant
        if v in ("rssm", "vsg"):
            h, gates = self._deter(state, i, rng, relaxed, force_open)
            prior = self._latent_dist(self.prior_head(h))
            post = self._latent_dist(self.post_head(ad.concat([h, embed], axis=-1)))
            z = self._latent_sample(post, rng, sample)
            return ModelState(h, z), StepInfo(prior, post, gates)
        if v == "svsg":
            gate = np.ones(state.z.shape) if force_open else None
            out = svsg_step(self.cell, state.z, i, embed, rng, posterior=True, sample=sample,
                            gate=gate, relaxed=relaxed)
            return ModelState(None, out.s), StepInfo(out.prior, out.posterior, out.gates,
                                                      ModelState(None, out.s_hat))
        out = ssm_step(self.cell, state.z, i, embed, rng, posterior=True, sample=sample)
        return ModelState(None, out.s), StepInfo(out.prior, out.posterior, None,
                                                  ModelState(None, out.s_hat))

    def img_step(self, state: ModelState, action, rng, sample=True):
        """Prior-only step; never touches observations."""
        i = self._input(state, action)
        v = self.cfg.variant
        if v in ("rssm", "vsg"):
            h, gates = self._deter(state, i, rng, False, False)
            prior = self._latent_dist(self.prior_head(h))
            return ModelState(h, self._latent_sample(prior, rng, sample)), StepInfo(prior, None, gates)
        if v == "svsg":
            out = svsg_step(self.cell, state.z, i, None, rng, posterior=False, sample=sample)
            return ModelState(None, out.s_hat), StepInfo(out.prior, None, out.gates)
        out = ssm_step(self.cell, state.z, i, None, rng, posterior=False, sample=sample)
        return ModelState(None, out.s_hat), StepInfo(out.prior)

    # -- heads ----------------------------------------------------------------
    def decode(self, feat: Tensor) -> Tensor:
        return self.decoder(feat)

    def reward(self, feat: Tensor) -> Tensor:
        out = self.reward_head(feat)
        return out.reshape(out.shape[:-1])

    def discount_logit(self, feat: Tensor) -> Tensor:
        out = self.discount_head(feat)
        return out.reshape(out.shape[:-1])

    def discount(self, feat: Tensor) -> Tensor:
        return ad.sigmoid(self.discount_logit(feat))

    # -- sequence inference ----------------------------------------------------
    def observe_sequence(self, obs: Tensor, prev_actions: Tensor, rng, state=None, sample=True,
                         relaxed=False, force_open=False):
        """Posterior unroll over (B, L, ...) inputs; returns per-step lists."""
        b, length = prev_actions.shape[:2]
        embed = self.encode(obs)
        state = state or self.initial_state(b)
        posts, infos = [], []
        for t in range(length):
            state, info = self.obs_step(state, prev_actions[:, t], embed[:, t], rng,
                                        sample, relaxed, force_open)
            posts.append(state)
            infos.append(info)
        return posts, infos

    def observe(self, batch, weights: LossWeights | None = None, rng=None, relaxed=False,
                force_open=False):
        """Unroll the posterior over a replay batch and compute the model loss.

        ``batch`` maps ``obs`` (B, L, ...), ``prev_action`` (B, L, A),
        ``reward`` (B, L) and ``terminal`` (B, L).  Returns
        ``(posterior states, losses, stats)``; ``losses`` holds the weighted
        components plus ``total`` (their sum).
        """
        w = weights or self.cfg.weights
        cfg = self.cfg
        obs = Tensor(preprocess_obs(batch["obs"], cfg.image_obs))
        prev_actions = Tensor(np.asarray(batch["prev_action"], dtype=ad.get_default_dtype()))
        posts, infos = self.observe_sequence(obs, prev_actions, rng, relaxed=relaxed,
                                                force_open=force_open)
        feats = ad.stack([s.s for s in posts], axis=1)

        image_loss = unit_gaussian_nll(self.decode(feats), obs, len(cfg.obs_shape))
        reward_t = np.asarray(batch["reward"], dtype=feats.data.dtype)
        reward_loss = unit_gaussian_nll(self.reward(feats), reward_t, 0)
        disc_target = cfg.discount * (1.0 - np.asarray(batch["terminal"], dtype=feats.data.dtype))
        logit = self.discount_logit(feats)
        discount_loss = -ad.mean(disc_target * ad.log_sigmoid(logit)
                                 + (1 - disc_target) * ad.log_sigmoid(-logit))

        prior = _stack_dists([i.prior for i in infos])
        post = _stack_dists([i.posterior for i in infos])
        mask = None
        gates = [i.gates for i in infos] if infos[0].gates is not None else None
        if cfg.variant == "svsg" and cfg.kl_mask:
            mask = np.stack([g.u.data for g in gates], axis=1)
        kl = balanced_kl(post, prior, w.balance, mask=mask)

        losses = {"image": image_loss, "reward": reward_loss, "discount": discount_loss,
                  "kl": w.beta * kl}
        stats = {"kl_raw": float(kl.data)}
        if gates is not None:
            u_tilde = ad.stack([g.u_tilde for g in gates], axis=1)
            sparsity = bernoulli_kl(u_tilde, w.kappa)
            stats["sparsity_raw"] = float(sparsity.data)
            stats["gate_prob_mean"] = float(u_tilde.data.mean())
            stats["gate_active_mean"] = float(np.mean([g.u.data.mean() for g in gates]))
            if w.alpha > 0:
                losses["sparsity"] = w.alpha * sparsity
        total = None
        for v in losses.values():
            total = v if total is None else total + v
        losses["total"] = total
        for k, v in losses.items():
            if not np.isfinite(v.data):
                raise NonFiniteLoss(f"non-finite {k} loss: {float(v.data)}")
        return posts, losses, stats

    # -- imagination ------------------------------------------------------------
    def imagine(self, start: ModelState, actor, horizon, rng, deterministic=False) -> Trajectory:
        """Roll the prior ``horizon`` steps from ``start`` with actions from ``actor``."""
        state = start.detach()
        traj = Trajectory([state], [], [], [state.s])
        for _ in range(horizon):
            feat = state.s
            action, entropy = actor.act(feat, rng, deterministic=deterministic)
            state, _ = self.img_step(state, action, rng)
            traj.states.append(state)
            traj.actions.append(action)
            traj.entropies.append(entropy)
            traj.feats.append(state.s)
        return traj


def _stack_dists(dists):
    first = dists[0]
    if isinstance(first, DiagGaussian):
        return DiagGaussian(ad.stack([d.mean for d in dists], axis=1),
                            ad.stack([d.std for d in dists], axis=1))
    return CategoricalLatent(ad.stack([d.logits for d in dists], axis=1))


def open_loop_rollout(model: WorldModel, episode, rng_seed=0, context=15, future=35,
                      n_rollouts=5, start=0):
    """Posterior over ``context`` frames, then prior steps with the recorded actions.

    Returns decoded images (n_rollouts, context + future, H, W, C) in [-0.5, 0.5]
    (or vectors for vector observations).  The posterior pass is shared by
    every rollout, so the first ``context`` frames are identical across rows.
    """
    total = context + future
    obs_all = episode.observations
    acts = episode.actions
    if len(acts) < total or len(obs_all) < total:
        raise ValueError(f"episode has {len(acts)} steps; open-loop rollout needs {total}")
    cfg = model.cfg
    obs = preprocess_obs(obs_all[start:start + total], cfg.image_obs)
    prev = _prev_actions(acts, start, total, cfg.action_dim)
    rng = np.random.Generator(np.random.Philox(rng_seed))
    embed = model.encode(Tensor(obs[None, :context]))
    state = model.initial_state(1)
    ctx_feats = []
    for t in range(context):
        state, _ = model.obs_step(state, Tensor(prev[None, t]), embed[:, t], rng)
        ctx_feats.append(state.s.data)
    # context frames are decoded once and shared, so they match bit for bit
    ctx_frames = model.decode(Tensor(np.concatenate(ctx_feats, axis=0))).data
    rows = []
    for r in range(n_rollouts):
        branch = np.random.Generator(np.random.Philox([rng_seed, r + 1]))
        s = state
        feats = []
        for t in range(context, total):
            s, _ = model.img_step(s, Tensor(prev[None, t]), branch)
            feats.append(s.s.data)
        rows.append(np.concatenate(feats, axis=0))
    future_frames = model.decode(Tensor(np.stack(rows))).data
    ctx = np.broadcast_to(ctx_frames[None], (n_rollouts,) + ctx_frames.shape)
    return np.concatenate([ctx, future_frames], axis=1)


def _prev_actions(actions, start, length, action_dim):
    out = np.zeros((length, action_dim), dtype=ad.get_default_dtype())
    for t in range(length):
        k = start + t
        if k > 0:
            out[t] = actions[k - 1]
    return out
