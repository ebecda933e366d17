"""Actor-critic learning on imagined latent trajectories."""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import MLP, Module
from .optim import Adam

LOG2 = float(np.log(2.0))


@dataclass
class PolicyConfig:
    horizon: int = 15
    discount: float = 0.99
    lam: float = 0.95
    eta_d: float = 1.0
    eta_e: float = 1e-4
    grad_mixing: float = 0.0
    slow_update_interval: int = 100
    actor_lr: float = 8e-5
    critic_lr: float = 8e-5
    units: int = 128
    layers: int = 2
    init_std: float = 1.0
    min_std: float = 1e-4
    clip: float = 100.0

    def __post_init__(self):
        if not 0 <= self.lam <= 1:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if not 0 < self.discount <= 1:
            raise ValueError(f"discount must lie in (0, 1], got {self.discount}")
        if self.horizon < 2:
            raise ValueError(f"horizon must be >= 2, got {self.horizon}")

    def to_dict(self):
        return asdict(self)


class Actor(Module):
    """Tanh-squashed diagonal Gaussian with state-dependent std."""

    def __init__(self, rng, feat_dim, action_dim, units=128, layers=2, init_std=1.0,
                 min_std=1e-4):
        self.net = MLP(rng, feat_dim, units, 2 * action_dim, layers=layers)
        self.action_dim = action_dim
        self.min_std = min_std
        # softplus(raw + shift) = init_std at raw = 0
        self.std_shift = float(np.log(np.expm1(init_std - min_std)))

    def dist(self, feat):
        out = self.net(feat)
        mean, raw = ad.split(out, [self.action_dim, self.action_dim], axis=-1)
        std = ad.softplus(raw + self.std_shift) + self.min_std
        return mean, std

    def act(self, feat, rng, deterministic=False):
        """Returns (action, entropy estimate); entropy is None in deterministic mode."""
        mean, std = self.dist(feat)
        if deterministic:
            return ad.tanh(mean), None
        eps = rng.standard_normal(mean.shape).astype(mean.data.dtype)
        x = mean + std * eps
        action = ad.tanh(x)
        return action, -tanh_gaussian_log_prob(x, mean, std, eps)

    def deterministic(self, feat):
        mean, _ = self.dist(feat)
        return ad.tanh(mean)


def tanh_gaussian_log_prob(x, mean, std, eps=None):
    """log p(tanh(x)) for x ~ N(mean, std), with the squash correction."""
    if eps is None:
        z = (x - mean) / std
    else:
        z = Tensor(eps, dtype=mean.data.dtype)
    base = -0.5 * ad.square(z) - ad.log(std) - 0.5 * float(np.log(2 * np.pi))
    # log(1 - tanh(x)^2) = 2 * (log 2 - x - softplus(-2x))
    correction = 2.0 * (LOG2 - x - ad.softplus(-2.0 * x))
    return ad.sum_(base - correction, axis=-1)


class Critic(Module):
    def __init__(self, rng, feat_dim, units=128, layers=2):
        self.net = MLP(rng, feat_dim, units, 1, layers=layers)

    def __call__(self, feat):
        out = self.net(feat)
        return out.reshape(out.shape[:-1])


def lambda_returns(rewards, values, discounts, lam):
    """Backward recursion V_t = r_t + d_t * ((1 - lam) v_{t+1} + lam V_{t+1}), V_H = v_H.

    Inputs are sequences over the leading axis (lists, arrays or Tensors).
    ``rewards[t]`` and ``discounts[t]`` describe the transition leaving
    step t; the last entry of each is unused.  Returns a list of length H.
    """
    n = len(values)
    if len(rewards) != n or len(discounts) != n:
        raise ValueError(f"lambda_returns: lengths differ (rewards {len(rewards)}, "
                         f"values {n}, discounts {len(discounts)})")
    out = [None] * n
    out[-1] = values[-1]
    for t in range(n - 2, -1, -1):
        out[t] = rewards[t] + discounts[t] * ((1 - lam) * values[t + 1] + lam * out[t + 1])
    return out


def critic_loss(critic: Critic, feats, targets) -> Tensor:
    """Mean over t = 1..H-1 of 0.5 (v(sg(s_t)) - sg(V_t))^2."""
    terms = []
    for feat, target in zip(feats[:-1], targets[:-1]):
        v = critic(ad.stop_gradient(feat))
        tgt = target.data if isinstance(target, Tensor) else np.asarray(target)
        terms.append(ad.mean(0.5 * ad.square(v - tgt)))
    return ad.mean(ad.stack(terms))


def actor_loss(returns, entropies, cfg: PolicyConfig, logps=None, advantages=None) -> Tensor:
    """Mean over t = 1..H-1 of -eta_d V_t - eta_e H_t.

    With ``grad_mixing`` rho > 0 the dynamics term becomes
    (1 - rho) V_t + rho * logp_t * sg(advantage_t).
    """
    terms = []
    for t in range(len(returns) - 1):
        objective = returns[t]
        if cfg.grad_mixing and logps is not None:
            adv = np.asarray(advantages[t].data)
            objective = (1 - cfg.grad_mixing) * objective + cfg.grad_mixing * logps[t] * adv
        term = -cfg.eta_d * objective
        if cfg.eta_e and entropies[t] is not None:
            term = term - cfg.eta_e * entropies[t]
        terms.append(ad.mean(term))
    return ad.mean(ad.stack(terms))


class Behavior:
    def __init__(self, cfg: PolicyConfig, feat_dim, action_dim, rng):
        self.cfg = cfg
        self.actor = Actor(rng, feat_dim, action_dim, cfg.units, cfg.layers, cfg.init_std,
                           cfg.min_std)
        self.critic = Critic(rng, feat_dim, cfg.units, cfg.layers)
        self.target_critic = self.critic.frozen_copy()
        self.actor_opt = Adam(self.actor.parameters(), cfg.actor_lr, clip=cfg.clip)
        self.critic_opt = Adam(self.critic.parameters(), cfg.critic_lr, clip=cfg.clip)
        self.updates = 0

    def update_slow_critic(self, step_count=None):
        """Copy critic -> target every ``slow_update_interval`` gradient steps."""
        step = self.updates if step_count is None else step_count
        if step > 0 and step % self.cfg.slow_update_interval == 0:
            self.target_critic.load_from(self.critic)
            return True
        return False

    def imagine_targets(self, world_model, start, rng):
        cfg = self.cfg
        traj = world_model.imagine(start, self.actor, cfg.horizon - 1, rng)
        feats = traj.feats
        rewards = [world_model.reward(f) for f in feats[1:]]
        discounts = [cfg.discount * world_model.discount(f) for f in feats[1:]]
        zero = Tensor(np.zeros(rewards[0].shape, dtype=rewards[0].data.dtype))
        values = [self.target_critic(f) for f in feats]
        returns = lambda_returns(rewards + [zero], values, discounts + [zero], cfg.lam)
        return traj, returns, values

    def train_step(self, world_model, start, rng):
        """One actor and one critic update from imagined rollouts of ``start``."""
        cfg = self.cfg
        traj, returns, values = self.imagine_targets(world_model, start, rng)
        logps = advantages = None
        if cfg.grad_mixing:
            logps = [-e for e in traj.entropies]
            advantages = [ad.stop_gradient(r - v) for r, v in zip(returns, values)]
        a_loss = actor_loss(returns, traj.entropies, cfg, logps, advantages)
        self.actor_opt.zero_grad()
        ad.backward(a_loss)
        actor_norm, _ = self.actor_opt.step()
        world_model.zero_grad()

        c_loss = critic_loss(self.critic, traj.feats, returns)
        ad.backward(c_loss)
        critic_norm, _ = self.critic_opt.step()
        self.updates += 1
        self.update_slow_critic()
        ent = [e.data.mean() for e in traj.entropies if e is not None]
        return {"actor_loss": float(a_loss.data), "critic_loss": float(c_loss.data),
                "actor_grad_norm": actor_norm, "critic_grad_norm": critic_norm,
                "imag_return": float(np.mean([r.data.mean() for r in returns[:-1]])),
                "actor_entropy": float(np.mean(ent)) if ent else 0.0}

    def modules(self):
        return {"actor": self.actor, "critic": self.critic, "target_critic": self.target_critic}
