"""World model plus behaviour learner, with acting and state (de)serialisation."""
from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..behavior import Behavior
from ..nn import _all_tensors
from ..optim import Adam
from ..worldmodel import ModelState, NonFiniteLoss, WorldModel, preprocess_obs
from .config import RunConfig


def flatten_states(states) -> ModelState:
    """List over time of (B, ...) states -> one (T*B, ...) detached state."""
    h = None
    if states[0].h is not None:
        h = Tensor(np.concatenate([s.h.data for s in states], axis=0))
    return ModelState(h, Tensor(np.concatenate([s.z.data for s in states], axis=0)))


class Agent:
    def __init__(self, cfg: RunConfig, rng):
        self.cfg = cfg
        self.wm = WorldModel(cfg.wm, rng)
        self.behavior = Behavior(cfg.policy, self.wm.feat_dim, cfg.wm.action_dim, rng)
        self.wm_opt = Adam(self.wm.parameters(), cfg.world_model_lr, clip=cfg.model_clip)
        self.updates = 0
        self._state = None
        self._prev_action = None

    # -- learning ----------------------------------------------------------------
    def train_batch(self, batch, rng, behavior=True):
        """One world-model update then one actor/critic update on its posteriors.

        Raises NonFiniteLoss before any parameter changes if a loss is not finite.
        """
        posts, losses, stats = self.wm.observe(batch, rng=rng)
        self.wm_opt.zero_grad()
        ad.backward(losses["total"])
        norm, ok = self.wm_opt.step()
        out = {f"{k}_loss": float(v.data) for k, v in losses.items()}
        out.update(stats)
        out["model_grad_norm"] = norm
        out["model_update_skipped"] = not ok
        if behavior:
            out.update(self.behavior.train_step(self.wm, flatten_states(posts), rng))
            for k in ("actor_loss", "critic_loss"):
                if not np.isfinite(out[k]):
                    raise NonFiniteLoss(f"non-finite {k}: {out[k]}")
        self.updates += 1
        return out

    # -- acting --------------------------------------------------------------------
    def reset(self):
        self._state = self.wm.initial_state(1)
        self._prev_action = np.zeros((1, self.cfg.wm.action_dim), dtype=ad.get_default_dtype())

    def act(self, obs, rng, deterministic=False, noise=0.0):
        """Filter the new observation into the latent state and pick an action."""
        cfg = self.cfg.wm
        x = Tensor(preprocess_obs(np.asarray(obs)[None, None], cfg.image_obs))
        embed = self.wm.encode(x)[:, 0]
        state, _ = self.wm.obs_step(self._state, Tensor(self._prev_action), embed, rng,
                                    sample=not deterministic)
        self._state = state.detach()
        feat = self._state.s
        if deterministic:
            action = self.behavior.actor.deterministic(feat).data[0]
        else:
            action = self.behavior.actor.act(feat, rng)[0].data[0]
        if noise:
            action = np.clip(action + noise * rng.standard_normal(action.shape), -1, 1)
        action = np.asarray(action, dtype=np.float32)
        self._prev_action = action[None].astype(ad.get_default_dtype())
        return action

    # -- state ---------------------------------------------------------------------
    def modules(self):
        return {"wm": self.wm, **self.behavior.modules()}

    def optimizers(self):
        return {"wm_opt": self.wm_opt, "actor_opt": self.behavior.actor_opt,
                "critic_opt": self.behavior.critic_opt}

    def state_arrays(self) -> dict:
        arrays = {}
        for prefix, mod in self.modules().items():
            for name, t in _all_tensors(mod):
                arrays[f"{prefix}/{name}"] = t.data
        for prefix, opt in self.optimizers().items():
            arrays.update(opt.state_arrays(prefix))
        arrays["counters"] = np.array([self.updates, self.behavior.updates], dtype=np.int64)
        return arrays

    def load_state_arrays(self, arrays):
        for prefix, mod in self.modules().items():
            for name, t in _all_tensors(mod):
                key = f"{prefix}/{name}"
                if key not in arrays:
                    raise KeyError(f"checkpoint lacks {key}")
                if arrays[key].shape != t.data.shape:
                    raise ValueError(f"{key}: shape {arrays[key].shape} != {t.data.shape}")
                t.data = arrays[key].astype(t.data.dtype).copy()
        for prefix, opt in self.optimizers().items():
            opt.load_state_arrays(prefix, arrays)
        if "counters" in arrays:
            self.updates, self.behavior.updates = (int(x) for x in arrays["counters"])
