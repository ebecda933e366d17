"""Point-mass reach: a small continuous-control task with dense reward."""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np


@dataclass
class ToyConfig:
    max_steps: int = 50
    accel: float = 0.08
    friction: float = 0.75
    goal_radius: float = 0.6
    goal_cue_steps: int = 0   # 0: goal always observed; k: goal shown for the first k steps only
    seed: int = 0

    def to_dict(self):
        return asdict(self)


class PointMassReach:
    """Agent and goal live in [-1, 1]^2.  Reward ``max(0, 1 - |p - g| / goal_radius)``.

    Observation: position (2), velocity (2), goal (2, zeroed once the cue
    window is over) and a cue flag (1).
    """

    action_dim = 2
    obs_shape = (7,)

    def __init__(self, cfg: ToyConfig | None = None):
        self.cfg = cfg or ToyConfig()
        self.episode_index = 0
        self.done = True

    def reset(self, seed=None):
        if seed is None:
            seed = (self.cfg.seed, self.episode_index)
        self.episode_index += 1
        self.rng = np.random.Generator(np.random.Philox(list(np.atleast_1d(seed).astype(np.uint64))))
        self.pos = self.rng.uniform(-0.9, 0.9, 2)
        self.vel = np.zeros(2)
        self.goal = self.rng.uniform(-0.8, 0.8, 2)
        self.t = 0
        self.done = False
        return self._obs()

    def _obs(self):
        cue = self.cfg.goal_cue_steps == 0 or self.t < self.cfg.goal_cue_steps
        goal = self.goal if cue else np.zeros(2)
        return np.concatenate([self.pos, self.vel * 5.0, goal, [float(cue)]]).astype(np.float32)

    def reward(self):
        d = float(np.linalg.norm(self.pos - self.goal))
        return max(0.0, 1.0 - d / self.cfg.goal_radius)

    def step(self, action):
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(2), -1, 1)
        self.vel = self.cfg.friction * self.vel + self.cfg.accel * a
        self.pos = np.clip(self.pos + self.vel, -1.0, 1.0)
        self.t += 1
        self.done = self.t >= self.cfg.max_steps
        return self._obs(), self.reward(), self.done, {"step": self.t, "done": self.done,
                                                        "terminal": False}


def reach_controller(env: PointMassReach):
    """Proportional-derivative controller with access to the true goal."""
    err = env.goal - env.pos
    return np.clip(4.0 * err - 6.0 * env.vel, -1, 1)
