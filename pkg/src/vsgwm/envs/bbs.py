"""BringBackShapes: push shaped objects into a goal region under partial view."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .physics import (AGENT, DISTRACTOR, OBJECT, ArenaState, PhysicsParams,
                      physics_substep)
from .render import render_full, render_partial

SIZE_SCALE = {"basic": 1.0, "small": 1.25, "medium": 1.5, "large": 2.0}
N_SHAPES = 5
N_COLORS = 5


class EpisodeDone(RuntimeError):
    pass


@dataclass
class ArenaConfig:
    """Arena geometry and episode settings.

    ``view_fraction`` is relative to the Basic arena side, so the view window
    has a fixed world size and covers less of the larger arenas.
    """

    size: str = "basic"
    base_size: float = 10.0
    n_objects: int = 5
    n_distractors: int = 0
    view_fraction: float = 0.4
    resolution: int = 32
    max_steps: int = 3000
    action_repeat: int = 4
    seed: int = 0
    agent_radius: float = 0.4
    object_radius: float = 0.4
    distractor_radius: float = 0.35
    goal_width: float = 0.15
    goal_height: float = 0.4
    placement_retries: int = 200
    physics: PhysicsParams = field(default_factory=PhysicsParams)

    def __post_init__(self):
        if self.size not in SIZE_SCALE:
            raise ValueError(f"unknown arena size {self.size!r}; expected {list(SIZE_SCALE)}")
        if self.n_objects < 0 or self.n_distractors < 0:
            raise ValueError("body counts must be non-negative")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if not 0 < self.view_fraction <= 1:
            raise ValueError("view_fraction must lie in (0, 1]")
        if isinstance(self.physics, dict):
            self.physics = PhysicsParams(**self.physics)

    @property
    def side(self):
        return self.base_size * SIZE_SCALE[self.size]

    @property
    def view_size(self):
        return self.view_fraction * self.base_size

    def to_dict(self):
        return asdict(self)


class BringBackShapes:
    action_dim = 2

    def __init__(self, cfg: ArenaConfig | None = None, debug_frames=False):
        self.cfg = cfg or ArenaConfig()
        self.debug_frames = debug_frames
        self.state: ArenaState | None = None
        self.rng = None
        self.done = True
        self.episode_index = 0

    @property
    def obs_shape(self):
        r = self.cfg.resolution
        return (r, r, 3)

    # -- episode control -----------------------------------------------------
    def reset(self, seed=None):
        cfg = self.cfg
        if seed is None:
            seed = (cfg.seed, self.episode_index)
        self.episode_index += 1
        key = list(np.atleast_1d(seed).astype(np.uint64))
        for sub in range(1000):
            rng = np.random.Generator(np.random.Philox(key + [sub]))
            state = self._place(rng)
            if state is not None:
                break
        else:
            raise RuntimeError("could not place bodies after 1000 arena regenerations")
        self.state, self.rng, self.done = state, rng, False
        self._update_flags()
        return self.render()

    def _place(self, rng):
        cfg = self.cfg
        side = cfg.side
        gw, gh = cfg.goal_width * side, cfg.goal_height * side
        goal = (side - gw, (side - gh) / 2, side, (side + gh) / 2)
        kinds = [AGENT] + [OBJECT] * cfg.n_objects + [DISTRACTOR] * cfg.n_distractors
        radii = {AGENT: cfg.agent_radius, OBJECT: cfg.object_radius,
                 DISTRACTOR: cfg.distractor_radius}
        n = len(kinds)
        shape = np.full(n, -1)
        color = np.full(n, -1)
        obj = np.array(kinds) == OBJECT
        shape[obj] = rng.integers(0, N_SHAPES, obj.sum())
        color[obj] = rng.integers(0, N_COLORS, obj.sum())
        radius = np.array([radii[k] for k in kinds], dtype=np.float64)
        pos = np.zeros((n, 2))
        for k in range(n):
            r = radius[k]
            for _ in range(cfg.placement_retries):
                p = rng.uniform(r, side - r, size=2)
                in_goal = (goal[0] - r <= p[0] <= goal[2] + r) and (goal[1] - r <= p[1] <= goal[3] + r)
                if in_goal:
                    continue
                if k and np.any(np.hypot(*(pos[:k] - p).T) < radius[:k] + r + 0.05):
                    continue
                pos[k] = p
                break
            else:
                return None
        return ArenaState(
            width=side, height=side, pos=pos, vel=np.zeros((n, 2)), radius=radius,
            mass=np.ones(n), kind=np.array(kinds), shape=shape, color=color,
            active=np.ones(n, dtype=bool), scored=np.zeros(n, dtype=bool),
            visited=np.zeros(n, dtype=bool), first_visit=np.full(n, -1), goal=goal, step=0,
            elasticity=np.full(n, cfg.physics.elasticity_body))

    def decode_action(self, action):
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(2), -1.0, 1.0)
        angle = np.pi * a[0]
        mag = (a[1] + 1.0) / 2.0 * self.cfg.physics.max_force
        return mag * np.array([np.cos(angle), np.sin(angle)])

    def step(self, action):
        if self.done:
            raise EpisodeDone("step() called on a finished episode; call reset()")
        cfg, st = self.cfg, self.state
        forces = np.zeros((st.n, 2))
        forces[0] = self.decode_action(action)
        for _ in range(cfg.action_repeat):
            physics_substep(st, forces, cfg.physics, self.rng)
        st.step += 1
        newly = self._update_flags()
        reward = float(len(newly))
        objs = st.objects()
        all_scored = bool(len(objs)) and bool(st.scored[objs].all())
        self.done = all_scored or st.step >= cfg.max_steps
        return self.render(), reward, self.done, self.info(newly)

    # -- bookkeeping ---------------------------------------------------------
    def _update_flags(self):
        """Mark fully-visible objects as visited, then score objects whose centre is in the goal."""
        st = self.state
        x0, y0, x1, y1 = self.view()
        objs = st.objects()
        live = objs[st.active[objs]]
        for k in live:
            cx, cy = st.pos[k]
            r = st.radius[k]
            if not st.visited[k] and cx - r >= x0 and cx + r <= x1 and cy - r >= y0 and cy + r <= y1:
                st.visited[k] = True
                st.first_visit[k] = st.step
        gx0, gy0, gx1, gy1 = st.goal
        newly = []
        for k in live:
            cx, cy = st.pos[k]
            if gx0 <= cx <= gx1 and gy0 <= cy <= gy1:
                st.scored[k] = True
                st.active[k] = False
                st.vel[k] = 0.0
                newly.append(int(k))
        return newly

    def view(self):
        h = self.cfg.view_size / 2
        ax, ay = self.state.pos[0]
        return ax - h, ay - h, ax + h, ay + h

    def info(self, newly=()):
        st = self.state
        objs = st.objects()
        out = {
            "step": st.step,
            "visited": st.visited[objs].tolist(),
            "scored": st.scored[objs].tolist(),
            "first_visit": st.first_visit[objs].tolist(),
            "new_scored": [int(np.searchsorted(objs, k)) for k in newly],
            "agent_pos": st.pos[0].tolist(),
            "agent_vel": st.vel[0].tolist(),
            "done": self.done,
        }
        if self.debug_frames:
            out["full_frame"] = render_full(st, self.cfg.resolution * 2)
        return out

    def render(self):
        return render_partial(self.state, self.cfg.resolution, self.cfg.view_size)

    def render_full(self, resolution=None):
        return render_full(self.state, resolution or self.cfg.resolution * 2)
