"""Circle-body impulse physics for the arena."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

AGENT, OBJECT, DISTRACTOR = 0, 1, 2


@dataclass
class PhysicsParams:
    elasticity_body: float = 1.0
    elasticity_wall: float = 0.7
    damping: float = 0.3
    max_force: float = 0.5
    dt: float = 1.0 / 60.0
    brownian_sigma: float = 0.15

    def __post_init__(self):
        for name in ("elasticity_body", "elasticity_wall"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 <= self.damping < 1:
            raise ValueError("damping must lie in [0, 1)")


@dataclass
class ArenaState:
    """Every body of the arena in struct-of-arrays form.  Row 0 is the agent."""

    width: float
    height: float
    pos: np.ndarray
    vel: np.ndarray
    radius: np.ndarray
    mass: np.ndarray
    kind: np.ndarray
    shape: np.ndarray
    color: np.ndarray
    active: np.ndarray
    scored: np.ndarray
    visited: np.ndarray
    first_visit: np.ndarray
    goal: tuple = (0.0, 0.0, 0.0, 0.0)
    step: int = 0
    elasticity: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.elasticity is None:
            self.elasticity = np.ones(len(self.pos))

    @property
    def n(self):
        return len(self.pos)

    def objects(self):
        return np.flatnonzero(self.kind == OBJECT)

    def kinetic_energy(self):
        idx = self.active
        return 0.5 * float(np.sum(self.mass[idx] * np.sum(self.vel[idx] ** 2, axis=1)))

    def copy(self):
        kw = {k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in vars(self).items()}
        return ArenaState(**kw)


def physics_substep(state: ArenaState, forces: np.ndarray, params: PhysicsParams, rng=None):
    """Advance ``state`` in place by one semi-implicit Euler sub-step.

    ``forces`` has shape (n, 2).  Distractors receive an extra Gaussian
    velocity kick when ``rng`` is given.
    """
    dt = params.dt
    act = state.active
    state.vel[act] += forces[act] / state.mass[act, None] * dt
    if rng is not None and params.brownian_sigma > 0:
        dis = np.flatnonzero(act & (state.kind == DISTRACTOR))
        if len(dis):
            state.vel[dis] += rng.normal(0.0, params.brownian_sigma, size=(len(dis), 2))
    if params.damping:
        state.vel[act] *= (1.0 - params.damping) ** dt
    state.pos[act] += state.vel[act] * dt
    resolve_body_collisions(state, params)
    resolve_wall_collisions(state, params)
    return state


def resolve_body_collisions(state: ArenaState, params: PhysicsParams):
    idx = np.flatnonzero(state.active)
    if len(idx) < 2:
        return
    p = state.pos[idx]
    r = state.radius[idx]
    d = p[:, None, :] - p[None, :, :]
    dist2 = np.sum(d * d, axis=-1)
    reach = r[:, None] + r[None, :]
    ii, jj = np.nonzero(np.triu(dist2 < reach * reach, k=1))
    for a, b in zip(idx[ii], idx[jj]):
        _collide_pair(state, a, b, params)


def _collide_pair(state, a, b, params):
    delta = state.pos[b] - state.pos[a]
    dist = float(np.hypot(delta[0], delta[1]))
    overlap = state.radius[a] + state.radius[b] - dist
    if overlap <= 0:
        return
    n = delta / dist if dist > 1e-12 else np.array([1.0, 0.0])
    inv_a, inv_b = 1.0 / state.mass[a], 1.0 / state.mass[b]
    rel = float(np.dot(state.vel[b] - state.vel[a], n))
    if rel < 0:
        e = min(state.elasticity[a], state.elasticity[b])
        j = -(1.0 + e) * rel / (inv_a + inv_b)
        state.vel[a] -= j * inv_a * n
        state.vel[b] += j * inv_b * n
    corr = overlap / (inv_a + inv_b)
    state.pos[a] -= corr * inv_a * n
    state.pos[b] += corr * inv_b * n


def resolve_wall_collisions(state: ArenaState, params: PhysicsParams):
    act = state.active
    r = state.radius
    e = np.minimum(state.elasticity, params.elasticity_wall)
    for axis, hi in ((0, state.width), (1, state.height)):
        x = state.pos[:, axis]
        v = state.vel[:, axis]
        low = act & (x < r)
        if low.any():
            x[low] = r[low]
            hit = low & (v < 0)
            v[hit] = -e[hit] * v[hit]
        high = act & (x > hi - r)
        if high.any():
            x[high] = hi - r[high]
            hit = high & (v > 0)
            v[hit] = -e[hit] * v[hit]
