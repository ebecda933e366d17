"""Episode replay buffer with uniform sequence sampling."""
from __future__ import annotations

import numpy as np

from .storage import EpisodeRecord


class EmptyBuffer(ValueError):
    pass


class ReplayBuffer:
    """Stores whole episodes; samples fixed-length windows of consecutive frames.

    A window of length L over an episode covers frames ``o`` .. ``o+L-1``.
    Frame t pairs with the action taken before it and the reward and
    terminal flag that came with it (zeros for the first frame).  An
    episode of T steps has T+1 frames, so it serves windows up to T+1 long.
    """

    def __init__(self, capacity_steps=None):
        self.episodes: list[EpisodeRecord] = []
        self.capacity_steps = capacity_steps
        self.total_steps = 0

    def __len__(self):
        return len(self.episodes)

    def add(self, episode: EpisodeRecord):
        self.episodes.append(episode)
        self.total_steps += len(episode)
        if self.capacity_steps:
            while self.total_steps > self.capacity_steps and len(self.episodes) > 1:
                self.total_steps -= len(self.episodes.pop(0))

    def can_sample(self, length):
        return any(len(ep) + 1 >= length for ep in self.episodes)

    def sample(self, batch, length, rng, max_tries=10_000):
        """Pick episodes uniformly, then a uniform start offset in each.

        Episodes too short for ``length`` are skipped by re-drawing.  Returns
        a dict of arrays shaped (batch, length, ...) plus the chosen
        ``episode`` and ``offset`` indices.
        """
        chosen, offsets = self.sample_indices(batch, length, rng, max_tries)
        return self._gather(chosen, offsets, length)

    def sample_indices(self, batch, length, rng, max_tries=10_000):
        if not self.episodes:
            raise EmptyBuffer("replay buffer is empty")
        if not self.can_sample(length):
            longest = max(len(ep) + 1 for ep in self.episodes)
            raise EmptyBuffer(f"no episode has {length} frames (longest has {longest})")
        chosen, offsets = [], []
        misses = 0
        while len(chosen) < batch:
            k = int(rng.integers(len(self.episodes)))
            n_frames = len(self.episodes[k]) + 1
            if n_frames < length:
                misses += 1
                if misses > max_tries:
                    raise RuntimeError("could not draw enough long-enough episodes")
                continue
            chosen.append(k)
            offsets.append(int(rng.integers(n_frames - length + 1)))
        return chosen, offsets

    def _gather(self, chosen, offsets, length):
        obs, prev, rew, term = [], [], [], []
        for k, o in zip(chosen, offsets):
            ep = self.episodes[k]
            obs.append(ep.observations[o:o + length])
            a = np.zeros((length,) + ep.actions.shape[1:], dtype=np.float32)
            r = np.zeros(length, dtype=np.float32)
            d = np.zeros(length, dtype=bool)
            lo = max(o, 1)
            # frame t came after step t-1
            a[lo - o:] = ep.actions[lo - 1:o + length - 1]
            r[lo - o:] = ep.rewards[lo - 1:o + length - 1]
            d[lo - o:] = ep.terminals[lo - 1:o + length - 1]
            prev.append(a)
            rew.append(r)
            term.append(d)
        return {"obs": np.stack(obs), "prev_action": np.stack(prev), "reward": np.stack(rew),
                "terminal": np.stack(term), "episode": np.array(chosen),
                "offset": np.array(offsets)}
