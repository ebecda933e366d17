"""Run configuration: nested dataclasses addressed by flat dotted keys.

Files hold one ``key=value`` per line (``#`` starts a comment); the same
syntax is accepted by ``--set``.  Example::

    variant=svsg
    wm.deter=64
    arena.n_distractors=2
    wm.weights.kappa=0.4
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field

from ..behavior import PolicyConfig
from ..envs.bbs import ArenaConfig
from ..envs.toy import ToyConfig
from ..worldmodel import VARIANTS, WorldModelConfig

ENVS = ("bbs", "toy")
GATED_ONLY = ("wm.weights.alpha", "wm.weights.kappa")
# derived from the environment, never set by hand
DERIVED = ("wm.obs_shape", "wm.action_dim")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    variant: str = "vsg"
    env: str = "bbs"
    seed: int = 0
    total_steps: int = 100_000
    prefill_episodes: int = 5
    train_every: int = 5
    batch_size: int = 16
    seq_len: int = 50
    model_lr: float = 0.0        # 0 picks the variant default, see world_model_lr
    model_clip: float = 100.0
    action_noise: float = 0.3
    eval_every: int = 0
    eval_episodes: int = 10
    eval_seeds: int = 5
    checkpoint_every: int = 0
    overfit_updates: int = 0
    wm: WorldModelConfig = field(default_factory=lambda: WorldModelConfig(
        deter=64, stoch=16, units=64, embed_units=64, svsg_state=64))
    policy: PolicyConfig = field(default_factory=lambda: PolicyConfig(units=64))
    arena: ArenaConfig = field(default_factory=lambda: ArenaConfig(resolution=16))
    toy: ToyConfig = field(default_factory=ToyConfig)

    def __post_init__(self):
        self.sync()

    def sync(self):
        """Check top-level choices and copy derived fields into the sections."""
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.env not in ENVS:
            raise ConfigError(f"unknown env {self.env!r}; expected one of {ENVS}")
        if self.train_every <= 0 or self.batch_size <= 0 or self.seq_len <= 1:
            raise ConfigError("train_every, batch_size must be positive and seq_len > 1")
        if self.model_lr < 0:
            raise ConfigError(f"model_lr must be >= 0 (0 = variant default), got {self.model_lr}")
        self.wm.variant = self.variant
        self.wm.action_dim = 2
        if self.env == "bbs":
            r = self.arena.resolution
            self.wm.obs_shape = (r, r, 3)
            self.arena.seed = self.seed
        else:
            self.wm.obs_shape = (7,)
            self.toy.seed = self.seed
        return self

    @property
    def world_model_lr(self):
        if self.model_lr > 0:
            return self.model_lr
        return 8e-4 if self.variant == "svsg" else 3e-4

    @property
    def gated(self):
        return self.variant in ("vsg", "svsg")

    # -- flat view -------------------------------------------------------------
    def flat(self) -> dict:
        out = {}
        _flatten(self, "", out)
        if not self.gated:
            for k in GATED_ONLY:
                out.pop(k, None)
        if self.env == "bbs":
            out = {k: v for k, v in out.items() if not k.startswith("toy.")}
        else:
            out = {k: v for k, v in out.items() if not k.startswith("arena.")}
        return out

    def dumps(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in sorted(self.flat().items()))

    def hash(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:12]

    def set(self, key, value):
        """Assign one dotted key from its text form."""
        if key in DERIVED:
            raise ConfigError(f"{key} is derived from the environment and cannot be set")
        node, parts = self, key.split(".")
        for p in parts[:-1]:
            if not dataclasses.is_dataclass(node) or not hasattr(node, p):
                raise ConfigError(f"unknown config section in {key!r}")
            node = getattr(node, p)
        leaf = parts[-1]
        if not dataclasses.is_dataclass(node) or leaf not in {f.name for f in dataclasses.fields(node)}:
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(node, leaf)
        if dataclasses.is_dataclass(current):
            raise ConfigError(f"{key!r} is a section, not a value")
        setattr(node, leaf, _parse(value, current, key))

    @classmethod
    def from_pairs(cls, pairs, base=None):
        cfg = base or cls()
        keys = []
        for key, value in pairs:
            cfg.set(key, value)
            keys.append(key)
        cfg.sync()
        # gated-only keys are checked once the final variant is known
        if not cfg.gated:
            bad = [k for k in keys if k in GATED_ONLY]
            if bad:
                raise ConfigError(f"{', '.join(bad)} only apply to vsg/svsg, not {cfg.variant}")
        _revalidate(cfg)
        return cfg

    @classmethod
    def load(cls, path, overrides=()):
        return cls.from_pairs(list(read_pairs(path)) + [parse_pair(s) for s in overrides])


def parse_pair(text):
    if "=" not in text:
        raise ConfigError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def read_pairs(path):
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                yield parse_pair(line)
            except ConfigError as e:
                raise ConfigError(f"{path}:{n}: {e}") from None


def _flatten(obj, prefix, out):
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            _flatten(v, f"{prefix}{f.name}.", out)
        else:
            out[prefix + f.name] = v


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(text, current, key):
    try:
        if isinstance(current, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(current, int):
            f = float(text)
            if f != int(f):
                raise ValueError(text)
            return int(f)
        if isinstance(current, float):
            return float(text)
        if isinstance(current, tuple):
            return tuple(int(x) for x in text.split(",") if x)
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {key} ({type(current).__name__})") from None
    return text


def _revalidate(cfg):
    """Re-run the section validators after field assignment."""
    try:
        for section in (cfg.wm.weights, cfg.wm, cfg.policy, cfg.arena.physics, cfg.arena, cfg.toy):
            post = getattr(section, "__post_init__", None)
            if post:
                post()
    except ValueError as e:
        raise ConfigError(str(e)) from None
