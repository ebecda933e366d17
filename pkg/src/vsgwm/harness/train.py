"""Collection, training, evaluation and imagination dumps."""
from __future__ import annotations

import copy
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..envs.bbs import BringBackShapes
from ..envs.toy import PointMassReach, reach_controller
from ..metrics import aggregate, compute_stats, write_csv, write_jsonl
from ..worldmodel import NonFiniteLoss, open_loop_rollout
from .agent import Agent
from .checkpoint import config_from_manifest, load_checkpoint, save_checkpoint
from .config import RunConfig
from .replay import ReplayBuffer
from .storage import EpisodeRecord, save_arrays

log = logging.getLogger(__name__)


def philox(*key):
    return np.random.Generator(np.random.Philox([int(k) for k in key]))


# stream ids under the master seed
INIT, COLLECT, SAMPLE, UPDATE, EVAL = range(5)


def make_env(cfg: RunConfig, seed=None):
    seed = cfg.seed if seed is None else seed
    if cfg.env == "bbs":
        return BringBackShapes(dataclasses.replace(cfg.arena, seed=seed))
    return PointMassReach(dataclasses.replace(cfg.toy, seed=seed))


def run_episode(env, policy, reset_seed=None, config_hash="", on_step=None):
    """Roll one episode.  ``policy(obs, t)`` returns an action in [-1, 1]^2.

    Returns (EpisodeRecord, list of per-step info dicts).
    """
    obs = env.reset(seed=reset_seed)
    frames, actions, rewards, terminals, infos = [obs], [], [], [], []
    done, t = False, 0
    while not done:
        a = np.asarray(policy(obs, t), dtype=np.float32)
        obs, r, done, info = env.step(a)
        frames.append(obs)
        actions.append(a)
        rewards.append(r)
        # hitting the step limit is a time-out, not a terminal state
        terminals.append(bool(done and t + 1 < getattr(env.cfg, "max_steps", 0)))
        infos.append(info)
        t += 1
        if on_step is not None:
            on_step(t)
    meta = {"seed": None if reset_seed is None else list(np.atleast_1d(reset_seed).tolist()),
            "config_hash": config_hash}
    return EpisodeRecord(np.stack(frames), np.stack(actions), np.array(rewards),
                         np.array(terminals), meta), infos


def random_policy(rng):
    return lambda obs, t: rng.uniform(-1, 1, 2)


def agent_policy(agent: Agent, rng, deterministic=False, noise=0.0):
    def act(obs, t):
        if t == 0:
            agent.reset()
        return agent.act(obs, rng, deterministic=deterministic, noise=noise)
    return act


class JsonlLog:
    def __init__(self, path):
        self.fh = open(path, "a")

    def write(self, rec):
        self.fh.write(json.dumps(rec, sort_keys=True) + "\n")
        self.fh.flush()

    def close(self):
        self.fh.close()


@dataclass
class TrainResult:
    outdir: Path
    env_steps: int = 0
    updates: int = 0
    checkpoints: list = field(default_factory=list)
    history: list = field(default_factory=list)
    evaluations: list = field(default_factory=list)
    aborted: bool = False


def _checkpoint(agent, cfg, outdir, name, res, env_steps):
    path = save_checkpoint(outdir / name, agent.state_arrays(), cfg,
                           {"env_steps": env_steps, "updates": agent.updates})
    res.checkpoints.append(path)
    # one stable name for the latest snapshot
    save_checkpoint(outdir / "latest", agent.state_arrays(), cfg,
                    {"env_steps": env_steps, "updates": agent.updates})
    return path


def train(cfg: RunConfig, outdir, agent=None, buffer=None, stop=None, on_eval=None) -> TrainResult:
    """Fill the buffer with random episodes, then act, collect and update.

    With ``cfg.overfit_updates > 0`` the random seed episodes form a fixed
    buffer and only world-model updates run, with no further collection.
    ``stop(stats)`` may return True to end training early, as may
    ``on_eval(env_steps, summary)`` after each periodic evaluation.  Either
    way the current episode is finished first.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.txt").write_text(cfg.dumps())
    chash = cfg.hash()
    agent = agent or Agent(cfg, philox(cfg.seed, INIT))
    buffer = buffer or ReplayBuffer()
    res = TrainResult(outdir)
    logf = JsonlLog(outdir / "train.jsonl")
    collect_rng, sample_rng, update_rng = (philox(cfg.seed, k) for k in (COLLECT, SAMPLE, UPDATE))
    env = make_env(cfg)
    try:
        _checkpoint(agent, cfg, outdir, "ckpt_000000000", res, 0)
        if cfg.total_steps == 0 and cfg.overfit_updates == 0:
            return res
        n_seed = 0
        while n_seed < cfg.prefill_episodes and (res.env_steps < cfg.total_steps or cfg.overfit_updates):
            ep, _ = run_episode(env, random_policy(collect_rng), config_hash=chash)
            buffer.add(ep)
            res.env_steps += len(ep)
            n_seed += 1

        def update(step_count):
            if not buffer.can_sample(cfg.seq_len):
                return None
            batch = buffer.sample(cfg.batch_size, cfg.seq_len, sample_rng)
            stats = agent.train_batch(batch, update_rng, behavior=not cfg.overfit_updates)
            rec = {"step": agent.updates, "env_steps": step_count, "config_hash": chash, **stats}
            logf.write(rec)
            res.history.append(rec)
            res.updates = agent.updates
            return rec

        if cfg.overfit_updates:
            for _ in range(cfg.overfit_updates):
                rec = update(res.env_steps)
                if rec is None:
                    raise ValueError(f"overfit buffer has no episode with {cfg.seq_len} frames")
                if stop is not None and stop(rec):
                    break
            _checkpoint(agent, cfg, outdir, f"ckpt_{res.env_steps:09d}", res, res.env_steps)
            return res

        while res.env_steps < cfg.total_steps:
            ended = False

            def on_step(_t):
                nonlocal ended
                res.env_steps += 1
                n = res.env_steps
                if n % cfg.train_every == 0:
                    rec = update(n)
                    if rec is not None and stop is not None and stop(rec):
                        ended = True
                if cfg.eval_every and n % cfg.eval_every == 0:
                    summary = evaluate_agent(agent, cfg, cfg.eval_seeds, cfg.eval_episodes)[1]
                    res.evaluations.append((n, summary))
                    if on_eval is not None and on_eval(n, summary):
                        ended = True
                if cfg.checkpoint_every and n % cfg.checkpoint_every == 0:
                    _checkpoint(agent, cfg, outdir, f"ckpt_{n:09d}", res, n)

            policy = agent_policy(agent, collect_rng, noise=cfg.action_noise)
            ep, _ = run_episode(env, policy, config_hash=chash, on_step=on_step)
            buffer.add(ep)
            if ended:
                break
        _checkpoint(agent, cfg, outdir, f"ckpt_{res.env_steps:09d}", res, res.env_steps)
        return res
    except NonFiniteLoss as e:
        res.aborted = True
        _checkpoint(agent, cfg, outdir, "ckpt_abort", res, res.env_steps)
        logf.write({"step": agent.updates, "env_steps": res.env_steps, "error": str(e)})
        raise
    finally:
        logf.close()


# -- evaluation -------------------------------------------------------------------------

def eval_seed(cfg, seed):
    return 1_000_000 + seed


def evaluate_agent(agent: Agent, cfg: RunConfig, seeds=5, episodes=10, deterministic=True,
                   dump_dir=None):
    """Run ``seeds`` x ``episodes`` evaluation episodes with the actor mean.

    Returns (rows, summary).  For BringBackShapes rows are
    (seed, episode, EpisodeStats); for the toy task (seed, episode, return).
    """
    rows, returns = [], []
    # evaluation may interrupt a collection episode; keep its filter state
    saved = (agent._state, agent._prev_action)
    for s in range(seeds):
        env = make_env(cfg, seed=eval_seed(cfg, s))
        for e in range(episodes):
            rng = philox(cfg.seed, EVAL, s, e)
            policy = agent_policy(agent, rng, deterministic=deterministic)
            ep, infos = run_episode(env, policy, reset_seed=(eval_seed(cfg, s), e),
                                    config_hash=cfg.hash())
            returns.append(ep.total_reward)
            if dump_dir is not None:
                ep.save(Path(dump_dir) / f"eval_s{s}_e{e}.arr")
            if cfg.env == "bbs":
                rows.append((s, e, compute_stats(infos, max_steps=cfg.arena.max_steps)))
            else:
                rows.append((s, e, ep.total_reward))
    agent._state, agent._prev_action = saved
    summary = {"return_mean": float(np.mean(returns)), "return_std": float(np.std(returns)),
               "episodes": len(returns)}
    if cfg.env == "bbs":
        summary["stats"] = aggregate([r[2] for r in rows])
    return rows, summary


def controller_return(cfg: RunConfig, seeds=5, episodes=10):
    """Mean return of the hand-coded reach controller on the evaluation episodes."""
    out = []
    for s in range(seeds):
        env = make_env(cfg, seed=eval_seed(cfg, s))
        for e in range(episodes):
            ep, _ = run_episode(env, lambda obs, t: reach_controller(env),
                                reset_seed=(eval_seed(cfg, s), e))
            out.append(ep.total_reward)
    return float(np.mean(out))


TOY_PROBE = (("env", "toy"), ("train_every", "10"), ("eval_every", "2500"),
             ("eval_seeds", "2"), ("eval_episodes", "5"))


def behavior_probe(variant, seed, outdir, budget=50_000, target=0.8, extra=()):
    """Train on the toy reach task and compare against the reach controller.

    Evaluates every ``eval_every`` environment steps on the same episodes
    the controller is scored on; stops once the return reaches ``target``
    times the controller's (``target=None`` always spends the full budget).
    Returns a dict with the evaluation curve and the best fraction reached.
    """
    cfg = RunConfig.from_pairs(list(TOY_PROBE) + [("variant", variant), ("seed", str(seed)),
                                                  ("total_steps", str(budget))] + list(extra))
    ref = controller_return(cfg, cfg.eval_seeds, cfg.eval_episodes)
    curve = []

    def on_eval(n, summary):
        curve.append((n, summary["return_mean"], summary["return_mean"] / ref))
        return target is not None and curve[-1][2] >= target

    res = train(cfg, outdir, on_eval=on_eval)
    best = max((c[2] for c in curve), default=0.0)
    reached = next((c[0] for c in curve if target is not None and c[2] >= target), None)
    return {"variant": variant, "seed": seed, "controller_return": ref, "curve": curve,
            "best_fraction": best, "final_fraction": curve[-1][2] if curve else 0.0,
            "reached_at": reached, "env_steps": res.env_steps, "updates": res.updates}


def write_eval(outdir, cfg, rows, summary):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if cfg.env == "bbs":
        write_csv(outdir / "metrics.csv", rows)
        write_jsonl(outdir / "metrics.jsonl", rows, extra={"config_hash": cfg.hash()})
    else:
        with open(outdir / "metrics.csv", "w", newline="") as fh:
            fh.write("seed,episode,return\n")
            for s, e, r in rows:
                fh.write(f"{s},{e},{float(r)!r}\n")
    (outdir / "summary.json").write_text(json.dumps({"config_hash": cfg.hash(), **summary},
                                                    indent=1, sort_keys=True) + "\n")


def load_agent(stem, cfg: RunConfig | None = None, expect_variant=None):
    """Rebuild an agent from a checkpoint.  ``expect_variant`` guards the variant."""
    stored = config_from_manifest(stem)
    cfg = cfg or stored
    expect = None
    if expect_variant is not None:
        expect = copy.deepcopy(stored)
        expect.variant = expect_variant
        expect.sync()
    _, _, arrays = load_checkpoint(stem, expect=expect)
    agent = Agent(cfg, philox(cfg.seed, INIT))
    agent.load_state_arrays(arrays)
    return agent


# -- imagination dumps ------------------------------------------------------------------

def to_uint8(frames):
    return np.clip(np.round((np.asarray(frames, dtype=np.float64) + 0.5) * 255), 0, 255).astype(np.uint8)


def dump_imagination(agent: Agent, episode: EpisodeRecord, outdir, seed=0, context=15,
                     future=35, n_rollouts=5, start=0):
    """Write the ground-truth + rollout grid (PNG) and the raw arrays.

    Returns a dict with the arrays and output paths.
    """
    if not agent.cfg.wm.image_obs:
        raise ValueError("dump-imagination needs an image-observation environment")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    total = context + future
    pred = open_loop_rollout(agent.wm, episode, rng_seed=seed, context=context, future=future,
                             n_rollouts=n_rollouts, start=start)
    truth = np.asarray(episode.observations[start:start + total])
    rows = np.concatenate([truth[None], to_uint8(pred)], axis=0)
    var = pred.astype(np.float64).var(axis=0).mean(axis=(1, 2, 3))
    arrays = {"ground_truth": truth, "rollouts": pred.astype(np.float32),
              "grid": rows, "frame_variance": var,
              "actions": np.asarray(episode.actions[start:start + total], dtype=np.float32),
              "context": np.array([context], dtype=np.int64)}
    save_arrays(outdir / "imagination.arr", arrays)
    from .plots import save_grid_png
    png = save_grid_png(rows, outdir / "imagination.png", context)
    return {**arrays, "png": png, "arrays_path": outdir / "imagination.arr"}
