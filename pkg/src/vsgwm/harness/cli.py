"""Command-line entry point.

Every subcommand prints a delimited report block of ``key: value`` lines
and writes its figures and data files under ``--outdir``.  Failures print
one ``error {json}`` line to stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, parse_pair, read_pairs

BEGIN = "===== vsgwm {} ====="
END = "===== end ====="


def report(name, items, out=None):
    out = out or sys.stdout
    print(BEGIN.format(name), file=out)
    for k, v in items:
        if isinstance(v, float):
            v = f"{v:.6g}"
        elif isinstance(v, (dict, list)):
            v = json.dumps(v, sort_keys=True)
        print(f"{k}: {v}", file=out)
    print(END, file=out)


def build_config(args) -> RunConfig:
    """Config file, then ``--set`` overrides, then the dedicated flags."""
    pairs = list(read_pairs(args.config)) if args.config else []
    pairs += [parse_pair(s) for s in args.set or ()]
    for flag, key in (("variant", "variant"), ("env", "env"), ("seed", "seed"),
                      ("resolution", "arena.resolution"), ("arena", "arena.size"),
                      ("distractors", "arena.n_distractors")):
        v = getattr(args, flag, None)
        if v is not None:
            pairs.append((key, str(v)))
    return RunConfig.from_pairs(pairs)


def _common(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--seed", type=int)
    p.add_argument("--outdir", default="runs/out")
    p.add_argument("--variant", help="rssm, vsg, svsg or ssm (memory-probe: gru, vsg, vsg_open)")
    p.add_argument("--env", choices=("bbs", "toy"))
    p.add_argument("--resolution", type=int)
    p.add_argument("--arena", choices=("basic", "small", "medium", "large"))
    p.add_argument("--distractors", type=int)


def make_parser():
    ap = argparse.ArgumentParser(prog="vsgwm", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="collect experience and train an agent")
    _common(p)
    p.add_argument("--steps", type=int, help="total environment steps")

    p = sub.add_parser("evaluate", help="score a checkpoint with the deterministic actor")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--dump-episodes", action="store_true")

    p = sub.add_parser("dump-imagination", help="open-loop rollouts from a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episode", help="episode array file; collected with the agent if omitted")
    p.add_argument("--context", type=int, default=15)
    p.add_argument("--future", type=int, default=35)
    p.add_argument("--rollouts", type=int, default=5)

    p = sub.add_parser("memory-probe", help="copy-memory training of a bare cell")
    _common(p)
    p.add_argument("--length", type=int, default=50)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--steps", type=int, default=1500)

    p = sub.add_parser("env-play", help="scripted or random rollout of the arena")
    _common(p)
    p.add_argument("--policy", choices=("random", "still", "spin"), default="random")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--full-frames", action="store_true", help="also save top-down debug frames")
    return ap


# -- subcommands -----------------------------------------------------------------------

def cmd_train(args):
    from .plots import plot_training
    from .train import train
    if args.steps is not None:
        args.set = (args.set or []) + [f"total_steps={args.steps}"]
    cfg = build_config(args)
    out = Path(args.outdir)
    res = train(cfg, out)
    items = [("config_hash", cfg.hash()), ("variant", cfg.variant), ("env", cfg.env),
             ("env_steps", res.env_steps), ("updates", res.updates),
             ("checkpoints", len(res.checkpoints)), ("latest", out / "latest.manifest")]
    if res.history:
        last = res.history[-1]
        items += [(k, last[k]) for k in ("total_loss", "image_loss", "kl_loss", "gate_prob_mean")
                  if k in last]
        items.append(("figure", plot_training(res.history, out / "training.png")))
    for n, summary in res.evaluations:
        items.append((f"eval@{n}", summary["return_mean"]))
    report("train", items)


def cmd_evaluate(args):
    from .plots import plot_eval
    from .train import evaluate_agent, load_agent, write_eval
    agent = load_agent(args.checkpoint, expect_variant=args.variant)
    cfg = agent.cfg
    if args.set or args.config or args.env or args.resolution or args.arena or args.distractors is not None:
        raise ConfigError("evaluate uses the checkpoint's config; only --variant may be checked")
    out = Path(args.outdir)
    dump = out / "episodes" if args.dump_episodes else None
    if dump:
        dump.mkdir(parents=True, exist_ok=True)
    rows, summary = evaluate_agent(agent, cfg, args.seeds, args.episodes, dump_dir=dump)
    write_eval(out, cfg, rows, summary)
    fig = plot_eval(rows, out / "scores.png", "score" if cfg.env == "bbs" else "return")
    items = [("config_hash", cfg.hash()), ("variant", cfg.variant), ("rows", len(rows)),
             ("return_mean", summary["return_mean"]), ("return_std", summary["return_std"]),
             ("csv", out / "metrics.csv"), ("figure", fig)]
    if "stats" in summary:
        items += [(f"{k}_mean", v["mean"]) for k, v in summary["stats"].items()]
    report("evaluate", items)


def cmd_dump(args):
    from .plots import plot_frame_variance
    from .storage import EpisodeRecord
    from .train import agent_policy, dump_imagination, load_agent, make_env, philox, run_episode
    agent = load_agent(args.checkpoint, expect_variant=args.variant)
    cfg = agent.cfg
    seed = args.seed if args.seed is not None else cfg.seed
    total = args.context + args.future
    if args.episode:
        episode = EpisodeRecord.load(args.episode)
    else:
        env = make_env(cfg, seed=seed)
        episode, _ = run_episode(env, agent_policy(agent, philox(seed, 99), noise=cfg.action_noise))
    if len(episode) < total:
        raise ValueError(f"episode has {len(episode)} steps; need {total}")
    out = Path(args.outdir)
    res = dump_imagination(agent, episode, out, seed, args.context, args.future, args.rollouts)
    var = res["frame_variance"]
    fig = plot_frame_variance(var, args.context, out / "frame_variance.png")
    report("dump-imagination", [
        ("grid_rows", res["grid"].shape[0]), ("grid_columns", res["grid"].shape[1]),
        ("context", args.context), ("future", args.future),
        ("max_variance_context", float(var[:args.context].max())),
        ("variance_first_prior_frame", float(var[args.context])),
        ("png", res["png"]), ("arrays", res["arrays_path"]), ("figure", fig)])


def cmd_memory(args):
    from .plots import plot_probe
    from .probes import PROBE_CELLS, memory_probe
    cells = [args.variant] if args.variant else ["gru", "vsg"]
    cells = ["gru" if c == "rssm" else c for c in cells]
    for c in cells:
        if c not in PROBE_CELLS:
            raise ConfigError(f"memory-probe cell must be one of {PROBE_CELLS}, got {c!r}")
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    base = args.seed or 0
    results = [memory_probe(c, args.length, base + s, steps=args.steps)
               for c in cells for s in range(args.seeds)]
    with open(out / "memory_probe.jsonl", "w") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    items = [("length", args.length), ("seeds", args.seeds)]
    for c in cells:
        finals = [r.final_loss for r in results if r.cell == c]
        items.append((f"{c}_median_final_loss", float(np.median(finals))))
    items.append(("figure", plot_probe(results, out / "memory_probe.png")))
    report("memory-probe", items)


def cmd_env_play(args):
    from ..metrics import compute_stats
    from .plots import save_grid_png
    from .storage import save_arrays
    from .train import make_env, philox
    args.set = (args.set or []) + [f"arena.max_steps={args.steps}"]
    cfg = build_config(args)
    if cfg.env != "bbs":
        raise ConfigError("env-play renders the BringBackShapes arena only")
    env = make_env(cfg)
    env.debug_frames = args.full_frames
    rng = philox(cfg.seed, 7)
    obs = env.reset()
    frames, full, infos, done, t = [obs], [], [], False, 0
    while not done:
        if args.policy == "random":
            a = rng.uniform(-1, 1, 2)
        elif args.policy == "still":
            a = np.array([0.0, -1.0])
        else:
            a = np.array([((t // 25) % 8) / 4 - 1, 1.0])
        obs, _, done, info = env.step(a)
        frames.append(obs)
        if args.full_frames:
            full.append(info.pop("full_frame"))
        infos.append(info)
        t += 1
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    frames = np.stack(frames)
    arrays = {"frames": frames}
    if full:
        arrays["full_frames"] = np.stack(full)
    save_arrays(out / "env_play.arr", arrays)
    pick = np.linspace(0, len(frames) - 1, min(len(frames), 20)).astype(int)
    png = save_grid_png(frames[pick][None], out / "env_play.png", scale=2)
    stats = compute_stats(infos, max_steps=cfg.arena.max_steps)
    report("env-play", [("steps", t), ("policy", args.policy), ("score", stats.score),
                        ("pct_not_visited", stats.pct_not_visited),
                        ("arrays", out / "env_play.arr"), ("png", png)])


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "dump-imagination": cmd_dump,
            "memory-probe": cmd_memory, "env-play": cmd_env_play}


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except Exception as e:  # noqa: BLE001 - every failure becomes one machine-readable line
        print("error " + json.dumps({"command": args.command, "type": type(e).__name__,
                                     "message": str(e)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
