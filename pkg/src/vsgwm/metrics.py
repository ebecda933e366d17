"""Discovery statistics and evaluation scores computed from episode logs."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict, fields

import numpy as np

CSV_COLUMNS = ("seed", "episode", "score", "first_visit_time", "episode_length",
               "pct_not_visited", "pct_visited_not_scored")


class TruncatedLog(ValueError):
    pass


@dataclass
class EpisodeStats:
    score: int
    first_visit_time: float
    episode_length: int
    pct_not_visited: float
    pct_visited_not_scored: float

    def to_dict(self):
        return asdict(self)


def compute_stats(log, max_steps=3000) -> EpisodeStats:
    """Stats of one finished episode from its per-step info records.

    Each record carries ``step``, ``done`` and per-object lists ``visited``,
    ``scored`` and ``first_visit`` (-1 while unvisited), as emitted by the
    environment's ``step``.  Objects never visited count as ``max_steps``
    towards the mean first-visit time.
    """
    if not log:
        raise TruncatedLog("empty episode log")
    steps = [int(r["step"]) for r in log]
    if steps != list(range(steps[0], steps[0] + len(steps))) or steps[0] not in (0, 1):
        raise TruncatedLog(f"episode log has missing steps (first {steps[0]}, {len(steps)} records)")
    last = log[-1]
    if not last.get("done", False):
        raise TruncatedLog(f"episode log ends at step {last['step']} without done")
    visited = np.asarray(last["visited"], dtype=bool)
    scored = np.asarray(last["scored"], dtype=bool)
    first = np.asarray(last["first_visit"], dtype=np.int64)
    n = len(visited)
    if n == 0:
        return EpisodeStats(0, float(max_steps), int(last["step"]), 0.0, 0.0)
    times = np.where(visited, first, max_steps)
    n_visited = int(visited.sum())
    not_scored = int((visited & ~scored).sum())
    return EpisodeStats(
        score=int(scored.sum()),
        first_visit_time=float(times.mean()),
        episode_length=int(last["step"]),
        pct_not_visited=100.0 * (n - n_visited) / n,
        pct_visited_not_scored=100.0 * not_scored / n_visited if n_visited else 0.0,
    )


def aggregate(stats) -> dict:
    """Mean and standard deviation of every field across episodes."""
    out = {}
    for f in fields(EpisodeStats):
        vals = np.array([getattr(s, f.name) for s in stats], dtype=np.float64)
        out[f.name] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, rows):
    """``rows``: iterable of (seed, episode, EpisodeStats)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for seed, episode, st in rows:
            d = st.to_dict()
            w.writerow([_fmt(seed), _fmt(episode)] + [_fmt(d[c]) for c in CSV_COLUMNS[2:]])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_jsonl(path, rows, extra=None):
    with open(path, "w") as fh:
        for seed, episode, st in rows:
            rec = {"seed": int(seed), "episode": int(episode), **st.to_dict()}
            if extra:
                rec.update(extra)
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
