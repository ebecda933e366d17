import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vsgwm.metrics import (CSV_COLUMNS, EpisodeStats, TruncatedLog, aggregate, compute_stats,
                           read_csv, write_csv, write_jsonl)


def scripted_log(length, visits, scores, n=5):
    """Per-step records: object k visited at ``visits[k]`` (or never), scored at ``scores[k]``."""
    log = []
    for t in range(1, length + 1):
        visited = [v is not None and v <= t for v in visits]
        scored = [s is not None and s <= t for s in scores]
        first = [v if (v is not None and v <= t) else -1 for v in visits]
        log.append({"step": t, "visited": visited, "scored": scored, "first_visit": first,
                    "done": t == length})
    return log


def test_all_scored_at_100():
    s = compute_stats(scripted_log(100, [5] * 5, [100] * 5))
    assert s.episode_length == 100 and s.pct_not_visited == 0 and s.score == 5
    assert s.pct_visited_not_scored == 0


def test_never_visited_uses_cap():
    s = compute_stats(scripted_log(3000, [None] * 5, [None] * 5))
    assert s.first_visit_time == 3000 and s.pct_not_visited == 100
    assert s.score == 0 and s.episode_length == 3000 and s.pct_visited_not_scored == 0


def test_hand_computed_example():
    log = scripted_log(3000, [10, 20, 30, 40, 50], [60, 70, 80, None, None])
    s = compute_stats(log)
    assert s == EpisodeStats(score=3, first_visit_time=30.0, episode_length=3000,
                             pct_not_visited=0.0, pct_visited_not_scored=40.0)


def test_partial_visits_mix_cap():
    s = compute_stats(scripted_log(500, [100, None, 200, None, None], [300, None, None, None, None]))
    assert s.first_visit_time == (100 + 200 + 3 * 3000) / 5
    assert s.pct_not_visited == 60.0
    assert s.pct_visited_not_scored == 50.0
    assert s.score == 1


def test_truncated_logs_rejected():
    log = scripted_log(50, [1] * 5, [None] * 5)
    with pytest.raises(TruncatedLog, match="without done"):
        compute_stats(log[:-1])
    with pytest.raises(TruncatedLog, match="missing"):
        compute_stats(log[:10] + log[11:])
    with pytest.raises(TruncatedLog):
        compute_stats([])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.one_of(st.none(), st.integers(1, 80)), min_size=5, max_size=5),
       st.lists(st.booleans(), min_size=5, max_size=5))
def test_percentages_partition(visits, score_flags):
    scores = [v + 5 if (v is not None and f) else None for v, f in zip(visits, score_flags)]
    s = compute_stats(scripted_log(100, visits, scores))
    visited_pct = 100.0 * sum(v is not None for v in visits) / 5
    assert s.pct_not_visited + visited_pct == pytest.approx(100.0)
    assert 0 <= s.pct_visited_not_scored <= 100
    assert s.score <= 5 and s.episode_length <= 3000
    assert compute_stats(scripted_log(100, visits, scores)) == s


def test_aggregate_order_independent():
    a = compute_stats(scripted_log(100, [5] * 5, [100] * 5))
    b = compute_stats(scripted_log(3000, [None] * 5, [None] * 5))
    assert aggregate([a, b]) == aggregate([b, a])
    agg = aggregate([a, b])
    assert agg["score"] == {"mean": 2.5, "std": 2.5}


def test_csv_and_jsonl(tmp_path):
    rows = [(0, 0, compute_stats(scripted_log(100, [5] * 5, [100] * 5))),
            (0, 1, compute_stats(scripted_log(3000, [None] * 5, [None] * 5)))]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(p1, rows)
    write_csv(p2, rows)
    assert p1.read_bytes() == p2.read_bytes()
    back = read_csv(p1)
    assert tuple(back[0].keys()) == CSV_COLUMNS
    assert back[1]["first_visit_time"] == "3000.0"
    write_jsonl(tmp_path / "m.jsonl", rows, extra={"config_hash": "abc"})
    lines = (tmp_path / "m.jsonl").read_text().splitlines()
    assert len(lines) == 2 and '"config_hash": "abc"' in lines[0]
