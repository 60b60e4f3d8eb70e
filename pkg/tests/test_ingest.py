import json

import pytest

from reposim.core import (
    DAY_SECONDS,
    EmptyWindow,
    Event,
    EventLog,
    EventType,
    MalformedRecord,
    UnsupportedEventType,
)
from reposim.ingest import (
    build_bipartite,
    build_slice,
    load_events,
    load_repo_metadata,
    save_events,
)

T0 = 1_500_000_000.0


def _write_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def test_load_events_jsonl(tmp_path):
    path = tmp_path / "log.jsonl"
    _write_jsonl(
        path,
        [
            {"time": T0, "eventType": "Push", "userID": "u1", "repoID": "r1"},
            {"time": T0 + 5, "eventType": "WatchEvent", "userID": "u2", "repoID": "r1"},
            {"time": "2018-02-01T00:00:00Z", "eventType": "Fork", "userID": "u3", "repoID": "r2"},
        ],
    )
    log = load_events(path, "jsonl")
    assert len(log) == 3
    assert log[0] == Event(T0, EventType.Push, "u1", "r1")
    assert log[1].event_type is EventType.Watch


def test_load_events_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert len(load_events(path, "jsonl")) == 0


def test_load_events_strict_rejects_missing_field(tmp_path):
    path = tmp_path / "bad.jsonl"
    _write_jsonl(path, [{"time": T0, "eventType": "Push", "userID": "u1"}])
    with pytest.raises(MalformedRecord):
        load_events(path, "jsonl", strict=True)
    # lenient mode skips and counts
    assert len(load_events(path, "jsonl", strict=False)) == 0


def test_event_log_round_trip_both_formats(tmp_path):
    evs = [
        Event(T0 + i * 3600.0, t, f"u{i % 3}", f"r{i % 2}")
        for i, t in enumerate([EventType.Push, EventType.Watch, EventType.Issues, EventType.Fork])
    ]
    log = EventLog(evs)
    for fmt in ("jsonl", "csv"):
        path = tmp_path / f"log.{fmt}"
        save_events(log, path, fmt)
        assert load_events(path, fmt) == log


def test_save_then_save_is_byte_stable(tmp_path):
    evs = [Event(T0 + i, EventType.Push, "u", "r") for i in range(10)]
    log = EventLog(evs)
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_events(log, p1)
    save_events(load_events(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def _slice_events():
    # u1: 30 pushes on r1 over 30 days; u2: watch r1, create r2, push r2
    evs = [Event(T0 + i * DAY_SECONDS + 10.0, EventType.Push, "u1", "r1") for i in range(30)]
    evs += [
        Event(T0 + 50.0, EventType.Create, "u2", "r2"),
        Event(T0 + 60.0, EventType.Watch, "u2", "r1"),
        Event(T0 + 70.0, EventType.Push, "u2", "r2"),
    ]
    return EventLog(evs)


def test_build_slice_rates_and_counts():
    window = (T0, T0 + 30 * DAY_SECONDS)
    sl = build_slice(_slice_events(), window)
    assert sl.histories["u1"].rate == pytest.approx(1.0)
    assert sl.histories["u2"].counts == {
        (EventType.Create, "r2"): 1,
        (EventType.Watch, "r1"): 1,
        (EventType.Push, "r2"): 1,
    }
    # every event attributed exactly once
    assert sum(h.total for h in sl.histories.values()) == len(sl.events)


def test_build_slice_ownership_inference():
    window = (T0, T0 + 30 * DAY_SECONDS)
    sl = build_slice(_slice_events(), window)
    # r2's earliest event is a Create by u2
    assert sl.repo_states["r2"].owner_id == "u2"
    # r1 has no Create; falls back to earliest event's user
    assert sl.repo_states["r1"].owner_id == "u1"
    assert sl.repo_states["r1"].watch_count == 1
    assert sl.repo_states["r2"].contributors == {"u2"}


def test_build_slice_metadata_overrides_inference():
    window = (T0, T0 + 30 * DAY_SECONDS)
    meta = {"r1": {"owner_id": "boss", "created_at": T0 - 100.0, "language": "Rust"}}
    sl = build_slice(_slice_events(), window, repo_meta=meta)
    assert sl.repo_states["r1"].owner_id == "boss"
    assert sl.repo_states["r1"].created_at == T0 - 100.0
    assert sl.repo_states["r1"].language == "Rust"


def test_build_slice_empty_window():
    with pytest.raises(EmptyWindow):
        build_slice(_slice_events(), (T0 - 200.0, T0 - 100.0))


def test_load_repo_metadata(tmp_path):
    path = tmp_path / "repos.csv"
    path.write_text(
        "repo_id,owner_id,created_at,language\n"
        "r1,u9,2018-01-01T00:00:00Z,Python\n"
        "r2,u8,,\n"
    )
    meta = load_repo_metadata(path)
    assert meta["r1"]["owner_id"] == "u9"
    assert meta["r1"]["language"] == "Python"
    assert "created_at" not in meta["r2"]


def test_build_bipartite_weights():
    window = (T0, T0 + 30 * DAY_SECONDS)
    evs = [
        Event(T0 + 1, EventType.Push, "u1", "r1"),
        Event(T0 + 2, EventType.Push, "u1", "r1"),
        Event(T0 + 3, EventType.Push, "u2", "r2"),
        Event(T0 + 4, EventType.Watch, "u3", "r1"),
    ]
    sl = build_slice(EventLog(evs), window)
    g = build_bipartite(sl, EventType.Push)
    assert g.users == ("u1", "u2")
    assert g.repos == ("r1", "r2")
    assert g.weights[g.user_index["u1"], g.repo_index["r1"]] == 2
    # u3 only watched: no Push row at all
    assert "u3" not in g.users
    # total weight equals number of Push events in slice
    assert g.total_weight() == 3


def test_build_bipartite_rejects_create_delete():
    window = (T0, T0 + 30 * DAY_SECONDS)
    sl = build_slice(_slice_events(), window)
    for e in (EventType.Create, EventType.Delete):
        with pytest.raises(UnsupportedEventType):
            build_bipartite(sl, e)


def test_build_slice_is_deterministic():
    window = (T0, T0 + 30 * DAY_SECONDS)
    a = build_slice(_slice_events(), window)
    b = build_slice(_slice_events(), window)
    assert a.histories == b.histories
    assert list(a.repo_states) == list(b.repo_states)
