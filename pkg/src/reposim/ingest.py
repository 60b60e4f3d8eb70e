"""Event-log parsing, training-window slicing, and the derived tables the
models fit on: per-user histories, repository states, and per-event-type
bipartite interaction graphs.

Wire formats
------------
JSON-Lines records carry the keys ``time``, ``eventType``, ``userID``,
``repoID``; CSV uses the same four columns in that order (header optional
on input, written on output). Timestamps are accepted as ISO-8601 strings
or epoch seconds and always emitted as ISO-8601 UTC.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from typing import Optional

import scipy.sparse as sp

from .core import (
    DAY_SECONDS,
    EmptyWindow,
    Event,
    EventLog,
    EventType,
    MalformedRecord,
    RepoState,
    UnsupportedEventType,
    UserHistory,
    format_timestamp,
    parse_event_type,
    parse_timestamp,
)

logger = logging.getLogger(__name__)

JSONL_KEYS = ("time", "eventType", "userID", "repoID")


@dataclass(frozen=True)
class BipartiteGraph:
    """Weighted user x repository adjacency for one event type.

    ``weights[i, j]`` counts events of this type by ``users[i]`` on
    ``repos[j]``; stored entries are >= 1 and absent entries mean zero.
    """

    event_type: EventType
    users: tuple[str, ...]
    repos: tuple[str, ...]
    weights: sp.csr_matrix

    @property
    def user_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.users)}

    @property
    def repo_index(self) -> dict[str, int]:
        return {r: j for j, r in enumerate(self.repos)}

    @property
    def n_edges(self) -> int:
        return self.weights.nnz

    def total_weight(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True)
class TrainingSlice:
    """Everything fit() needs from one training window."""

    window: tuple[float, float]
    events: EventLog
    histories: dict[str, UserHistory]
    repo_states: dict[str, RepoState]

    @property
    def n_users(self) -> int:
        return len(self.histories)

    @property
    def n_repos(self) -> int:
        return len(self.repo_states)

    def days(self) -> float:
        return (self.window[1] - self.window[0]) / DAY_SECONDS


def _parse_record(time_v, type_v, user_v, repo_v) -> Event:
    ev = Event(
        timestamp=parse_timestamp(time_v),
        event_type=parse_event_type(str(type_v)),
        user_id=str(user_v),
        repo_id=str(repo_v),
    )
    return ev.validate()


def load_events(path, fmt: str = "jsonl", *, strict: bool = False) -> EventLog:
    """Read an event log from ``path``.

    Malformed lines are skipped and counted (one warning at the end)
    unless ``strict`` is set, in which case the first bad line raises
    :class:`MalformedRecord`.
    """
    if fmt not in ("jsonl", "csv"):
        raise ValueError(f"unsupported format: {fmt!r}")
    events: list[Event] = []
    bad = 0
    with open(path, "r", encoding="utf-8") as fh:
        if fmt == "jsonl":
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    events.append(
                        _parse_record(
                            rec["time"], rec["eventType"], rec["userID"], rec["repoID"]
                        )
                    )
                except Exception as exc:
                    if strict:
                        raise MalformedRecord(line_no, str(exc)) from None
                    bad += 1
        else:
            reader = csv.reader(fh)
            for line_no, row in enumerate(reader, start=1):
                if not row:
                    continue
                if line_no == 1 and [c.strip() for c in row[:2]] == ["time", "eventType"]:
                    continue  # header row
                try:
                    if len(row) != 4:
                        raise ValueError(f"expected 4 columns, got {len(row)}")
                    events.append(_parse_record(row[0], row[1], row[2], row[3]))
                except Exception as exc:
                    if strict:
                        raise MalformedRecord(line_no, str(exc)) from None
                    bad += 1
    if bad:
        logger.warning("%s: skipped %d malformed line(s)", path, bad)
    return EventLog(events)


def save_events(log: EventLog, path, fmt: str = "jsonl") -> None:
    """Write ``log`` in the same formats :func:`load_events` reads."""
    if fmt not in ("jsonl", "csv"):
        raise ValueError(f"unsupported format: {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if fmt == "jsonl":
            for ev in log:
                fh.write(
                    json.dumps(
                        {
                            "time": format_timestamp(ev.timestamp),
                            "eventType": ev.event_type.value,
                            "userID": ev.user_id,
                            "repoID": ev.repo_id,
                        },
                        separators=(", ", ": "),
                    )
                )
                fh.write("\n")
        else:
            writer = csv.writer(fh)
            writer.writerow(JSONL_KEYS)
            for ev in log:
                writer.writerow(
                    [
                        format_timestamp(ev.timestamp),
                        ev.event_type.value,
                        ev.user_id,
                        ev.repo_id,
                    ]
                )


def load_repo_metadata(path) -> dict[str, dict]:
    """CSV of (repo_id, owner_id, created_at, language); header optional."""
    return _load_metadata(path, ("repo_id", "owner_id", "created_at", "language"))


def load_user_metadata(path) -> dict[str, dict]:
    """CSV of (user_id, created_at); header optional."""
    return _load_metadata(path, ("user_id", "created_at"))


def _load_metadata(path, columns: tuple[str, ...]) -> dict[str, dict]:
    out: dict[str, dict] = {}
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for line_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if line_no == 1 and row[0].strip() == columns[0]:
                continue
            rec = {}
            for col, value in zip(columns[1:], row[1:]):
                value = value.strip()
                if not value:
                    continue
                rec[col] = parse_timestamp(value) if col == "created_at" else value
            out[row[0].strip()] = rec
    return out


def build_slice(
    log: EventLog,
    window: tuple[float, float],
    repo_meta: Optional[dict[str, dict]] = None,
    user_meta: Optional[dict[str, dict]] = None,
) -> TrainingSlice:
    """Restrict ``log`` to ``window`` and derive per-user and per-repo tables.

    Repo ownership comes from metadata when present, else from the earliest
    Create event on the repo, else from the user of its earliest event of
    any type (an approximation for logs without metadata).
    """
    t_start, t_end = window
    if not t_end > t_start:
        raise EmptyWindow(f"bad window [{t_start}, {t_end})")
    events = log.restrict(t_start, t_end)
    if len(events) == 0:
        raise EmptyWindow(f"no events in [{t_start}, {t_end})")
    repo_meta = repo_meta or {}
    user_meta = user_meta or {}
    days = (t_end - t_start) / DAY_SECONDS

    user_counts: dict[str, dict[tuple[EventType, str], int]] = {}
    first_event: dict[str, Event] = {}
    first_create: dict[str, Event] = {}
    watchers: dict[str, set[str]] = {}
    forkers: dict[str, set[str]] = {}
    contributors: dict[str, set[str]] = {}

    for ev in events:
        counts = user_counts.setdefault(ev.user_id, {})
        key = (ev.event_type, ev.repo_id)
        counts[key] = counts.get(key, 0) + 1

        if ev.repo_id not in first_event:
            first_event[ev.repo_id] = ev
        if ev.event_type is EventType.Create and ev.repo_id not in first_create:
            first_create[ev.repo_id] = ev
        elif ev.event_type is EventType.Watch:
            watchers.setdefault(ev.repo_id, set()).add(ev.user_id)
        elif ev.event_type is EventType.Fork:
            forkers.setdefault(ev.repo_id, set()).add(ev.user_id)
        elif ev.event_type in (EventType.Push, EventType.PullRequest):
            contributors.setdefault(ev.repo_id, set()).add(ev.user_id)

    histories = {}
    for user_id in sorted(user_counts):
        counts = user_counts[user_id]
        total = sum(counts.values())
        created = user_meta.get(user_id, {}).get("created_at")
        histories[user_id] = UserHistory(
            user_id=user_id,
            counts=counts,
            rate=total / days,
            window=(t_start, t_end),
            created_at=created,
        )

    repo_states = {}
    for repo_id in sorted(first_event):
        meta = repo_meta.get(repo_id, {})
        if "owner_id" in meta:
            owner = meta["owner_id"]
        elif repo_id in first_create:
            owner = first_create[repo_id].user_id
        else:
            owner = first_event[repo_id].user_id
        created_at = meta.get("created_at")
        if created_at is None:
            created_at = first_event[repo_id].timestamp
        repo_states[repo_id] = RepoState(
            repo_id=repo_id,
            owner_id=owner,
            created_at=created_at,
            language=meta.get("language"),
            watch_count=len(watchers.get(repo_id, ())),
            fork_count=len(forkers.get(repo_id, ())),
            contributors=contributors.get(repo_id, set()),
        )

    return TrainingSlice(
        window=(t_start, t_end),
        events=events,
        histories=histories,
        repo_states=repo_states,
    )


def build_bipartite(slice_: TrainingSlice, e: EventType) -> BipartiteGraph:
    """Per-event-type weighted user x repo graph over the slice window.

    Create/Delete carry no user-repo interaction structure and are
    rejected; users with no events of type ``e`` get no row at all.
    """
    if e in (EventType.Create, EventType.Delete):
        raise UnsupportedEventType(f"no bipartite network for {e.value}")

    pair_counts: dict[tuple[str, str], int] = {}
    for user_id in sorted(slice_.histories):
        for (etype, repo_id), c in slice_.histories[user_id].counts.items():
            if etype is e:
                pair_counts[(user_id, repo_id)] = pair_counts.get((user_id, repo_id), 0) + c

    users = tuple(sorted({u for u, _ in pair_counts}))
    repos = tuple(sorted({r for _, r in pair_counts}))
    uidx = {u: i for i, u in enumerate(users)}
    ridx = {r: j for j, r in enumerate(repos)}
    rows, cols, vals = [], [], []
    for (u, r), c in sorted(pair_counts.items()):
        rows.append(uidx[u])
        cols.append(ridx[r])
        vals.append(c)
    weights = sp.csr_matrix(
        (vals, (rows, cols)), shape=(len(users), len(repos)), dtype=float
    )
    return BipartiteGraph(event_type=e, users=users, repos=repos, weights=weights)
