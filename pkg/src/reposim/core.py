"""Domain types shared by every other module: the event taxonomy, event
records, per-user training summaries, and repository state."""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, NamedTuple, Optional

DAY_SECONDS = 86400.0


class ReposimError(Exception):
    """Base class for all package errors."""


class UnknownEventType(ReposimError):
    def __init__(self, name: str):
        super().__init__(f"unknown event type: {name!r}")
        self.name = name


class MalformedRecord(ReposimError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"malformed record at line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class EmptyWindow(ReposimError):
    pass


class UnsupportedEventType(ReposimError):
    pass


class UnknownUser(ReposimError):
    pass


class InfeasibleBalance(ReposimError):
    pass


class InsufficientData(ReposimError):
    pass


class EmptyRank(ReposimError):
    pass


class NonFinite(ReposimError):
    pass


class BetaTooLarge(ReposimError):
    pass


class ConvergenceFailure(ReposimError):
    pass


class DegenerateTarget(ReposimError):
    pass


class DegenerateTruth(ReposimError):
    pass


class BadPersistence(ReposimError):
    pass


class EmptyCommunity(ReposimError):
    pass


class SnapshotError(ReposimError):
    pass


class EventType(Enum):
    """The closed set of ten event kinds a user can perform on a repository."""

    Create = "Create"
    Delete = "Delete"
    PullRequest = "PullRequest"
    PullRequestReviewComment = "PullRequestReviewComment"
    Issues = "Issues"
    IssueComment = "IssueComment"
    Push = "Push"
    CommitComment = "CommitComment"
    Watch = "Watch"
    Fork = "Fork"


#: Event kinds that can occur at most once per (user, repo) pair.
ONE_TIME_TYPES = frozenset({EventType.Create, EventType.Watch, EventType.Fork})

#: Event kinds counted as code contributions.
CONTRIBUTING_TYPES = frozenset({EventType.Push, EventType.PullRequest})

EVENT_TYPES: tuple[EventType, ...] = tuple(EventType)


def parse_event_type(s: str) -> EventType:
    """Parse an event-type name, accepting an optional 'Event' suffix.

    Case sensitive; raises :class:`UnknownEventType` for anything outside
    the closed ten-member set.
    """
    name = s
    if name.endswith("Event") and len(name) > len("Event"):
        name = name[: -len("Event")]
    try:
        return EventType(name)
    except ValueError:
        raise UnknownEventType(s) from None


def is_one_time(e: EventType) -> bool:
    """True iff at most one event of this type can exist per (user, repo)."""
    return e in ONE_TIME_TYPES


class Event(NamedTuple):
    """One ground or simulated action: who did what to which repo, when.

    ``timestamp`` is UTC seconds since the epoch.
    """

    timestamp: float
    event_type: EventType
    user_id: str
    repo_id: str

    def sort_key(self) -> tuple:
        return (self.timestamp, self.user_id, self.repo_id, self.event_type.value)

    def validate(self) -> "Event":
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp: {self.timestamp}")
        if not self.user_id or not self.repo_id:
            raise ValueError("empty user or repo id")
        return self


def _event_sort_key(ev: Event) -> tuple:
    return (ev.timestamp, ev.user_id, ev.repo_id, ev.event_type.value)


class EventLog:
    """An immutable, totally ordered sequence of events.

    Events are sorted by timestamp; ties break on (user_id, repo_id,
    event_type) lexicographically, making iteration order deterministic for
    a fixed multiset of events.
    """

    __slots__ = ("_events",)

    def __init__(self, events: Iterable[Event] = (), *, assume_sorted: bool = False):
        evs = list(events)
        if not assume_sorted:
            evs.sort(key=_event_sort_key)
        self._events: tuple[Event, ...] = tuple(evs)

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self._events)

    def __getitem__(self, i):
        return self._events[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, EventLog) and self._events == other._events

    def __repr__(self) -> str:
        return f"EventLog(n={len(self._events)})"

    @property
    def events(self) -> tuple[Event, ...]:
        return self._events

    def restrict(self, t_start: float, t_end: float) -> "EventLog":
        """Events with t_start <= timestamp < t_end (order preserved)."""
        return EventLog(
            (e for e in self._events if t_start <= e.timestamp < t_end),
            assume_sorted=True,
        )

    def span(self) -> tuple[float, float]:
        """(first, last) timestamp; raises EmptyWindow on an empty log."""
        if not self._events:
            raise EmptyWindow("empty event log has no span")
        return self._events[0].timestamp, self._events[-1].timestamp

    def merged_with(self, other: "EventLog") -> "EventLog":
        return EventLog(self._events + other._events)


@dataclass(frozen=True)
class UserHistory:
    """Per-user training summary over one window.

    ``rate`` is events per day inside the window; ``counts`` maps
    (event_type, repo_id) to the number of such events.
    """

    user_id: str
    counts: dict[tuple[EventType, str], int]
    rate: float
    window: tuple[float, float]
    created_at: Optional[float] = None

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def type_counts(self) -> dict[EventType, int]:
        out: dict[EventType, int] = {}
        for (etype, _), c in self.counts.items():
            out[etype] = out.get(etype, 0) + c
        return out

    def repo_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for (_, repo), c in self.counts.items():
            out[repo] = out.get(repo, 0) + c
        return out


@dataclass
class RepoState:
    """Mutable hub-side state for one repository.

    ``watch_count``/``fork_count`` count distinct users (one-time
    semantics); ``contributors`` holds users with at least one
    contributing event. Owned by exactly one partition at a time.
    """

    repo_id: str
    owner_id: str
    created_at: float
    language: Optional[str] = None
    watch_count: int = 0
    fork_count: int = 0
    contributors: set[str] = field(default_factory=set)

    @property
    def popularity(self) -> int:
        return self.watch_count + self.fork_count

    def __getstate__(self):
        # sets pickle in hash order, which varies across processes; sort
        # them so serialized state is byte-reproducible
        state = self.__dict__.copy()
        state["contributors"] = sorted(self.contributors)
        return state

    def __setstate__(self, state):
        state = dict(state)
        state["contributors"] = set(state["contributors"])
        self.__dict__.update(state)

    def copy(self) -> "RepoState":
        return RepoState(
            repo_id=self.repo_id,
            owner_id=self.owner_id,
            created_at=self.created_at,
            language=self.language,
            watch_count=self.watch_count,
            fork_count=self.fork_count,
            contributors=set(self.contributors),
        )


def format_timestamp(ts: float) -> str:
    """Render epoch seconds as ISO-8601 UTC (Z suffix)."""
    dt = _dt.datetime.fromtimestamp(ts, tz=_dt.timezone.utc)
    if dt.microsecond:
        return dt.isoformat().replace("+00:00", "Z")
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(value) -> float:
    """Accept epoch seconds (int/float/str) or an ISO-8601 string."""
    if isinstance(value, (int, float)):
        return float(value)
    s = str(value).strip()
    try:
        return float(s)
    except ValueError:
        pass
    iso = s.replace("Z", "+00:00")
    try:
        dt = _dt.datetime.fromisoformat(iso)
    except ValueError:
        raise ValueError(f"unparseable timestamp: {value!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=_dt.timezone.utc)
    return dt.timestamp()
