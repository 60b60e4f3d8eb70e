"""The null model and the three stationary probabilistic agents.

Each user's behavior is a fixed distribution estimated from training
frequencies: the baseline draws event type and repository independently,
the ground-event variant draws the joint pair, and the preferential
variant redirects Watch/Fork toward popular repositories of popular
neighbors. The null model is not probabilistic at all: it replays the two
weeks before the test window, shifted forward tile by tile.
"""

from __future__ import annotations

from typing import ClassVar, Optional

import numpy as np

from ..core import (
    DAY_SECONDS,
    EmptyWindow,
    Event,
    EventLog,
    EventType,
    UnknownUser,
)
from ..ingest import TrainingSlice
from ..validation import check_fitted
from .base import AgentModel, DiscreteDist, HubView, register_model

NULL_TILE_SECONDS = 14 * DAY_SECONDS

#: caps keeping per-agent state small at millions of agents
MAX_NEIGHBORS = 50
MAX_NEIGHBOR_REPOS = 20


def _rates_from_slice(slice_: TrainingSlice) -> dict[str, float]:
    return {u: h.rate for u, h in slice_.histories.items()}


class BaselinePolicy:
    """Independent draws: type ~ action_dist, repo ~ repo_dist."""

    __slots__ = ("action_dist", "repo_dist")

    def __init__(self, action_dist: DiscreteDist, repo_dist: DiscreteDist):
        self.action_dist = action_dist
        self.repo_dist = repo_dist

    def step(self, rng: np.random.Generator, hub_view: Optional[HubView] = None, now: float = 0.0):
        return self.action_dist.sample(rng), self.repo_dist.sample(rng)


class GroundEventPolicy:
    """Joint draw over observed (event type, repo) pairs."""

    __slots__ = ("pair_dist",)

    def __init__(self, pair_dist: DiscreteDist):
        self.pair_dist = pair_dist

    def step(self, rng: np.random.Generator, hub_view: Optional[HubView] = None, now: float = 0.0):
        return self.pair_dist.sample(rng)


class PreferentialPolicy:
    """Baseline plus popularity-driven Watch/Fork targeting.

    For Watch/Fork the policy picks a neighboring user proportionally to
    live popularity (watches+forks on repos they own), then one of that
    neighbor's known repos proportionally to live repo popularity. Falls
    back to the baseline repo distribution when no neighbors exist.
    """

    __slots__ = ("action_dist", "repo_dist", "neighbors", "neighbor_repos")

    def __init__(
        self,
        action_dist: DiscreteDist,
        repo_dist: DiscreteDist,
        neighbors: list[str],
        neighbor_repos: dict[str, list[str]],
    ):
        self.action_dist = action_dist
        self.repo_dist = repo_dist
        self.neighbors = neighbors
        self.neighbor_repos = neighbor_repos

    def step(self, rng: np.random.Generator, hub_view: Optional[HubView] = None, now: float = 0.0):
        etype = self.action_dist.sample(rng)
        if etype not in (EventType.Watch, EventType.Fork) or not self.neighbors or hub_view is None:
            return etype, self.repo_dist.sample(rng)
        weights = np.array(
            [hub_view.user_popularity(v) for v in self.neighbors], dtype=float
        )
        if weights.sum() <= 0:
            weights[:] = 1.0  # all unpopular: uniform among neighbors
        neighbor = self.neighbors[_weighted_index(weights, rng)]
        repos = self.neighbor_repos.get(neighbor, [])
        if not repos:
            return etype, self.repo_dist.sample(rng)
        rweights = np.array([hub_view.repo_popularity(r) for r in repos], dtype=float)
        if rweights.sum() <= 0:
            rweights[:] = 1.0
        return etype, repos[_weighted_index(rweights, rng)]


def _weighted_index(weights: np.ndarray, rng: np.random.Generator) -> int:
    cum = np.cumsum(weights)
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))


def fit_baseline(slice_: TrainingSlice, user_id: str) -> BaselinePolicy:
    """Frequency-estimated independent type and repo distributions."""
    hist = slice_.histories.get(user_id)
    if hist is None or hist.total == 0:
        raise UnknownUser(user_id)
    type_counts = hist.type_counts()
    repo_counts = hist.repo_counts()
    action = DiscreteDist(
        sorted(type_counts, key=lambda e: e.value),
        [type_counts[e] for e in sorted(type_counts, key=lambda e: e.value)],
    )
    repos = sorted(repo_counts)
    repo = DiscreteDist(repos, [repo_counts[r] for r in repos])
    return BaselinePolicy(action, repo)


def fit_ground_event(slice_: TrainingSlice, user_id: str) -> GroundEventPolicy:
    """Frequency-estimated joint (type, repo) distribution."""
    hist = slice_.histories.get(user_id)
    if hist is None or hist.total == 0:
        raise UnknownUser(user_id)
    pairs = sorted(hist.counts, key=lambda p: (p[0].value, p[1]))
    return GroundEventPolicy(DiscreteDist(pairs, [hist.counts[p] for p in pairs]))


def _invert_repo_users(slice_: TrainingSlice) -> dict[str, list[str]]:
    repo_users: dict[str, set[str]] = {}
    for user_id, hist in slice_.histories.items():
        for (_, repo_id) in hist.counts:
            repo_users.setdefault(repo_id, set()).add(user_id)
    return {r: sorted(us) for r, us in repo_users.items()}


def _top_repos(hist, limit: int) -> list[str]:
    counts = hist.repo_counts()
    return [r for r, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:limit]]


def fit_preferential(
    slice_: TrainingSlice,
    user_id: str,
    repo_users: Optional[dict[str, list[str]]] = None,
) -> PreferentialPolicy:
    """Baseline policy extended with the user's co-activity neighborhood."""
    base = fit_baseline(slice_, user_id)
    if repo_users is None:
        repo_users = _invert_repo_users(slice_)
    hist = slice_.histories[user_id]
    neighbor_set: set[str] = set()
    for (_, repo_id) in hist.counts:
        neighbor_set.update(repo_users.get(repo_id, ()))
    neighbor_set.discard(user_id)
    # keep the most active co-actors; ties by id for determinism
    neighbors = sorted(
        neighbor_set,
        key=lambda v: (-slice_.histories[v].total, v),
    )[:MAX_NEIGHBORS]
    neighbor_repos = {
        v: _top_repos(slice_.histories[v], MAX_NEIGHBOR_REPOS) for v in neighbors
    }
    return PreferentialPolicy(base.action_dist, base.repo_dist, neighbors, neighbor_repos)


def fit_null(log: EventLog, test_window: tuple[float, float]) -> EventLog:
    """Tile the two weeks before ``test_window`` across it, dates shifted
    by whole multiples of 14 days."""
    model = NullModel().fit(log, test_window)
    return model.events_for(test_window)


@register_model
class NullModel(AgentModel):
    """Replays the two pre-window weeks with adjusted dates."""

    kind: ClassVar[str] = "null"
    pretimestamped: ClassVar[bool] = True

    def fit(self, log: EventLog, window: tuple[float, float]):
        t_start = float(window[0])
        pre = log.restrict(t_start - NULL_TILE_SECONDS, t_start)
        if len(pre) == 0:
            raise EmptyWindow(
                f"no events in the two weeks before {t_start}"
            )
        self.pre_events_ = pre
        self.pre_end_ = t_start
        return self

    def events_for(self, window: tuple[float, float]) -> EventLog:
        check_fitted(self, ("pre_events_", "pre_end_"))
        t0, t1 = float(window[0]), float(window[1])
        if t0 < self.pre_end_:
            raise EmptyWindow("requested window starts before the source slice ends")
        out: list[Event] = []
        # tile m covers [pre_end + (m-1)*14d, pre_end + m*14d); start with
        # the first tile overlapping the window
        m = int(np.floor((t0 - self.pre_end_) / NULL_TILE_SECONDS)) + 1
        while self.pre_end_ + (m - 1) * NULL_TILE_SECONDS < t1:
            for ev in self.pre_events_:
                ts = ev.timestamp + m * NULL_TILE_SECONDS
                if t0 <= ts < t1:
                    out.append(ev._replace(timestamp=ts))
            m += 1
        return EventLog(out)


class _PerUserModel(AgentModel):
    """Common fit loop for the per-user stationary models."""

    def _fit_policy(self, slice_: TrainingSlice, user_id: str):
        raise NotImplementedError

    def fit(self, slice_: TrainingSlice):
        self.window_ = slice_.window
        self.rates_ = _rates_from_slice(slice_)
        self.users_ = sorted(slice_.histories)
        self.policies_ = {u: self._fit_policy(slice_, u) for u in self.users_}
        return self


@register_model
class BaselineModel(_PerUserModel):
    kind: ClassVar[str] = "baseline"

    def _fit_policy(self, slice_, user_id):
        return fit_baseline(slice_, user_id)


@register_model
class GroundEventModel(_PerUserModel):
    kind: ClassVar[str] = "ground"

    def _fit_policy(self, slice_, user_id):
        return fit_ground_event(slice_, user_id)


@register_model
class PreferentialModel(_PerUserModel):
    kind: ClassVar[str] = "pref"
    hub_dependent: ClassVar[bool] = True

    def fit(self, slice_: TrainingSlice):
        self._repo_users = _invert_repo_users(slice_)
        super().fit(slice_)
        del self._repo_users
        return self

    def _fit_policy(self, slice_, user_id):
        return fit_preferential(slice_, user_id, self._repo_users)
