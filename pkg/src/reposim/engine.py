"""Partitioned discrete-event simulation driver.

A global virtual clock advances in fixed ticks (default 1 hour). Within a
tick each partition drains its due agents in (wake time, user id) order;
every wake produces one event through the agent's policy. Events on repos
owned by another partition are forwarded as messages and applied at the
inter-tick barrier, after which the touched repo migrates to the partition
that last touched it (demand-driven shared state). Popularity tables read
by stepping agents are frozen at tick start, bounding cross-partition
staleness to one tick.

Determinism contract: for a fixed (seed, partition count) two runs produce
byte-identical logs. Different partition counts may legitimately differ.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from hashlib import blake2b
from typing import Optional

import numpy as np

from .core import (
    DAY_SECONDS,
    Event,
    EventLog,
    EventType,
    RepoState,
    is_one_time,
)
from .ingest import TrainingSlice
from .models.base import AgentModel, HubView
from .partition import PartitionAssignment, build_interaction_graph, partition_graph
from .validation import check_window

DEFAULT_TICK_SECONDS = 3600.0


class ModelStepError(RuntimeError):
    """A model's step failed; carries the responsible agent id."""

    def __init__(self, user_id: str, cause: Exception):
        super().__init__(f"model step failed for user {user_id!r}: {cause}")
        self.user_id = user_id


@dataclass
class SimulationConfig:
    window: tuple[float, float]
    seed: int = 0
    partitions: int = 1
    tick_seconds: float = DEFAULT_TICK_SECONDS
    debug_checks: bool = False

    def __post_init__(self):
        self.window = check_window(self.window)
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.partitions < 1:
            raise ValueError("partitions must be >= 1")
        if self.tick_seconds <= 0:
            raise ValueError("tick_seconds must be positive")


@dataclass
class RunStats:
    n_events: int = 0
    ticks: int = 0
    cross_partition_messages: int = 0
    migrations: int = 0
    dropped_duplicates: int = 0
    final_repo_states: Optional[dict[str, RepoState]] = None


def _stable_hash(text: str) -> int:
    return int.from_bytes(blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def agent_rng(seed: int, user_id: str, stream: str) -> np.random.Generator:
    """Deterministic per-(seed, user, stream) random generator."""
    return np.random.default_rng(
        np.random.SeedSequence([seed, _stable_hash(f"{stream}:{user_id}")])
    )


def poisson_times(
    rng: np.random.Generator, rate_per_day: float, t_start: float, t_end: float
) -> np.ndarray:
    """Homogeneous Poisson arrival times in [t_start, t_end)."""
    if rate_per_day <= 0:
        return np.empty(0)
    scale = DAY_SECONDS / rate_per_day
    expect = (t_end - t_start) / scale
    chunk = int(expect + 4 * math.sqrt(expect + 1) + 8)
    times: list[np.ndarray] = []
    t = t_start
    while True:
        arr = t + np.cumsum(rng.exponential(scale, size=chunk))
        inside = arr[arr < t_end]
        times.append(inside)
        if inside.size < arr.size:
            break
        t = float(arr[-1])
    return np.concatenate(times)


def schedule_agents(
    slice_: TrainingSlice, model: AgentModel, cfg: SimulationConfig
) -> dict[str, np.ndarray]:
    """Per-agent wake times for the whole window, seeded from (seed, user)."""
    t0, t1 = cfg.window
    return {
        u: poisson_times(agent_rng(cfg.seed, u, "sched"), model.rate(u), t0, t1)
        for u in model.users()
    }


class _HubEntry:
    """One repository's authoritative state plus one-time dedup sets."""

    __slots__ = ("state", "watchers", "forkers")

    def __init__(self, state: RepoState):
        self.state = state
        self.watchers: set[str] = set()
        self.forkers: set[str] = set()


def _apply_event(entry: _HubEntry, ev: Event) -> int:
    """Update hub state; returns the popularity delta (0 or 1)."""
    st = entry.state
    if ev.event_type is EventType.Watch:
        if ev.user_id not in entry.watchers:
            entry.watchers.add(ev.user_id)
            st.watch_count += 1
            return 1
        return 0
    if ev.event_type is EventType.Fork:
        if ev.user_id not in entry.forkers:
            entry.forkers.add(ev.user_id)
            st.fork_count += 1
            return 1
        return 0
    if ev.event_type in (EventType.Push, EventType.PullRequest):
        st.contributors.add(ev.user_id)
    return 0


class _PartitionHubView(HubView):
    """Live view of locally-owned repos over a tick-start global snapshot."""

    def __init__(self, hub, repo_pop, user_pop, owners):
        self._hub = hub
        self._repo_pop = repo_pop
        self._user_pop = user_pop
        self._owners = owners

    def repo_popularity(self, repo_id: str) -> int:
        entry = self._hub.get(repo_id)
        if entry is not None:
            return entry.state.popularity
        return self._repo_pop.get(repo_id, 0)

    def user_popularity(self, user_id: str) -> int:
        return self._user_pop.get(user_id, 0)

    def owner_of(self, repo_id: str) -> Optional[str]:
        return self._owners.get(repo_id)


class PopulationView(_PartitionHubView):
    """Extended view for population-level generators: globally ranked
    repositories and partition-prefixed id minting."""

    def __init__(self, hub, repo_pop, user_pop, owners, partition_id: int):
        super().__init__(hub, repo_pop, user_pop, owners)
        self._pid = partition_id
        self._user_counter = 0
        self._repo_counter = 0
        self._ranked: Optional[list[str]] = None

    def invalidate_rank(self):
        self._ranked = None

    def repos_ranked(self) -> list[str]:
        """All repo ids ordered by popularity descending, ties by id."""
        if self._ranked is None:
            pops = dict(self._repo_pop)
            for r, e in self._hub.items():
                pops[r] = e.state.popularity
            self._ranked = [
                r for r, _ in sorted(pops.items(), key=lambda kv: (-kv[1], kv[0]))
            ]
        return self._ranked

    def mint_user_id(self) -> str:
        self._user_counter += 1
        return f"u-p{self._pid}-{self._user_counter:08d}"

    def mint_repo_id(self) -> str:
        self._repo_counter += 1
        return f"r-p{self._pid}-{self._repo_counter:08d}"


class _Partition:
    def __init__(self, pid: int):
        self.pid = pid
        self.hub: dict[str, _HubEntry] = {}
        self.heap: list[tuple[float, str]] = []
        self.out: list[Event] = []
        self.outbox: dict[int, list[Event]] = {}
        self.deltas: dict[str, int] = {}
        self.sched_rngs: dict[str, np.random.Generator] = {}
        self.step_rngs: dict[str, np.random.Generator] = {}
        self.scales: dict[str, float] = {}
        self.policies: dict[str, object] = {}
        self.done: dict[str, set] = {}


POPULATION_AGENT = "__population__"


def _assign_partitions(
    slice_: TrainingSlice, users: list[str], cfg: SimulationConfig
) -> tuple[dict[str, int], dict[str, int]]:
    """(user -> partition, repo -> partition) from the interaction graph."""
    if cfg.partitions == 1:
        return {u: 0 for u in users}, {r: 0 for r in slice_.repo_states}
    graph = build_interaction_graph(slice_)
    assignment: PartitionAssignment = partition_graph(
        graph, cfg.partitions, seed=cfg.seed
    )
    part_of = assignment.part_of()
    user_part = {u: part_of.get(("u", u), 0) for u in users}
    repo_part = {r: part_of.get(("r", r), 0) for r in slice_.repo_states}
    return user_part, repo_part


def run(
    cfg: SimulationConfig,
    slice_: TrainingSlice,
    model: AgentModel,
    *,
    stats: Optional[RunStats] = None,
) -> EventLog:
    """Simulate ``cfg.window`` and return the sorted output log."""
    t_start, t_end = cfg.window
    stats = stats if stats is not None else RunStats()

    if model.pretimestamped:
        out = model.events_for(cfg.window).restrict(t_start, t_end)
        stats.n_events = len(out)
        return out

    users = model.users() if not model.population_level else []
    user_part, repo_part = _assign_partitions(slice_, users, cfg)
    parts = [_Partition(p) for p in range(cfg.partitions)]

    # authoritative owner-user map and tick-start popularity snapshot
    owners: dict[str, str] = {}
    repo_pop: dict[str, int] = {}
    user_pop: dict[str, int] = {}
    directory: dict[str, int] = {}
    for r, st in slice_.repo_states.items():
        pid = repo_part[r]
        entry = _HubEntry(st.copy())
        parts[pid].hub[r] = entry
        directory[r] = pid
        owners[r] = st.owner_id
        repo_pop[r] = st.popularity
        user_pop[st.owner_id] = user_pop.get(st.owner_id, 0) + st.popularity
    # seed dedup sets from training so counters keep distinct-user semantics
    for u in sorted(slice_.histories):
        for (etype, repo) in slice_.histories[u].counts:
            if etype is EventType.Watch:
                parts[directory[repo]].hub[repo].watchers.add(u)
            elif etype is EventType.Fork:
                parts[directory[repo]].hub[repo].forkers.add(u)

    views = [
        _PartitionHubView(p.hub, repo_pop, user_pop, owners) for p in parts
    ]

    pop_view: Optional[PopulationView] = None
    pop_runtime = None
    pop_rng = None
    pop_scale = 0.0
    if model.population_level:
        pop_view = PopulationView(parts[0].hub, repo_pop, user_pop, owners, 0)
        views[0] = pop_view
        pop_runtime = model.make_runtime()
        pop_rng = agent_rng(cfg.seed, POPULATION_AGENT, "step")
        sched = agent_rng(cfg.seed, POPULATION_AGENT, "sched")
        rate = model.population_rate_
        if rate > 0:
            pop_scale = DAY_SECONDS / rate
            first = t_start + sched.exponential(pop_scale)
            if first < t_end:
                heapq.heappush(parts[0].heap, (first, POPULATION_AGENT))
        parts[0].sched_rngs[POPULATION_AGENT] = sched
    else:
        for u in users:
            pid = user_part[u]
            part = parts[pid]
            rate = model.rate(u)
            part.policies[u] = model.policy_for(u)
            hist = slice_.histories[u]
            part.done[u] = {
                (etype, repo)
                for (etype, repo) in hist.counts
                if is_one_time(etype)
            }
            if rate <= 0:
                continue
            part.scales[u] = DAY_SECONDS / rate
            part.sched_rngs[u] = agent_rng(cfg.seed, u, "sched")
            part.step_rngs[u] = agent_rng(cfg.seed, u, "step")
            first = t_start + part.sched_rngs[u].exponential(part.scales[u])
            if first < t_end:
                heapq.heappush(part.heap, (first, u))

    t = t_start
    while t < t_end:
        tick_end = min(t + cfg.tick_seconds, t_end)
        stats.ticks += 1
        popularity_changed = False

        for part in parts:
            view = views[part.pid]
            heap = part.heap
            while heap and heap[0][0] < tick_end:
                t_wake, uid = heapq.heappop(heap)
                try:
                    if uid == POPULATION_AGENT:
                        actor, repo, etype = pop_runtime.generate(pop_rng, pop_view, t_wake)
                        next_t = t_wake + part.sched_rngs[uid].exponential(pop_scale)
                    else:
                        actor = uid
                        policy = part.policies[uid]
                        rng = part.step_rngs[uid]
                        etype, repo = policy.step(rng, view, t_wake)
                        done = part.done[uid]
                        if is_one_time(etype) and (etype, repo) in done:
                            etype, repo = policy.step(rng, view, t_wake)  # one redraw
                            stats.dropped_duplicates += 1
                        if is_one_time(etype):
                            done.add((etype, repo))
                        next_t = t_wake + part.sched_rngs[uid].exponential(part.scales[uid])
                except Exception as exc:
                    raise ModelStepError(uid, exc) from exc
                ev = Event(float(int(t_wake)), etype, actor, repo)
                part.out.append(ev)
                stats.n_events += 1

                owner_pid = directory.get(repo)
                if owner_pid is None:
                    # newly created repository: owned here, by the actor
                    entry = _HubEntry(
                        RepoState(repo_id=repo, owner_id=actor, created_at=ev.timestamp)
                    )
                    part.hub[repo] = entry
                    directory[repo] = part.pid
                    owners[repo] = actor
                    part.deltas.setdefault(repo, 0)
                    if pop_view is not None:
                        pop_view.invalidate_rank()
                    _apply_event(entry, ev)
                elif owner_pid == part.pid:
                    delta = _apply_event(part.hub[repo], ev)
                    if delta:
                        part.deltas[repo] = part.deltas.get(repo, 0) + delta
                else:
                    part.outbox.setdefault(owner_pid, []).append(ev)

                if next_t < t_end:
                    heapq.heappush(heap, (next_t, uid))

        # ---- barrier: deliver messages, migrate, refresh global tables ----
        remote_touch: dict[str, tuple[float, str, int]] = {}
        for part in parts:
            for target_pid in sorted(part.outbox):
                msgs = part.outbox[target_pid]
                stats.cross_partition_messages += len(msgs)
                for ev in sorted(msgs, key=lambda e: e.sort_key()):
                    target = parts[target_pid]
                    delta = _apply_event(target.hub[ev.repo_id], ev)
                    if delta:
                        target.deltas[ev.repo_id] = target.deltas.get(ev.repo_id, 0) + delta
                    touch = (ev.timestamp, ev.user_id, part.pid)
                    prev = remote_touch.get(ev.repo_id)
                    if prev is None or touch[:2] >= prev[:2]:
                        remote_touch[ev.repo_id] = touch
            part.outbox = {}

        for repo in sorted(remote_touch):
            _, _, new_pid = remote_touch[repo]
            old_pid = directory[repo]
            if new_pid == old_pid:
                continue
            entry = parts[old_pid].hub.pop(repo)
            parts[new_pid].hub[repo] = entry
            directory[repo] = new_pid
            stats.migrations += 1

        for part in parts:
            if part.deltas:
                popularity_changed = True
            for repo, delta in part.deltas.items():
                if delta:
                    repo_pop[repo] = repo_pop.get(repo, 0) + delta
                    owner = owners[repo]
                    user_pop[owner] = user_pop.get(owner, 0) + delta
                elif repo not in repo_pop:
                    repo_pop[repo] = 0
            part.deltas = {}

        if pop_view is not None and popularity_changed:
            pop_view.invalidate_rank()

        if cfg.debug_checks:
            seen: set[str] = set()
            for part in parts:
                dup = seen.intersection(part.hub)
                assert not dup, f"repo owned by two partitions: {sorted(dup)[:3]}"
                seen.update(part.hub)
            assert seen == set(directory), "directory out of sync with hubs"

        t = tick_end

    stats.final_repo_states = {
        r: parts[pid].hub[r].state for r, pid in directory.items()
    }
    merged: list[Event] = []
    for part in parts:
        merged.extend(part.out)
    return EventLog(merged).restrict(t_start, t_end)
