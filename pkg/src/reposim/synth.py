"""Deterministic synthetic-ecosystem generator with known ground truth.

Two variants share one config:

``frozen``
    Stationary per-user behavior: every user gets a fixed event rate and a
    fixed concentrated action distribution, multiple-time events target a
    small personal repo set, one-time events discover repos from a global
    popularity pool. Used to validate the stationary fitters by parameter
    recovery.

``attachment``
    A single global event stream mirroring the generative pipeline the
    Bayesian model assumes: new-user minting, a one-time/multiple-time
    split with a watch/fork/create discovery mix, power-law-rank repo
    discovery with drifting popularity, ownership-weighted own-repo work,
    and geometric random walks to collaborators' repos. Used for fit
    round-trips (discovery split, gamma, new-user share).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DAY_SECONDS, Event, EventLog, EventType, is_one_time
from .powerlaw import rank_weights, sample_discrete_power_law

FROZEN_TYPE_POOL = (
    EventType.Push,
    EventType.IssueComment,
    EventType.Issues,
    EventType.PullRequest,
    EventType.PullRequestReviewComment,
    EventType.CommitComment,
    EventType.Watch,
    EventType.Fork,
)
FROZEN_TYPE_MIX = (0.40, 0.15, 0.12, 0.10, 0.05, 0.04, 0.09, 0.05)

DISCOVERY_ORDER = (EventType.Watch, EventType.Fork, EventType.Create)
MULTI_OWN_MIX = {
    EventType.Push: 0.55,
    EventType.IssueComment: 0.15,
    EventType.Issues: 0.10,
    EventType.Delete: 0.04,
    EventType.PullRequest: 0.08,
    EventType.PullRequestReviewComment: 0.04,
    EventType.CommitComment: 0.04,
}
MULTI_OTHER_MIX = {
    EventType.Push: 0.30,
    EventType.IssueComment: 0.28,
    EventType.Issues: 0.16,
    EventType.PullRequest: 0.14,
    EventType.PullRequestReviewComment: 0.06,
    EventType.CommitComment: 0.06,
}


@dataclass
class SynthConfig:
    variant: str = "frozen"
    n_users: int = 1000
    n_repos: int = 2000
    days: float = 30.0
    seed: int = 0
    start_time: float = 1_500_000_000.0
    # frozen variant: per-user rates and action support
    rate_log_mean: float = float(np.log(4.0))
    rate_log_sigma: float = 0.4
    rate_min: float = 1.5
    rate_max: float = 25.0
    active_type_count_probs: tuple = (0.4, 0.4, 0.2)  # P(1), P(2), P(3) active types
    # popularity pool for one-time discovery in both variants
    gamma: float = 1.81
    xmin: int = 3
    # attachment variant
    events_per_day: float = 5000.0
    p_new_user: float = 0.2
    # 0.62 puts the one-time share of first touches near the observed ~0.88
    p_onetime: float = 0.62
    discovery_split: tuple = (0.64, 0.20, 0.04)
    p_own: float = 0.7
    walk_mean: float = 2.0

    def window(self) -> tuple[float, float]:
        return (self.start_time, self.start_time + self.days * DAY_SECONDS)


def generate(cfg: SynthConfig) -> tuple[EventLog, dict]:
    """Produce (event log, ground-truth parameter record); deterministic per seed."""
    if cfg.variant == "frozen":
        return _generate_frozen(cfg)
    if cfg.variant == "attachment":
        return _generate_attachment(cfg)
    raise ValueError(f"unknown synth variant: {cfg.variant!r}")


def _uid(i: int) -> str:
    return f"u{i:06d}"


def _rid(i: int) -> str:
    return f"r{i:06d}"


# --------------------------------------------------------------------------
# frozen-preference variant
# --------------------------------------------------------------------------


def _generate_frozen(cfg: SynthConfig) -> tuple[EventLog, dict]:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xF0]))
    t0, t1 = cfg.window()
    type_pool = list(FROZEN_TYPE_POOL)
    mix = np.asarray(FROZEN_TYPE_MIX)
    mix = mix / mix.sum()

    # static popularity weights for the discovery pool
    pool_weights = rank_weights(cfg.n_repos, cfg.gamma)
    pool_cum = np.cumsum(pool_weights)

    rates = np.clip(
        rng.lognormal(cfg.rate_log_mean, cfg.rate_log_sigma, size=cfg.n_users),
        cfg.rate_min,
        cfg.rate_max,
    )
    mint_counter = cfg.n_repos
    events: list[Event] = []
    user_params: dict[str, dict] = {}

    for i in range(cfg.n_users):
        uid = _uid(i)
        k = 1 + int(rng.choice(len(cfg.active_type_count_probs), p=cfg.active_type_count_probs))
        active_idx = rng.choice(len(type_pool), size=k, replace=False, p=mix)
        weights = rng.dirichlet(np.full(k, 2.0))
        action_dist = {type_pool[int(j)]: float(w) for j, w in zip(active_idx, weights)}

        # personal multiple-time repo set
        n_own = int(rng.integers(2, 5))
        own_repos = [_rid(int(r)) for r in rng.choice(cfg.n_repos, size=n_own, replace=False)]
        own_weights = rng.dirichlet(np.full(n_own, 2.0))

        n_events = int(rng.poisson(rates[i] * cfg.days))
        times = np.sort(rng.uniform(t0, t1, size=n_events))
        types = rng.choice(len(type_pool), size=n_events, p=_full_mix(action_dist, type_pool))
        watched: set[str] = set()
        forked: set[str] = set()
        for t, ti in zip(times, types):
            etype = type_pool[int(ti)]
            if etype is EventType.Create:
                repo = _rid(mint_counter)
                mint_counter += 1
            elif is_one_time(etype):
                seen = watched if etype is EventType.Watch else forked
                repo = _draw_unseen_pool(rng, pool_cum, seen)
                if repo is None:
                    repo = _rid(mint_counter)  # pool exhausted: mint instead
                    mint_counter += 1
                    etype = EventType.Create
                else:
                    seen.add(repo)
            else:
                j = int(np.searchsorted(np.cumsum(own_weights), rng.random() * own_weights.sum(), side="right"))
                repo = own_repos[min(j, n_own - 1)]
            events.append(Event(float(int(t)), etype, uid, repo))

        user_params[uid] = {
            "rate": float(rates[i]),
            "action_dist": {e.value: p for e, p in sorted(action_dist.items(), key=lambda kv: kv[0].value)},
        }

    record = {
        "variant": "frozen",
        "seed": cfg.seed,
        "window": [t0, t1],
        "n_users": cfg.n_users,
        "n_repos": cfg.n_repos,
        "gamma": cfg.gamma,
        "users": user_params,
    }
    return EventLog(events), record


def _full_mix(action_dist: dict, type_pool: list) -> np.ndarray:
    p = np.array([action_dist.get(e, 0.0) for e in type_pool])
    return p / p.sum()


def _draw_unseen_pool(rng, pool_cum: np.ndarray, seen: set, tries: int = 10) -> Optional[str]:
    total = pool_cum[-1]
    for _ in range(tries):
        idx = int(np.searchsorted(pool_cum, rng.random() * total, side="right"))
        repo = _rid(min(idx, pool_cum.size - 1))
        if repo not in seen:
            return repo
    for idx in range(pool_cum.size):  # deterministic sweep, rare
        repo = _rid(idx)
        if repo not in seen:
            return repo
    return None


# --------------------------------------------------------------------------
# attachment variant
# --------------------------------------------------------------------------


class _AttachmentState:
    """Evolving ecosystem state for the global generative stream.

    Count-proportional sampling uses occurrence pools (one list entry per
    past event) so every draw and update is O(1).
    """

    def __init__(self, cfg: SynthConfig, rng: np.random.Generator):
        self.rng = rng
        self.gamma = cfg.gamma
        self.actor_pool: list[str] = [_uid(i) for i in range(cfg.n_users)]
        self.repo_ids: list[str] = [_rid(i) for i in range(cfg.n_repos)]
        # warm-start popularity from the planted law so the rank order is
        # stable from the first event instead of churning out of a cold start
        init_pop = sample_discrete_power_law(cfg.gamma, cfg.xmin, cfg.n_repos, rng) - cfg.xmin
        self.repo_pop: dict[str, int] = {
            r: int(p) for r, p in zip(self.repo_ids, init_pop)
        }
        self.owner: dict[str, str] = {}
        self.ranked: list[str] = sorted(self.repo_ids, key=lambda r: (-self.repo_pop[r], r))
        self.rank_dirty = False
        # seed ownership: each initial repo owned by a random initial user
        owner_idx = rng.integers(0, cfg.n_users, size=cfg.n_repos)
        self.own: dict[str, dict[str, int]] = {}
        for r, oi in zip(self.repo_ids, owner_idx):
            u = _uid(int(oi))
            self.owner[r] = u
            self.own.setdefault(u, {})[r] = 1
        self.touch_pool: dict[str, list[str]] = {}  # user -> repo per event
        self.repo_user_pool: dict[str, list[str]] = {}  # repo -> user per event
        self.watched: dict[str, set] = {}
        self.forked: dict[str, set] = {}
        self.user_counter = cfg.n_users
        self.repo_counter = cfg.n_repos

    def mint_user(self) -> str:
        u = _uid(self.user_counter)
        self.user_counter += 1
        self.actor_pool.append(u)
        return u

    def mint_repo(self, owner: str) -> str:
        r = _rid(self.repo_counter)
        self.repo_counter += 1
        self.repo_ids.append(r)
        self.repo_pop[r] = 0
        self.owner[r] = owner
        self.own.setdefault(owner, {})[r] = 1
        self.ranked.append(r)
        return r

    def resort(self):
        if self.rank_dirty:
            self.ranked = sorted(self.repo_ids, key=lambda r: (-self.repo_pop[r], r))
            self.rank_dirty = False

    def sample_user(self) -> str:
        # uniform over the pool == proportional to 1 + past event count
        return self.actor_pool[int(self.rng.integers(len(self.actor_pool)))]

    def sample_pool(self, pool: Optional[list]) -> Optional[str]:
        if not pool:
            return None
        return pool[int(self.rng.integers(len(pool)))]

    def sample_weighted(self, table: dict) -> Optional[str]:
        if not table:
            return None
        keys = list(table)
        w = np.fromiter(table.values(), dtype=float, count=len(keys))
        cum = np.cumsum(w)
        i = int(np.searchsorted(cum, self.rng.random() * cum[-1], side="right"))
        return keys[min(i, len(keys) - 1)]

    def record(self, user: str, repo: str, etype: EventType):
        self.actor_pool.append(user)
        self.touch_pool.setdefault(user, []).append(repo)
        self.repo_user_pool.setdefault(repo, []).append(user)
        if etype is EventType.Watch:
            self.watched.setdefault(user, set()).add(repo)
            self.repo_pop[repo] += 1
            self.rank_dirty = True
        elif etype is EventType.Fork:
            self.forked.setdefault(user, set()).add(repo)
            self.repo_pop[repo] += 1
            self.rank_dirty = True


def _generate_attachment(cfg: SynthConfig) -> tuple[EventLog, dict]:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xA7]))
    t0, t1 = cfg.window()
    state = _AttachmentState(cfg, rng)

    split = np.asarray(cfg.discovery_split, dtype=float)
    split = split / split.sum()
    split_cum = np.cumsum(split)
    own_types = list(MULTI_OWN_MIX)
    own_cum = np.cumsum([MULTI_OWN_MIX[e] for e in own_types])
    other_types = list(MULTI_OTHER_MIX)
    other_cum = np.cumsum([MULTI_OTHER_MIX[e] for e in other_types])
    # size the rank table for the initial pool plus every conceivable mint
    expected = int(cfg.days * cfg.events_per_day)
    disc_cum = np.cumsum(rank_weights(cfg.n_repos + expected + 64, cfg.gamma))

    scale = DAY_SECONDS / cfg.events_per_day
    events: list[Event] = []
    t = t0 + rng.exponential(scale)
    next_resort = t0 + DAY_SECONDS

    while t < t1:
        if t >= next_resort:
            state.resort()
            next_resort += DAY_SECONDS

        if rng.random() < cfg.p_new_user:
            user = state.mint_user()
            no_history = True
        else:
            user = state.sample_user()
            no_history = user not in state.touch_pool and user not in state.own

        one_time = no_history or (rng.random() < cfg.p_onetime)
        if one_time:
            etype = _pick(DISCOVERY_ORDER, split_cum, rng)
            if etype is EventType.Create:
                repo = state.mint_repo(user)
            else:
                repo = _discover_for(state, disc_cum, user, etype, rng)
                if repo is None:
                    etype = EventType.Create
                    repo = state.mint_repo(user)
        else:
            own_table = state.own.get(user)
            if own_table and rng.random() < cfg.p_own:
                repo = state.sample_weighted(own_table)
                etype = _pick(own_types, own_cum, rng)
            else:
                repo = _walk(state, user, cfg.walk_mean, rng)
                if repo is None:
                    state.resort()
                    repo = _rank_draw(state, disc_cum, rng)
                etype = _pick(other_types, other_cum, rng)

        state.record(user, repo, etype)
        events.append(Event(float(int(t)), etype, user, repo))
        t += rng.exponential(scale)

    record = {
        "variant": "attachment",
        "seed": cfg.seed,
        "window": [t0, t1],
        "n_seed_users": cfg.n_users,
        "n_seed_repos": cfg.n_repos,
        "events_per_day": cfg.events_per_day,
        "p_new_user": cfg.p_new_user,
        "p_onetime": cfg.p_onetime,
        "discovery_split": [float(x) for x in split],
        "gamma": cfg.gamma,
        "xmin": cfg.xmin,
        "p_own": cfg.p_own,
        "walk_mean": cfg.walk_mean,
        "n_users_final": state.user_counter,
        "n_repos_final": state.repo_counter,
        # seed-repo ownership never shows up in the log itself
        "repo_meta": {
            r: {"owner_id": state.owner[r], "created_at": t0 - DAY_SECONDS}
            for r in sorted(state.owner)
        },
    }
    return EventLog(events), record


def _rank_draw(state: _AttachmentState, disc_cum: np.ndarray, rng) -> str:
    n = len(state.ranked)
    cum = disc_cum[:n] if n <= disc_cum.size else np.cumsum(rank_weights(n, state.gamma))
    idx = int(np.searchsorted(cum, rng.random() * cum[n - 1], side="right"))
    return state.ranked[min(idx, n - 1)]


def _discover_for(state, disc_cum, user: str, etype: EventType, rng, tries: int = 10):
    # rank order refreshes once per simulated day in the main loop
    seen = state.watched.get(user, ()) if etype is EventType.Watch else state.forked.get(user, ())
    for _ in range(tries):
        repo = _rank_draw(state, disc_cum, rng)
        if repo not in seen:
            return repo
    for repo in state.ranked:  # deterministic sweep, rare
        if repo not in seen:
            return repo
    return None


def _pick(items, cum: np.ndarray, rng) -> EventType:
    return items[int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))]


def _walk(state: _AttachmentState, user: str, walk_mean: float, rng) -> Optional[str]:
    repo = state.sample_pool(state.touch_pool.get(user))
    if repo is None:
        return None
    hops = int(rng.geometric(1.0 / walk_mean)) - 1
    for _ in range(hops):
        nxt_user = state.sample_pool(state.repo_user_pool.get(repo))
        if nxt_user is None:
            break
        nxt_repo = state.sample_pool(state.touch_pool.get(nxt_user))
        if nxt_repo is None:
            break
        repo = nxt_repo
    return repo
