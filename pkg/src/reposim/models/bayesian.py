"""Population-level generative model: one call produces one
(user, repository, event type) tuple.

The pipeline per tuple: (1) mint a new user with probability p_new_user,
else draw an existing user from a recency-decayed activity rank;
(2) choose a one-time or multiple-time event per the fitted split;
(3) one-time events are repository discoveries (watch/fork/create) with
watch and fork targets drawn from power-law rank models over current
popularity, while create mints a fresh repository; (4) multiple-time
events stay on the user's own repositories with probability p_own
(weighted by past activity) or reach a collaborator's repository through
a short random walk on the training interaction graph, with the event
type drawn from an ownership-conditioned table.
"""

from __future__ import annotations

from typing import ClassVar, Optional

import numpy as np

from ..core import (
    DAY_SECONDS,
    EmptyRank,
    EventType,
    InsufficientData,
    is_one_time,
)
from ..ingest import TrainingSlice
from ..powerlaw import fit_discrete_power_law, rank_weights
from ..validation import check_fitted, check_positive
from .base import AgentModel, DiscreteDist, register_model

HALF_LIFE_DAYS = 30.0
MIN_EVENTS = 100
MIN_DEGREE_SAMPLE = 50
NEW_USER_WINDOW_DAYS = 30.0
#: slice must extend this far beyond the trailing month to estimate
#: the new-user share from data rather than the default
MIN_DAYS_FOR_NEW_USER_ESTIMATE = 45.0

DEFAULT_P_NEW_USER = 0.2
DEFAULT_WATCH_LAW = (1.81, 3)
DEFAULT_PULL_REQUEST_LAW = (2.54, 291)

DISCOVERY_TYPES = (EventType.Watch, EventType.Fork, EventType.Create)
MULTI_TYPES = tuple(e for e in EventType if not is_one_time(e))

ONE_TIME_REDRAWS = 5


def decay_weight(age_days: float, half_life: float = HALF_LIFE_DAYS) -> float:
    """Weight of an event aged ``age_days``: 0.5 ** (age / half_life)."""
    return float(0.5 ** (age_days / half_life))


class RankModel:
    """Items ordered by recency-decayed score; selection is score-proportional."""

    def __init__(self, items: list, scores, half_life: float = HALF_LIFE_DAYS):
        order = sorted(range(len(items)), key=lambda i: (-scores[i], items[i]))
        self.items = [items[i] for i in order]
        self.scores = np.asarray([scores[i] for i in order], dtype=float)
        self.half_life = half_life
        if np.any(self.scores < 0):
            raise ValueError("scores must be non-negative")

    def __len__(self) -> int:
        return len(self.items)

    def __getstate__(self):
        return (self.items, self.scores, self.half_life)

    def __setstate__(self, state):
        self.items, self.scores, self.half_life = state

    @classmethod
    def from_event_ages(cls, ages_by_item: dict, half_life: float = HALF_LIFE_DAYS):
        items = sorted(ages_by_item)
        scores = [
            sum(decay_weight(a, half_life) for a in ages_by_item[item])
            for item in items
        ]
        return cls(items, scores, half_life)


class PowerLawRank:
    """Rank-form power-law selection: P(rank k) ~ k**(-1/(gamma-1)).

    Equivalent to a degree distribution with exponent gamma when items are
    kept ordered by current popularity (ties stable by id).
    """

    def __init__(self, gamma: float, xmin: int, purpose: str = "watch"):
        if gamma <= 1:
            raise ValueError("gamma must exceed 1")
        if xmin < 1:
            raise ValueError("xmin must be >= 1")
        self.gamma = float(gamma)
        self.xmin = int(xmin)
        self.purpose = purpose
        self._cum: Optional[np.ndarray] = None

    def __getstate__(self):
        return (self.gamma, self.xmin, self.purpose)

    def __setstate__(self, state):
        self.gamma, self.xmin, self.purpose = state
        self._cum = None

    def __repr__(self):
        return f"PowerLawRank(gamma={self.gamma:.3g}, xmin={self.xmin}, purpose={self.purpose!r})"

    def sample_rank(self, n: int, rng: np.random.Generator) -> int:
        """1-based rank among n items."""
        check_positive(n, "n")
        if self._cum is None or self._cum.size < n:
            self._cum = np.cumsum(rank_weights(n, self.gamma))
        cum = self._cum[:n]
        return 1 + int(np.searchsorted(cum, rng.random() * cum[n - 1], side="right"))


def rank_sample(rank, rng: np.random.Generator, items: Optional[list] = None):
    """Draw one item from a RankModel or a PowerLawRank.

    PowerLawRank needs the current popularity-ordered ``items``; RankModel
    carries its own.
    """
    if isinstance(rank, RankModel):
        if len(rank) == 0:
            raise EmptyRank("rank model has no items")
        cum = np.cumsum(rank.scores)
        idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        return rank.items[min(idx, len(rank.items) - 1)]
    if isinstance(rank, PowerLawRank):
        if not items:
            raise EmptyRank("no items to rank")
        return items[rank.sample_rank(len(items), rng) - 1]
    raise TypeError(f"unsupported rank object: {type(rank).__name__}")


def geometric_length(rng: np.random.Generator, mean: float = 2.0) -> int:
    """Geometric on {1, 2, ...} with parameter p = 1/mean."""
    return int(rng.geometric(1.0 / mean))


def _first_touches(slice_: TrainingSlice):
    """Yield each (user, repo) pair's earliest event, in time order."""
    seen: set[tuple[str, str]] = set()
    for ev in slice_.events:
        key = (ev.user_id, ev.repo_id)
        if key not in seen:
            seen.add(key)
            yield ev


def _fit_degree_law(degrees: list[int], default: tuple[float, int], purpose: str) -> PowerLawRank:
    if len(degrees) >= MIN_DEGREE_SAMPLE:
        fit = fit_discrete_power_law(np.asarray(degrees))
        return PowerLawRank(fit.gamma, fit.xmin, purpose)
    return PowerLawRank(default[0], default[1], purpose)


@register_model
class BayesianModel(AgentModel):
    """Fitted global generator; the engine drives it with one Poisson
    clock at the fitted aggregate event rate."""

    kind: ClassVar[str] = "bayes"
    hub_dependent: ClassVar[bool] = True
    population_level: ClassVar[bool] = True

    def __init__(
        self,
        half_life: float = HALF_LIFE_DAYS,
        walk_mean: float = 2.0,
        default_p_new_user: float = DEFAULT_P_NEW_USER,
        min_events: int = MIN_EVENTS,
    ):
        self.half_life = half_life
        self.walk_mean = walk_mean
        self.default_p_new_user = default_p_new_user
        self.min_events = min_events

    def fit(self, slice_: TrainingSlice):
        events = slice_.events
        n = len(events)
        if n < self.min_events:
            raise InsufficientData(f"{n} events < required {self.min_events}")
        t0, t1 = slice_.window
        days = (t1 - t0) / DAY_SECONDS
        self.window_ = slice_.window
        self.population_rate_ = n / days

        # --- user activity rank with half-life decay --------------------
        scores: dict[str, float] = {}
        first_seen: dict[str, float] = {}
        for ev in events:
            age = (t1 - ev.timestamp) / DAY_SECONDS
            scores[ev.user_id] = scores.get(ev.user_id, 0.0) + decay_weight(age, self.half_life)
            if ev.user_id not in first_seen:
                first_seen[ev.user_id] = ev.timestamp
        users = sorted(scores)
        self.user_rank_ = RankModel(users, [scores[u] for u in users], self.half_life)

        # --- new-user share ----------------------------------------------
        trailing_start = t1 - NEW_USER_WINDOW_DAYS * DAY_SECONDS
        new_users = [u for u, t in first_seen.items() if t >= trailing_start]
        trailing_events = sum(1 for ev in events if ev.timestamp >= trailing_start)
        self.new_user_rate_per_day_ = len(new_users) / min(days, NEW_USER_WINDOW_DAYS)
        if days >= MIN_DAYS_FOR_NEW_USER_ESTIMATE and trailing_events > 0:
            self.p_new_user_ = len(new_users) / trailing_events
        else:
            self.p_new_user_ = self.default_p_new_user

        # --- one-time vs multiple-time, discovery split ------------------
        n_onetime = sum(1 for ev in events if is_one_time(ev.event_type))
        self.p_onetime_ = n_onetime / n

        disc_counts = {e: 0 for e in DISCOVERY_TYPES}
        multi_disc_counts = {e: 0 for e in MULTI_TYPES}
        n_first = 0
        n_first_onetime = 0
        for ev in _first_touches(slice_):
            n_first += 1
            if is_one_time(ev.event_type):
                n_first_onetime += 1
                disc_counts[ev.event_type] += 1
            else:
                multi_disc_counts[ev.event_type] += 1
        self.p_discovery_ = n_first / n
        self.discovery_onetime_rate_ = n_first_onetime / n_first if n_first else 1.0
        # branch rate for users that already have history: minting a user
        # always produces a first touch, so the remainder balances out to
        # the observed overall first-touch share
        self.discovery_rate_existing_ = max(
            0.0,
            min(1.0, (self.p_discovery_ - self.p_new_user_) / max(1e-12, 1.0 - self.p_new_user_)),
        )
        if sum(disc_counts.values()) == 0:
            disc_counts = {e: 1 for e in DISCOVERY_TYPES}
        self.discovery_split_ = DiscreteDist(
            list(DISCOVERY_TYPES), [disc_counts[e] for e in DISCOVERY_TYPES]
        )
        self.discovery_multi_dist_ = DiscreteDist(
            list(MULTI_TYPES), [multi_disc_counts[e] + 1e-9 for e in MULTI_TYPES]
        )

        # --- ownership conditioning for multiple-time events -------------
        owners = {r: st.owner_id for r, st in slice_.repo_states.items()}
        own_counts = {e: 0 for e in MULTI_TYPES}
        other_counts = {e: 0 for e in MULTI_TYPES}
        n_own = n_other = 0
        for ev in events:
            if is_one_time(ev.event_type):
                continue
            if owners.get(ev.repo_id) == ev.user_id:
                own_counts[ev.event_type] += 1
                n_own += 1
            else:
                other_counts[ev.event_type] += 1
                n_other += 1
        self.p_own_ = n_own / (n_own + n_other) if (n_own + n_other) else 0.5
        self.own_type_dist_ = DiscreteDist(
            list(MULTI_TYPES), [own_counts[e] + 1e-9 for e in MULTI_TYPES]
        )
        self.other_type_dist_ = DiscreteDist(
            list(MULTI_TYPES), [other_counts[e] + 1e-9 for e in MULTI_TYPES]
        )

        # --- popularity power laws over per-repo in-degrees --------------
        watch_deg: dict[str, set] = {}
        fork_deg: dict[str, set] = {}
        pr_deg: dict[str, set] = {}
        for ev in events:
            if ev.event_type is EventType.Watch:
                watch_deg.setdefault(ev.repo_id, set()).add(ev.user_id)
            elif ev.event_type is EventType.Fork:
                fork_deg.setdefault(ev.repo_id, set()).add(ev.user_id)
            elif ev.event_type is EventType.PullRequest:
                pr_deg.setdefault(ev.repo_id, set()).add(ev.user_id)
        self.watch_rank_ = _fit_degree_law(
            [len(s) for s in watch_deg.values()], DEFAULT_WATCH_LAW, "watch"
        )
        fork_degrees = [len(s) for s in fork_deg.values()]
        if len(fork_degrees) >= MIN_DEGREE_SAMPLE:
            fit = fit_discrete_power_law(np.asarray(fork_degrees))
            self.fork_rank_ = PowerLawRank(fit.gamma, fit.xmin, "fork")
        else:  # sparse fork data: reuse the watch fit
            self.fork_rank_ = PowerLawRank(self.watch_rank_.gamma, self.watch_rank_.xmin, "fork")
        self.pull_request_rank_ = _fit_degree_law(
            [len(s) for s in pr_deg.values()], DEFAULT_PULL_REQUEST_LAW, "pull_request"
        )

        # --- frozen interaction graph and per-user tables ----------------
        user_adj: dict[str, tuple[list[str], np.ndarray]] = {}
        repo_adj_tmp: dict[str, dict[str, int]] = {}
        own_repos: dict[str, tuple[list[str], np.ndarray]] = {}
        own_tmp: dict[str, dict[str, int]] = {}
        for u in sorted(slice_.histories):
            hist = slice_.histories[u]
            repo_counts = hist.repo_counts()
            repos = sorted(repo_counts)
            user_adj[u] = (repos, np.array([repo_counts[r] for r in repos], dtype=float))
            for r, c in repo_counts.items():
                repo_adj_tmp.setdefault(r, {})[u] = c
                if owners.get(r) == u:
                    own_tmp.setdefault(u, {})[r] = c
        for u, table in own_tmp.items():
            repos = sorted(table)
            own_repos[u] = (repos, np.array([table[r] for r in repos], dtype=float))
        repo_adj = {}
        for r in sorted(repo_adj_tmp):
            us = sorted(repo_adj_tmp[r])
            repo_adj[r] = (us, np.array([repo_adj_tmp[r][u] for u in us], dtype=float))
        self.user_repo_adj_ = user_adj
        self.repo_user_adj_ = repo_adj
        self.own_repos_ = own_repos
        self.owners_ = owners
        return self

    def params_dict(self) -> dict:
        """Human-readable fitted parameters (dumped beside snapshots)."""
        check_fitted(self, ("population_rate_",))
        return {
            "population_rate_per_day": self.population_rate_,
            "p_new_user": self.p_new_user_,
            "new_user_rate_per_day": self.new_user_rate_per_day_,
            "p_onetime": self.p_onetime_,
            "p_discovery": self.p_discovery_,
            "discovery_rate_existing": self.discovery_rate_existing_,
            "discovery_onetime_rate": self.discovery_onetime_rate_,
            "discovery_split": {
                e.value: p for e, p in self.discovery_split_.as_dict().items()
            },
            "discovery_multi_dist": {
                e.value: p for e, p in self.discovery_multi_dist_.as_dict().items()
            },
            "p_own": self.p_own_,
            "own_type_dist": {e.value: p for e, p in self.own_type_dist_.as_dict().items()},
            "other_type_dist": {
                e.value: p for e, p in self.other_type_dist_.as_dict().items()
            },
            "watch_power_law": {"gamma": self.watch_rank_.gamma, "xmin": self.watch_rank_.xmin},
            "fork_power_law": {"gamma": self.fork_rank_.gamma, "xmin": self.fork_rank_.xmin},
            "pull_request_power_law": {
                "gamma": self.pull_request_rank_.gamma,
                "xmin": self.pull_request_rank_.xmin,
            },
            "walk_mean": self.walk_mean,
            "half_life_days": self.half_life,
            "n_users": len(self.user_rank_),
        }

    def make_runtime(self) -> "BayesianRuntime":
        check_fitted(self, ("population_rate_",))
        return BayesianRuntime(self)


class BayesianRuntime:
    """Mutable per-run sampling state over an immutable fitted model.

    The first-touch/repeat branch is taken before anything else so the
    generated stream reproduces the fitted first-touch share and the
    fitted one-time share of first touches by construction.
    """

    def __init__(self, model: BayesianModel):
        self.model = model
        self.user_items: list[str] = list(model.user_rank_.items)
        self.user_weights: list[float] = [float(s) for s in model.user_rank_.scores]
        self._user_cum: Optional[np.ndarray] = None
        # sim-time additions layered over the frozen training tables
        self.new_own: dict[str, list[str]] = {}
        self.sim_counts: dict[str, dict[str, int]] = {}
        self._adj_cum: dict = {}
        self._train_touched: dict[str, frozenset] = {}

    # --- user selection ---------------------------------------------------
    def _sample_user(self, rng) -> str:
        if self._user_cum is None:
            self._user_cum = np.cumsum(self.user_weights)
        cum = self._user_cum
        idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        return self.user_items[min(idx, len(self.user_items) - 1)]

    def _register_user(self, uid: str):
        self.user_items.append(uid)
        self.user_weights.append(1.0)  # weight of one fresh event
        self._user_cum = None

    # --- touched bookkeeping ------------------------------------------------
    def _touched(self, user: str, repo: str) -> bool:
        cached = self._train_touched.get(user)
        if cached is None:
            entry = self.model.user_repo_adj_.get(user)
            cached = frozenset(entry[0]) if entry else frozenset()
            self._train_touched[user] = cached
        return repo in cached or repo in self.sim_counts.get(user, ())

    def _record(self, user: str, repo: str):
        table = self.sim_counts.setdefault(user, {})
        table[repo] = table.get(repo, 0) + 1

    # --- adjacency sampling -------------------------------------------------
    def _sample_adj(self, table: dict, key: str, rng) -> Optional[str]:
        entry = table.get(key)
        if entry is None or len(entry[0]) == 0:
            return None
        cum = self._adj_cum.get(id(entry))
        if cum is None:
            cum = np.cumsum(entry[1])
            self._adj_cum[id(entry)] = cum
        idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        return entry[0][min(idx, len(entry[0]) - 1)]

    def _walk(self, user: str, rng) -> Optional[str]:
        """Random walk over the frozen graph; geometric repo-hop length."""
        m = self.model
        repo = self._sample_adj(m.user_repo_adj_, user, rng)
        if repo is None:
            return None
        hops = geometric_length(rng, m.walk_mean) - 1
        for _ in range(hops):
            nxt_user = self._sample_adj(m.repo_user_adj_, repo, rng)
            if nxt_user is None:
                break
            nxt_repo = self._sample_adj(m.user_repo_adj_, nxt_user, rng)
            if nxt_repo is None:
                break
            repo = nxt_repo
        return repo

    def _own_repo_tables(self, user: str):
        m = self.model
        frozen = m.own_repos_.get(user)
        minted = self.new_own.get(user, [])
        if frozen is None and not minted:
            return None
        if frozen is None:
            return minted, np.ones(len(minted))
        if not minted:
            return frozen
        repos = list(frozen[0]) + minted
        weights = np.concatenate([frozen[1], np.ones(len(minted))])
        return repos, weights

    def _touched_pool(self, user: str, exclude_own: bool):
        """(repos, weights) of previously-touched repos, by activity."""
        m = self.model
        counts: dict[str, float] = {}
        entry = m.user_repo_adj_.get(user)
        if entry is not None:
            for r, w in zip(entry[0], entry[1]):
                counts[r] = counts.get(r, 0.0) + float(w)
        for r, c in self.sim_counts.get(user, {}).items():
            counts[r] = counts.get(r, 0.0) + c
        if exclude_own:
            minted = self.new_own.get(user, ())
            counts = {
                r: w
                for r, w in counts.items()
                if m.owners_.get(r) != user and r not in minted
            }
        if not counts:
            return None
        repos = sorted(counts)
        return repos, np.array([counts[r] for r in repos])

    @staticmethod
    def _draw(tables, rng) -> str:
        repos, weights = tables
        cum = np.cumsum(weights)
        idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        return repos[min(idx, len(repos) - 1)]

    def _mint_create(self, user: str, view) -> tuple[str, str, EventType]:
        repo = view.mint_repo_id()
        self.new_own.setdefault(user, []).append(repo)
        self._record(user, repo)
        return user, repo, EventType.Create

    def _discover_target(self, user: str, etype: EventType, rng, view) -> Optional[str]:
        """A repo the user never touched: power-law rank for watch/fork,
        walk-first (social vicinity) for multiple-time discoveries."""
        m = self.model
        ranked = view.repos_ranked()
        if etype not in (EventType.Watch, EventType.Fork):
            for _ in range(ONE_TIME_REDRAWS):
                repo = self._walk(user, rng)
                if repo is not None and not self._touched(user, repo):
                    return repo
        if not ranked:
            return None
        law = m.fork_rank_ if etype is EventType.Fork else m.watch_rank_
        for _ in range(ONE_TIME_REDRAWS):
            repo = rank_sample(law, rng, ranked)
            if not self._touched(user, repo):
                return repo
        for repo in ranked:  # deterministic sweep; rare
            if not self._touched(user, repo):
                return repo
        return None

    # --- the generative step -------------------------------------------------
    def generate(self, rng: np.random.Generator, view, now: float):
        """One (user, repo, event type) tuple against the live hub view."""
        m = self.model
        fresh = rng.random() < m.p_new_user_
        if fresh:
            user = view.mint_user_id()
            self._register_user(user)
        else:
            user = self._sample_user(rng)

        has_history = (not fresh) and (
            user in m.user_repo_adj_ or user in self.sim_counts or user in self.new_own
        )
        discovery = (not has_history) or (rng.random() < m.discovery_rate_existing_)

        if discovery:
            if rng.random() < m.discovery_onetime_rate_:
                etype = m.discovery_split_.sample(rng)
            else:
                etype = m.discovery_multi_dist_.sample(rng)
            if etype is EventType.Create:
                return self._mint_create(user, view)
            repo = self._discover_target(user, etype, rng, view)
            if repo is None:  # nothing left to discover
                return self._mint_create(user, view)
            self._record(user, repo)
            return user, repo, etype

        # repeat branch: stay on repos the user already worked with
        own_tables = self._own_repo_tables(user)
        others = self._touched_pool(user, exclude_own=True)
        use_own = own_tables is not None and (others is None or rng.random() < m.p_own_)
        if use_own:
            repo = self._draw(own_tables, rng)
            etype = m.own_type_dist_.sample(rng)
        elif others is not None:
            repo = self._draw(others, rng)
            etype = m.other_type_dist_.sample(rng)
        else:  # touched exactly nothing but has_history: defensive fallback
            return self._mint_create(user, view)
        self._record(user, repo)
        return user, repo, etype


def fit_bayesian(slice_: TrainingSlice, **hyperparams) -> BayesianModel:
    """Fit the global generative model from one training slice."""
    return BayesianModel(**hyperparams).fit(slice_)


def generate_tuple(runtime: BayesianRuntime, rng: np.random.Generator, view, now: float):
    """One generative iteration; see :meth:`BayesianRuntime.generate`."""
    return runtime.generate(rng, view, now)
