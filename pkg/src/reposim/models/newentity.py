"""Predicting event counts for user-repository pairs with no shared
history: a pair-feature pipeline, a greedy variance-decomposition
regressor (forward feature selection with lambda-penalized 1-D binning),
and an agent wrapper that spends a small exploration probability on
unseen repositories scored by the fitted per-type models.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, ClassVar, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ..core import DAY_SECONDS, DegenerateTarget, EventType
from ..ingest import TrainingSlice
from ..validation import check_fitted
from .base import AgentModel, DiscreteDist, register_model

#: documented derivations for every feature column
FEATURE_DESCRIPTIONS: dict[str, str] = {
    "user_is_owner": "1 if the user owns the repository",
    "same_language": "1 if the repo language equals the user's dominant language",
    "same_language_known": "1 if both languages were available",
    "user_age_days": "days since user account creation at window end (0 if unknown)",
    "user_age_known": "1 if user creation time was available",
    "repo_age_days": "days since repository creation at window end (0 if unknown)",
    "repo_age_known": "1 if repository creation time was available",
    "n_followers": "distinct users who watched or forked repos owned by the user",
    "n_watchers_of_repo": "distinct users who watched the repository",
    "n_forks_of_repo": "distinct users who forked the repository",
    "n_repos_owned_by_user": "repositories owned by the user",
    "user_total_events": "user's event count in the window",
    "user_rate": "user's events per day",
    "user_n_repos_touched": "distinct repositories the user acted on",
    "repo_total_events": "events received by the repository",
    "repo_n_users": "distinct users who acted on the repository",
    "repo_n_contributors": "distinct users with contributing events on the repository",
}
for _e in EventType:
    FEATURE_DESCRIPTIONS[f"user_count_{_e.value}"] = f"user's {_e.value} events in the window"
for _e in EventType:
    FEATURE_DESCRIPTIONS[f"repo_count_{_e.value}"] = f"{_e.value} events on the repository"

FEATURE_NAMES: tuple[str, ...] = tuple(FEATURE_DESCRIPTIONS)


@dataclass(frozen=True)
class FeatureTable:
    """Pair-feature matrix with its column dictionary."""

    pairs: tuple[tuple[str, str], ...]
    names: tuple[str, ...]
    values: np.ndarray  # n_pairs x n_features

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


def _dominant_language(hist, repo_states) -> Optional[str]:
    votes: dict[str, int] = {}
    for (_, repo_id), c in hist.counts.items():
        st = repo_states.get(repo_id)
        if st is not None and st.language:
            votes[st.language] = votes.get(st.language, 0) + c
    if not votes:
        return None
    return sorted(votes.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]


def extract_features(slice_: TrainingSlice, pairs: Sequence[tuple[str, str]]) -> FeatureTable:
    """Deterministic feature table for (user, repo) pairs.

    Missing metadata imputes to 0 with a companion presence flag.
    """
    t_end = slice_.window[1]
    repo_states = slice_.repo_states

    owned: dict[str, list[str]] = {}
    for r, st in repo_states.items():
        owned.setdefault(st.owner_id, []).append(r)

    followers: dict[str, set] = {}
    repo_watchers: dict[str, set] = {}
    repo_forkers: dict[str, set] = {}
    repo_events: dict[str, int] = {}
    repo_users: dict[str, set] = {}
    repo_type_counts: dict[str, dict[EventType, int]] = {}
    for ev in slice_.events:
        repo_events[ev.repo_id] = repo_events.get(ev.repo_id, 0) + 1
        repo_users.setdefault(ev.repo_id, set()).add(ev.user_id)
        tc = repo_type_counts.setdefault(ev.repo_id, {})
        tc[ev.event_type] = tc.get(ev.event_type, 0) + 1
        if ev.event_type is EventType.Watch:
            repo_watchers.setdefault(ev.repo_id, set()).add(ev.user_id)
        elif ev.event_type is EventType.Fork:
            repo_forkers.setdefault(ev.repo_id, set()).add(ev.user_id)
    for repo_id in repo_watchers.keys() | repo_forkers.keys():
        owner = repo_states[repo_id].owner_id if repo_id in repo_states else None
        if owner is not None:
            fans = followers.setdefault(owner, set())
            fans.update(repo_watchers.get(repo_id, ()))
            fans.update(repo_forkers.get(repo_id, ()))

    user_lang = {
        u: _dominant_language(h, repo_states) for u, h in slice_.histories.items()
    }

    rows = np.zeros((len(pairs), len(FEATURE_NAMES)))
    col = {name: i for i, name in enumerate(FEATURE_NAMES)}
    for i, (user_id, repo_id) in enumerate(pairs):
        hist = slice_.histories.get(user_id)
        st = repo_states.get(repo_id)
        row = rows[i]

        if st is not None:
            row[col["user_is_owner"]] = 1.0 if st.owner_id == user_id else 0.0
            if st.created_at is not None:
                row[col["repo_age_days"]] = (t_end - st.created_at) / DAY_SECONDS
                row[col["repo_age_known"]] = 1.0
            lang = user_lang.get(user_id)
            if lang is not None and st.language:
                row[col["same_language_known"]] = 1.0
                row[col["same_language"]] = 1.0 if lang == st.language else 0.0
        if hist is not None:
            if hist.created_at is not None:
                row[col["user_age_days"]] = (t_end - hist.created_at) / DAY_SECONDS
                row[col["user_age_known"]] = 1.0
            row[col["user_total_events"]] = hist.total
            row[col["user_rate"]] = hist.rate
            row[col["user_n_repos_touched"]] = len(hist.repo_counts())
            for etype, c in hist.type_counts().items():
                row[col[f"user_count_{etype.value}"]] = c
        row[col["n_followers"]] = len(followers.get(user_id, ()))
        row[col["n_repos_owned_by_user"]] = len(owned.get(user_id, ()))
        row[col["n_watchers_of_repo"]] = len(repo_watchers.get(repo_id, ()))
        row[col["n_forks_of_repo"]] = len(repo_forkers.get(repo_id, ()))
        row[col["repo_total_events"]] = repo_events.get(repo_id, 0)
        row[col["repo_n_users"]] = len(repo_users.get(repo_id, ()))
        if st is not None:
            row[col["repo_n_contributors"]] = len(st.contributors)
        for etype, c in repo_type_counts.get(repo_id, {}).items():
            row[col[f"repo_count_{etype.value}"]] = c

    return FeatureTable(pairs=tuple(pairs), names=FEATURE_NAMES, values=rows)


def _sse_of_groups(y: np.ndarray, groups: np.ndarray, n_groups: int) -> float:
    sums = np.bincount(groups, weights=y, minlength=n_groups)
    sqs = np.bincount(groups, weights=y * y, minlength=n_groups)
    counts = np.bincount(groups, minlength=n_groups)
    nz = counts > 0
    return float(np.sum(sqs[nz] - sums[nz] ** 2 / counts[nz]))


def _candidate_edges(x: np.ndarray, n_candidates: int) -> np.ndarray:
    """Quantile-spaced candidate thresholds between distinct values."""
    uniq = np.unique(x)
    if uniq.size < 2:
        return np.empty(0)
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    if mids.size > n_candidates:
        qs = np.linspace(0, 1, n_candidates + 2)[1:-1]
        mids = np.unique(np.quantile(x, qs))
    return mids


class S3DRegressor(BaseEstimator, RegressorMixin):
    """Greedy forward feature selection by explained-variance gain.

    Each step picks the feature whose lambda-penalized 1-D binning (one
    shared set of bin edges, applied inside every existing cell) removes
    the most remaining variance; prediction is a bin lookup along the
    selected sequence with hierarchical fallback for empty cells.
    """

    def __init__(self, lam: float = 0.01, max_features: int = 4, n_split_candidates: int = 32):
        self.lam = lam
        self.max_features = max_features
        self.n_split_candidates = n_split_candidates

    def _best_edges(self, x, y, cells, n_cells, sst, current_sse):
        """Greedy edge additions while each one buys more than lam * SST."""
        candidates = _candidate_edges(x, self.n_split_candidates)
        if candidates.size == 0:
            return [], current_sse
        edges: list[float] = []
        best_sse = current_sse
        while True:
            best_edge, best_edge_sse = None, best_sse
            for e in candidates:
                if e in edges:
                    continue
                trial = np.sort(np.append(edges, e))
                bins = np.searchsorted(trial, x, side="right")
                groups = cells * (trial.size + 1) + bins
                sse = _sse_of_groups(y, groups, n_cells * (trial.size + 1))
                if sse < best_edge_sse - self.lam * sst:
                    best_edge, best_edge_sse = e, sse
            if best_edge is None:
                break
            edges.append(best_edge)
            best_sse = best_edge_sse
        return sorted(edges), best_sse

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be (n_samples, n_features) aligned with y")
        if np.unique(y).size < 2:
            raise DegenerateTarget("target has fewer than 2 distinct values")
        n, p = X.shape
        ybar = float(y.mean())
        sst = float(np.sum((y - ybar) ** 2))

        selected: list[int] = []
        level_edges: list[np.ndarray] = []
        cells = np.zeros(n, dtype=np.int64)
        n_cells = 1
        sse = sst
        r2_path: list[float] = []

        for _ in range(self.max_features):
            best = None  # (feature, edges, sse)
            for f in range(p):
                if f in selected:
                    continue
                edges, f_sse = self._best_edges(X[:, f], y, cells, n_cells, sst, sse)
                if not edges:
                    continue
                if best is None or f_sse < best[2]:
                    best = (f, edges, f_sse)
            if best is None or best[2] >= sse:
                break
            f, edges, sse = best
            selected.append(f)
            level_edges.append(np.asarray(edges))
            bins = np.searchsorted(edges, X[:, f], side="right")
            cells = cells * (len(edges) + 1) + bins
            n_cells *= len(edges) + 1
            r2_path.append(1.0 - sse / sst)

        self.n_features_in_ = p
        self.selected_features_ = selected
        self.level_edges_ = level_edges
        self.r2_per_step_ = r2_path
        self.training_mean_ = ybar

        # cell means for every prefix depth (fallback path for empty cells)
        self.prefix_means_: list[dict[tuple, float]] = []
        paths = np.zeros((n, len(selected)), dtype=np.int64)
        for lvl, (f, edges) in enumerate(zip(selected, level_edges)):
            paths[:, lvl] = np.searchsorted(edges, X[:, f], side="right")
        for depth in range(1, len(selected) + 1):
            sums: dict[tuple, list] = {}
            for i in range(n):
                key = tuple(paths[i, :depth])
                acc = sums.setdefault(key, [0.0, 0])
                acc[0] += y[i]
                acc[1] += 1
            self.prefix_means_.append({k: s / c for k, (s, c) in sums.items()})
        return self

    def predict(self, X) -> np.ndarray:
        check_fitted(self, ("selected_features_",))
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0])
        for i in range(X.shape[0]):
            path = tuple(
                int(np.searchsorted(edges, X[i, f], side="right"))
                for f, edges in zip(self.selected_features_, self.level_edges_)
            )
            value = self.training_mean_
            for depth in range(len(path), 0, -1):
                mean = self.prefix_means_[depth - 1].get(path[:depth])
                if mean is not None:
                    value = mean
                    break
            out[i] = max(value, 0.0)
        return out


def fit_s3d(table, targets, lam: float = 0.01, max_features: int = 4) -> S3DRegressor:
    X = table.values if isinstance(table, FeatureTable) else table
    return S3DRegressor(lam=lam, max_features=max_features).fit(X, targets)


def s3d_to_json(model: S3DRegressor, feature_names: Optional[Sequence[str]] = None) -> str:
    """Human-auditable serialization: selection order, bin edges, bin
    means, regularization, and the explained-variance trace."""
    check_fitted(model, ("selected_features_",))
    payload = {
        "lam": model.lam,
        "max_features": model.max_features,
        "n_split_candidates": model.n_split_candidates,
        "n_features_in": model.n_features_in_,
        "training_mean": model.training_mean_,
        "selected_features": model.selected_features_,
        "selected_feature_names": (
            [feature_names[i] for i in model.selected_features_] if feature_names else None
        ),
        "level_edges": [list(map(float, e)) for e in model.level_edges_],
        "r2_per_step": model.r2_per_step_,
        "bin_means": [
            {" ".join(map(str, key)): mean for key, mean in sorted(level.items())}
            for level in model.prefix_means_
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def s3d_from_json(text: str) -> S3DRegressor:
    payload = json.loads(text)
    model = S3DRegressor(
        lam=payload["lam"],
        max_features=payload["max_features"],
        n_split_candidates=payload["n_split_candidates"],
    )
    model.n_features_in_ = payload["n_features_in"]
    model.training_mean_ = payload["training_mean"]
    model.selected_features_ = payload["selected_features"]
    model.level_edges_ = [np.asarray(e) for e in payload["level_edges"]]
    model.r2_per_step_ = payload["r2_per_step"]
    model.prefix_means_ = [
        {tuple(int(x) for x in key.split()): mean for key, mean in level.items()}
        for level in payload["bin_means"]
    ]
    return model


def select_lambda(table, targets, grid: Sequence[float], folds: int = 5, seed: int = 0) -> float:
    """Cross-validated R^2 maximiser over the grid; ties prefer larger lambda."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    X = table.values if isinstance(table, FeatureTable) else np.asarray(table, dtype=float)
    y = np.asarray(targets, dtype=float)
    n = X.shape[0]
    order = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[order] = np.arange(n) % folds

    best_lam, best_score = None, -math.inf
    for lam in sorted(grid):
        scores = []
        for k in range(folds):
            test = fold_of == k
            if test.all() or (~test).all():
                continue
            y_train, y_test = y[~test], y[test]
            if np.unique(y_train).size < 2:
                scores.append(0.0)
                continue
            model = S3DRegressor(lam=lam).fit(X[~test], y_train)
            pred = model.predict(X[test])
            sst = float(np.sum((y_test - y_test.mean()) ** 2))
            if sst == 0:
                continue
            scores.append(1.0 - float(np.sum((y_test - pred) ** 2)) / sst)
        score = float(np.mean(scores)) if scores else -math.inf
        if score >= best_score:  # ties go to the larger lambda
            best_lam, best_score = lam, score
    return best_lam


def fit_s3d_suite(
    slice_: TrainingSlice,
    lam: float = 0.01,
    max_features: int = 4,
    seed: int = 0,
) -> dict[EventType, S3DRegressor]:
    """One count model per event type, trained on every positive pair plus
    an equal number of uniformly sampled zero-count pairs."""
    rng = np.random.default_rng(seed)
    positives = sorted(
        {(u, r) for u, h in slice_.histories.items() for (_, r) in h.counts}
    )
    users = sorted(slice_.histories)
    repos = sorted(slice_.repo_states)
    pos_set = set(positives)
    negatives: list[tuple[str, str]] = []
    guard = 0
    while len(negatives) < len(positives) and guard < 20 * len(positives) + 100:
        guard += 1
        pair = (users[int(rng.integers(len(users)))], repos[int(rng.integers(len(repos)))])
        if pair not in pos_set:
            negatives.append(pair)
    pairs = positives + negatives
    table = extract_features(slice_, pairs)

    counts: dict[EventType, np.ndarray] = {
        e: np.zeros(len(pairs)) for e in EventType
    }
    index = {pair: i for i, pair in enumerate(pairs)}
    for u, h in slice_.histories.items():
        for (etype, r), c in h.counts.items():
            i = index.get((u, r))
            if i is not None:
                counts[etype][i] = c

    models: dict[EventType, S3DRegressor] = {}
    for etype in EventType:
        y = counts[etype]
        if np.unique(y).size < 2:
            continue  # nothing to learn for this type
        models[etype] = S3DRegressor(lam=lam, max_features=max_features).fit(
            table.values, y
        )
    return models


class PopularityCandidateSource:
    """Per-user unseen-repo candidates: globally popular repos plus repos
    reachable through co-actors, minus everything the user already touched."""

    def __init__(self, slice_: TrainingSlice, n_top: int = 50):
        self.n_top = n_top
        by_pop = sorted(
            slice_.repo_states.values(), key=lambda st: (-st.popularity, st.repo_id)
        )
        self._top = [st.repo_id for st in by_pop[:n_top]]
        self._touched = {
            u: set(h.repo_counts()) for u, h in slice_.histories.items()
        }
        repo_users: dict[str, set] = {}
        for u, h in slice_.histories.items():
            for r in self._touched[u]:
                repo_users.setdefault(r, set()).add(u)
        self._walkable: dict[str, set] = {}
        for u, touched in self._touched.items():
            reach: set = set()
            for r in touched:
                for v in repo_users.get(r, ()):
                    if v != u:
                        reach.update(self._touched[v])
            self._walkable[u] = reach

    def __call__(self, user_id: str) -> list[str]:
        touched = self._touched.get(user_id, set())
        cands = set(self._top)
        cands.update(self._walkable.get(user_id, ()))
        return sorted(cands - touched)


class ExplorationPolicy:
    """Wraps a base policy; with probability p_explore the step targets an
    unseen candidate repo, weighted by predicted event counts for the
    drawn event type (drawn among types that actually have predictions)."""

    __slots__ = ("base", "p_explore", "explore_action_dist", "scores")

    def __init__(self, base, explore_action_dist, scores: dict, p_explore: float):
        self.base = base
        self.explore_action_dist = explore_action_dist
        self.scores = scores  # EventType -> (repos, cumulative weights)
        self.p_explore = p_explore

    def step(self, rng: np.random.Generator, hub_view=None, now: float = 0.0):
        if self.p_explore > 0 and self.scores and rng.random() < self.p_explore:
            etype = self.explore_action_dist.sample(rng)
            repos, cum = self.scores[etype]
            idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            return etype, repos[min(idx, len(repos) - 1)]
        return self.base.step(rng, hub_view, now)


@register_model
class ExplorationModel(AgentModel):
    """A per-user model augmented with unseen-pair exploration."""

    kind: ClassVar[str] = "explore"

    def __init__(self, p_explore: float = 0.12):
        self.p_explore = p_explore

    def wrap(
        self,
        base: AgentModel,
        s3d_models: dict[EventType, S3DRegressor],
        candidate_source: Callable[[str], list[str]],
        slice_: TrainingSlice,
    ):
        self.hub_dependent = base.hub_dependent
        self.base_ = base
        self.window_ = base.window_
        self.users_ = list(base.users())
        self.rates_ = dict(base.rates_)
        self.policies_ = {}
        for u in self.users_:
            base_policy = base.policy_for(u)
            action = getattr(base_policy, "action_dist", None)
            if action is None and hasattr(base_policy, "pair_dist"):
                marginal: dict[EventType, float] = {}
                for (etype, _), prob in base_policy.pair_dist.as_dict().items():
                    marginal[etype] = marginal.get(etype, 0.0) + prob
                keys = sorted(marginal, key=lambda e: e.value)
                action = DiscreteDist(keys, [marginal[e] for e in keys])
            scores: dict[EventType, tuple] = {}
            candidates = candidate_source(u) if self.p_explore > 0 else []
            if candidates:
                feats = extract_features(slice_, [(u, r) for r in candidates])
                for etype, model in sorted(s3d_models.items(), key=lambda kv: kv[0].value):
                    pred = np.maximum(model.predict(feats.values), 0.0)
                    if pred.sum() > 0:
                        scores[etype] = (list(candidates), np.cumsum(pred))
            explore_action = None
            if scores:
                scored_types = sorted(scores, key=lambda e: e.value)
                weights = [
                    action.prob(e) if action is not None else 1.0 for e in scored_types
                ]
                if sum(weights) <= 0:
                    weights = [1.0] * len(scored_types)
                explore_action = DiscreteDist(scored_types, weights)
            else:
                scores = {}
            self.policies_[u] = ExplorationPolicy(
                base_policy, explore_action, scores, self.p_explore
            )
        return self


def attach_new_entity_behavior(
    base: AgentModel,
    s3d_models: dict[EventType, S3DRegressor],
    candidate_source: Callable[[str], list[str]],
    slice_: TrainingSlice,
    p_explore: float = 0.12,
) -> ExplorationModel:
    """Augment a fitted per-user model with unseen-repo exploration."""
    return ExplorationModel(p_explore=p_explore).wrap(base, s3d_models, candidate_source, slice_)
