"""Simulation-fidelity metrics: rank-biased overlap of popularity ranks,
issue-count R^2, daily-contributor RMSE, and the community contributing-user
percentage, plus the aggregating report."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    DAY_SECONDS,
    BadPersistence,
    DegenerateTruth,
    EmptyCommunity,
    EventLog,
    EventType,
)

CONTRIBUTING = (EventType.Push, EventType.PullRequest)
TOP_N = 500


def rbo(s: Sequence, t: Sequence, p: float = 0.98, depth: int = TOP_N) -> float:
    """Truncated rank-biased overlap of two duplicate-free ranked lists:
    (1-p) * sum_{d=1..depth} p^(d-1) * |s[:d] & t[:d]| / d."""
    if not 0.0 < p < 1.0:
        raise BadPersistence(f"persistence must lie in (0, 1), got {p}")
    if len(set(s)) != len(s) or len(set(t)) != len(t):
        raise ValueError("ranked lists must be duplicate-free")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    seen_s: set = set()
    seen_t: set = set()
    overlap = 0
    total = 0.0
    weight = 1.0  # p^(d-1)
    for d in range(1, depth + 1):
        x = s[d - 1] if d <= len(s) else None
        y = t[d - 1] if d <= len(t) else None
        if x is not None and x == y:
            overlap += 1
        else:
            # duplicate-free lists: a matched element never reappears,
            # so matched elements need no further bookkeeping
            if x is not None:
                if x in seen_t:
                    overlap += 1
                else:
                    seen_s.add(x)
            if y is not None:
                if y in seen_s:
                    overlap += 1
                else:
                    seen_t.add(y)
        total += weight * overlap / d
        weight *= p
    return (1.0 - p) * total


def _popularity_scores(log: EventLog, key_fn) -> dict[str, int]:
    scores: dict[str, int] = {}
    for ev in log:
        if ev.event_type in (EventType.Watch, EventType.Fork):
            key = key_fn(ev)
            if key is not None:
                scores[key] = scores.get(key, 0) + 1
    return scores


def _top(scores: dict[str, int], n: int, restrict: Optional[set] = None) -> list[str]:
    items = scores.items()
    if restrict is not None:
        items = [(k, v) for k, v in items if k in restrict]
    return [k for k, _ in sorted(items, key=lambda kv: (-kv[1], kv[0]))[:n]]


def user_popularity_rank(
    log: EventLog,
    ownership: dict[str, str],
    n: int = TOP_N,
    restrict: Optional[set] = None,
) -> list[str]:
    """Top-n users by watch+fork events received on repos they own."""
    return _top(
        _popularity_scores(log, lambda ev: ownership.get(ev.repo_id)), n, restrict
    )


def repo_popularity_rank(
    log: EventLog, n: int = TOP_N, restrict: Optional[set] = None
) -> list[str]:
    """Top-n repos by watch+fork events received."""
    return _top(_popularity_scores(log, lambda ev: ev.repo_id), n, restrict)


def issue_count_r2(sim: EventLog, truth: EventLog) -> float:
    """R^2 of per-repo Issues-event counts over the union repo universe."""
    repos = {ev.repo_id for ev in sim} | {ev.repo_id for ev in truth}
    if not repos:
        raise DegenerateTruth("no repositories in either log")
    sim_counts = {r: 0 for r in repos}
    truth_counts = {r: 0 for r in repos}
    for ev in sim:
        if ev.event_type is EventType.Issues:
            sim_counts[ev.repo_id] += 1
    for ev in truth:
        if ev.event_type is EventType.Issues:
            truth_counts[ev.repo_id] += 1
    order = sorted(repos)
    y = np.array([truth_counts[r] for r in order], dtype=float)
    yhat = np.array([sim_counts[r] for r in order], dtype=float)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise DegenerateTruth("all truth issue counts are equal")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


def _daily_contributors(log: EventLog, repo_id: str, day0: int, n_days: int) -> np.ndarray:
    daily: list[set] = [set() for _ in range(n_days)]
    for ev in log:
        if ev.repo_id == repo_id and ev.event_type in CONTRIBUTING:
            d = int(ev.timestamp // DAY_SECONDS) - day0
            if 0 <= d < n_days:
                daily[d].add(ev.user_id)
    return np.array([len(s) for s in daily], dtype=float)


def contributors_rmse(
    sim: EventLog,
    truth: EventLog,
    repo_id: str,
    window: Optional[tuple[float, float]] = None,
) -> float:
    """RMSE between the daily unique-contributor series of the two logs."""
    if window is not None:
        day0 = int(window[0] // DAY_SECONDS)
        n_days = max(1, int(np.ceil((window[1] - window[0]) / DAY_SECONDS)))
    else:
        stamps = [ev.timestamp for ev in sim] + [ev.timestamp for ev in truth]
        if not stamps:
            return 0.0
        day0 = int(min(stamps) // DAY_SECONDS)
        n_days = int(max(stamps) // DAY_SECONDS) - day0 + 1
    a = _daily_contributors(sim, repo_id, day0, n_days)
    b = _daily_contributors(truth, repo_id, day0, n_days)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def community_contributing_users(log: EventLog, community: set[str]) -> float:
    """Fraction of community members with at least one contributing event."""
    if not community:
        raise EmptyCommunity("community id set is empty")
    contributors = {ev.user_id for ev in log if ev.event_type in CONTRIBUTING}
    return len(community & contributors) / len(community)


@dataclass
class EvalConfig:
    rbo_persistence: float = 0.98
    top_n: int = TOP_N
    rbo_depth: int = TOP_N
    window: Optional[tuple[float, float]] = None
    ownership: Optional[dict[str, str]] = None
    known_users: Optional[set] = None
    known_repos: Optional[set] = None
    community: Optional[set] = None
    max_contributor_repos: int = 1000


@dataclass
class MetricReport:
    """Named metric values with node/community/population level tags."""

    values: dict[str, Optional[float]]
    levels: dict[str, str]
    window: Optional[tuple[float, float]]
    inputs_hash: str
    notes: dict[str, str] = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "values": self.values,
            "levels": self.levels,
            "window": list(self.window) if self.window else None,
            "inputs_hash": self.inputs_hash,
            "notes": self.notes,
            "params": self.params,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_text(self) -> str:
        rows = []
        width = max(len(k) for k in self.values) if self.values else 10
        for name in sorted(self.values):
            v = self.values[name]
            shown = f"{v:.6f}" if v is not None else "unavailable"
            note = f"  ({self.notes[name]})" if name in self.notes else ""
            rows.append(f"{name.ljust(width)}  {shown}{note}")
        return "\n".join(rows)


def _log_digest(*logs: EventLog) -> str:
    h = hashlib.sha256()
    for log in logs:
        h.update(str(len(log)).encode())
        for ev in (log[0], log[-1]) if len(log) else ():
            h.update(repr(ev).encode())
    return h.hexdigest()[:16]


def infer_ownership(log: EventLog) -> dict[str, str]:
    """Earliest Create event wins, else the earliest event of any type."""
    owners: dict[str, str] = {}
    created: set[str] = set()
    for ev in log:
        if ev.event_type is EventType.Create and ev.repo_id not in created:
            owners[ev.repo_id] = ev.user_id
            created.add(ev.repo_id)
        elif ev.repo_id not in owners:
            owners[ev.repo_id] = ev.user_id
    return owners


def evaluate(sim: EventLog, truth: EventLog, cfg: Optional[EvalConfig] = None) -> MetricReport:
    """All five fidelity metrics; failures mark single metrics unavailable
    instead of failing the run."""
    cfg = cfg or EvalConfig()
    values: dict[str, Optional[float]] = {}
    levels: dict[str, str] = {}
    notes: dict[str, str] = {}

    ownership = cfg.ownership if cfg.ownership is not None else infer_ownership(truth)

    def attempt(name: str, level: str, fn):
        levels[name] = level
        try:
            values[name] = fn()
        except Exception as exc:
            values[name] = None
            notes[name] = f"{type(exc).__name__}: {exc}"

    attempt(
        "user_popularity_rbo",
        "population",
        lambda: rbo(
            user_popularity_rank(sim, ownership, cfg.top_n, cfg.known_users),
            user_popularity_rank(truth, ownership, cfg.top_n, cfg.known_users),
            cfg.rbo_persistence,
            cfg.rbo_depth,
        ),
    )
    attempt(
        "repo_popularity_rbo",
        "population",
        lambda: rbo(
            repo_popularity_rank(sim, cfg.top_n, cfg.known_repos),
            repo_popularity_rank(truth, cfg.top_n, cfg.known_repos),
            cfg.rbo_persistence,
            cfg.rbo_depth,
        ),
    )
    attempt("issue_count_r2", "node", lambda: issue_count_r2(sim, truth))

    def mean_contributors_rmse():
        repos = sorted({ev.repo_id for ev in truth if ev.event_type in CONTRIBUTING}
                       | {ev.repo_id for ev in sim if ev.event_type in CONTRIBUTING})
        repos = repos[: cfg.max_contributor_repos]
        if not repos:
            return 0.0
        return float(
            np.mean([contributors_rmse(sim, truth, r, cfg.window) for r in repos])
        )

    attempt("contributors_rmse", "node", mean_contributors_rmse)

    if cfg.community is not None:
        attempt(
            "community_contributing_users_sim",
            "community",
            lambda: community_contributing_users(sim, cfg.community),
        )
        attempt(
            "community_contributing_users_truth",
            "community",
            lambda: community_contributing_users(truth, cfg.community),
        )
        if (
            values.get("community_contributing_users_sim") is not None
            and values.get("community_contributing_users_truth") is not None
        ):
            values["community_contributing_users_abs_error"] = abs(
                values["community_contributing_users_sim"]
                - values["community_contributing_users_truth"]
            )
            levels["community_contributing_users_abs_error"] = "community"
    else:
        values["community_contributing_users_sim"] = None
        levels["community_contributing_users_sim"] = "community"
        notes["community_contributing_users_sim"] = "no community file supplied"

    return MetricReport(
        values=values,
        levels=levels,
        window=cfg.window,
        inputs_hash=_log_digest(sim, truth),
        params={
            "rbo_persistence": cfg.rbo_persistence,
            "top_n": cfg.top_n,
            "rbo_depth": cfg.rbo_depth,
        },
    )
