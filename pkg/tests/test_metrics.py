import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reposim.core import (
    DAY_SECONDS,
    BadPersistence,
    DegenerateTruth,
    EmptyCommunity,
    Event,
    EventLog,
    EventType,
)
from reposim.metrics import (
    EvalConfig,
    community_contributing_users,
    contributors_rmse,
    evaluate,
    infer_ownership,
    issue_count_r2,
    rbo,
    repo_popularity_rank,
    user_popularity_rank,
)
from reposim.models import fit_null
from reposim.synth import SynthConfig, generate

T0 = 1_500_000_000.0


# --- rbo ------------------------------------------------------------------


def test_rbo_identical_lists():
    s = ["a", "b", "c", "d"]
    for p in (0.5, 0.9, 0.98):
        assert rbo(s, list(s), p, depth=len(s)) == pytest.approx(1 - p ** len(s), abs=1e-12)


def test_rbo_disjoint_lists():
    assert rbo(["a", "b"], ["c", "d"], 0.9, depth=10) == 0.0


def test_rbo_swapped_pair_hand_value():
    assert rbo(["a", "b"], ["b", "a"], 0.5, depth=2) == pytest.approx(0.25, abs=1e-12)


def test_rbo_bad_persistence():
    for p in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(BadPersistence):
            rbo(["a"], ["a"], p, 1)


def test_rbo_rejects_duplicates():
    with pytest.raises(ValueError):
        rbo(["a", "a"], ["b", "c"], 0.9, 2)


@st.composite
def ranked_pair(draw):
    universe = [f"x{i}" for i in range(12)]
    s = draw(st.permutations(universe))
    t = draw(st.permutations(universe))
    n_s = draw(st.integers(min_value=0, max_value=12))
    n_t = draw(st.integers(min_value=0, max_value=12))
    return list(s)[:n_s], list(t)[:n_t]


@settings(max_examples=300, deadline=None)
@given(ranked_pair(), st.floats(min_value=0.05, max_value=0.95))
def test_rbo_symmetric(pair, p):
    s, t = pair
    assert rbo(s, t, p, depth=15) == pytest.approx(rbo(t, s, p, depth=15), abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(ranked_pair(), st.floats(min_value=0.05, max_value=0.95))
def test_rbo_monotone_under_common_prefix(pair, p):
    s, t = pair
    before = rbo(s, t, p, depth=15)
    after = rbo(["common"] + s, ["common"] + t, p, depth=15)
    assert after >= before - 1e-12


@settings(max_examples=200, deadline=None)
@given(ranked_pair(), st.floats(min_value=0.05, max_value=0.95))
def test_rbo_bounded(pair, p):
    s, t = pair
    assert 0.0 <= rbo(s, t, p, depth=15) <= 1.0 + 1e-12


# --- popularity ranks -------------------------------------------------------


def _ev(t, etype, user, repo):
    return Event(T0 + t, etype, user, repo)


def test_user_popularity_empty_log():
    assert user_popularity_rank(EventLog([]), {}) == []


def test_user_popularity_single_watch():
    log = EventLog([_ev(1, EventType.Watch, "w", "r")])
    assert user_popularity_rank(log, {"r": "owner"}) == ["owner"]


def test_user_popularity_ordering():
    log = EventLog(
        [_ev(i, EventType.Watch, f"w{i}", "r1") for i in range(3)]
        + [_ev(10, EventType.Fork, "f1", "r1")]
        + [_ev(20, EventType.Fork, "f2", "r2"), _ev(21, EventType.Fork, "f3", "r2")]
    )
    ownership = {"r1": "u1", "r2": "u2"}
    assert user_popularity_rank(log, ownership) == ["u1", "u2"]  # 4 > 2


def test_repo_popularity_rank_examples():
    assert repo_popularity_rank(EventLog([])) == []
    log = EventLog([_ev(1, EventType.Watch, "w", "solo")])
    assert repo_popularity_rank(log) == ["solo"]
    log = EventLog(
        [_ev(i, EventType.Watch, f"w{i}", "hot") for i in range(3)]
        + [_ev(9, EventType.Fork, "f", "warm")]
    )
    assert repo_popularity_rank(log) == ["hot", "warm"]


def test_popularity_ignores_non_popularity_events():
    log = EventLog([_ev(1, EventType.Push, "u", "r")] * 1)
    assert repo_popularity_rank(log) == []


# --- R^2 --------------------------------------------------------------------


def _issues_log(counts: dict[str, int], who="u"):
    evs = []
    t = 0.0
    for repo, c in counts.items():
        for _ in range(c):
            evs.append(_ev(t, EventType.Issues, who, repo))
            t += 1
    # anchor the repo universe even for zero-count repos
    for repo in counts:
        evs.append(_ev(t, EventType.Push, who, repo))
        t += 1
    return EventLog(evs)


def test_issue_r2_perfect():
    truth = _issues_log({"a": 1, "b": 2, "c": 3})
    assert issue_count_r2(truth, truth) == pytest.approx(1.0, abs=1e-12)


def test_issue_r2_mean_predictor_zero():
    truth = _issues_log({"a": 1, "b": 2, "c": 3})
    sim = _issues_log({"a": 2, "b": 2, "c": 2})
    assert issue_count_r2(sim, truth) == pytest.approx(0.0, abs=1e-12)


def test_issue_r2_hand_value():
    truth = _issues_log({"a": 1, "b": 2, "c": 3})
    sim = _issues_log({"a": 3, "b": 2, "c": 1})
    assert issue_count_r2(sim, truth) == pytest.approx(-3.0, abs=1e-12)


def test_issue_r2_degenerate_truth():
    truth = _issues_log({"a": 2, "b": 2})
    sim = _issues_log({"a": 1, "b": 3})
    with pytest.raises(DegenerateTruth):
        issue_count_r2(sim, truth)


# --- contributors RMSE --------------------------------------------------------


def _daily_push_log(day_counts, repo="r"):
    evs = []
    for day, n in enumerate(day_counts):
        for i in range(n):
            evs.append(_ev(day * DAY_SECONDS + i * 3600.0, EventType.Push, f"u{day}_{i}", repo))
    return EventLog(evs)


def test_contributors_rmse_identical():
    log = _daily_push_log([2, 0, 1])
    assert contributors_rmse(log, log, "r") == 0.0


def test_contributors_rmse_constant_offset():
    truth = _daily_push_log([2, 2, 2])
    sim = _daily_push_log([1, 1, 1])
    window = (T0, T0 + 3 * DAY_SECONDS)
    assert contributors_rmse(sim, truth, "r", window) == pytest.approx(1.0)


def test_contributors_rmse_hand_value():
    truth = _daily_push_log([2, 0, 1])
    sim = EventLog([_ev(5.0, EventType.Watch, "x", "r")])  # no contributions
    window = (T0, T0 + 3 * DAY_SECONDS)
    assert contributors_rmse(sim, truth, "r", window) == pytest.approx(
        np.sqrt(5 / 3), abs=1e-12
    )


# --- community ----------------------------------------------------------------


def test_community_all_contribute():
    log = EventLog([_ev(i, EventType.Push, f"u{i}", "r") for i in range(3)])
    assert community_contributing_users(log, {"u0", "u1", "u2"}) == 1.0


def test_community_none_contribute():
    log = EventLog([_ev(1, EventType.Watch, "u0", "r")])
    assert community_contributing_users(log, {"u0", "u1"}) == 0.0


def test_community_fraction():
    log = EventLog(
        [_ev(1, EventType.Push, "a", "r"), _ev(2, EventType.PullRequest, "b", "r")]
    )
    assert community_contributing_users(log, {"a", "b", "c", "d", "e"}) == pytest.approx(0.4)


def test_community_empty_raises():
    with pytest.raises(EmptyCommunity):
        community_contributing_users(EventLog([]), set())


# --- evaluate -----------------------------------------------------------------


def identical_rbo(n_items: int, p: float = 0.98, depth: int = 500) -> float:
    """Closed-form truncated RBO of two identical length-n lists."""
    total = sum(
        p ** (d - 1) * (min(d, n_items) / d) for d in range(1, depth + 1)
    )
    return (1 - p) * total


def test_evaluate_perfect_scores():
    rng = np.random.default_rng(0)
    evs = []
    for i in range(50):
        u, r = f"u{i % 7}", f"r{i % 5}"
        etype = [EventType.Push, EventType.Watch, EventType.Issues, EventType.Fork][i % 4]
        evs.append(_ev(float(rng.uniform(0, 5 * DAY_SECONDS)), etype, u, r))
    truth = EventLog(evs)
    report = evaluate(truth, truth, EvalConfig(community={"u0", "u1"}))
    n_ranked_repos = len(repo_popularity_rank(truth))
    assert report.values["repo_popularity_rbo"] == pytest.approx(
        identical_rbo(n_ranked_repos), abs=1e-12
    )
    assert report.values["issue_count_r2"] == pytest.approx(1.0)
    assert report.values["contributors_rmse"] == 0.0
    assert report.values["community_contributing_users_abs_error"] == 0.0


def test_evaluate_empty_sim_no_crash():
    truth = _daily_push_log([2, 1, 1])
    report = evaluate(EventLog([]), truth, EvalConfig())
    assert report.values["contributors_rmse"] is not None
    assert report.values["community_contributing_users_sim"] is None
    text = report.to_text()
    assert "unavailable" in text
    assert report.to_json()


def test_evaluate_excludes_new_entities():
    truth = EventLog(
        [
            _ev(1, EventType.Watch, "w1", "old"),
            _ev(2, EventType.Watch, "w2", "new"),
            _ev(3, EventType.Watch, "w3", "new"),
        ]
    )
    cfg = EvalConfig(known_repos={"old"}, ownership={"old": "vet", "new": "kid"},
                     known_users={"vet"})
    report = evaluate(truth, truth, cfg)
    # only the pre-existing repo is ranked: singleton identical lists
    assert report.values["repo_popularity_rbo"] == pytest.approx(identical_rbo(1), abs=1e-12)


def test_infer_ownership_create_beats_first_touch():
    log = EventLog(
        [
            _ev(1, EventType.Watch, "visitor", "r"),
            _ev(2, EventType.Create, "maker", "r"),
        ]
    )
    assert infer_ownership(log) == {"r": "maker"}


def test_null_model_beats_uniform_random():
    """Paired comparison on stationary synthetic data."""
    cfg = SynthConfig(variant="frozen", n_users=300, n_repos=900, days=56.0, seed=5)
    log, _ = generate(cfg)
    t0 = cfg.start_time
    split = t0 + 28 * DAY_SECONDS
    test_window = (split, split + 14 * DAY_SECONDS)
    truth = log.restrict(*test_window)
    null_sim = fit_null(log, test_window)

    rng = np.random.default_rng(0)
    users = sorted({ev.user_id for ev in log})
    repos = sorted({ev.repo_id for ev in log})
    types = list(EventType)
    uniform = EventLog(
        [
            Event(
                float(rng.uniform(*test_window)),
                types[int(rng.integers(len(types)))],
                users[int(rng.integers(len(users)))],
                repos[int(rng.integers(len(repos)))],
            )
            for _ in range(len(truth))
        ]
    )
    ownership = infer_ownership(log)
    community = set(users[:100])
    cfg_eval = EvalConfig(window=test_window, ownership=ownership, community=community,
                          max_contributor_repos=100)
    rep_null = evaluate(null_sim, truth, cfg_eval)
    rep_unif = evaluate(uniform, truth, cfg_eval)

    assert rep_null.values["user_popularity_rbo"] > rep_unif.values["user_popularity_rbo"]
    assert rep_null.values["repo_popularity_rbo"] > rep_unif.values["repo_popularity_rbo"]
    assert rep_null.values["issue_count_r2"] > rep_unif.values["issue_count_r2"]
    assert rep_null.values["contributors_rmse"] < rep_unif.values["contributors_rmse"]
    assert (
        rep_null.values["community_contributing_users_abs_error"]
        <= rep_unif.values["community_contributing_users_abs_error"]
    )
