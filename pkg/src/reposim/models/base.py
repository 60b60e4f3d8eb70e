"""Shared agent-model machinery: the uniform fit/step interface, discrete
sampling, hub views, and snapshot serialization.

Every model fits from a :class:`~reposim.ingest.TrainingSlice` and then
produces events one step at a time; a step never mutates shared state --
the engine applies effects through the hub. Models are sklearn-style
estimators: hyperparameters live in ``__init__``, fitted state in
underscore-suffixed attributes, and ``get_params`` works for free.
"""

from __future__ import annotations

import json
import pickle
import struct
from bisect import bisect_right
from typing import ClassVar, Optional

import numpy as np
from sklearn.base import BaseEstimator

from ..core import SnapshotError
from ..validation import check_fitted

SNAPSHOT_MAGIC = b"RSIM"
SNAPSHOT_FORMAT_VERSION = 1
PICKLE_PROTOCOL = 4


class DiscreteDist:
    """Inverse-CDF sampling from a fixed discrete distribution.

    Items are stored in the order given (callers sort for determinism);
    weights need not be normalised.
    """

    __slots__ = ("items", "probs", "_cum")

    def __init__(self, items, weights):
        items = list(items)
        if not items:
            raise ValueError("empty distribution")
        w = np.asarray(list(weights), dtype=float)
        if w.shape != (len(items),):
            raise ValueError("items/weights length mismatch")
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative with positive sum")
        self.items = items
        self.probs = w / w.sum()
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        self._cum = cum.tolist()

    def sample(self, rng: np.random.Generator):
        return self.items[bisect_right(self._cum, rng.random())]

    def prob(self, item) -> float:
        try:
            return float(self.probs[self.items.index(item)])
        except ValueError:
            return 0.0

    def __len__(self) -> int:
        return len(self.items)

    def as_dict(self) -> dict:
        return {item: float(p) for item, p in zip(self.items, self.probs)}

    def __getstate__(self):
        return (self.items, self.probs)

    def __setstate__(self, state):
        items, probs = state
        self.items = items
        self.probs = probs
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        self._cum = cum.tolist()


class HubView:
    """Read-only view of repository state offered to stepping agents."""

    def repo_popularity(self, repo_id: str) -> int:
        raise NotImplementedError

    def user_popularity(self, user_id: str) -> int:
        """Total watches+forks on repositories owned by the user."""
        raise NotImplementedError

    def owner_of(self, repo_id: str) -> Optional[str]:
        raise NotImplementedError


class TableHubView(HubView):
    """Dict-backed hub view for fitting and tests."""

    def __init__(self, repo_pop: dict[str, int], owners: dict[str, str]):
        self._repo_pop = repo_pop
        self._owners = owners
        self._user_pop: dict[str, int] = {}
        for repo_id, pop in repo_pop.items():
            owner = owners.get(repo_id)
            if owner is not None:
                self._user_pop[owner] = self._user_pop.get(owner, 0) + pop

    @classmethod
    def from_slice(cls, slice_) -> "TableHubView":
        return cls(
            {r: s.popularity for r, s in slice_.repo_states.items()},
            {r: s.owner_id for r, s in slice_.repo_states.items()},
        )

    def repo_popularity(self, repo_id: str) -> int:
        return self._repo_pop.get(repo_id, 0)

    def user_popularity(self, user_id: str) -> int:
        return self._user_pop.get(user_id, 0)

    def owner_of(self, repo_id: str) -> Optional[str]:
        return self._owners.get(repo_id)


class AgentModel(BaseEstimator):
    """Base class for the six behavioral models.

    Subclasses set ``kind`` and one behavioral flavor:

    - per-user (default): ``policy_for(user_id).step(rng, hub_view, now)``
      draws one (event_type, repo_id) action;
    - ``population_level``: a single ``generate(rng, hub_view, now)`` picks
      the user too;
    - ``pretimestamped``: ``events_for(window)`` returns the full output
      log directly (the engine is a pass-through).
    """

    kind: ClassVar[str] = "abstract"
    hub_dependent: ClassVar[bool] = False
    population_level: ClassVar[bool] = False
    pretimestamped: ClassVar[bool] = False

    def fit(self, slice_):
        raise NotImplementedError

    # --- per-user surface -------------------------------------------------
    def users(self) -> list[str]:
        check_fitted(self, ("users_",))
        return self.users_

    def rate(self, user_id: str) -> float:
        check_fitted(self, ("rates_",))
        return self.rates_.get(user_id, 0.0)

    def policy_for(self, user_id: str):
        check_fitted(self, ("policies_",))
        return self.policies_[user_id]

    def step(self, user_id: str, rng: np.random.Generator, hub_view: HubView, now: float):
        return self.policy_for(user_id).step(rng, hub_view, now)


def save_snapshot(
    model: AgentModel,
    path,
    *,
    window: tuple[float, float],
    config_hash: str = "",
    extra: Optional[dict] = None,
    state=None,
) -> dict:
    """Write a fitted model as a binary snapshot with a JSON header.

    ``state`` carries the slice-derived tables the engine needs (hub
    states, per-user histories); storing it makes simulate runnable from
    the snapshot alone.
    """
    header = {
        "format_version": SNAPSHOT_FORMAT_VERSION,
        "model": model.kind,
        "window": [float(window[0]), float(window[1])],
        "config_hash": config_hash,
    }
    if extra:
        header.update(extra)
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = pickle.dumps({"model": model, "state": state}, protocol=PICKLE_PROTOCOL)
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(body)
    return header


def read_snapshot_header(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise SnapshotError(f"{path}: not a model snapshot")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
    if header.get("format_version") != SNAPSHOT_FORMAT_VERSION:
        raise SnapshotError(
            f"{path}: snapshot format {header.get('format_version')} "
            f"!= supported {SNAPSHOT_FORMAT_VERSION}"
        )
    return header


def load_snapshot(path) -> tuple[AgentModel, dict]:
    model, _, header = load_snapshot_state(path)
    return model, header


def load_snapshot_state(path) -> tuple[AgentModel, object, dict]:
    """(model, engine state or None, header)."""
    header = read_snapshot_header(path)
    with open(path, "rb") as fh:
        fh.seek(4)
        (hlen,) = struct.unpack("<I", fh.read(4))
        fh.seek(8 + hlen)
        payload = pickle.load(fh)
    if not isinstance(payload, dict) or not isinstance(payload.get("model"), AgentModel):
        raise SnapshotError(f"{path}: payload is not a model snapshot")
    return payload["model"], payload.get("state"), header


#: kind -> class registry, filled in by the concrete model modules.
MODEL_KINDS: dict[str, type] = {}


def register_model(cls):
    MODEL_KINDS[cls.kind] = cls
    return cls
