import numpy as np
import pytest

from reposim.ingest import build_slice
from reposim.models.bayesian import BayesianModel
from reposim.synth import SynthConfig, generate


class StaticPopulationView:
    """Frozen popularity view + id minting, for driving generators in tests."""

    def __init__(self, slice_):
        pops = sorted(
            ((st.popularity, r) for r, st in slice_.repo_states.items()),
            key=lambda t: (-t[0], t[1]),
        )
        self._ranked = [r for _, r in pops]
        self._pop = {r: st.popularity for r, st in slice_.repo_states.items()}
        self._owner = {r: st.owner_id for r, st in slice_.repo_states.items()}
        self.minted_users = 0
        self.minted_repos = 0

    def repos_ranked(self):
        return self._ranked

    def repo_popularity(self, repo_id):
        return self._pop.get(repo_id, 0)

    def user_popularity(self, user_id):
        return 0

    def owner_of(self, repo_id):
        return self._owner.get(repo_id)

    def mint_user_id(self):
        self.minted_users += 1
        return f"u-new-{self.minted_users:08d}"

    def mint_repo_id(self):
        self.minted_repos += 1
        return f"r-new-{self.minted_repos:08d}"


@pytest.fixture(scope="session")
def attachment_world():
    """Attachment-variant synthetic ecosystem plus a fitted Bayesian model."""
    cfg = SynthConfig(
        variant="attachment",
        seed=2,
        n_users=2000,
        n_repos=20_000,
        days=60.0,
        events_per_day=5000.0,
    )
    log, record = generate(cfg)
    slice_ = build_slice(log, cfg.window(), repo_meta=record["repo_meta"])
    model = BayesianModel().fit(slice_)
    return {"cfg": cfg, "log": log, "record": record, "slice": slice_, "model": model}


@pytest.fixture()
def static_view(attachment_world):
    return StaticPopulationView(attachment_world["slice"])


def pytest_configure(config):
    np.seterr(all="raise", under="ignore")
