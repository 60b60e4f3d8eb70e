"""Link prediction through bipartite-graph embedding.

Three trainers produce user/repo vectors whose inner products estimate
interaction intensity: stochastic-gradient graph factorization (the
model actually driving the agent), Laplacian eigenmaps, and a Katz-
proximity SVD (HOPE). Mean average precision over held-out edges scores
them, and the LPE agent turns reconstructed scores into per-user repo
selection distributions.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import ClassVar, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..core import (
    BetaTooLarge,
    ConvergenceFailure,
    EventType,
    NonFinite,
)
from ..ingest import BipartiteGraph, TrainingSlice, build_bipartite
from ..validation import check_fitted, check_positive
from .base import AgentModel, DiscreteDist, register_model
from .stationary import fit_baseline

logger = logging.getLogger(__name__)

LOSS_MONOTONE_TOL = 1e-6
TRIVIAL_EIGENVALUE_TOL = 1e-8
LPE_TOP_K = 100


@dataclass(frozen=True)
class Embedding:
    """Per-event-type user and repository vectors."""

    event_type: EventType
    dimension: int
    users: tuple[str, ...]
    repos: tuple[str, ...]
    user_vectors: np.ndarray  # |U| x d
    repo_vectors: np.ndarray  # |R| x d

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if not (np.isfinite(self.user_vectors).all() and np.isfinite(self.repo_vectors).all()):
            raise NonFinite("embedding contains non-finite entries")

    def score_matrix(self) -> np.ndarray:
        return self.user_vectors @ self.repo_vectors.T


def _entries(g: BipartiteGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    coo = g.weights.tocoo()
    order = np.lexsort((coo.col, coo.row))
    return coo.row[order], coo.col[order], coo.data[order]


def gf_loss(g: BipartiteGraph, X: np.ndarray, Y: np.ndarray, reg: float) -> float:
    rows, cols, vals = _entries(g)
    pred = np.einsum("ij,ij->i", X[rows], Y[cols])
    sq = float(np.sum((vals - pred) ** 2))
    return sq + reg * (float(np.sum(X * X)) + float(np.sum(Y * Y)))


def gf_gradients(
    g: BipartiteGraph, X: np.ndarray, Y: np.ndarray, reg: float
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of :func:`gf_loss` (used by the gradient check)."""
    rows, cols, vals = _entries(g)
    err = vals - np.einsum("ij,ij->i", X[rows], Y[cols])
    GX = 2.0 * reg * X.copy()
    GY = 2.0 * reg * Y.copy()
    np.add.at(GX, rows, -2.0 * err[:, None] * Y[cols])
    np.add.at(GY, cols, -2.0 * err[:, None] * X[rows])
    return GX, GY


class GraphFactorization:
    """Observed-entry squared loss factorization by stochastic gradient.

    Deterministic for a fixed seed. The learning rate halves whenever an
    epoch fails to improve the full loss (the epoch is rolled back), so
    the recorded loss history is non-increasing.
    """

    def __init__(
        self,
        d: int = 64,
        reg: float = 1e-3,
        lr: float = 0.01,
        epochs: int = 50,
        seed: int = 0,
        n_restarts: int = 1,
    ):
        self.d = d
        self.reg = reg
        self.lr = lr
        self.epochs = epochs
        self.seed = seed
        self.n_restarts = n_restarts

    def fit(self, g: BipartiteGraph):
        check_positive(self.d, "d")
        check_positive(self.n_restarts, "n_restarts")
        best_emb, best_losses = None, None
        for restart in range(self.n_restarts):
            emb, losses = self._fit_once(g, restart)
            if best_losses is None or losses[-1] < best_losses[-1]:
                best_emb, best_losses = emb, losses
        self.loss_history_ = best_losses
        self.embedding_ = best_emb
        return self

    def _fit_once(self, g: BipartiteGraph, restart: int):
        rows, cols, vals = _entries(g)
        if rows.size == 0:
            raise ValueError("graph has no edges")
        n_u, n_r = len(g.users), len(g.repos)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, restart, n_u, n_r]))
        X = rng.normal(0.0, 0.1, size=(n_u, self.d))
        Y = rng.normal(0.0, 0.1, size=(n_r, self.d))
        row_mult = np.bincount(rows, minlength=n_u).astype(float)
        col_mult = np.bincount(cols, minlength=n_r).astype(float)
        # distribute the L2 penalty over each vector's observed entries so
        # per-entry updates sum to the full-loss gradient
        reg_u = np.divide(self.reg, row_mult, out=np.zeros(n_u), where=row_mult > 0)
        reg_r = np.divide(self.reg, col_mult, out=np.zeros(n_r), where=col_mult > 0)

        lr = self.lr
        losses = [gf_loss(g, X, Y, self.reg)]
        for _ in range(self.epochs):
            X_prev, Y_prev = X.copy(), Y.copy()
            order = rng.permutation(rows.size)
            for k in order:
                u, r, a = rows[k], cols[k], vals[k]
                xu, yr = X[u], Y[r]
                e = a - float(xu @ yr)
                gx = -2.0 * e * yr + 2.0 * reg_u[u] * xu
                gy = -2.0 * e * xu + 2.0 * reg_r[r] * yr
                X[u] = xu - lr * gx
                Y[r] = yr - lr * gy
            loss = gf_loss(g, X, Y, self.reg)
            if not np.isfinite(loss):
                raise NonFinite("training diverged; lower the learning rate")
            if loss > losses[-1] * (1 + 1e-12) + 1e-12:
                X, Y = X_prev, Y_prev  # roll back, cool down
                lr *= 0.5
                losses.append(losses[-1])
            else:
                losses.append(loss)
        emb = Embedding(
            event_type=g.event_type,
            dimension=self.d,
            users=g.users,
            repos=g.repos,
            user_vectors=X,
            repo_vectors=Y,
        )
        return emb, losses


def train_gf(
    g: BipartiteGraph,
    d: int = 64,
    reg: float = 1e-3,
    epochs: int = 50,
    lr: float = 0.01,
    seed: int = 0,
    n_restarts: int = 1,
) -> Embedding:
    return (
        GraphFactorization(
            d=d, reg=reg, lr=lr, epochs=epochs, seed=seed, n_restarts=n_restarts
        )
        .fit(g)
        .embedding_
    )


def _joint_adjacency(g: BipartiteGraph) -> sp.csr_matrix:
    n_u, n_r = len(g.users), len(g.repos)
    B = g.weights
    return sp.bmat([[None, B], [B.T, None]], format="csr")


def _canonical_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip each eigenvector so its largest-magnitude entry is positive."""
    out = vecs.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


class LaplacianEigenmaps:
    """Bottom nontrivial eigenvectors of the symmetric normalized Laplacian
    of the joint user+repo graph; both sides embedded jointly, then split."""

    DENSE_LIMIT = 1500

    def __init__(self, d: int = 64):
        self.d = d

    def fit(self, g: BipartiteGraph):
        check_positive(self.d, "d")
        A = _joint_adjacency(g)
        n = A.shape[0]
        deg = np.asarray(A.sum(axis=1)).ravel()
        inv_sqrt = np.divide(1.0, np.sqrt(deg), out=np.zeros(n), where=deg > 0)
        D = sp.diags(inv_sqrt)
        L = sp.eye(n) - D @ A @ D
        n_components = sp.csgraph.connected_components(A, directed=False)[0]
        k = min(n - 1, self.d + n_components)
        if n <= self.DENSE_LIMIT:
            eigvals, eigvecs = np.linalg.eigh(L.toarray())
        else:
            try:
                eigvals, eigvecs = spla.eigsh(L.tocsc(), k=k, sigma=-1e-3, which="LM")
            except spla.ArpackNoConvergence as exc:
                raise ConvergenceFailure(str(exc)) from None
            order = np.argsort(eigvals)
            eigvals, eigvecs = eigvals[order], eigvecs[:, order]
        nontrivial = eigvals > TRIVIAL_EIGENVALUE_TOL
        idx = np.nonzero(nontrivial)[0][: self.d]
        if idx.size < self.d:
            raise ConvergenceFailure(
                f"only {idx.size} nontrivial eigenvectors available, need {self.d}"
            )
        vecs = _canonical_signs(eigvecs[:, idx])
        self.eigenvalues_ = eigvals[idx]
        n_u = len(g.users)
        self.embedding_ = Embedding(
            event_type=g.event_type,
            dimension=self.d,
            users=g.users,
            repos=g.repos,
            user_vectors=vecs[:n_u],
            repo_vectors=vecs[n_u:],
        )
        return self


def train_le(g: BipartiteGraph, d: int = 64) -> Embedding:
    return LaplacianEigenmaps(d=d).fit(g).embedding_


def katz_user_repo_similarity(g: BipartiteGraph, beta: float) -> np.ndarray:
    """User-to-repo block of the Katz matrix (I - beta*A)^-1 * beta*A.

    Block algebra reduces it to S = beta * (I - beta^2 B B^T)^-1 B with
    B the |U| x |R| weight matrix.
    """
    B = g.weights.toarray()
    n_u = B.shape[0]
    M = np.eye(n_u) - beta * beta * (B @ B.T)
    return beta * np.linalg.solve(M, B)


class HopeEmbedding:
    """Truncated SVD of the Katz user-repo similarity."""

    def __init__(self, d: int = 64, beta: Optional[float] = None):
        self.d = d
        self.beta = beta

    def fit(self, g: BipartiteGraph):
        check_positive(self.d, "d")
        B = g.weights
        k = min(B.shape) - 1
        if k >= 1:
            rho = float(spla.svds(B.astype(float), k=1, return_singular_vectors=False)[0])
        else:
            rho = float(np.linalg.norm(B.toarray(), 2))
        beta = self.beta if self.beta is not None else 0.5 / rho
        if beta >= 1.0 / rho:
            raise BetaTooLarge(f"beta {beta} >= 1/spectral radius {1.0 / rho}")
        S = katz_user_repo_similarity(g, beta)
        d = min(self.d, min(S.shape))
        U, s, Vt = np.linalg.svd(S, full_matrices=False)
        scale = np.sqrt(s[:d])
        self.beta_ = beta
        self.singular_values_ = s[:d]
        self.embedding_ = Embedding(
            event_type=g.event_type,
            dimension=d,
            users=g.users,
            repos=g.repos,
            user_vectors=U[:, :d] * scale,
            repo_vectors=Vt[:d].T * scale,
        )
        return self


def train_hope(g: BipartiteGraph, d: int = 64, beta: Optional[float] = None) -> Embedding:
    return HopeEmbedding(d=d, beta=beta).fit(g).embedding_


def _ranked_candidates(scores: np.ndarray, exclude: np.ndarray) -> np.ndarray:
    """Candidate indices by score descending, ties by index, mask applied."""
    masked = np.where(exclude, -np.inf, scores)
    order = np.lexsort((np.arange(scores.size), -masked))
    keep = ~exclude[order]
    return order[keep]


def average_precision(ranked: np.ndarray, observed: set, k_max: int) -> float:
    """Average precision over the node's observed candidate edges.

    The precision sum is truncated at k_max but normalises by every
    observed edge in the candidate list, so hits buried beyond k_max
    count against the score.
    """
    denom = sum(1 for cand in ranked if cand in observed)
    if denom == 0:
        return 0.0
    hits = 0
    num = 0.0
    for k, cand in enumerate(ranked[:k_max], start=1):
        if cand in observed:
            hits += 1
            num += hits / k
    return num / denom


def map_score(
    emb: Embedding,
    held_out: BipartiteGraph,
    k_max: int = 100,
    training: Optional[BipartiteGraph] = None,
    sample_above: int = 10_000,
    sample_size: int = 1000,
    sample_seed: int = 0,
) -> float:
    """Mean average precision over every user and repo node.

    Candidates for each node are all counterpart nodes, minus the ones
    linked to it in ``training`` when given; nodes without held-out edges
    contribute zero but stay in the denominator. When a side exceeds
    ``sample_above`` nodes, each ranking uses the node's observed edges
    plus a seeded uniform sample of ``sample_size`` candidates (logged).
    """
    uidx = {u: i for i, u in enumerate(emb.users)}
    ridx = {r: j for j, r in enumerate(emb.repos)}
    n_u, n_r = len(emb.users), len(emb.repos)

    obs_user: dict[int, set] = {}
    obs_repo: dict[int, set] = {}
    ho = held_out.weights.tocoo()
    for i, j in zip(ho.row, ho.col):
        u, r = held_out.users[i], held_out.repos[j]
        if u in uidx and r in ridx:
            obs_user.setdefault(uidx[u], set()).add(ridx[r])
            obs_repo.setdefault(ridx[r], set()).add(uidx[u])

    train_user: dict[int, set] = {}
    train_repo: dict[int, set] = {}
    if training is not None:
        tr = training.weights.tocoo()
        for i, j in zip(tr.row, tr.col):
            u, r = training.users[i], training.repos[j]
            if u in uidx and r in ridx:
                train_user.setdefault(uidx[u], set()).add(ridx[r])
                train_repo.setdefault(ridx[r], set()).add(uidx[u])

    sampled = max(n_u, n_r) > sample_above
    total = 0.0
    if not sampled:
        scores = emb.score_matrix()
        for i in range(n_u):
            observed = obs_user.get(i)
            if observed:
                mask = np.zeros(n_r, dtype=bool)
                if i in train_user:
                    mask[list(train_user[i])] = True
                ranked = _ranked_candidates(scores[i], mask)
                total += average_precision(ranked, observed, k_max)
        for j in range(n_r):
            observed = obs_repo.get(j)
            if observed:
                mask = np.zeros(n_u, dtype=bool)
                if j in train_repo:
                    mask[list(train_repo[j])] = True
                ranked = _ranked_candidates(scores[:, j], mask)
                total += average_precision(ranked, observed, k_max)
        return total / (n_u + n_r)

    logger.warning(
        "map_score: %d users x %d repos exceeds %d nodes; ranking sampled "
        "candidate sets of %d per node", n_u, n_r, sample_above, sample_size,
    )
    rng = np.random.default_rng(sample_seed)

    def node_ap(vectors, n_counterpart, node_vec, observed, excluded) -> float:
        pool = rng.choice(n_counterpart, size=min(sample_size, n_counterpart), replace=False)
        if excluded:
            pool = np.setdiff1d(pool, np.fromiter(excluded, dtype=int, count=len(excluded)))
        cand = np.union1d(pool, np.fromiter(observed, dtype=int, count=len(observed)))
        cand_scores = vectors[cand] @ node_vec
        ranked = cand[np.lexsort((cand, -cand_scores))]
        return average_precision(ranked, observed, k_max)

    for i in range(n_u):
        observed = obs_user.get(i)
        if observed:
            total += node_ap(
                emb.repo_vectors, n_r, emb.user_vectors[i], observed, train_user.get(i, set())
            )
    for j in range(n_r):
        observed = obs_repo.get(j)
        if observed:
            total += node_ap(
                emb.user_vectors, n_u, emb.repo_vectors[j], observed, train_repo.get(j, set())
            )
    return total / (n_u + n_r)


def random_baseline_map(
    g_train: BipartiteGraph, held_out: BipartiteGraph, d: int, seed: int, k_max: int = 100
) -> float:
    """MAP of a random embedding with the same shape (the random baseline)."""
    rng = np.random.default_rng(seed)
    emb = Embedding(
        event_type=g_train.event_type,
        dimension=d,
        users=g_train.users,
        repos=g_train.repos,
        user_vectors=rng.normal(size=(len(g_train.users), d)),
        repo_vectors=rng.normal(size=(len(g_train.repos), d)),
    )
    return map_score(emb, held_out, k_max=k_max, training=g_train)


# --------------------------------------------------------------------------
# embedding file format: flat little-endian float32 + JSON sidecar
# --------------------------------------------------------------------------


def save_embedding(emb: Embedding, path) -> None:
    path = str(path)
    data = np.concatenate(
        [emb.user_vectors.ravel(), emb.repo_vectors.ravel()]
    ).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(data.tobytes())
    sidecar = {
        "event_type": emb.event_type.value,
        "dimension": emb.dimension,
        "users": list(emb.users),
        "repos": list(emb.repos),
    }
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True)


def load_embedding(path) -> Embedding:
    path = str(path)
    with open(path + ".json", "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    raw = np.fromfile(path, dtype="<f4").astype(float)
    n_u, n_r, d = len(sidecar["users"]), len(sidecar["repos"]), sidecar["dimension"]
    user_vecs = raw[: n_u * d].reshape(n_u, d)
    repo_vecs = raw[n_u * d :].reshape(n_r, d)
    return Embedding(
        event_type=EventType(sidecar["event_type"]),
        dimension=d,
        users=tuple(sidecar["users"]),
        repos=tuple(sidecar["repos"]),
        user_vectors=user_vecs,
        repo_vectors=repo_vecs,
    )


# --------------------------------------------------------------------------
# the LPE agent
# --------------------------------------------------------------------------


class LpePolicy:
    """Per-user repo selection driven by reconstructed edge scores.

    ``lists`` maps an event type to the user's top-K (repo, score) pairs,
    score-descending. Sampling weights are max(score, 0); when a type has
    no positive-score candidates the training repo distribution applies.
    """

    __slots__ = ("action_dist", "repo_dist", "lists")

    def __init__(self, action_dist: DiscreteDist, repo_dist: DiscreteDist, lists: dict):
        self.action_dist = action_dist
        self.repo_dist = repo_dist
        self.lists = lists

    def step(self, rng: np.random.Generator, hub_view=None, now: float = 0.0):
        etype = self.action_dist.sample(rng)
        pairs = self.lists.get(etype)
        if pairs:
            weights = np.array([max(s, 0.0) for _, s in pairs])
            total = weights.sum()
            if total > 0:
                cum = np.cumsum(weights)
                idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
                return etype, pairs[min(idx, len(pairs) - 1)][0]
        return etype, self.repo_dist.sample(rng)


@register_model
class LpeModel(AgentModel):
    """Link-prediction-via-embedding agent backed by graph factorization."""

    kind: ClassVar[str] = "lpe"

    def __init__(
        self,
        d: int = 64,
        k_top: int = LPE_TOP_K,
        reg: float = 1e-3,
        lr: float = 0.01,
        epochs: int = 50,
        seed: int = 0,
    ):
        self.d = d
        self.k_top = k_top
        self.reg = reg
        self.lr = lr
        self.epochs = epochs
        self.seed = seed

    def fit(self, slice_: TrainingSlice, embeddings: Optional[dict] = None):
        """Train one embedding per eligible event type (unless supplied),
        then freeze per-user top-K score lists."""
        if embeddings is None:
            embeddings = {}
            for etype in EventType:
                if etype in (EventType.Create, EventType.Delete):
                    continue
                g = build_bipartite(slice_, etype)
                if g.n_edges == 0:
                    continue
                embeddings[etype] = train_gf(
                    g, d=min(self.d, max(1, min(g.weights.shape))),
                    reg=self.reg, epochs=self.epochs, lr=self.lr, seed=self.seed,
                )
        self.embeddings_ = embeddings

        top_lists: dict[str, dict] = {}
        for etype, emb in sorted(embeddings.items(), key=lambda kv: kv[0].value):
            scores = emb.score_matrix()
            k = min(self.k_top, len(emb.repos))
            for i, u in enumerate(emb.users):
                row = scores[i]
                order = np.lexsort((np.arange(row.size), -row))[:k]
                top_lists.setdefault(u, {})[etype] = [
                    (emb.repos[j], float(row[j])) for j in order
                ]

        self.window_ = slice_.window
        self.users_ = sorted(slice_.histories)
        self.rates_ = {u: h.rate for u, h in slice_.histories.items()}
        self.policies_ = {}
        for u in self.users_:
            base = fit_baseline(slice_, u)
            self.policies_[u] = LpePolicy(
                base.action_dist, base.repo_dist, top_lists.get(u, {})
            )
        return self


def fit_lpe(slice_: TrainingSlice, embeddings: Optional[dict] = None, **hyper) -> LpeModel:
    return LpeModel(**hyper).fit(slice_, embeddings)
