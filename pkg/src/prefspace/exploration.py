"""Exploratory-search simulation: pages, explore/ignore partitions, triplets.

A simulated user scores each presented behavior by the dot product of
their hidden preference direction with the behavior's latent factors,
perturbed by Gumbel noise scaled by a temperature, and explores the items
above the page's (1 - explore_frac) quantile of those noisy scores. The
count of explored items per page is therefore fixed by explore_frac; the
temperature only injects inconsistency into which items make the cut. As
the temperature goes to zero the rule becomes an exact top-q selection.

Triplet sampling follows the two-branch scheme: with probability 1/2 the
anchor/positive pair comes from the explored cell and the negative from
the ignored cell, otherwise the reverse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .behaviors import BehaviorDatabase


class SessionLogError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


@dataclass
class SimUser:
    omega_star: np.ndarray  # unit preference direction over latents
    explore_temp: float = 0.3
    explore_frac: float = 0.2
    rank_temp: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.omega_star = np.asarray(self.omega_star, dtype=np.float64)
        norm = np.linalg.norm(self.omega_star)
        if norm == 0:
            raise ValueError("omega_star must be nonzero")
        self.omega_star = self.omega_star / norm

    def utility(self, latents: np.ndarray) -> np.ndarray:
        return np.asarray(latents) @ self.omega_star


def sample_user(k: int, utility_dims: int, seed: int, explore_temp: float = 0.3,
                explore_frac: float = 0.2, rank_temp: float = 0.1) -> SimUser:
    """Draw a user whose preference direction lives in the utility subspace."""
    rng = np.random.default_rng([seed, 15485863])
    w = np.zeros(k)
    w[:utility_dims] = rng.normal(size=utility_dims)
    return SimUser(omega_star=w, explore_temp=explore_temp,
                   explore_frac=explore_frac, rank_temp=rank_temp, seed=seed)


@dataclass
class ExplorationPage:
    page_id: int
    presented: list[int]
    explored: list[int]
    ignored: list[int]
    explore_order: list[int] = field(default_factory=list)

    @property
    def contrastive(self) -> bool:
        return bool(self.explored) and bool(self.ignored)

    def check_partition(self):
        ex, ig, pre = set(self.explored), set(self.ignored), set(self.presented)
        if ex | ig != pre or ex & ig:
            raise ValueError(f"page {self.page_id}: explored/ignored is not a partition of presented")


@dataclass
class Triplet:
    anchor_id: int
    positive_id: int
    negative_id: int
    page_id: int
    weight: float = 1.0


def simulate_session(user: SimUser, db: BehaviorDatabase, pages: int = 10,
                     page_size: int = 100, rng: np.random.Generator | None = None) -> list[ExplorationPage]:
    """Simulate one user's exploratory-search session over a database."""
    if page_size > len(db):
        raise ValueError(f"page_size {page_size} exceeds database size {len(db)}")
    rng = rng or np.random.default_rng([user.seed, 32452843])
    n_explore = max(1, int(round(user.explore_frac * page_size)))
    out = []
    for p in range(pages):
        presented = rng.choice(len(db), size=page_size, replace=False)
        scores = user.utility(db.latent_matrix(presented))
        gumbel = rng.gumbel(size=page_size)
        noisy = scores + user.explore_temp * gumbel
        top = np.argsort(noisy, kind="stable")[::-1][:n_explore]
        explored_mask = np.zeros(page_size, dtype=bool)
        explored_mask[top] = True
        # Chronological order of exploration: better-scoring items first.
        order = [int(presented[i]) for i in top]
        page = ExplorationPage(
            page_id=p,
            presented=[int(i) for i in presented],
            explored=sorted(int(i) for i in presented[explored_mask]),
            ignored=sorted(int(i) for i in presented[~explored_mask]),
            explore_order=order,
        )
        page.check_partition()
        out.append(page)
    return out


def triplet_weight(page_index: int, n_pages: int, weighting: str) -> float:
    """Per-page loss weight; time_linear ramps from 1/N to 1 over the session."""
    if weighting == "uniform":
        return 1.0
    if weighting == "time_linear":
        return (page_index + 1) / n_pages
    raise ValueError(f"unknown weighting {weighting!r}")


def sample_triplets(pages: list[ExplorationPage], batch: int,
                    rng: np.random.Generator, weighting: str = "uniform") -> list[Triplet]:
    """Sample a batch of contrastive triplets from pooled pages.

    Per triplet: pick a contrastive page uniformly; flip a fair coin for
    which cell supplies the anchor/positive pair (the other supplies the
    negative). If the chosen pair cell has fewer than two items the branch
    is flipped. Anchor and positive are drawn without replacement.
    """
    usable = [(i, p) for i, p in enumerate(pages) if p.contrastive
              and (len(p.explored) >= 2 or len(p.ignored) >= 2)]
    if not usable:
        raise ValueError("no contrastive pages with a samplable pair cell")
    n_pages = len(pages)
    out = []
    for _ in range(batch):
        idx, page = usable[int(rng.integers(len(usable)))]
        from_explored = rng.random() < 0.5
        if from_explored and len(page.explored) < 2:
            from_explored = False
        elif not from_explored and len(page.ignored) < 2:
            from_explored = True
        pair_cell = page.explored if from_explored else page.ignored
        neg_cell = page.ignored if from_explored else page.explored
        a, p_ = rng.choice(len(pair_cell), size=2, replace=False)
        n_ = int(rng.integers(len(neg_cell)))
        out.append(Triplet(
            anchor_id=pair_cell[int(a)],
            positive_id=pair_cell[int(p_)],
            negative_id=neg_cell[n_],
            page_id=page.page_id,
            weight=triplet_weight(idx, n_pages, weighting),
        ))
    return out


# ---------------------------------------------------------------------------
# Session log JSON-lines: {page_id, presented, explored, explore_order}


def export_session_log(pages: list[ExplorationPage], path):
    with open(path, "w") as f:
        for p in pages:
            f.write(json.dumps({
                "page_id": p.page_id,
                "presented": p.presented,
                "explored": p.explored,
                "explore_order": p.explore_order,
            }) + "\n")


def ingest_session_log(path, db: BehaviorDatabase | None = None) -> list[ExplorationPage]:
    """Read pages from a session log, validating ids and the partition."""
    pages = []
    db_size = len(db) if db is not None else None
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise SessionLogError(path, lineno, f"invalid JSON: {e}") from e
            presented = rec.get("presented", [])
            explored = rec.get("explored", [])
            if db_size is not None:
                for i in presented:
                    if not 0 <= i < db_size:
                        raise SessionLogError(path, lineno, f"behavior id {i} not in database")
            ex = set(explored)
            if not ex <= set(presented):
                raise SessionLogError(path, lineno, "explored ids not a subset of presented")
            page = ExplorationPage(
                page_id=rec.get("page_id", lineno - 1),
                presented=list(presented),
                explored=sorted(ex),
                ignored=sorted(set(presented) - ex),
                explore_order=list(rec.get("explore_order", explored)),
            )
            page.check_partition()
            pages.append(page)
    return pages


def simulate_population(db: BehaviorDatabase, n_users: int, pages_per_user: int,
                        page_size: int, base_seed: int, explore_temp: float = 0.3,
                        explore_frac: float = 0.2, rank_temp: float = 0.1) -> tuple[list[SimUser], list[ExplorationPage]]:
    """Simulate a population and pool every user's pages for training."""
    users, pooled = [], []
    cfg = db.config
    for u in range(n_users):
        user = sample_user(cfg.k, cfg.utility_dims, seed=base_seed * 100003 + u,
                           explore_temp=explore_temp, explore_frac=explore_frac,
                           rank_temp=rank_temp)
        users.append(user)
        for page in simulate_session(user, db, pages=pages_per_user, page_size=page_size):
            page.page_id = len(pooled)
            pooled.append(page)
    return users, pooled
