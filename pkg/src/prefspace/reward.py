"""Ranking-based reward learning.

Rankings decompose into all pairwise comparisons; a Bradley-Terry model
turns reward differences into choice probabilities. Two reward families
are supported: a small neural network trained on the ranking
cross-entropy (optionally "direct" from raw payloads with the encoder
trained jointly), and a Bayesian linear reward with a uniform-unit-ball
prior whose posterior is refreshed by Metropolis-Hastings after every
observed comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


@dataclass
class RankingRecord:
    query: list[int]  # behavior ids
    sigma: list[int]  # permutation of 0..|Q|-1, worst-to-best
    is_super: bool = False

    def __post_init__(self):
        if sorted(self.sigma) != list(range(len(self.query))):
            raise ValueError(f"sigma {self.sigma} is not a permutation of 0..{len(self.query) - 1}")

    @property
    def top_id(self) -> int:
        return self.query[self.sigma[-1]]


@dataclass(frozen=True)
class PairwiseComparison:
    loser_id: int
    winner_id: int

    def __post_init__(self):
        if self.loser_id == self.winner_id:
            raise ValueError("loser and winner must differ")


def decompose_ranking(r: RankingRecord) -> list[PairwiseComparison]:
    """All |Q|(|Q|-1)/2 pairs: sigma(i) loses to sigma(k) for i < k."""
    q, s = r.query, r.sigma
    return [
        PairwiseComparison(loser_id=q[s[i]], winner_id=q[s[k]])
        for i in range(len(s))
        for k in range(i + 1, len(s))
    ]


def bt_probability(r_i: float, r_j: float) -> float:
    """P(item j chosen over item i), numerically stable for large rewards."""
    return float(np.exp(r_j - np.logaddexp(r_i, r_j)))


def bt_choice_probabilities(rewards: np.ndarray) -> np.ndarray:
    """Multi-choice Bradley-Terry: softmax over the query's rewards."""
    r = np.asarray(rewards, dtype=np.float64)
    z = r - r.max()
    e = np.exp(z)
    return e / e.sum()


# ---------------------------------------------------------------------------
# Neural reward


@dataclass
class RewardNetConfig:
    hidden_dims: list[int] = field(default_factory=lambda: [64, 64])
    l2_output: float = 0.01
    l2_weights: float = 0.01
    epochs: int = 60
    batch: int = 16
    lr: float = 1e-3
    seed: int = 0


@dataclass
class RewardNet:
    params: dict[str, ad.Tensor]
    widths: list[int]
    loss_history: list[float] = field(default_factory=list)

    def predict(self, x: np.ndarray) -> np.ndarray:
        h = ad.Tensor(np.atleast_2d(np.asarray(x, dtype=np.float64)))
        n_layers = len(self.widths) - 1
        for i in range(n_layers):
            h = ad.add(h @ self.params[f"net.w{i}"], self.params[f"net.b{i}"])
            if i < n_layers - 1:
                h = ad.relu(h)
        return h.value.reshape(-1)


def _net_forward(params: dict, widths: list[int], x: ad.Tensor) -> ad.Tensor:
    h = x
    n_layers = len(widths) - 1
    for i in range(n_layers):
        h = ad.add(h @ params[f"net.w{i}"], params[f"net.b{i}"])
        if i < n_layers - 1:
            h = ad.relu(h)
    return h


def pair_loss_graph(r_loser: ad.Tensor, r_winner: ad.Tensor, l2_output: float) -> ad.Tensor:
    """Mean -log P(winner) over a batch of pairs plus output regularization.

    Computed through a two-way softmax, which is the stable form of the
    Bradley-Terry cross entropy.
    """
    logits = ad.concat([r_loser, r_winner], axis=1)
    probs = ad.softmax(logits)
    p_win = ad.narrow(probs, 1, 2, axis=1)
    nll = ad.mul(ad.Tensor(-1.0), ad.tmean(ad.log(p_win)))
    reg = ad.mul(ad.Tensor(l2_output),
                 ad.tmean(ad.add(ad.square(r_loser), ad.square(r_winner))))
    return ad.add(nll, reg)


def train_reward_net(features: np.ndarray, comparisons: list[PairwiseComparison],
                     cfg: RewardNetConfig) -> RewardNet:
    """Fit a reward network on pairwise comparisons.

    `features` is the full per-behavior feature matrix indexed by behavior
    id (raw payloads in direct mode). Deterministic per cfg.seed.
    """
    if not comparisons:
        raise ValueError("need at least one comparison to train a reward net")
    features = np.asarray(features, dtype=np.float64)
    widths = [features.shape[1], *cfg.hidden_dims, 1]
    rng = np.random.default_rng([cfg.seed, 67867967])
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        params[f"net.w{i}"] = ad.parameter(rng.normal(size=(fan_in, fan_out)) * np.sqrt(2.0 / fan_in), f"net.w{i}")
        params[f"net.b{i}"] = ad.parameter(np.zeros(fan_out), f"net.b{i}")

    losers = np.asarray([c.loser_id for c in comparisons])
    winners = np.asarray([c.winner_id for c in comparisons])
    n = len(comparisons)
    state = ad.AdamState(lr=cfg.lr)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, cfg.batch):
            idx = order[start:start + cfg.batch]
            xl = ad.Tensor(features[losers[idx]])
            xw = ad.Tensor(features[winners[idx]])
            loss = pair_loss_graph(_net_forward(params, widths, xl),
                                   _net_forward(params, widths, xw), cfg.l2_output)
            if cfg.l2_weights > 0:
                # weight decay over weight matrices only; generalization from
                # a handful of rankings depends on it
                for i in range(len(widths) - 1):
                    w = params[f"net.w{i}"]
                    loss = ad.add(loss, ad.mul(ad.Tensor(cfg.l2_weights),
                                               ad.tmean(ad.square(w))))
            if not np.isfinite(loss.item()):
                raise ad.NonFiniteError(f"reward-net loss at epoch {epoch}")
            ad.zero_grads(params)
            loss.backward()
            ad.adam_step(params, state)
            epoch_loss += loss.item()
            batches += 1
        history.append(epoch_loss / batches)
    return RewardNet(params=params, widths=widths, loss_history=history)


def reward_net_dataset_loss(net: RewardNet, features: np.ndarray,
                            comparisons: list[PairwiseComparison]) -> float:
    """Plain BT cross entropy (no regularizer) of a net on a comparison set."""
    r = net.predict(features)
    total = 0.0
    for c in comparisons:
        total += -np.log(max(bt_probability(r[c.loser_id], r[c.winner_id]), 1e-300))
    return total / len(comparisons)


# ---------------------------------------------------------------------------
# Bayesian linear reward


@dataclass
class SamplerConfig:
    proposal_scale: float | None = None  # None -> 0.1 * sqrt(d)
    burn_in: int = 200
    thinning: int = 5
    n_samples: int = 100
    n_chains: int = 25
    seed: int = 0
    # Random-walk step adaptation during burn-in only (kept samples are drawn
    # with a frozen scale, so the chain stays a valid MH chain). Without it a
    # fixed step overshoots once many comparisons shrink the posterior and
    # acceptance collapses.
    adapt_target: float = 0.3
    adapt_interval: int = 20


def sample_unit_ball(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Exact uniform draws from the d-dimensional unit ball."""
    x = rng.normal(size=(n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    radii = rng.random(n) ** (1.0 / d)
    return x * radii[:, None]


def _log_likelihood(omegas: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Sum over comparisons of log sigmoid(omega . delta), vectorized over rows."""
    if deltas.size == 0:
        return np.zeros(omegas.shape[0])
    x = omegas @ deltas.T  # (chains, pairs)
    return (-np.logaddexp(0.0, -x)).sum(axis=1)  # sum of log sigmoid(x)


@dataclass
class LinearRewardPosterior:
    feature_dim: int
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    comparisons: list[PairwiseComparison] = field(default_factory=list)
    deltas: np.ndarray | None = None  # (pairs, d) feature differences winner - loser
    samples: np.ndarray | None = None  # (M, d)
    zero_sample_warnings: int = 0
    _refreshes: int = 0

    def __post_init__(self):
        if self.deltas is None:
            self.deltas = np.empty((0, self.feature_dim))
        if self.samples is None:
            self.refresh()

    @property
    def proposal_scale(self) -> float:
        if self.sampler.proposal_scale is not None:
            return self.sampler.proposal_scale
        return 0.1 * np.sqrt(self.feature_dim)

    def refresh(self):
        """Re-draw posterior samples from scratch over the current comparisons.

        Prior-only (no comparisons, or all-zero deltas) falls back to exact
        uniform-ball sampling; otherwise a Metropolis-Hastings random walk
        inside the ball, run as parallel chains.
        """
        cfg = self.sampler
        rng = np.random.default_rng([cfg.seed, 49979693, self._refreshes])
        self._refreshes += 1
        d = self.feature_dim
        degenerate = self.deltas.shape[0] == 0 or not np.any(self.deltas)
        if degenerate:
            self.samples = sample_unit_ball(rng, cfg.n_samples, d)
            return

        chains = sample_unit_ball(rng, cfg.n_chains, d)
        loglik = _log_likelihood(chains, self.deltas)
        kept: list[np.ndarray] = []
        total_needed = cfg.n_samples
        step = 0
        scale = self.proposal_scale
        accepted_in_window = 0
        proposals_in_window = 0
        while sum(len(k) for k in kept) < total_needed:
            step += 1
            prop = chains + scale * rng.normal(size=chains.shape)
            inside = np.linalg.norm(prop, axis=1) <= 1.0
            prop_ll = np.full(chains.shape[0], -np.inf)
            if inside.any():
                prop_ll[inside] = _log_likelihood(prop[inside], self.deltas)
            accept = np.log(rng.random(chains.shape[0])) < (prop_ll - loglik)
            chains[accept] = prop[accept]
            loglik[accept] = prop_ll[accept]
            if step <= cfg.burn_in:
                accepted_in_window += int(accept.sum())
                proposals_in_window += chains.shape[0]
                if step % cfg.adapt_interval == 0 and proposals_in_window:
                    rate = accepted_in_window / proposals_in_window
                    scale *= float(np.exp(rate - cfg.adapt_target))
                    scale = float(np.clip(scale, 1e-4, 2.0))
                    accepted_in_window = 0
                    proposals_in_window = 0
            if step > cfg.burn_in and (step - cfg.burn_in) % cfg.thinning == 0:
                kept.append(chains.copy())
        self.samples = np.concatenate(kept, axis=0)[:total_needed]

    def update(self, comparison: PairwiseComparison, phi_loser: np.ndarray, phi_winner: np.ndarray):
        """Append one observed comparison and refresh the sample set."""
        self.comparisons.append(comparison)
        delta = np.asarray(phi_winner, dtype=np.float64) - np.asarray(phi_loser, dtype=np.float64)
        self.deltas = np.vstack([self.deltas, delta[None, :]])
        self.refresh()

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def choice_log_likelihood(self, query_features: np.ndarray, chosen: int) -> float:
        """Posterior-mean multi-choice log likelihood of picking `chosen`."""
        r = query_features @ self.mean()
        return float(np.log(bt_choice_probabilities(r)[chosen]))


def posterior_update(p: LinearRewardPosterior, c: PairwiseComparison,
                     phi: np.ndarray) -> LinearRewardPosterior:
    """Functional wrapper: phi is the full feature matrix indexed by id."""
    p.update(c, phi[c.loser_id], phi[c.winner_id])
    return p


def alignment(p: LinearRewardPosterior, omega_true: np.ndarray) -> float:
    """Mean cosine similarity between posterior samples and omega_true.

    Zero-norm samples are excluded and counted on the posterior.
    """
    omega_true = np.asarray(omega_true, dtype=np.float64)
    t_norm = np.linalg.norm(omega_true)
    if t_norm == 0:
        raise ValueError("omega_true must be nonzero")
    norms = np.linalg.norm(p.samples, axis=1)
    ok = norms > 0
    p.zero_sample_warnings += int((~ok).sum())
    if not ok.any():
        return 0.0
    cos = (p.samples[ok] @ omega_true) / (norms[ok] * t_norm)
    return float(cos.mean())
