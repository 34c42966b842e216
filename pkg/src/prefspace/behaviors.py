"""Synthetic behavior domain with known latent structure.

Each behavior is a raw 64-d payload generated from a hidden latent vector
through a frozen random two-layer tanh map plus observation noise. The
latent factors (and the cluster each latent was drawn from) exist only so
that simulated users have a well-defined ground-truth utility; learners
see payloads only.

Latent coordinates are split into a utility-relevant block (the first
`utility_dims` coordinates, where simulated preferences live) and nuisance
coordinates with larger variance. Reconstruction-driven objectives must
spend capacity on the high-variance nuisance structure, while preference
data only depends on the utility block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

MODALITIES = ("visual", "auditory", "kinetic")

# All payloads are 64-d so one MLP encoder family serves every modality;
# the grid shape only matters for summaries and UI rendering.
PAYLOAD_GRIDS = {"visual": (8, 8), "auditory": (16, 4), "kinetic": (32, 2)}
PAYLOAD_DIM = 64

DEFAULT_SIGMA_OBS = {"visual": 0.05, "auditory": 0.1, "kinetic": 0.3}

_MODALITY_INDEX = {m: i for i, m in enumerate(MODALITIES)}


class UnknownBehaviorError(KeyError):
    def __init__(self, behavior_id: int):
        self.behavior_id = behavior_id
        super().__init__(f"unknown behavior id {behavior_id}")


@dataclass
class GeneratorConfig:
    n: int = 1000
    k: int = 6
    clusters: int = 8
    seed: int = 0
    sigma_obs: float | None = None  # None -> per-modality default
    utility_dims: int = 3
    # Cluster-mean scales; nuisance dims get more variance on purpose.
    utility_scale: float = 1.5
    nuisance_scale: float = 3.0
    within_cluster_std: float = 0.5
    mixing_hidden: int = 32


@dataclass
class Behavior:
    id: int
    modality: str
    payload: np.ndarray
    latent: np.ndarray  # simulation-only ground truth
    summary: np.ndarray
    cluster: int  # simulation-only ground truth

    def to_record(self, with_ground_truth: bool = False) -> dict:
        rec = {
            "id": self.id,
            "modality": self.modality,
            "payload": self.payload.tolist(),
            "summary": self.summary.tolist(),
        }
        if with_ground_truth:
            rec["latent"] = self.latent.tolist()
            rec["cluster"] = self.cluster
        return rec


@dataclass
class BehaviorDatabase:
    modality: str
    behaviors: list[Behavior]
    config: GeneratorConfig

    def __len__(self):
        return len(self.behaviors)

    def __getitem__(self, behavior_id: int) -> Behavior:
        if not 0 <= behavior_id < len(self.behaviors):
            raise UnknownBehaviorError(behavior_id)
        return self.behaviors[behavior_id]

    def payload_matrix(self, ids=None) -> np.ndarray:
        if ids is None:
            return np.stack([b.payload for b in self.behaviors])
        return np.stack([self[i].payload for i in np.asarray(ids, dtype=int)])

    def latent_matrix(self, ids=None) -> np.ndarray:
        """Ground-truth latents; for simulation and evaluation only."""
        if ids is None:
            return np.stack([b.latent for b in self.behaviors])
        return np.stack([self[i].latent for i in np.asarray(ids, dtype=int)])

    def payload_view(self) -> "PayloadView":
        return PayloadView(self)


class PayloadView:
    """Learner-facing interface to a database: payloads only.

    Feature training consumes a PayloadView, never a BehaviorDatabase, so
    no training path can reach the ground-truth latents.
    """

    def __init__(self, db: BehaviorDatabase):
        self._payloads = db.payload_matrix()
        self.modality = db.modality

    @property
    def dim(self) -> int:
        return self._payloads.shape[1]

    def __len__(self):
        return self._payloads.shape[0]

    def payload(self, behavior_id: int) -> np.ndarray:
        if not 0 <= behavior_id < len(self):
            raise UnknownBehaviorError(behavior_id)
        return self._payloads[behavior_id]

    def payload_matrix(self, ids=None) -> np.ndarray:
        if ids is None:
            return self._payloads
        ids = np.asarray(ids, dtype=int)
        if ids.size and (ids.min() < 0 or ids.max() >= len(self)):
            raise UnknownBehaviorError(int(ids[(ids < 0) | (ids >= len(self))][0]))
        return self._payloads[ids]


def _mixing_weights(modality: str, cfg: GeneratorConfig):
    rng = np.random.default_rng([cfg.seed, _MODALITY_INDEX[modality], 7919])
    h = cfg.mixing_hidden
    w1 = rng.normal(size=(h, cfg.k)) / np.sqrt(cfg.k)
    w2 = rng.normal(size=(PAYLOAD_DIM, h)) * 1.5 / np.sqrt(h)
    return w1, w2


def generate_database(modality: str, n: int | None = None, k: int | None = None,
                      seed: int | None = None, config: GeneratorConfig | None = None) -> BehaviorDatabase:
    """Generate a behavior database for one pseudo-modality.

    Latents come from a mixture of Gaussian clusters; payloads are a frozen
    random tanh-MLP image of the latent plus observation noise. Bit-identical
    for identical (config, seed).
    """
    if modality not in MODALITIES:
        raise ValueError(f"unknown modality {modality!r}; expected one of {MODALITIES}")
    cfg = config or GeneratorConfig()
    if n is not None:
        cfg.n = n
    if k is not None:
        cfg.k = k
    if seed is not None:
        cfg.seed = seed
    if cfg.n < 1:
        raise ValueError("n must be >= 1")
    if cfg.k < 2:
        raise ValueError("k must be >= 2")
    if not 0 < cfg.utility_dims <= cfg.k:
        raise ValueError("utility_dims must be in 1..k")

    sigma = DEFAULT_SIGMA_OBS[modality] if cfg.sigma_obs is None else cfg.sigma_obs
    rng = np.random.default_rng([cfg.seed, _MODALITY_INDEX[modality], 104729])

    scales = np.full(cfg.k, cfg.nuisance_scale)
    scales[: cfg.utility_dims] = cfg.utility_scale
    centers = rng.normal(size=(cfg.clusters, cfg.k)) * scales

    assignments = rng.integers(cfg.clusters, size=cfg.n)
    latents = centers[assignments] + rng.normal(size=(cfg.n, cfg.k)) * cfg.within_cluster_std

    w1, w2 = _mixing_weights(modality, cfg)
    clean = np.tanh(np.tanh(latents @ w1.T) @ w2.T)
    payloads = clean + sigma * rng.normal(size=clean.shape)

    behaviors = []
    for i in range(cfg.n):
        b = Behavior(
            id=i,
            modality=modality,
            payload=payloads[i],
            latent=latents[i],
            summary=np.empty(0),
            cluster=int(assignments[i]),
        )
        b.summary = render_summary(b)
        behaviors.append(b)
    return BehaviorDatabase(modality=modality, behaviors=behaviors, config=cfg)


def render_summary(behavior: Behavior) -> np.ndarray:
    """Small deterministic down-sampling of the payload for UI galleries.

    visual: 4x4 grid of means over disjoint 2x2 blocks; auditory: 4x2 grid
    of means over disjoint 4x2 blocks; kinetic: the trace subsampled to 8
    time points (both joints kept). Display-only; never used for learning.
    """
    grid = PAYLOAD_GRIDS[behavior.modality]
    img = behavior.payload.reshape(grid)
    if behavior.modality == "visual":
        return img.reshape(4, 2, 4, 2).mean(axis=(1, 3)).reshape(-1)
    if behavior.modality == "auditory":
        return img.reshape(4, 4, 2, 2).mean(axis=(1, 3)).reshape(-1)
    # kinetic: 32 time steps x 2 joints -> every 4th step
    return img[::4, :].reshape(-1)


# ---------------------------------------------------------------------------
# JSON-lines export / import


def export_jsonl(db: BehaviorDatabase, path, with_ground_truth: bool = False):
    with open(path, "w") as f:
        for b in db.behaviors:
            f.write(json.dumps(b.to_record(with_ground_truth)) + "\n")


def import_jsonl(path, config: GeneratorConfig | None = None) -> BehaviorDatabase:
    behaviors = []
    modality = None
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            modality = rec["modality"]
            behaviors.append(
                Behavior(
                    id=rec["id"],
                    modality=modality,
                    payload=np.asarray(rec["payload"], dtype=np.float64),
                    latent=np.asarray(rec.get("latent", []), dtype=np.float64),
                    summary=np.asarray(rec["summary"], dtype=np.float64),
                    cluster=int(rec.get("cluster", -1)),
                )
            )
    if not behaviors:
        raise ValueError(f"{path}: empty database file")
    ids = [b.id for b in behaviors]
    if ids != list(range(len(behaviors))):
        raise ValueError(f"{path}: ids must be dense 0..N-1")
    return BehaviorDatabase(modality=modality, behaviors=behaviors,
                            config=config or GeneratorConfig(n=len(behaviors)))


def config_to_dict(cfg: GeneratorConfig) -> dict:
    return asdict(cfg)
