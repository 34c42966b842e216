"""Encoders and the seven feature-learning objectives.

Every encoder is an MLP over the 64-d payload (one family serves all three
pseudo-modalities). The contrastive objective pulls together behaviors
from the same explored/ignored cell of a page and pushes apart behaviors
from opposite cells, via a symmetric triplet loss with squared-Euclidean
distances. It can be combined with a reconstruction term and, for the
variational variant, a KL term against a unit normal scaled by beta.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .behaviors import PayloadView
from .exploration import ExplorationPage, Triplet, sample_triplets

OBJECTIVES = ("random", "pretrained", "ae", "vae", "clea", "clea_ae", "clea_vae")

# Per-modality defaults from the margin/regularizer sweeps.
DEFAULT_ALPHA = {"visual": 0.1, "auditory": 0.1, "kinetic": 2.0}
DEFAULT_BETA = {"visual": 1.0, "auditory": 10.0, "kinetic": 10.0}


class DivergenceError(FloatingPointError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"non-finite training loss at epoch {epoch}")


@dataclass
class EncoderSpec:
    input_dim: int
    feature_dim: int
    hidden_dims: list[int] = field(default_factory=lambda: [64, 64])
    activation: str = "leaky_relu"
    is_variational: bool = False


@dataclass
class Hyper:
    alpha: float = 0.5
    beta: float = 1.0
    lr: float = 1e-3
    batch: int = 128
    epochs: int = 50
    weighting: str = "uniform"
    # loss-plateau early exit: stop when relative improvement stays below
    # plateau_tol for plateau_epochs consecutive epochs
    plateau_tol: float = 1e-4
    plateau_epochs: int = 5


@dataclass
class LossReport:
    epochs: list[dict] = field(default_factory=list)
    margin_violation_rate: float | None = None

    def record(self, total, triplet=0.0, reconstruction=0.0, kl=0.0):
        self.epochs.append({
            "total": float(total), "triplet": float(triplet),
            "reconstruction": float(reconstruction), "kl": float(kl),
        })


# ---------------------------------------------------------------------------
# MLP encoder / decoder


def init_mlp(widths: list[int], rng: np.random.Generator, prefix: str) -> dict[str, ad.Tensor]:
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        w = rng.normal(size=(fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        params[f"{prefix}.w{i}"] = ad.parameter(w, f"{prefix}.w{i}")
        params[f"{prefix}.b{i}"] = ad.parameter(np.zeros(fan_out), f"{prefix}.b{i}")
    return params


def mlp_forward(params: dict, prefix: str, x: ad.Tensor, n_layers: int) -> ad.Tensor:
    h = x
    for i in range(n_layers):
        h = ad.add(h @ params[f"{prefix}.w{i}"], params[f"{prefix}.b{i}"])
        if i < n_layers - 1:
            h = ad.leaky_relu(h)
    return h


def encoder_widths(spec: EncoderSpec) -> list[int]:
    out = spec.feature_dim * (2 if spec.is_variational else 1)
    return [spec.input_dim, *spec.hidden_dims, out]


def decoder_widths(spec: EncoderSpec) -> list[int]:
    return [spec.feature_dim, *reversed(spec.hidden_dims), spec.input_dim]


def init_encoder(spec: EncoderSpec, rng: np.random.Generator) -> dict[str, ad.Tensor]:
    return init_mlp(encoder_widths(spec), rng, "enc")


def init_decoder(spec: EncoderSpec, rng: np.random.Generator) -> dict[str, ad.Tensor]:
    return init_mlp(decoder_widths(spec), rng, "dec")


def encode_graph(params: dict, spec: EncoderSpec, x: ad.Tensor) -> tuple[ad.Tensor, ad.Tensor | None]:
    """Returns (mean, logvar); logvar is None for non-variational encoders."""
    n_layers = len(spec.hidden_dims) + 1
    out = mlp_forward(params, "enc", x, n_layers)
    if spec.is_variational:
        d = spec.feature_dim
        return ad.narrow(out, 0, d, axis=1), ad.narrow(out, d, 2 * d, axis=1)
    return out, None


def decode_graph(params: dict, spec: EncoderSpec, z: ad.Tensor) -> ad.Tensor:
    return mlp_forward(params, "dec", z, len(spec.hidden_dims) + 1)


# ---------------------------------------------------------------------------
# Losses (scalar API + graph builders)


def triplet_loss(fa, fp, fn, alpha: float) -> float:
    """max(||fa-fp||^2 - ||fa-fn||^2 + alpha, 0) with squared Euclidean d."""
    fa, fp, fn = (np.asarray(v, dtype=np.float64) for v in (fa, fp, fn))
    if not fa.shape == fp.shape == fn.shape:
        raise ad.ShapeError("triplet_loss", fa.shape, fp.shape, fn.shape)
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return float(max(np.sum((fa - fp) ** 2) - np.sum((fa - fn) ** 2) + alpha, 0.0))


def symmetric_triplet_loss(fa, fp, fn, alpha: float) -> float:
    return triplet_loss(fa, fp, fn, alpha) + triplet_loss(fp, fa, fn, alpha)


def triplet_loss_graph(fa: ad.Tensor, fp: ad.Tensor, fn: ad.Tensor, alpha: float) -> ad.Tensor:
    d_ap = ad.tsum(ad.square(ad.sub(fa, fp)))
    d_an = ad.tsum(ad.square(ad.sub(fa, fn)))
    return ad.maximum(ad.add(ad.sub(d_ap, d_an), ad.Tensor(alpha)), 0.0)


def symmetric_triplet_loss_graph(fa: ad.Tensor, fp: ad.Tensor, fn: ad.Tensor, alpha: float) -> ad.Tensor:
    return ad.add(triplet_loss_graph(fa, fp, fn, alpha), triplet_loss_graph(fp, fa, fn, alpha))


def _rowwise_sqdist(a: ad.Tensor, b: ad.Tensor) -> ad.Tensor:
    return ad.tsum(ad.square(ad.sub(a, b)), axis=1)


def clea_batch_loss(params: dict, spec: EncoderSpec, triplets: list[Triplet],
                    view: PayloadView, alpha: float) -> ad.Tensor:
    """Weighted mean symmetric triplet loss over a batch, as a graph node."""
    if not triplets:
        raise ValueError("empty triplet batch")
    xa = ad.Tensor(view.payload_matrix([t.anchor_id for t in triplets]))
    xp = ad.Tensor(view.payload_matrix([t.positive_id for t in triplets]))
    xn = ad.Tensor(view.payload_matrix([t.negative_id for t in triplets]))
    fa, _ = encode_graph(params, spec, xa)
    fp, _ = encode_graph(params, spec, xp)
    fn, _ = encode_graph(params, spec, xn)
    w = ad.Tensor(np.asarray([t.weight for t in triplets]))
    l1 = ad.maximum(ad.add(ad.sub(_rowwise_sqdist(fa, fp), _rowwise_sqdist(fa, fn)), ad.Tensor(alpha)), 0.0)
    l2 = ad.maximum(ad.add(ad.sub(_rowwise_sqdist(fp, fa), _rowwise_sqdist(fp, fn)), ad.Tensor(alpha)), 0.0)
    return ad.tmean(ad.mul(w, ad.add(l1, l2)))


def reconstruction_loss_graph(pred: ad.Tensor, target: ad.Tensor) -> ad.Tensor:
    """Mean squared error over all payload entries."""
    if pred.value.shape != target.value.shape:
        raise ad.ShapeError("reconstruction_loss", pred.value.shape, target.value.shape)
    return ad.tmean(ad.square(ad.sub(pred, target)))


def kl_loss_graph(mean: ad.Tensor, logvar: ad.Tensor) -> ad.Tensor:
    """KL(N(mean, exp(logvar)) || N(0, I)), averaged over the batch."""
    per_sample = ad.tsum(
        ad.sub(ad.add(ad.exp(logvar), ad.square(mean)), ad.add(ad.Tensor(1.0), logvar)),
        axis=1,
    )
    return ad.mul(ad.Tensor(0.5), ad.tmean(per_sample))


def kl_loss(mean: np.ndarray, logvar: np.ndarray) -> float:
    m, lv = np.atleast_2d(mean), np.atleast_2d(logvar)
    return float(0.5 * np.sum(np.exp(lv) + m**2 - 1.0 - lv, axis=1).mean())


# ---------------------------------------------------------------------------
# FeatureSpace


@dataclass
class FeatureSpace:
    spec: EncoderSpec
    params: dict[str, ad.Tensor]
    objective: str
    hyper: Hyper
    provenance: dict = field(default_factory=dict)

    def embed(self, payloads: np.ndarray) -> np.ndarray:
        """Deterministic embedding; variational spaces use the mean head."""
        x = np.atleast_2d(np.asarray(payloads, dtype=np.float64))
        mean, _ = encode_graph(self.params, self.spec, ad.Tensor(x))
        return mean.value

    def save(self, ckpt_path, meta_path):
        ad.save_params(self.params, ckpt_path)
        with open(meta_path, "w") as f:
            json.dump({
                "objective": self.objective,
                "spec": asdict(self.spec),
                "hyper": asdict(self.hyper),
                "provenance": self.provenance,
                "feature_dim": self.spec.feature_dim,
            }, f, indent=2)

    @classmethod
    def load(cls, ckpt_path, meta_path) -> "FeatureSpace":
        with open(meta_path) as f:
            meta = json.load(f)
        spec = EncoderSpec(**meta["spec"])
        return cls(spec=spec, params=ad.load_params(ckpt_path),
                   objective=meta["objective"], hyper=Hyper(**meta["hyper"]),
                   provenance=meta.get("provenance", {}))


def margin_violation_rate(space: FeatureSpace, pages: list[ExplorationPage],
                          view: PayloadView, alpha: float, n: int = 512,
                          seed: int = 0) -> float:
    """Fraction of freshly sampled triplets with a positive symmetric loss."""
    rng = np.random.default_rng([seed, 49979687])
    triplets = sample_triplets(pages, n, rng)
    emb = {tid: space.embed(view.payload(tid))[0]
           for t in triplets for tid in (t.anchor_id, t.positive_id, t.negative_id)}
    hits = sum(
        1 for t in triplets
        if symmetric_triplet_loss(emb[t.anchor_id], emb[t.positive_id], emb[t.negative_id], alpha) > 0
    )
    return hits / n


# ---------------------------------------------------------------------------
# Training


def _loss_components(objective: str, params: dict, spec: EncoderSpec,
                     view: PayloadView, pages: list[ExplorationPage] | None,
                     hyper: Hyper, rng: np.random.Generator,
                     payload_ids: np.ndarray) -> dict[str, ad.Tensor]:
    """Build the enabled loss components for one step on a shared batch.

    The total is always the plain sum triplet + reconstruction + beta*KL of
    whichever terms the objective enables (contrastive weight 1,
    reconstruction weight 1, KL weight beta).
    """
    comps: dict[str, ad.Tensor] = {}
    use_clea = objective.startswith("clea")
    use_recon = objective in ("ae", "vae", "pretrained", "clea_ae", "clea_vae")
    use_kl = objective in ("vae", "clea_vae")

    if use_clea:
        triplets = sample_triplets(pages, hyper.batch, rng, weighting=hyper.weighting)
        comps["triplet"] = clea_batch_loss(params, spec, triplets, view, hyper.alpha)

    if use_recon or use_kl:
        x = ad.Tensor(view.payload_matrix(payload_ids))
        mean, logvar = encode_graph(params, spec, x)
        if spec.is_variational:
            eps = rng.normal(size=mean.value.shape)
            z = ad.add(mean, ad.mul(ad.exp(ad.mul(ad.Tensor(0.5), logvar)), ad.Tensor(eps)))
        else:
            z = mean
        if use_recon:
            comps["reconstruction"] = reconstruction_loss_graph(decode_graph(params, spec, z), x)
        if use_kl:
            comps["kl"] = ad.mul(ad.Tensor(hyper.beta), kl_loss_graph(mean, logvar))
    return comps


def train_feature_space(objective: str, view: PayloadView,
                        pages: list[ExplorationPage] | None, hyper: Hyper,
                        feature_dim: int, seed: int,
                        hidden_dims: list[int] | None = None,
                        aux_view: PayloadView | None = None,
                        provenance: dict | None = None) -> tuple[FeatureSpace, LossReport]:
    """Train (or freeze) an encoder under one of the registered objectives.

    random: frozen random init. pretrained: trained on reconstruction of a
    different database (aux_view), then frozen. ae/vae: self-supervised on
    this database. clea*: contrastive on the pooled pages, optionally plus
    reconstruction and KL terms. Deterministic given seed.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}; expected one of {OBJECTIVES}")
    spec = EncoderSpec(
        input_dim=view.dim,
        feature_dim=feature_dim,
        hidden_dims=list(hidden_dims) if hidden_dims else [64, 64],
        is_variational=objective in ("vae", "clea_vae"),
    )
    rng = np.random.default_rng([seed, 86028121])
    params = init_encoder(spec, rng)
    report = LossReport()
    prov = dict(provenance or {}, objective=objective, seed=seed)

    if objective == "random":
        space = FeatureSpace(spec, params, objective, hyper, prov)
        if pages:
            report.margin_violation_rate = margin_violation_rate(space, pages, view, hyper.alpha, seed=seed)
        return space, report

    if objective == "pretrained":
        if aux_view is None:
            raise ValueError("objective 'pretrained' requires an auxiliary database (aux_view)")
        train_view = aux_view
    else:
        train_view = view

    if objective.startswith("clea"):
        if not pages or not any(p.contrastive for p in pages):
            raise ValueError(f"objective {objective!r} requires contrastive pages")

    needs_decoder = objective in ("ae", "vae", "pretrained", "clea_ae", "clea_vae")
    if needs_decoder:
        params.update(init_decoder(spec, rng))

    state = ad.AdamState(lr=hyper.lr)
    n = len(train_view)
    steps_per_epoch = max(1, n // hyper.batch)
    best = np.inf
    stale = 0
    for epoch in range(hyper.epochs):
        sums = {"triplet": 0.0, "reconstruction": 0.0, "kl": 0.0}
        total_sum = 0.0
        for _ in range(steps_per_epoch):
            payload_ids = rng.choice(n, size=min(hyper.batch, n), replace=False)
            comps = _loss_components(objective, params, spec, train_view, pages, hyper, rng, payload_ids)
            total = None
            for c in comps.values():
                total = c if total is None else ad.add(total, c)
            ad.zero_grads(params)
            total.backward()
            ad.adam_step(params, state)
            for k, c in comps.items():
                sums[k] += c.item()
            total_sum += total.item()
        avg = total_sum / steps_per_epoch
        if not np.isfinite(avg):
            raise DivergenceError(epoch)
        report.record(avg, *(sums[k] / steps_per_epoch for k in ("triplet", "reconstruction", "kl")))
        # plateau early exit
        if best - avg < hyper.plateau_tol * max(abs(best), 1e-12):
            stale += 1
            if stale >= hyper.plateau_epochs:
                break
        else:
            stale = 0
        best = min(best, avg)

    # pretrained and encoder-only objectives drop the decoder after training
    enc_params = {k: v for k, v in params.items() if k.startswith("enc.")}
    space = FeatureSpace(spec, enc_params, objective, hyper, prov)
    if pages and any(p.contrastive for p in pages):
        report.margin_violation_rate = margin_violation_rate(space, pages, view, hyper.alpha, seed=seed)
    return space, report
