"""Band losses, loss-weight schedules, the training loop and evaluation.

The weight returned by a schedule is always the weight on the high-band
loss; the low band receives one minus it::

    combined = w * loss_high + (1 - w) * loss_low

``ada_low_high`` ramps ``w`` from 0 to ``alpha`` over the run and
``ada_high_low`` ramps it from 1 down to ``1 - alpha``. Step ``t`` counts
optimizer steps, with ``T = epochs * ceil(len(dataset) / batch_size)``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import torch

from . import metrics as qm
from .data import write_image
from .errors import ArgumentError, BoundsError, DivergenceError
from .grid import as_image, same_shape
from .model import HIGH, LOW, ModelConfig, build_model, desk_config, masked_count, model_meta, save_checkpoint
from .spectral import max_frequency, split_batch
from .tokenizer import (TokenLayout, central_cells, hilbert_layout, raster_layout, sample_refine_mask,
                        tg_layout, twogrid_layouts)

log = logging.getLogger(__name__)

SCHEDULE_KINDS = ("fixed", "ada_low_high", "ada_high_low")


@dataclass(frozen=True)
class Schedule:
    kind: str
    alpha: float
    total_steps: int

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ArgumentError(f"unknown schedule kind {self.kind!r}; expected one of {SCHEDULE_KINDS}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ArgumentError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.total_steps < 1:
            raise ArgumentError(f"total_steps must be positive, got {self.total_steps}")


def weight_at(schedule: Schedule, t: int) -> float:
    """High-band loss weight at step ``t``."""
    if not 0 <= t <= schedule.total_steps:
        raise BoundsError(f"step {t} outside [0, {schedule.total_steps}]")
    if schedule.kind == "fixed":
        return schedule.alpha
    ramp = schedule.alpha * t / schedule.total_steps
    return ramp if schedule.kind == "ada_low_high" else 1.0 - ramp


@dataclass(frozen=True)
class TrainRecord:
    step: int
    epoch: int
    loss_high: float
    loss_low: float
    loss_combined: float
    alpha_t: float


def band_loss(band_image, reconstructed) -> float:
    """l2 norm of the pixel difference between a band and its reconstruction."""
    a = as_image(band_image, "band image")
    b = as_image(reconstructed, "reconstruction")
    same_shape(a, b)
    return float(np.linalg.norm(a - b))


def batch_band_loss(target: torch.Tensor, recon: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of per-image l2 reconstruction errors."""
    return (target - recon).flatten(1).norm(dim=1).mean()


# name -> (split into bands, schedule kind, alpha, low-band ordering / single-grid ordering)
VARIANTS = {
    "base": (False, "fixed", 0.5, "raster"),
    "he_vit": (False, "fixed", 0.5, "hilbert"),
    "fixed_tg": (False, "fixed", 0.5, "fixed_tg"),
    "ran_tg": (False, "fixed", 0.5, "ran_tg"),
    "high_only": (True, "fixed", 1.0, "hilbert"),
    "low_only": (True, "fixed", 0.0, "hilbert"),
    "adatg_hh": (True, "ada_low_high", 1.0, "hilbert"),
    "adatg_nh": (True, "ada_low_high", 1.0, "raster"),
    "ada_high_low": (True, "ada_high_low", 1.0, "hilbert"),
}
VARIANT_LABELS = {
    "base": "Base", "he_vit": "HE-ViT", "fixed_tg": "Fixed-TG", "ran_tg": "Ran-TG",
    "high_only": "High-only", "low_only": "Low-only", "adatg_hh": "ADATG-HH",
    "adatg_nh": "ADATG-NH", "ada_high_low": "Ada-High-Low",
}


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "adatg_hh"
    k0: int = 16
    n1: int = 3
    n2: int = 4
    epochs: int = 50
    batch_size: int = 20
    lr: float = 1e-3
    weight_decay: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.95
    seed: int = 0
    schedule: str | None = None      # overrides the variant's schedule kind
    alpha: float | None = None       # overrides the variant's alpha
    ran_tg_p: float = 0.05
    refine_mask: tuple | None = None  # Fixed-TG cells; default is the central 2x2 block
    geometry: str = "square"
    mask_ratio: float = 0.75
    model_preset: str = "desk"
    embed_dim: int | None = None
    encoder_blocks: int | None = None
    decoder_blocks: int | None = None
    decoder_dim: int | None = None
    heads: int | None = None
    separate_bands: bool = False
    snapshot_every: int = 0
    checkpoint_every: int = 0
    eval_seed: int = 12345

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ArgumentError(f"unknown variant {self.variant!r}; expected one of {sorted(VARIANTS)}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ArgumentError("epochs and batch_size must be positive")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ArgumentError("lr must be positive and weight_decay non-negative")
        if not 1 <= self.n1 < self.n2:
            raise ArgumentError(f"need 1 <= n1 < n2, got n1={self.n1}, n2={self.n2}")

    @property
    def split(self) -> bool:
        return VARIANTS[self.variant][0]

    @property
    def ordering(self) -> str:
        return VARIANTS[self.variant][3]

    def make_schedule(self, total_steps: int) -> Schedule:
        _, kind, alpha, _ = VARIANTS[self.variant]
        return Schedule(self.schedule or kind, alpha if self.alpha is None else self.alpha, total_steps)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ArgumentError(f"unknown training option(s): {', '.join(sorted(unknown))}")
        return cls(**d)


# Hyperparameters of the full-scale run (for reference; not run at desk scale).
PAPER_HYPERPARAMETERS = dict(batch_size=336, epochs=1600, lr=1.5e-5, weight_decay=0.05, mask_ratio=0.75,
                             k0=16, n1=3, n2=4, image_side=256)


def paper_train_config(**overrides) -> TrainConfig:
    hp = dict(PAPER_HYPERPARAMETERS)
    hp.pop("image_side")
    hp.update(model_preset="paper")
    hp.update(overrides)
    return TrainConfig(**hp)


class Stream:
    """One token stream fed to the model: a band, its layout and a model band id."""

    def __init__(self, name: str, band: int, layout: TokenLayout, images: np.ndarray):
        self.name = name
        self.band = band
        self.layout = layout
        self.images = images


def ran_tg_mask(cfg: TrainConfig) -> list[int]:
    """Refined cells of a Ran-TG run: one Bernoulli draw per cell, fixed for the whole run."""
    return sample_refine_mask(cfg.n2, cfg.ran_tg_p, np.random.default_rng([cfg.seed, 7]))


def build_layouts(cfg: TrainConfig, side: int) -> dict:
    """Layouts per stream name.

    Fixed-TG and Ran-TG refine the order-``n2`` grid that HE-ViT uses.
    """
    if cfg.split:
        low, high = twogrid_layouts(side, cfg.n1, cfg.n2, low_ordering=cfg.ordering)
        return {"high": high, "low": low}
    fine_patch = side >> cfg.n2
    if cfg.ordering == "raster":
        return {"full": raster_layout(side, fine_patch)}
    if cfg.ordering == "hilbert":
        return {"full": hilbert_layout(side, fine_patch)}
    if cfg.ordering == "fixed_tg":
        mask = central_cells(cfg.n2) if cfg.refine_mask is None else cfg.refine_mask
        return {"full": tg_layout(side, cfg.n2, mask)}
    return {"full": tg_layout(side, cfg.n2, ran_tg_mask(cfg), tag="ran_tg")}


def make_streams(cfg: TrainConfig, images: np.ndarray) -> list[Stream]:
    side = images.shape[-1]
    if images.shape[-2] != side:
        raise ArgumentError(f"training images must be square, got {images.shape[-2:]}")
    layouts = build_layouts(cfg, side)
    if cfg.split:
        kmax = max_frequency(side, side)
        if not 0 <= cfg.k0 <= kmax:
            raise BoundsError(f"k0 must be an integer in [0, {kmax}] for a {side}x{side} image, got {cfg.k0}")
        low, high = split_batch(images, cfg.k0, cfg.geometry)
        return [Stream("high", HIGH, layouts["high"], high), Stream("low", LOW, layouts["low"], low)]
    return [Stream("full", HIGH, layouts["full"], images)]


def model_config_for(cfg: TrainConfig, side: int) -> ModelConfig:
    layouts = build_layouts(cfg, side)
    if cfg.split:
        high_dim, low_dim = layouts["high"].token_dim, layouts["low"].token_dim
        max_tokens = max(len(layouts["high"]), len(layouts["low"]))
    else:
        high_dim = layouts["full"].token_dim
        low_dim = None
        max_tokens = (side // int(math.sqrt(high_dim))) ** 2 * 4
    overrides = {k: getattr(cfg, k) for k in ("embed_dim", "encoder_blocks", "decoder_blocks", "decoder_dim", "heads")
                 if getattr(cfg, k) is not None}
    overrides["separate_bands"] = cfg.separate_bands
    if cfg.model_preset == "paper":
        from .model import paper_config
        return paper_config(high_dim, low_token_dim=low_dim if low_dim != high_dim else None,
                            mask_ratio=cfg.mask_ratio, max_tokens=max(max_tokens, 1024), **overrides)
    if cfg.model_preset != "desk":
        raise ArgumentError(f"unknown model preset {cfg.model_preset!r}")
    return desk_config(high_dim, low_token_dim=low_dim if low_dim != high_dim else None,
                       mask_ratio=cfg.mask_ratio, max_tokens=max(max_tokens, 64), **overrides)


def _keep_indices(rng: np.random.Generator, batch: int, num_tokens: int, ratio: float) -> torch.Tensor:
    n_keep = num_tokens - masked_count(num_tokens, ratio)
    keep = np.stack([np.sort(rng.permutation(num_tokens)[:n_keep]) for _ in range(batch)])
    return torch.from_numpy(keep)


def reconstruct_stream(model, layout: TokenLayout, images: np.ndarray, band: int, keep: torch.Tensor,
                       grad: bool = True) -> torch.Tensor:
    """Tokenize a batch of images, run the model and detokenize its predictions."""
    tokens = torch.from_numpy(layout.gather(images)).float()
    with torch.set_grad_enabled(grad):
        pred = model(tokens, keep, band)
        source = torch.from_numpy(np.array(layout.pixel_source))
        side = layout.geometry.image_side
        return pred.flatten(1)[:, source].reshape(len(images), side, side)


@dataclass
class TrainResult:
    model: torch.nn.Module
    records: list
    config: TrainConfig
    model_config: ModelConfig
    total_steps: int = 0
    snapshots: list = field(default_factory=list)


RECORD_FIELDS = ("step", "loss_high", "loss_low", "loss_combined", "alpha_t")


def write_records(path, records) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(RECORD_FIELDS + ("epoch",))
        for r in records:
            w.writerow([r.step, repr(r.loss_high), repr(r.loss_low), repr(r.loss_combined), repr(r.alpha_t), r.epoch])


def read_records(path) -> list[TrainRecord]:
    with open(path, newline="") as f:
        return [TrainRecord(int(row["step"]), int(row["epoch"]), float(row["loss_high"]), float(row["loss_low"]),
                            float(row["loss_combined"]), float(row["alpha_t"])) for row in csv.DictReader(f)]


def train(images, cfg: TrainConfig, model_config: ModelConfig | None = None, out_dir=None) -> TrainResult:
    """Train one variant on a stack of square images ``(N, S, S)``.

    Every epoch visits the whole set in shuffled minibatches. Each step
    splits the bands, encodes them on their grids, masks each band
    independently, and applies one AdamW update to the weighted band loss.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3 or len(images) == 0:
        raise ArgumentError(f"need a non-empty (N, S, S) image stack, got shape {images.shape}")
    side = images.shape[-1]
    streams = make_streams(cfg, images)
    model_config = model_config or model_config_for(cfg, side)
    torch.use_deterministic_algorithms(True)
    model = build_model(model_config, cfg.seed)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay,
                            betas=(cfg.beta1, cfg.beta2))
    steps_per_epoch = math.ceil(len(images) / cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    schedule = cfg.make_schedule(total)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "snapshots").mkdir(parents=True, exist_ok=True)
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    meta = {**model_meta(model_config), "train": _jsonable(asdict(cfg)), "image_side": side}

    records, snapshots = [], []
    step = 0
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, 1, epoch]).permutation(len(images))
        model.train()
        for b in range(steps_per_epoch):
            idx = np.sort(order[b * cfg.batch_size:(b + 1) * cfg.batch_size])
            w_high = weight_at(schedule, step)
            losses = {}
            for s in streams:
                layout = s.layout
                rng = np.random.default_rng([cfg.seed, 2, step, s.band])
                keep = _keep_indices(rng, len(idx), len(layout), model_config.mask_ratio)
                weight = w_high if s.band == HIGH else 1.0 - w_high
                needs_grad = weight != 0.0 or len(streams) == 1
                recon = reconstruct_stream(model, layout, s.images[idx], s.band, keep, grad=needs_grad)
                losses[s.name] = batch_band_loss(torch.from_numpy(s.images[idx]).float(), recon)
            if len(streams) == 1:
                loss = losses["full"]
                lh = ll = loss.item()
            else:
                loss = w_high * losses["high"] + (1.0 - w_high) * losses["low"]
                lh, ll = losses["high"].item(), losses["low"].item()
            combined = w_high * lh + (1.0 - w_high) * ll
            if not math.isfinite(combined):
                raise DivergenceError("non-finite training loss", step)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            records.append(TrainRecord(step, epoch, lh, ll, combined, w_high))
            step += 1
        log.debug("epoch %d: combined %.4f", epoch, records[-1].loss_combined)
        last = epoch == cfg.epochs - 1
        if out is not None and cfg.snapshot_every and (epoch % cfg.snapshot_every == 0 or last):
            snap = reconstruct_images(model, cfg, images[:1])[0]
            path = out / "snapshots" / f"epoch_{epoch:05d}.tgi"
            write_image(path, snap)
            snapshots.append(path)
        if out is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0 and not last:
            save_checkpoint(out / "checkpoints" / f"epoch_{epoch:05d}.ckpt", model.state_dict(), meta)
    if out is not None:
        save_checkpoint(out / "checkpoints" / "final.ckpt", model.state_dict(), meta)
        write_records(out / "records.csv", records)
    return TrainResult(model, records, cfg, model_config, total, snapshots)


def _jsonable(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def reconstruct_images(model, cfg: TrainConfig, images: np.ndarray) -> np.ndarray:
    """Masked reconstruction of whole images, merging the bands when split."""
    images = np.asarray(images, dtype=np.float64)
    streams = make_streams(cfg, images)
    model.eval()
    merged = np.zeros_like(images)
    for s in streams:
        layout = s.layout
        rng = np.random.default_rng([cfg.eval_seed, s.band])
        keep = _keep_indices(rng, len(images), len(layout), model.config.mask_ratio)
        with torch.no_grad():
            merged += reconstruct_stream(model, layout, s.images, s.band, keep, grad=False).double().numpy()
    return merged


class ModelReconstructor:
    def __init__(self, model, cfg: TrainConfig):
        self.model, self.cfg = model, cfg

    def reconstruct(self, images: np.ndarray) -> np.ndarray:
        return reconstruct_images(self.model, self.cfg, images)


METRIC_NAMES = ("mae_loss", "mse", "psnr", "ssim", "ms_ssim")


def metric_rows(originals: np.ndarray, recons: np.ndarray, peak: float | None = None) -> dict:
    """Per-image metric arrays keyed by :data:`METRIC_NAMES`."""
    rows = {k: [] for k in METRIC_NAMES}
    for a, b in zip(originals, recons):
        rep = qm.report(a, b, peak=peak)
        rows["mae_loss"].append(float(np.linalg.norm(a - b)))
        rows["mse"].append(rep.mse)
        rows["psnr"].append(rep.psnr)
        rows["ssim"].append(rep.ssim)
        rows["ms_ssim"].append(rep.ms_ssim)
    return {k: np.array(v) for k, v in rows.items()}


def aggregate(rows: dict) -> dict:
    """``metric -> (mean, std)`` using the population standard deviation."""
    return {k: (float(np.mean(v)), float(np.std(v))) for k, v in rows.items()}


def evaluate(reconstructor, test_images, batch_size: int = 50, peak: float | None = None) -> dict:
    """Mean and std of every metric over the test set.

    ``reconstructor`` needs a ``reconstruct(images) -> images`` method.
    ``mae_loss`` is the per-image l2 reconstruction error averaged over images.
    """
    test_images = np.asarray(test_images, dtype=np.float64)
    if test_images.ndim != 3 or len(test_images) == 0:
        raise ArgumentError("evaluation needs a non-empty (N, H, W) test set")
    recons = np.concatenate([reconstructor.reconstruct(test_images[i:i + batch_size])
                             for i in range(0, len(test_images), batch_size)])
    return aggregate(metric_rows(test_images, recons, peak))


def first_crossing(values, fraction: float) -> int | None:
    """First index whose value is below ``fraction * values[0]``, else ``None``."""
    values = np.asarray(values, dtype=np.float64)
    hit = np.flatnonzero(values < fraction * values[0])
    return int(hit[0]) if len(hit) else None


def epoch_means(records, attr: str) -> np.ndarray:
    by_epoch = {}
    for r in records:
        by_epoch.setdefault(r.epoch, []).append(getattr(r, attr))
    return np.array([np.mean(by_epoch[e]) for e in sorted(by_epoch)])


def with_overrides(cfg: TrainConfig, **kw) -> TrainConfig:
    return replace(cfg, **kw)
