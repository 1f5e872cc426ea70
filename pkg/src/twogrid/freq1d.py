"""One-dimensional frequency-principle experiment.

A ReLU network is fitted to ``f(x) = sin(2 pi x) + 0.5 sin(20 pi x)`` on a
uniform grid over [0, 1) with full-batch Adam and squared error. After every
epoch the residual ``f - model`` is projected onto the frequency-1 and
frequency-10 sinusoids (sine and cosine), giving the amplitude left to learn
in each band.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ArgumentError, DivergenceError

LOW_FREQ, HIGH_FREQ = 1, 10
DEFAULT_SNAPSHOTS = (0, 100, 500, 1000, 3000, 10000)


def target(x):
    return np.sin(2 * np.pi * x) + 0.5 * np.sin(20 * np.pi * x)


@dataclass(frozen=True)
class FreqExperimentConfig:
    layers: int = 6
    width: int = 200
    lr: float = 1e-3
    epochs: int = 10001
    sample_count: int = 512
    snapshot_epochs: tuple | None = None   # None: the default epochs that fit the run
    seed: int = 0

    def __post_init__(self):
        if self.snapshot_epochs is None:
            object.__setattr__(self, "snapshot_epochs",
                               tuple(e for e in DEFAULT_SNAPSHOTS if e < self.epochs))
        if self.layers < 2 or self.width < 1 or self.epochs < 1 or self.lr <= 0:
            raise ArgumentError("need layers >= 2, width >= 1, epochs >= 1 and lr > 0")
        if self.sample_count <= 2 * HIGH_FREQ:
            raise ArgumentError(f"sample_count must exceed {2 * HIGH_FREQ} to resolve frequency {HIGH_FREQ}")
        bad = [e for e in self.snapshot_epochs if not 0 <= e <= self.epochs]
        if bad:
            raise ArgumentError(f"snapshot epochs {bad} outside [0, {self.epochs}]")


@dataclass
class FreqResult:
    epochs: np.ndarray
    loss: np.ndarray
    low_band: np.ndarray
    high_band: np.ndarray
    spectra: dict = field(default_factory=dict)   # epoch -> amplitude per DFT frequency
    outputs: dict = field(default_factory=dict)   # epoch -> model output on the grid
    x: np.ndarray = None


def sample_grid(n: int) -> np.ndarray:
    return np.arange(n) / n


def band_amplitude(residual: np.ndarray, x: np.ndarray, freq: int) -> float:
    """Amplitude of the ``freq`` component of ``residual`` sampled on ``x``."""
    n = len(x)
    s = 2.0 / n * np.dot(residual, np.sin(2 * np.pi * freq * x))
    c = 2.0 / n * np.dot(residual, np.cos(2 * np.pi * freq * x))
    return float(math.hypot(s, c))


def amplitude_spectrum(y: np.ndarray) -> np.ndarray:
    """One-sided amplitude per integer frequency 0..n/2 (sine of amplitude a -> a)."""
    amp = np.abs(np.fft.rfft(y)) * 2.0 / len(y)
    amp[0] /= 2.0
    return amp


def make_mlp(layers: int, width: int) -> nn.Sequential:
    """``layers`` linear maps with ReLU between them; default fan-in uniform init."""
    mods = [nn.Linear(1, width)]
    for _ in range(layers - 2):
        mods += [nn.ReLU(), nn.Linear(width, width)]
    mods += [nn.ReLU(), nn.Linear(width, 1)]
    return nn.Sequential(*mods)


def run_freq_experiment(config: FreqExperimentConfig, progress=None) -> FreqResult:
    x = sample_grid(config.sample_count)
    y = target(x)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        net = make_mlp(config.layers, config.width)
    opt = torch.optim.Adam(net.parameters(), lr=config.lr)
    xt = torch.tensor(x, dtype=torch.float32)[:, None]
    yt = torch.tensor(y, dtype=torch.float32)[:, None]
    snaps = set(config.snapshot_epochs)
    n = config.epochs
    loss_log, low, high = np.empty(n), np.empty(n), np.empty(n)
    result = FreqResult(np.arange(n), loss_log, low, high, x=x)
    for epoch in range(n):
        out = net(xt)
        loss = torch.mean((out - yt) ** 2)
        value = loss.item()
        if not math.isfinite(value):
            raise DivergenceError("non-finite loss in frequency experiment", epoch)
        pred = out.detach().numpy()[:, 0].astype(np.float64)
        resid = y - pred
        loss_log[epoch] = value
        low[epoch] = band_amplitude(resid, x, LOW_FREQ)
        high[epoch] = band_amplitude(resid, x, HIGH_FREQ)
        if epoch in snaps:
            result.outputs[epoch] = pred
            result.spectra[epoch] = amplitude_spectrum(pred)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        if progress is not None and epoch % 1000 == 0:
            progress(epoch, value)
    return result


def crossing_epoch(values: np.ndarray, fraction: float) -> int | None:
    """First epoch whose value is below ``fraction`` of the epoch-0 value."""
    hit = np.flatnonzero(np.asarray(values) < fraction * values[0])
    return int(hit[0]) if len(hit) else None


def write_outputs(result: FreqResult, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "bands.csv"]
    with open(paths[0], "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss", "low_band", "high_band"])
        for row in zip(result.epochs, result.loss, result.low_band, result.high_band):
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
    exact = amplitude_spectrum(target(result.x))
    for epoch, spec in sorted(result.spectra.items()):
        p = out / f"spectrum_{epoch}.csv"
        with open(p, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["frequency", "amplitude", "target_amplitude"])
            for k, (a, t) in enumerate(zip(spec, exact)):
                w.writerow([k, repr(float(a)), repr(float(t))])
        paths.append(p)
    return paths
