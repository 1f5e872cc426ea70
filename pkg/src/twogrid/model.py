"""Masked autoencoder transformer over token sequences.

The encoder sees only the kept tokens; the decoder receives the projected
encoder output scattered back to its positions, with a learned mask token
everywhere else. Positions are sequence positions after any reordering and
are encoded with a fixed sinusoidal table.

Two bands (0 = high/fine, 1 = low/coarse) share the transformer. A learned
band embedding marks which one is being processed; input projection and
prediction head are shared too unless the bands use different token lengths.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ArgumentError, FormatError, NumericError, ShapeError

HIGH, LOW = 0, 1


@dataclass(frozen=True)
class ModelConfig:
    token_dim: int
    embed_dim: int = 64
    encoder_blocks: int = 2
    decoder_blocks: int = 1
    decoder_dim: int = 32
    heads: int = 4
    decoder_heads: int = 4
    mlp_ratio: float = 4.0
    mask_ratio: float = 0.75
    max_tokens: int = 1024
    low_token_dim: int | None = None
    dropout: float = 0.0
    separate_bands: bool = False   # one parameter set per band instead of a shared one

    def __post_init__(self):
        dims = (self.token_dim, self.embed_dim, self.decoder_dim, self.heads, self.decoder_heads,
                self.max_tokens, self.encoder_blocks, self.decoder_blocks)
        if min(dims) < 1 or (self.low_token_dim is not None and self.low_token_dim < 1):
            raise ArgumentError(f"model dimensions must be >= 1: {self}")
        if self.embed_dim % self.heads:
            raise ArgumentError(f"embed_dim {self.embed_dim} is not divisible by heads {self.heads}")
        if self.decoder_dim % self.decoder_heads:
            raise ArgumentError(
                f"decoder_dim {self.decoder_dim} is not divisible by decoder_heads {self.decoder_heads}")
        if not 0.0 < self.mask_ratio < 1.0:
            raise ArgumentError(f"mask_ratio must lie in (0, 1), got {self.mask_ratio}")
        if self.mlp_ratio <= 0 or not 0.0 <= self.dropout < 1.0:
            raise ArgumentError("mlp_ratio must be positive and dropout in [0, 1)")

    def band_token_dim(self, band: int) -> int:
        if band == LOW and self.low_token_dim is not None:
            return self.low_token_dim
        return self.token_dim

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def paper_config(token_dim: int = 256, **overrides) -> ModelConfig:
    """Full-size shape: 12 blocks at 768 wide, 4 decoder blocks at 256."""
    base = dict(token_dim=token_dim, embed_dim=768, encoder_blocks=12, decoder_blocks=4,
                decoder_dim=256, heads=12, decoder_heads=16, mlp_ratio=4.0, mask_ratio=0.75,
                max_tokens=1024)
    base.update(overrides)
    return ModelConfig(**base)


def desk_config(token_dim: int, **overrides) -> ModelConfig:
    base = dict(token_dim=token_dim, embed_dim=64, encoder_blocks=2, decoder_blocks=1,
                decoder_dim=32, heads=4, decoder_heads=4, mlp_ratio=4.0, mask_ratio=0.75,
                max_tokens=1024)
    base.update(overrides)
    return ModelConfig(**base)


@dataclass(frozen=True)
class MaskPlan:
    kept_positions: np.ndarray
    masked_positions: np.ndarray
    seed: int

    @property
    def num_tokens(self) -> int:
        return len(self.kept_positions) + len(self.masked_positions)


def masked_count(num_tokens: int, mask_ratio: float) -> int:
    """``round(mask_ratio * num_tokens)`` (halves up), leaving at least one token visible."""
    return min(int(math.floor(mask_ratio * num_tokens + 0.5)), num_tokens - 1)


def sample_mask(num_tokens: int, mask_ratio: float, seed) -> MaskPlan:
    if not 0.0 < mask_ratio < 1.0:
        raise ArgumentError(f"mask_ratio must lie in (0, 1), got {mask_ratio}")
    if num_tokens < 1:
        raise ArgumentError(f"num_tokens must be >= 1, got {num_tokens}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    order = rng.permutation(num_tokens)
    n_mask = masked_count(num_tokens, mask_ratio)
    return MaskPlan(np.sort(order[n_mask:]), np.sort(order[:n_mask]),
                    seed if isinstance(seed, (int, np.integer)) else -1)


def sincos_table(length: int, dim: int) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float64)[:, None]
    half = dim // 2
    freq = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / max(half, 1))
    table = torch.zeros(length, dim, dtype=torch.float64)
    table[:, 0:2 * half:2] = torch.sin(pos * freq)
    table[:, 1:2 * half:2] = torch.cos(pos * freq)
    return table.float()


class Attention(nn.Module):
    def __init__(self, dim, heads, dropout=0.0):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)
        self.drop = nn.Dropout(dropout)

    def weights(self, x):
        b, n, c = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, c // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        return (q @ k.transpose(-2, -1) * self.scale).softmax(dim=-1), v

    def forward(self, x):
        b, n, c = x.shape
        attn, v = self.weights(x)
        out = (self.drop(attn) @ v).transpose(1, 2).reshape(b, n, c)
        return self.drop(self.proj(out))


class Block(nn.Module):
    """Pre-norm transformer block."""

    def __init__(self, dim, heads, mlp_ratio=4.0, dropout=0.0):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads, dropout)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Dropout(dropout),
                                 nn.Linear(hidden, dim), nn.Dropout(dropout))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class MaskedAutoencoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = c = config
        dims = sorted({c.token_dim, c.band_token_dim(LOW)})
        self.embed = nn.ModuleDict({str(d): nn.Linear(d, c.embed_dim) for d in dims})
        self.head = nn.ModuleDict({str(d): nn.Linear(c.decoder_dim, d) for d in dims})
        self.band_embed = nn.Parameter(torch.zeros(2, c.embed_dim))
        self.register_buffer("pos", sincos_table(c.max_tokens, c.embed_dim), persistent=False)
        self.register_buffer("dec_pos", sincos_table(c.max_tokens, c.decoder_dim), persistent=False)
        self.blocks = nn.ModuleList(Block(c.embed_dim, c.heads, c.mlp_ratio, c.dropout)
                                    for _ in range(c.encoder_blocks))
        self.norm = nn.LayerNorm(c.embed_dim)
        self.decoder_embed = nn.Linear(c.embed_dim, c.decoder_dim)
        self.mask_token = nn.Parameter(torch.zeros(c.decoder_dim))
        self.decoder_blocks = nn.ModuleList(Block(c.decoder_dim, c.decoder_heads, c.mlp_ratio, c.dropout)
                                            for _ in range(c.decoder_blocks))
        self.decoder_norm = nn.LayerNorm(c.decoder_dim)
        self._init_weights()

    def _init_weights(self):
        nn.init.normal_(self.band_embed, std=0.02)
        nn.init.normal_(self.mask_token, std=0.02)
        for m in self.modules():
            if isinstance(m, nn.Linear):
                nn.init.xavier_uniform_(m.weight)
                nn.init.zeros_(m.bias)

    def _positions(self, positions, b, n, device):
        if positions is None:
            positions = torch.arange(n, device=device)
        positions = torch.as_tensor(positions, device=device)
        if positions.ndim == 1:
            positions = positions.expand(b, n)
        if positions.max() >= self.config.max_tokens:
            raise ShapeError(f"sequence position {int(positions.max())} exceeds max_tokens {self.config.max_tokens}")
        return positions

    def embed_tokens(self, tokens, positions=None):
        """Linear patch projection plus the sinusoidal encoding of each position."""
        b, n, d = tokens.shape
        if str(d) not in self.embed:
            raise ShapeError(f"token length {d} does not match the model (expected one of {list(self.embed)})")
        positions = self._positions(positions, b, n, tokens.device)
        return self.embed[str(d)](tokens) + self.pos[positions].to(tokens.dtype)

    def forward(self, tokens, keep_idx, band: int = HIGH, positions=None):
        """Reconstruct all ``L`` tokens of ``tokens`` (B, L, D) from the kept ones.

        ``keep_idx`` is a (B, K) index tensor of visible positions.
        """
        b, n, d = tokens.shape
        keep_idx = torch.as_tensor(keep_idx, device=tokens.device, dtype=torch.long)
        if keep_idx.ndim == 1:
            keep_idx = keep_idx.expand(b, -1)
        positions = self._positions(positions, b, n, tokens.device)
        x = self.embed_tokens(tokens, positions) + self.band_embed[band]
        x = torch.gather(x, 1, keep_idx[..., None].expand(-1, -1, x.shape[-1]))
        for blk in self.blocks:
            x = blk(x)
        x = self.decoder_embed(self.norm(x))
        full = self.mask_token.to(x.dtype).expand(b, n, -1).clone()
        full = full.scatter(1, keep_idx[..., None].expand(-1, -1, x.shape[-1]), x)
        full = full + self.dec_pos[positions].to(x.dtype)
        for blk in self.decoder_blocks:
            full = blk(full)
        return self.head[str(d)](self.decoder_norm(full))


class SeparateBandAutoencoder(nn.Module):
    """Two independent autoencoders, one per band, behind the same call signature."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        inner = replace(config, separate_bands=False)
        self.bands = nn.ModuleList([MaskedAutoencoder(inner), MaskedAutoencoder(inner)])

    def forward(self, tokens, keep_idx, band: int = HIGH, positions=None):
        return self.bands[band](tokens, keep_idx, band, positions)


def build_model(config: ModelConfig, seed: int = 0) -> nn.Module:
    """Deterministic initialization from ``seed``."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        if config.separate_bands:
            return SeparateBandAutoencoder(config)
        return MaskedAutoencoder(config)


def mae_forward(model: nn.Module, tokens, plan: MaskPlan, band: int = HIGH):
    """Single-sequence convenience wrapper: ``tokens`` is (L, D), returns (L, D)."""
    t = torch.as_tensor(np.asarray(tokens), dtype=next(model.parameters()).dtype)
    if t.ndim != 2 or plan.num_tokens != t.shape[0]:
        raise ShapeError(f"mask plan covers {plan.num_tokens} tokens, sequence has shape {tuple(t.shape)}")
    for p in model.parameters():
        if not torch.isfinite(p).all():
            raise NumericError("model parameters contain non-finite values")
    keep = torch.as_tensor(plan.kept_positions, dtype=torch.long)[None]
    return model(t[None], keep, band)[0]


# checkpoint layout (little-endian):
#   b"TGCK", uint16 version, uint16 reserved, uint32 n, n bytes of UTF-8 JSON metadata,
#   uint32 tensor count, then per tensor: uint16 name length, name, uint8 ndim,
#   ndim x uint32 shape, float32 data row-major.
CKPT_MAGIC = b"TGCK"
CKPT_VERSION = 1


def save_checkpoint(path, state: dict, meta: dict) -> None:
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<4sHHI", CKPT_MAGIC, CKPT_VERSION, 0, len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(state)))
        for name, tensor in state.items():
            arr = np.ascontiguousarray(tensor.detach().cpu().numpy() if torch.is_tensor(tensor) else tensor,
                                       dtype="<f4")
            key = name.encode("utf-8")
            f.write(struct.pack("<H", len(key)) + key)
            f.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path) -> tuple[dict, dict]:
    """Return ``(meta, state)``; tensors come back as float32 torch tensors."""
    raw = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise FormatError(f"{path}: checkpoint truncated", offset=len(raw))
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    magic, version, _, n = struct.unpack("<4sHHI", take(12))
    if magic != CKPT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic {magic!r}", offset=0)
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}", offset=4)
    meta = json.loads(take(n).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    state = {}
    for _ in range(count):
        (klen,) = struct.unpack("<H", take(2))
        name = take(klen).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape)
        state[name] = torch.from_numpy(arr.astype(np.float32))
    if pos != len(raw):
        raise FormatError(f"{path}: trailing bytes after tensors", offset=pos)
    return meta, state


def model_meta(config: ModelConfig) -> dict:
    return {"model": asdict(config)}
