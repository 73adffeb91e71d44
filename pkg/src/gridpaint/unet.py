"""Noise-prediction network: a multi-scale convolutional encoder-decoder.

Residual (or ConvNeXt-style) blocks with group normalization, self-attention
at the bottleneck and deepest scale, and sinusoidal timestep embeddings fed
to every block. Input and output are single-channel grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn


def sinusoidal_embed(t: float, dim: int) -> np.ndarray:
    """Interleaved sin/cos embedding of a step index at geometric frequencies."""
    if dim % 2 != 0:
        raise ValueError("embedding dim must be even")
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    out = np.empty(dim, dtype=np.float64)
    out[0::2] = np.sin(t * freqs)
    out[1::2] = np.cos(t * freqs)
    return out


class SinusoidalTimeEmbedding(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        if dim % 2 != 0:
            raise ValueError("embedding dim must be even")
        self.dim = dim
        half = dim // 2
        freqs = torch.exp(-math.log(10000.0) * torch.arange(half) / max(half - 1, 1))
        self.register_buffer("freqs", freqs)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        angles = t[:, None].to(self.freqs.dtype) * self.freqs[None, :]
        out = torch.empty(t.shape[0], self.dim, dtype=angles.dtype, device=angles.device)
        out[:, 0::2] = torch.sin(angles)
        out[:, 1::2] = torch.cos(angles)
        return out


@dataclass(frozen=True)
class UNetConfig:
    base_channels: int = 32
    channel_multipliers: tuple[int, ...] = (1, 2, 4)
    block_kind: str = "resnet"
    time_embed_dim: int = 64
    groups: int = 8
    attention_heads: int = 4

    def __post_init__(self):
        if not self.channel_multipliers:
            raise ValueError("channel_multipliers must be nonempty")
        if self.block_kind not in ("resnet", "convnext"):
            raise ValueError(f"unknown block kind {self.block_kind!r}")

    @property
    def n_scales(self) -> int:
        return len(self.channel_multipliers)

    @property
    def required_divisor(self) -> int:
        """Grid sides must be divisible by this for the down/up path to close."""
        return 2 ** (self.n_scales - 1)


# The four variants compared in the ablations: channel multipliers per scale,
# with C1224 swapping residual blocks for ConvNeXt-style ones.
VARIANTS: dict[str, UNetConfig] = {
    "U124": UNetConfig(channel_multipliers=(1, 2, 4)),
    "U1224": UNetConfig(channel_multipliers=(1, 2, 2, 4)),
    "C1224": UNetConfig(channel_multipliers=(1, 2, 2, 4), block_kind="convnext"),
    "U12448": UNetConfig(channel_multipliers=(1, 2, 4, 4, 8)),
}


def _groups_for(channels: int, groups: int) -> int:
    return math.gcd(groups, channels)


class ResnetBlock(nn.Module):
    def __init__(self, in_ch, out_ch, time_dim, groups):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups_for(in_ch, groups), in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = nn.GroupNorm(_groups_for(out_ch, groups), out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        h = h + self.time_proj(torch.nn.functional.silu(temb))[:, :, None, None]
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        return h + self.skip(x)


class ConvNeXtBlock(nn.Module):
    def __init__(self, in_ch, out_ch, time_dim, groups):
        super().__init__()
        self.ds_conv = nn.Conv2d(in_ch, in_ch, 7, padding=3, groups=in_ch)
        self.time_proj = nn.Linear(time_dim, in_ch)
        self.norm = nn.GroupNorm(1, in_ch)
        self.pw1 = nn.Conv2d(in_ch, out_ch * 2, 3, padding=1)
        self.pw2 = nn.Conv2d(out_ch * 2, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x, temb):
        h = self.ds_conv(x)
        h = h + self.time_proj(torch.nn.functional.silu(temb))[:, :, None, None]
        h = self.pw1(self.norm(h))
        h = self.pw2(torch.nn.functional.gelu(h))
        return h + self.skip(x)


class SelfAttention2d(nn.Module):
    def __init__(self, channels, heads, groups):
        super().__init__()
        self.heads = heads
        self.norm = nn.GroupNorm(_groups_for(channels, groups), channels)
        self.qkv = nn.Conv2d(channels, channels * 3, 1)
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        b, c, h, w = x.shape
        qkv = self.qkv(self.norm(x)).reshape(b, 3, self.heads, c // self.heads, h * w)
        q, k, v = qkv.unbind(dim=1)
        attn = torch.softmax(q.transpose(-1, -2) @ k / math.sqrt(c // self.heads), dim=-1)
        out = (v @ attn.transpose(-1, -2)).reshape(b, c, h, w)
        return x + self.proj(out)


class UNet(nn.Module):
    """Encoder-decoder noise predictor; preserves input shape."""

    def __init__(self, config: UNetConfig):
        super().__init__()
        self.config = config
        cfg = config
        block_cls = ResnetBlock if cfg.block_kind == "resnet" else ConvNeXtBlock
        chans = [cfg.base_channels * m for m in cfg.channel_multipliers]
        time_dim = cfg.time_embed_dim

        self.time_embed = nn.Sequential(
            SinusoidalTimeEmbedding(cfg.time_embed_dim),
            nn.Linear(cfg.time_embed_dim, time_dim),
            nn.SiLU(),
            nn.Linear(time_dim, time_dim),
        )
        self.init_conv = nn.Conv2d(1, chans[0], 3, padding=1)

        deepest = cfg.n_scales - 1
        self.down_blocks = nn.ModuleList()
        self.down_attn = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        in_ch = chans[0]
        for i, ch in enumerate(chans):
            self.down_blocks.append(
                nn.ModuleList([block_cls(in_ch, ch, time_dim, cfg.groups),
                               block_cls(ch, ch, time_dim, cfg.groups)])
            )
            self.down_attn.append(
                SelfAttention2d(ch, cfg.attention_heads, cfg.groups)
                if i == deepest else nn.Identity()
            )
            self.downsamples.append(
                nn.Conv2d(ch, ch, 3, stride=2, padding=1) if i < deepest else nn.Identity()
            )
            in_ch = ch

        mid = chans[-1]
        self.mid_block1 = block_cls(mid, mid, time_dim, cfg.groups)
        self.mid_attn = SelfAttention2d(mid, cfg.attention_heads, cfg.groups)
        self.mid_block2 = block_cls(mid, mid, time_dim, cfg.groups)

        self.up_blocks = nn.ModuleList()
        self.up_attn = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for i in reversed(range(cfg.n_scales)):
            ch = chans[i]
            self.up_blocks.append(
                nn.ModuleList([block_cls(in_ch + ch, ch, time_dim, cfg.groups),
                               block_cls(ch, ch, time_dim, cfg.groups)])
            )
            self.up_attn.append(
                SelfAttention2d(ch, cfg.attention_heads, cfg.groups)
                if i == deepest else nn.Identity()
            )
            self.upsamples.append(
                nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"),
                              nn.Conv2d(ch, ch, 3, padding=1))
                if i > 0 else nn.Identity()
            )
            in_ch = ch

        self.out_norm = nn.GroupNorm(_groups_for(chans[0], cfg.groups), chans[0])
        self.out_conv = nn.Conv2d(chans[0], 1, 3, padding=1)

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        d = self.config.required_divisor
        if x.shape[-2] % d or x.shape[-1] % d:
            raise ValueError(f"grid sides {tuple(x.shape[-2:])} not divisible by {d}")
        temb = self.time_embed(t)
        h = self.init_conv(x)
        skips = []
        for blocks, attn, down in zip(self.down_blocks, self.down_attn, self.downsamples):
            for block in blocks:
                h = block(h, temb)
            h = attn(h)
            skips.append(h)
            h = down(h)
        h = self.mid_block1(h, temb)
        h = self.mid_attn(h)
        h = self.mid_block2(h, temb)
        for blocks, attn, up in zip(self.up_blocks, self.up_attn, self.upsamples):
            h = torch.cat([h, skips.pop()], dim=1)
            for block in blocks:
                h = block(h, temb)
            h = attn(h)
            h = up(h)
        return self.out_conv(torch.nn.functional.silu(self.out_norm(h)))


class DenoiserModel:
    """A configured noise-prediction network with numpy-facing helpers."""

    def __init__(self, config: UNetConfig, net: UNet | None = None, seed: int | None = None):
        self.config = config
        if net is None:
            if seed is not None:
                torch.manual_seed(seed)
            net = UNet(config)
        self.net = net

    @property
    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.net.parameters())

    def predict(self, x: np.ndarray, t) -> np.ndarray:
        """Evaluation-mode noise prediction on (W, L) or (B, W, L) arrays."""
        arr = np.asarray(x, dtype=np.float32)
        squeeze = arr.ndim == 2
        if squeeze:
            arr = arr[None]
        ts = np.broadcast_to(np.asarray(t, dtype=np.int64), (arr.shape[0],))
        self.net.eval()
        with torch.no_grad():
            out = self.net(torch.from_numpy(arr.copy())[:, None],
                           torch.from_numpy(ts.copy()))
        res = out[:, 0].numpy().astype(np.float64)
        return res[0] if squeeze else res


def make_model(variant_or_config, base_channels: int | None = None, seed: int | None = None
               ) -> DenoiserModel:
    """Build a denoiser from a registry name or an explicit UNetConfig."""
    if isinstance(variant_or_config, UNetConfig):
        config = variant_or_config
    else:
        if variant_or_config not in VARIANTS:
            raise ValueError(f"unknown variant {variant_or_config!r}; "
                             f"known: {sorted(VARIANTS)}")
        config = VARIANTS[variant_or_config]
    if base_channels is not None:
        config = UNetConfig(
            base_channels=base_channels,
            channel_multipliers=config.channel_multipliers,
            block_kind=config.block_kind,
            time_embed_dim=config.time_embed_dim,
            groups=config.groups,
            attention_heads=config.attention_heads,
        )
    return DenoiserModel(config, seed=seed)
