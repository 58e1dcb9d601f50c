"""Temporal encoders: a time-series transformer block and an inception-style
temporal convolution module.

Sequences are laid out ``[S, W, F]``: S independent sequences (one per node
per sample), W time steps, F feature channels.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError
from .nn import BatchNorm, Module, kaiming_uniform, xavier_uniform, zeros


def positional_table(length: int, dim: int) -> np.ndarray:
    """Sinusoidal table: sin at even feature indices, cos at odd ones."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    i2 = np.arange(0, dim, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, i2 / dim)
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle[:, : dim // 2])
    return table


def positional_encode(x: Tensor) -> Tensor:
    x = ad.as_tensor(x)
    w, f = x.shape[-2], x.shape[-1]
    return x + positional_table(w, f)


class MultiHeadAttention(Module):
    """Scaled dot-product attention with ``num_heads`` heads of ``head_size`` each.

    Heads are concatenated to ``num_heads * head_size`` channels and projected
    back to the input width.
    """

    def __init__(self, rng: np.random.Generator, dim: int, num_heads: int = 4, head_size: int = 32):
        inner = num_heads * head_size
        self.num_heads = num_heads
        self.head_size = head_size
        self.w_query = xavier_uniform(rng, (dim, inner), dim, inner)
        self.w_key = xavier_uniform(rng, (dim, inner), dim, inner)
        self.w_value = xavier_uniform(rng, (dim, inner), dim, inner)
        self.w_out = xavier_uniform(rng, (inner, dim), inner, dim)
        self.last_attention: np.ndarray | None = None

    def _split(self, t: Tensor) -> Tensor:
        s, w, _ = t.shape
        return t.reshape(s, w, self.num_heads, self.head_size).transpose(0, 2, 1, 3)

    def __call__(self, x: Tensor) -> Tensor:
        x = ad.as_tensor(x)
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
        s, w, _ = x.shape
        if w < 1:
            raise DimensionError("attention needs at least one time step")
        q = self._split(x @ self.w_query)
        k = self._split(x @ self.w_key)
        v = self._split(x @ self.w_value)
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(self.head_size))
        weights = ad.softmax(scores, axis=-1)
        self.last_attention = weights.data
        heads = (weights @ v).transpose(0, 2, 1, 3).reshape(s, w, self.num_heads * self.head_size)
        out = heads @ self.w_out
        return out.reshape(w, -1) if squeeze else out


def multi_head_attention(mha: MultiHeadAttention, x: Tensor) -> Tensor:
    return mha(x)


class TransformerBlock(Module):
    """Two residual sub-blocks.

    ``u = x + dropout(MHA(BN(x + PE)))`` and
    ``y = u + conv2(relu(conv1(BN(u))))`` where the convolutions run along time
    and ``conv2`` restores the input channel count.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        dim: int,
        num_heads: int = 4,
        head_size: int = 32,
        ff_channels: int = 32,
        ff_kernel: int = 1,
        dropout: float = 0.1,
    ):
        self.dim = dim
        self.dropout = float(dropout)
        self.ff_kernel = ff_kernel
        self.norm_attn = BatchNorm(dim)
        self.attention = MultiHeadAttention(rng, dim, num_heads, head_size)
        self.norm_ff = BatchNorm(dim)
        self.conv1 = kaiming_uniform(rng, (ff_channels, dim, ff_kernel), dim * ff_kernel)
        self.conv1_bias = zeros((ff_channels,))
        self.conv2 = xavier_uniform(rng, (dim, ff_channels, ff_kernel), ff_channels * ff_kernel, dim * ff_kernel)
        self.conv2_bias = zeros((dim,))

    def __call__(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        x = ad.as_tensor(x)
        if x.ndim != 3 or x.shape[-1] != self.dim:
            raise DimensionError(f"transformer block expects [S, W, {self.dim}], got {x.shape}")
        h = self.norm_attn(positional_encode(x))
        h = ad.dropout(self.attention(h), self.dropout, rng, self.training)
        u = x + h
        v = self.norm_ff(u).swapaxes(-1, -2)  # [S, F, W]
        v = ad.conv1d(v, self.conv1, padding="same") + self.conv1_bias.reshape(-1, 1)
        v = ad.conv1d(ad.relu(v), self.conv2, padding="same") + self.conv2_bias.reshape(-1, 1)
        return u + v.swapaxes(-1, -2)


def transformer_block_forward(block: TransformerBlock, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
    return block(x, rng)


def temporal_embed(block: TransformerBlock, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
    """Transformer block followed by global average pooling over time: ``[S, W, F] -> [S, F]``."""
    return ad.mean_pool_time(block(x, rng), axis=-2)


class TemporalConvModule(Module):
    """1x1 projection to a latent width, then parallel convolutions of widths
    (2, 3, 6, 7) whose outputs are right-aligned to the shortest branch,
    concatenated, rectified and read at the last time step.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        dim: int,
        latent: int = 32,
        kernels: tuple[int, ...] = (2, 3, 6, 7),
        branch_channels: int = 8,
    ):
        self.kernels = tuple(kernels)
        self.latent = latent
        self.projection = xavier_uniform(rng, (latent, dim, 1), dim, latent)
        self.branches = [
            kaiming_uniform(rng, (branch_channels, latent, k), latent * k) for k in self.kernels
        ]

    def project(self, x: Tensor) -> Tensor:
        """``[S, W, F] -> [S, latent, W]``."""
        return ad.conv1d(ad.as_tensor(x).swapaxes(-1, -2), self.projection)

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Return ``(temporal feature [S, C], projected input at the last step [S, latent])``."""
        x = ad.as_tensor(x)
        w = x.shape[-2]
        if w < max(self.kernels):
            raise DimensionError(f"temporal convolution needs W >= {max(self.kernels)}, got {w}")
        z = self.project(x)
        length = w - max(self.kernels) + 1
        outs = []
        for filt in self.branches:
            y = ad.conv1d(z, filt)
            outs.append(y[..., y.shape[-1] - length :])
        h = ad.relu(ad.concat(outs, axis=-2))
        return h[..., -1], z[..., -1]


def tc_module_forward(module: TemporalConvModule, x: Tensor) -> Tensor:
    return module(x)[0]
