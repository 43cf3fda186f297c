"""Differentiable building blocks.

Single-level orthonormal Haar transform, the spatial-frequency interaction
block, pixel shuffling into local tokens, and dense-sparse local attention.
All operations are pure functions of their inputs and parameters and work on
both batched (B, C, H, W) and unbatched (C, H, W) tensors.
"""

import contextlib
import math
from typing import NamedTuple, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ArgumentError, DimensionError

# When set (see record_attention_pieces), every attention forward appends its
# screening-mask cardinality here. Finite-difference checks use it to detect
# probes that cross the piecewise-smooth boundary of the screening operation.
_piece_trace = None


@contextlib.contextmanager
def record_attention_pieces(out: list):
    global _piece_trace
    _piece_trace = out
    try:
        yield out
    finally:
        _piece_trace = None


class WaveletCoeffs(NamedTuple):
    """Four half-resolution Haar subbands, each shaped like (..., C, H/2, W/2)."""

    ll: torch.Tensor
    lh: torch.Tensor
    hl: torch.Tensor
    hh: torch.Tensor


def dwt2(x: torch.Tensor) -> WaveletCoeffs:
    """Single-level orthonormal 2-D Haar transform over the last two dims.

    Orthonormal convention: a constant input of value v gives ll = 2v and
    zero detail bands, and total energy is preserved exactly. Never pads;
    odd spatial dims are the caller's problem.
    """
    h, w = x.shape[-2], x.shape[-1]
    if h % 2 or w % 2:
        raise DimensionError(f"Haar transform needs even spatial dims, got {h}x{w}")
    x00 = x[..., 0::2, 0::2]
    x01 = x[..., 0::2, 1::2]
    x10 = x[..., 1::2, 0::2]
    x11 = x[..., 1::2, 1::2]
    ll = (x00 + x01 + x10 + x11) * 0.5
    lh = (x00 - x01 + x10 - x11) * 0.5
    hl = (x00 + x01 - x10 - x11) * 0.5
    hh = (x00 - x01 - x10 + x11) * 0.5
    return WaveletCoeffs(ll, lh, hl, hh)


def idwt2(w: WaveletCoeffs) -> torch.Tensor:
    """Exact inverse of :func:`dwt2` (perfect reconstruction)."""
    ll, lh, hl, hh = w
    if not (ll.shape == lh.shape == hl.shape == hh.shape):
        raise DimensionError(
            "subband shapes differ: "
            f"{tuple(ll.shape)}, {tuple(lh.shape)}, {tuple(hl.shape)}, {tuple(hh.shape)}"
        )
    x00 = (ll + lh + hl + hh) * 0.5
    x01 = (ll - lh + hl - hh) * 0.5
    x10 = (ll + lh - hl - hh) * 0.5
    x11 = (ll - lh - hl + hh) * 0.5
    top = torch.stack((x00, x01), dim=-1).flatten(-2)
    bottom = torch.stack((x10, x11), dim=-1).flatten(-2)
    return torch.stack((top, bottom), dim=-2).flatten(-3, -2)


class SpatialFrequencyBlock(nn.Module):
    """Exchanges information between a wavelet branch and a spatial branch.

    The frequency branch refines the four stacked Haar subbands with a 1x1
    convolution plus a residual add; the spatial branch adds a 1x1-projected
    3x3 feature back onto the block input (onto the input itself, not onto
    the 3x3 feature). The inverse-transformed frequency branch and the
    spatial branch are concatenated and fused by a 3x3 aggregation
    convolution. Output shape equals input shape.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = PointwiseConv2d(4 * channels, 4 * channels)
        self.conv3 = PointwiseConv2d(channels, channels)
        self.agg = nn.Conv2d(2 * channels, channels, 3, padding=1)

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        if f.shape[-3] != self.channels:
            raise DimensionError(
                f"expected {self.channels} channels, got {f.shape[-3]}"
            )
        e = dwt2(f)
        z = self.conv1(f)
        e_stack = torch.cat(e, dim=-3)
        g_stack = e_stack + self.conv2(e_stack)
        g = WaveletCoeffs(*torch.chunk(g_stack, 4, dim=-3))
        h = f + self.conv3(z)
        return self.agg(torch.cat((idwt2(g), h), dim=-3))


class TokenBatch(NamedTuple):
    """Local tokens produced by :func:`shuffle`.

    tokens has shape (..., N, P, C) with N * P = H * W; permutation records
    the pixel reordering so :func:`inverse_shuffle` can undo it.
    """

    tokens: torch.Tensor
    permutation: torch.Tensor
    grid_shape: Tuple[int, int]


def _check_permutation(perm: torch.Tensor, n: int) -> None:
    if perm.ndim != 1 or perm.numel() != n:
        raise ArgumentError(f"permutation must be 1-D of length {n}, got {tuple(perm.shape)}")
    counts = torch.bincount(perm, minlength=n)
    if perm.numel() and (perm.min() < 0 or perm.max() >= n or (counts != 1).any()):
        raise ArgumentError("permutation is not a bijection on pixel indices")


def shuffle(f: torch.Tensor, perm: torch.Tensor, token_len: int) -> TokenBatch:
    """Reorder row-major pixel vectors by perm and chunk them into tokens.

    Gather semantics: output position k holds pixel perm[k].
    """
    h, w = f.shape[-2], f.shape[-1]
    n = h * w
    _check_permutation(perm, n)
    if token_len <= 0 or n % token_len:
        raise ArgumentError(f"token_len {token_len} must divide {h}x{w}={n}")
    flat = f.flatten(-2).transpose(-2, -1)  # (..., H*W, C)
    shuffled = flat[..., perm, :]
    tokens = shuffled.reshape(*f.shape[:-3], n // token_len, token_len, f.shape[-3])
    return TokenBatch(tokens, perm, (h, w))


def inverse_shuffle(t: TokenBatch) -> torch.Tensor:
    """Exact inverse of :func:`shuffle`."""
    h, w = t.grid_shape
    n = h * w
    _check_permutation(t.permutation, n)
    if t.tokens.shape[-3] * t.tokens.shape[-2] != n:
        raise ArgumentError(
            f"token batch covers {t.tokens.shape[-3] * t.tokens.shape[-2]} pixels, grid has {n}"
        )
    c = t.tokens.shape[-1]
    flat = t.tokens.reshape(*t.tokens.shape[:-3], n, c)
    restored = flat[..., torch.argsort(t.permutation), :]
    return restored.transpose(-2, -1).reshape(*t.tokens.shape[:-3], c, h, w)


def dense_attention(q: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
    """Row-wise softmax(q k^T / sqrt(d)); every row sums to one."""
    d = q.shape[-1]
    if d == 0:
        raise ArgumentError("attention head dimension must be positive")
    logits = q @ k.transpose(-2, -1) / math.sqrt(d)
    return torch.softmax(logits, dim=-1)


def sparse_attention(q: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
    """Attention scores with strictly negative similarities screened out.

    Scaled similarities below zero are set to -inf before the softmax; zero
    and positive entries are retained. A row whose similarities are all
    strictly negative keeps its single maximal entry unmasked so the softmax
    stays defined.
    """
    d = q.shape[-1]
    if d == 0:
        raise ArgumentError("attention head dimension must be positive")
    logits = q @ k.transpose(-2, -1) / math.sqrt(d)
    negative = logits < 0
    all_negative = negative.all(dim=-1, keepdim=True)
    keep_max = F.one_hot(logits.argmax(dim=-1), logits.shape[-1]).bool()
    screened = logits.masked_fill(negative & ~(all_negative & keep_max), float("-inf"))
    return torch.softmax(screened, dim=-1)


class DenseSparseAttention(nn.Module):
    """Multi-head local attention mixing dense and screened score maps.

    Per head the dense and sparse score matrices are blended by a pair of
    learnable scalars (both start at 0.5) before being applied to the value
    projection; heads are concatenated and passed through an output
    projection. The token permutation rides along untouched.
    """

    def __init__(self, channels: int, num_heads: int):
        super().__init__()
        if num_heads < 1 or channels % num_heads:
            raise ArgumentError(
                f"channels {channels} must be divisible by num_heads {num_heads}"
            )
        self.channels = channels
        self.num_heads = num_heads
        self.head_dim = channels // num_heads
        self.wq = nn.Linear(channels, channels, bias=False)
        self.wk = nn.Linear(channels, channels, bias=False)
        self.wv = nn.Linear(channels, channels, bias=False)
        self.omega1 = nn.Parameter(torch.full((num_heads,), 0.5))
        self.omega2 = nn.Parameter(torch.full((num_heads,), 0.5))
        self.proj_out = nn.Linear(channels, channels)

    def forward(self, t: TokenBatch) -> TokenBatch:
        tokens = t.tokens
        if tokens.shape[-1] != self.channels:
            raise DimensionError(
                f"expected {self.channels} channels, got {tokens.shape[-1]}"
            )
        lead = tokens.shape[:-2]

        def split_heads(x):
            return x.reshape(*lead, -1, self.num_heads, self.head_dim).transpose(-3, -2)

        qh = split_heads(self.wq(tokens))  # (..., N, heads, P, d)
        kh = split_heads(self.wk(tokens))
        vh = split_heads(self.wv(tokens))
        w1 = self.omega1.view(-1, 1, 1)
        w2 = self.omega2.view(-1, 1, 1)
        logits = (qh / math.sqrt(self.head_dim)) @ kh.transpose(-2, -1)
        dense = torch.softmax(logits, dim=-1)
        if self.omega2.requires_grad or self.omega2.any():
            # The screened softmax equals the dense one restricted to the
            # kept entries and renormalized: the row maximum is never
            # screened out, so both share the same stabilizing shift. The
            # blend w1*dense + w2*sparse then factors through dense.
            p = logits.shape[-1]
            keep = (logits >= 0).view(-1, p)
            degenerate = ~keep.any(dim=-1)
            if degenerate.any():
                rows = degenerate.nonzero(as_tuple=True)[0]
                keep[rows, logits.view(-1, p)[rows].argmax(dim=-1)] = True
            keep = keep.view(logits.shape).to(dense.dtype)
            if _piece_trace is not None:
                _piece_trace.append(int(keep.sum()))
            denom = (dense * keep).sum(dim=-1, keepdim=True)
            scores = dense * (keep * (w2 / denom) + w1)
        else:
            scores = w1 * dense  # sparse branch disabled and frozen at zero
        mixed = scores @ vh
        out = mixed.transpose(-3, -2).reshape(*tokens.shape)
        return TokenBatch(self.proj_out(out), t.permutation, t.grid_shape)


class ChannelLayerNorm(nn.Module):
    """LayerNorm over the channel dimension of (..., C, H, W) features."""

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = x.movedim(-3, -1)
        y = F.layer_norm(y, (x.shape[-3],), self.weight, self.bias, self.eps)
        return y.movedim(-1, -3)


class PointwiseConv2d(nn.Linear):
    """1x1 convolution written as a channel matmul (fast path on CPU)."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = torch.matmul(self.weight, x.flatten(-2))
        if self.bias is not None:
            out = out + self.bias.unsqueeze(-1)
        return out.view(*x.shape[:-3], self.out_features, *x.shape[-2:])


class FeedForward(nn.Module):
    """Two-layer pointwise feed-forward used by the residual block wrappers."""

    def __init__(self, channels: int, expand: int = 2):
        super().__init__()
        self.fc1 = PointwiseConv2d(channels, expand * channels)
        self.fc2 = PointwiseConv2d(expand * channels, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.relu(self.fc1(x)))


class ResidualCoreBlock(nn.Module):
    """Pre-norm residual wrapper around a spatial core, plus a feed-forward.

    Stacks of the frequency-interaction core alone are affine; the wrapper
    supplies the residual paths and nonlinearity the surrounding network
    needs, without touching the core's own arithmetic.
    """

    def __init__(self, channels: int, core: nn.Module):
        super().__init__()
        self.norm1 = ChannelLayerNorm(channels)
        self.core = core
        self.norm2 = ChannelLayerNorm(channels)
        self.ffn = FeedForward(channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.core(self.norm1(x))
        return x + self.ffn(self.norm2(x))


class ShuffleAttentionBlock(nn.Module):
    """Pre-norm transformer block around dense-sparse local attention.

    pre-norm -> shuffle -> attention -> inverse shuffle -> residual,
    followed by a pointwise feed-forward with its own residual. The pixel
    permutation is supplied per forward call by the permutation policy.
    """

    def __init__(self, channels: int, num_heads: int, token_len: int):
        super().__init__()
        self.token_len = token_len
        self.norm1 = ChannelLayerNorm(channels)
        self.attn = DenseSparseAttention(channels, num_heads)
        self.norm2 = ChannelLayerNorm(channels)
        self.ffn = FeedForward(channels)

    def forward(self, x: torch.Tensor, perm: torch.Tensor) -> torch.Tensor:
        t = shuffle(self.norm1(x), perm, self.token_len)
        x = x + inverse_shuffle(self.attn(t))
        return x + self.ffn(self.norm2(x))
