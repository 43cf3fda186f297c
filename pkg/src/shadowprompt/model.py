"""The two-module removal network.

A mask-prediction encoder-decoder built from spatial-frequency interaction
blocks consumes the image plus rasterized prompt and emits a soft shadow
mask together with multi-scale guidance features. A restoration
encoder-decoder built from shuffle-attention transformer blocks consumes the
image, the soft mask, and the projected guidance, and predicts a residual
correction that is clamped back into [0, 1].
"""

import json
import zlib
from dataclasses import asdict, dataclass
from typing import List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import (
    PointwiseConv2d,
    ResidualCoreBlock,
    ShuffleAttentionBlock,
    SpatialFrequencyBlock,
)
from .errors import ArgumentError, DimensionError, FormatError
from .prompts import Prompt, encode_input

TRAIN = "train"
EVAL = "eval"


@dataclass
class NetworkConfig:
    base_channels: int = 32
    num_scales: int = 3
    blocks_per_scale: int = 2
    token_len: int = 64
    num_heads: int = 4
    seed: int = 0

    def __post_init__(self):
        for name in ("base_channels", "num_scales", "blocks_per_scale", "token_len", "num_heads"):
            if getattr(self, name) < 1:
                raise ArgumentError(f"{name} must be >= 1")
        if self.seed < 0:
            raise ArgumentError("seed must be non-negative")
        if self.base_channels % self.num_heads:
            raise ArgumentError("base_channels must be divisible by num_heads")

    def channels(self, scale: int) -> int:
        return self.base_channels * 2 ** scale

    @property
    def divisor(self) -> int:
        return 2 ** (self.num_scales - 1) * 8

    def check_spatial(self, h: int, w: int) -> None:
        if h % self.divisor or w % self.divisor:
            raise DimensionError(
                f"input {h}x{w} must be divisible by {self.divisor} "
                f"(num_scales={self.num_scales})"
            )
        for s in range(self.num_scales):
            n = (h >> s) * (w >> s)
            if n % self.token_len:
                raise DimensionError(
                    f"token_len {self.token_len} does not divide the "
                    f"{h >> s}x{w >> s} grid at scale {s}"
                )


@dataclass
class AblationFlags:
    disable_sfi: bool = False
    disable_sparse_branch: bool = False
    disable_guidance: bool = False


class PermutationPolicy:
    """Supplies pixel permutations to the shuffle-attention blocks.

    In train mode every block forward draws a fresh uniform permutation from
    the run's generator; in eval mode each block gets a fixed permutation
    derived from seed 0, making inference deterministic.
    """

    def __init__(self, mode: str = EVAL, generator: Optional[torch.Generator] = None,
                 eval_seed: int = 0):
        if mode not in (TRAIN, EVAL):
            raise ArgumentError(f"unknown permutation mode {mode!r}")
        if mode == TRAIN and generator is None:
            generator = torch.Generator()
        self.mode = mode
        self.generator = generator
        self.eval_seed = eval_seed

    def permutation(self, n: int, block_id: int) -> torch.Tensor:
        if self.mode == TRAIN:
            return torch.randperm(n, generator=self.generator)
        g = torch.Generator()
        g.manual_seed(self.eval_seed * 1_000_003 + block_id)
        return torch.randperm(n, generator=g)


def _spatial_core(channels: int, use_frequency: bool) -> nn.Module:
    if use_frequency:
        return SpatialFrequencyBlock(channels)
    return nn.Conv2d(channels, channels, 3, padding=1)


class MaskPredictionNet(nn.Module):
    """Prompt-conditioned encoder-decoder predicting the target shadow mask.

    Returns the soft mask and the per-scale encoder features (taken after
    each scale's blocks, before downsampling) used to guide restoration.
    """

    def __init__(self, cfg: NetworkConfig, use_frequency: bool = True):
        super().__init__()
        self.cfg = cfg
        chs = [cfg.channels(s) for s in range(cfg.num_scales)]
        self.stem = nn.Conv2d(4, chs[0], 3, padding=1)
        self.enc_stages = nn.ModuleList(
            nn.ModuleList(
                ResidualCoreBlock(c, _spatial_core(c, use_frequency))
                for _ in range(cfg.blocks_per_scale)
            )
            for c in chs
        )
        self.downs = nn.ModuleList(
            nn.Conv2d(chs[s], chs[s + 1], 3, stride=2, padding=1)
            for s in range(cfg.num_scales - 1)
        )
        self.ups = nn.ModuleList(
            nn.Conv2d(chs[s + 1], chs[s], 3, padding=1)
            for s in range(cfg.num_scales - 1)
        )
        self.fuses = nn.ModuleList(
            PointwiseConv2d(2 * chs[s], chs[s]) for s in range(cfg.num_scales - 1)
        )
        self.dec_stages = nn.ModuleList(
            nn.ModuleList(
                ResidualCoreBlock(chs[s], _spatial_core(chs[s], use_frequency))
                for _ in range(cfg.blocks_per_scale)
            )
            for s in range(cfg.num_scales - 1)
        )
        self.mask_head = PointwiseConv2d(chs[0], 1)

    def forward(self, inp: torch.Tensor) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        x = F.relu(self.stem(inp))
        guidance, skips = [], []
        for s in range(self.cfg.num_scales):
            for block in self.enc_stages[s]:
                x = block(x)
            guidance.append(x)
            if s < self.cfg.num_scales - 1:
                skips.append(x)
                x = F.relu(self.downs[s](x))
        for s in range(self.cfg.num_scales - 2, -1, -1):
            x = F.relu(self.ups[s](F.interpolate(x, scale_factor=2, mode="nearest")))
            x = F.relu(self.fuses[s](torch.cat((x, skips[s]), dim=1)))
            for block in self.dec_stages[s]:
                x = block(x)
        return torch.sigmoid(self.mask_head(x)), guidance


class ShadowRestorationNet(nn.Module):
    """Shuffle-attention encoder-decoder restoring the masked shadow region.

    Guidance features are projected by per-scale 1x1 convolutions and added
    to the encoder features before each scale's blocks; the output head
    predicts a residual over the input image.
    """

    def __init__(self, cfg: NetworkConfig, first_block_id: int = 0):
        super().__init__()
        self.cfg = cfg
        chs = [cfg.channels(s) for s in range(cfg.num_scales)]
        self.stem = nn.Conv2d(4, chs[0], 3, padding=1)
        self.guidance_proj = nn.ModuleList(PointwiseConv2d(c, c) for c in chs)

        self._block_ids = {}
        next_id = first_block_id

        def attn_blocks(c):
            nonlocal next_id
            blocks = nn.ModuleList(
                ShuffleAttentionBlock(c, cfg.num_heads, cfg.token_len)
                for _ in range(cfg.blocks_per_scale)
            )
            for b in blocks:
                self._block_ids[id(b)] = next_id
                next_id += 1
            return blocks

        self.enc_stages = nn.ModuleList(attn_blocks(c) for c in chs)
        self.downs = nn.ModuleList(
            nn.Conv2d(chs[s], chs[s + 1], 3, stride=2, padding=1)
            for s in range(cfg.num_scales - 1)
        )
        self.ups = nn.ModuleList(
            nn.Conv2d(chs[s + 1], chs[s], 3, padding=1)
            for s in range(cfg.num_scales - 1)
        )
        self.fuses = nn.ModuleList(
            PointwiseConv2d(2 * chs[s], chs[s]) for s in range(cfg.num_scales - 1)
        )
        self.dec_stages = nn.ModuleList(
            attn_blocks(chs[s]) for s in range(cfg.num_scales - 1)
        )
        self.out_head = nn.Conv2d(chs[0], 3, 3, padding=1)

    def _run_blocks(self, blocks, x, policy):
        n = x.shape[-2] * x.shape[-1]
        for b in blocks:
            x = b(x, policy.permutation(n, self._block_ids[id(b)]))
        return x

    def forward(
        self,
        image: torch.Tensor,
        mask: torch.Tensor,
        guidance: List[torch.Tensor],
        policy: PermutationPolicy,
    ) -> torch.Tensor:
        if len(guidance) != self.cfg.num_scales:
            raise DimensionError(
                f"expected {self.cfg.num_scales} guidance scales, got {len(guidance)}"
            )
        x = F.relu(self.stem(torch.cat((image, mask), dim=1)))
        skips = []
        for s in range(self.cfg.num_scales):
            x = x + self.guidance_proj[s](guidance[s])
            x = self._run_blocks(self.enc_stages[s], x, policy)
            if s < self.cfg.num_scales - 1:
                skips.append(x)
                x = F.relu(self.downs[s](x))
        for s in range(self.cfg.num_scales - 2, -1, -1):
            x = F.relu(self.ups[s](F.interpolate(x, scale_factor=2, mode="nearest")))
            x = F.relu(self.fuses[s](torch.cat((x, skips[s]), dim=1)))
            x = self._run_blocks(self.dec_stages[s], x, policy)
        delta = self.out_head(x)
        return torch.clamp(image + delta, 0.0, 1.0)


class ControllableRemovalNet(nn.Module):
    """Full pipeline: prompt-conditioned mask prediction, then restoration."""

    def __init__(self, cfg: NetworkConfig, flags: Optional[AblationFlags] = None):
        super().__init__()
        self.cfg = cfg
        self.flags = flags or AblationFlags()
        self.mask_net = MaskPredictionNet(cfg, use_frequency=not self.flags.disable_sfi)
        self.removal_net = ShadowRestorationNet(cfg)

    def forward(
        self, inp: torch.Tensor, policy: Optional[PermutationPolicy] = None
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        if inp.ndim != 4 or inp.shape[1] != 4:
            raise DimensionError(f"expected (B, 4, H, W) input, got {tuple(inp.shape)}")
        self.cfg.check_spatial(inp.shape[-2], inp.shape[-1])
        policy = policy or PermutationPolicy(EVAL)
        mask, guidance = self.mask_net(inp)
        y_hat = self.removal_net(inp[:, :3], mask, guidance, policy)
        return y_hat, mask


def _param_values(seed: int, name: str, shape, bound: float) -> torch.Tensor:
    ss = np.random.SeedSequence([seed, zlib.crc32(name.encode())])
    rng = np.random.default_rng(ss)
    return torch.from_numpy(
        rng.uniform(-bound, bound, size=tuple(shape)).astype(np.float32)
    )


def deterministic_init_(model: ControllableRemovalNet) -> None:
    """Seed every weight from (config seed, qualified parameter name).

    Keyed per-name so two models built from the same seed have bit-identical
    parameters wherever their module trees coincide, regardless of which
    ablation flags are set.
    """
    seed = model.cfg.seed
    for name, mod in model.named_modules():
        if isinstance(mod, (nn.Conv2d, nn.Linear)):
            w = mod.weight
            fan_in = int(np.prod(w.shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            with torch.no_grad():
                w.copy_(_param_values(seed, name + ".weight", w.shape, bound))
                if mod.bias is not None:
                    mod.bias.copy_(_param_values(seed, name + ".bias", mod.bias.shape, bound))
    with torch.no_grad():
        model.mask_net.mask_head.bias.zero_()
        if model.flags.disable_guidance:
            for proj in model.removal_net.guidance_proj:
                proj.weight.zero_()
                proj.bias.zero_()
                proj.weight.requires_grad_(False)
                proj.bias.requires_grad_(False)
        if model.flags.disable_sparse_branch:
            for mod in model.removal_net.modules():
                if hasattr(mod, "omega2") and isinstance(mod.omega2, nn.Parameter):
                    mod.omega2.zero_()
                    mod.omega2.requires_grad_(False)


def build_model(cfg: NetworkConfig, flags: Optional[AblationFlags] = None) -> ControllableRemovalNet:
    model = ControllableRemovalNet(cfg, flags)
    deterministic_init_(model)
    return model


@torch.no_grad()
def predict(
    model: ControllableRemovalNet, x: np.ndarray, prompt: Prompt
) -> Tuple[np.ndarray, np.ndarray]:
    """Run deterministic inference on an (H, W, 3) image in [0, 1].

    Returns the restored image (H, W, 3) and the soft shadow mask (H, W).
    """
    dtype = next(model.parameters()).dtype
    inp = torch.from_numpy(encode_input(x, prompt))[None].to(dtype)
    y, m = model(inp, PermutationPolicy(EVAL))
    return (
        y[0].permute(1, 2, 0).cpu().numpy().astype(np.float64),
        m[0, 0].cpu().numpy().astype(np.float64),
    )


def config_hash(cfg: NetworkConfig, flags: AblationFlags) -> str:
    payload = json.dumps({"network": asdict(cfg), "ablations": asdict(flags)}, sort_keys=True)
    return "%08x" % zlib.crc32(payload.encode())


def save_checkpoint(path, model: ControllableRemovalNet) -> None:
    """Write one .npz archive: config JSON plus arrays keyed by module path."""
    meta = json.dumps(
        {"network": asdict(model.cfg), "ablations": asdict(model.flags)}, sort_keys=True
    )
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    np.savez(path, __meta__=np.array(meta), **arrays)


def load_checkpoint(path) -> ControllableRemovalNet:
    try:
        with np.load(path, allow_pickle=False) as data:
            if "__meta__" not in data:
                raise FormatError(f"{path}: missing __meta__ entry")
            meta = json.loads(str(data["__meta__"]))
            arrays = {k: data[k] for k in data.files if k != "__meta__"}
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    cfg = NetworkConfig(**meta["network"])
    model = ControllableRemovalNet(cfg, AblationFlags(**meta["ablations"]))
    for k, v in arrays.items():
        if not np.isfinite(v).all():
            raise FormatError(f"checkpoint {path}: non-finite values in {k}")
    state = {k: torch.from_numpy(v) for k, v in arrays.items()}
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise FormatError(f"checkpoint {path} does not match its config: {exc}") from exc
    return model
