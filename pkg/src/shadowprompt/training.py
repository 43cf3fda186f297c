"""Training loop, controllable-target construction, evaluation, gradient checks.

The per-step target keeps every shadow except the chosen subject's: the
generator's attenuation layer for that subject is divided back out of the
shadow image, so the network learns to remove exactly the prompted shadow.
"""

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch

from .datagen import SampleRecord, attenuation_map, read_dataset
from .errors import ArgumentError, NumericError
from .losses import LossConfig, mask_prediction_loss, reconstruction_loss
from .metrics import mask_bce, mask_iou, region_report
from .model import (
    EVAL,
    TRAIN,
    AblationFlags,
    ControllableRemovalNet,
    NetworkConfig,
    PermutationPolicy,
    build_model,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .prompts import Prompt, encode_input

PROMPT_KINDS = ("dot", "line", "mask")
CHECKPOINT_EVERY = 500


@dataclass
class TrainConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    learning_rate: float = 2e-4
    batch_size: int = 4
    max_steps: int = 2000
    lr_schedule: str = "cosine"
    prompt_sampling: str = "uniform"  # uniform | dot | line | mask
    ablations: AblationFlags = field(default_factory=AblationFlags)
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_steps < 1:
            raise ArgumentError("learning_rate, batch_size and max_steps must be positive")
        if self.lr_schedule != "cosine":
            raise ArgumentError(f"unsupported lr_schedule {self.lr_schedule!r}")
        if self.prompt_sampling not in ("uniform",) + PROMPT_KINDS:
            raise ArgumentError(f"unsupported prompt_sampling {self.prompt_sampling!r}")
        if self.seed < 0:
            raise ArgumentError("seed must be non-negative")

    def to_dict(self) -> dict:
        return {
            "network": asdict(self.network),
            "loss": asdict(self.loss),
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_steps": self.max_steps,
            "lr_schedule": self.lr_schedule,
            "prompt_sampling": self.prompt_sampling,
            "ablations": asdict(self.ablations),
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        d = dict(d)
        if "network" in d:
            d["network"] = NetworkConfig(**d["network"])
        if "loss" in d:
            d["loss"] = LossConfig(**d["loss"])
        if "ablations" in d:
            d["ablations"] = AblationFlags(**d["ablations"])
        return TrainConfig(**d)


def construct_target(record: SampleRecord, subject_index: int) -> Tuple[np.ndarray, np.ndarray]:
    """Ground truth for removing only one subject's shadow.

    Divides the chosen subject's attenuation layer out of the shadow image;
    pixels under other subjects' shadows keep their darkened appearance.
    Returns the target image (H, W, 3) float and the binary shadow mask.
    """
    if not 0 <= subject_index < len(record.subjects):
        raise ArgumentError(
            f"subject index {subject_index} out of range for {len(record.subjects)} subjects"
        )
    subj = record.subjects[subject_index]
    att = attenuation_map(subj.shadow_mask, subj.darkening, record.blur_sigma)
    y = np.clip(record.shadow_image.astype(np.float64) / att[..., None], 0.0, 1.0)
    return y.astype(np.float32), subj.shadow_mask.astype(np.float32)


def _subject_prompt(subject, kind: str) -> Prompt:
    if kind == "dot":
        return subject.dot
    if kind == "line":
        return subject.line
    if kind == "mask":
        return subject.mask_prompt
    raise ArgumentError(f"unknown prompt kind {kind!r}")


def _cosine_lr(base: float, step: int, max_steps: int) -> float:
    return base * 0.5 * (1.0 + math.cos(math.pi * step / max_steps))


def train(
    cfg: TrainConfig,
    dataset_root,
    out_dir,
    records: Optional[List[SampleRecord]] = None,
    stop_check=None,
) -> Tuple[Path, Path]:
    """Train from scratch; returns (checkpoint path, loss log path).

    stop_check, if given, is called every 50 steps with (model, step,
    losses-so-far) and may return True to stop early (used by the smoke
    experiments).
    """
    if records is None:
        records = read_dataset(dataset_root, "train")
    if not records:
        raise ArgumentError("training split is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    model = build_model(cfg.network, cfg.ablations)
    trainable = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(trainable, lr=cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8)
    rng = np.random.default_rng(cfg.seed)
    policy = PermutationPolicy(TRAIN, torch.Generator().manual_seed(cfg.seed))

    # inputs and targets are deterministic per (record, subject, kind);
    # precompute them so the step loop only gathers
    input_cache, target_cache = {}, {}
    for ri, rec in enumerate(records):
        for j, subj in enumerate(rec.subjects):
            y_t, m_t = construct_target(rec, j)
            target_cache[ri, j] = (y_t.transpose(2, 0, 1), m_t[None])
            for kind in PROMPT_KINDS:
                input_cache[ri, j, kind] = encode_input(
                    rec.shadow_image, _subject_prompt(subj, kind)
                )

    log_path = out_dir / "loss_log.csv"
    ckpt_path = out_dir / "checkpoint.npz"
    losses = []
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lr", "loss", "loss_re", "loss_pr"])
        for step in range(1, cfg.max_steps + 1):
            lr = _cosine_lr(cfg.learning_rate, step - 1, cfg.max_steps)
            for group in opt.param_groups:
                group["lr"] = lr

            inputs, y_targets, m_targets = [], [], []
            for _ in range(cfg.batch_size):
                ri = int(rng.integers(len(records)))
                j = int(rng.integers(len(records[ri].subjects)))
                if cfg.prompt_sampling == "uniform":
                    kind = PROMPT_KINDS[int(rng.integers(3))]
                else:
                    kind = cfg.prompt_sampling
                inputs.append(input_cache[ri, j, kind])
                y_targets.append(target_cache[ri, j][0])
                m_targets.append(target_cache[ri, j][1])
            inp = torch.from_numpy(np.stack(inputs))
            y_t = torch.from_numpy(np.stack(y_targets))
            m_t = torch.from_numpy(np.stack(m_targets))

            opt.zero_grad()
            y_hat, m_hat = model(inp, policy)
            l_re = reconstruction_loss(y_hat, y_t)
            l_pr = mask_prediction_loss(m_hat, m_t)
            loss = cfg.loss.lambda_re * l_re + l_pr
            if not torch.isfinite(loss):
                raise NumericError(f"non-finite loss at step {step}")
            loss.backward()
            opt.step()
            losses.append(loss.item())
            writer.writerow(
                [step, f"{lr:.8g}", f"{loss.item():.8g}", f"{l_re.item():.8g}", f"{l_pr.item():.8g}"]
            )

            if step % CHECKPOINT_EVERY == 0:
                save_checkpoint(out_dir / f"checkpoint_step{step}.npz", model)
            if stop_check is not None and step % 50 == 0:
                fh.flush()
                if stop_check(model, step, losses):
                    break

    save_checkpoint(ckpt_path, model)
    return ckpt_path, log_path


def read_loss_log(log_path) -> List[Dict[str, float]]:
    with open(log_path, newline="") as fh:
        return [
            {k: float(v) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]


def evaluate(
    checkpoint,
    dataset_root,
    split: str,
    prompt_kind: str,
    oracle: bool = False,
    records: Optional[List[SampleRecord]] = None,
) -> dict:
    """Per-subject region metrics and mask scores for one prompt kind.

    With oracle=True the ground-truth targets are scored as if they were
    predictions (upper-bound sanity mode).
    """
    if prompt_kind not in PROMPT_KINDS:
        raise ArgumentError(f"prompt kind must be one of {PROMPT_KINDS}")
    model = None
    if not oracle:
        model = checkpoint if isinstance(checkpoint, ControllableRemovalNet) else load_checkpoint(checkpoint)
        model.eval()
    if records is None:
        records = read_dataset(dataset_root, split)

    rows = []
    for i, rec in enumerate(records):
        for j, subj in enumerate(rec.subjects):
            y_t, m_t = construct_target(rec, j)
            if oracle:
                y_hat, m_hat = y_t.astype(np.float64), m_t.astype(np.float64)
            else:
                y_hat, m_hat = predict(model, rec.shadow_image, _subject_prompt(subj, prompt_kind))
            row = {"sample": i, "subject": j}
            row.update(region_report(y_hat, y_t, m_t.astype(np.uint8)).to_dict())
            row["iou"] = mask_iou(m_hat, m_t.astype(np.uint8))
            row["bce"] = mask_bce(m_hat, m_t.astype(np.uint8))
            rows.append(row)

    metric_keys = [k for k in rows[0] if k not in ("sample", "subject")]
    mean = {k: float(np.mean([r[k] for r in rows])) for k in metric_keys}
    return {"split": split, "prompt_kind": prompt_kind, "oracle": oracle, "rows": rows, "mean": mean}


def _relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-6)


def _finite_difference(probe_fn, tensors, steps=(1e-5,), coords=None) -> float:
    """Max relative error between autograd and central differences.

    probe_fn() returns (scalar loss tensor, piece signature); a probe is
    valid only when both sides stay in the same smooth piece as the base
    point (attention screening and output clamping are piecewise smooth, so
    a step that flips a screening entry measures a jump, not a derivative).
    Each coordinate falls back to smaller steps until its probes are clean;
    tensors is a list of leaf float64 tensors; coords, if given, maps tensor
    index -> list of flat coordinates (default: every coordinate).
    """
    for t in tensors:
        if t.grad is not None:
            t.grad = None
    loss, base_sig = probe_fn()
    loss.backward()
    worst = 0.0
    for ti, t in enumerate(tensors):
        flat = t.detach().reshape(-1)
        grad = t.grad.detach().reshape(-1)
        idxs = range(flat.numel()) if coords is None else coords[ti]
        for i in idxs:
            orig = flat[i].item()
            fd = None
            for step in steps:
                with torch.no_grad():
                    flat[i] = orig + step
                    hi, sig_hi = probe_fn()
                    flat[i] = orig - step
                    lo, sig_lo = probe_fn()
                    flat[i] = orig
                fd = (hi.item() - lo.item()) / (2 * step)
                if sig_hi == base_sig and sig_lo == base_sig:
                    break
            worst = max(worst, _relative_error(grad[i].item(), fd))
    return worst


def grad_check(cfg: Optional[NetworkConfig] = None) -> dict:
    """Finite-difference verification of the differentiable blocks.

    Checks every parameter and input coordinate of one frequency-interaction
    block and one attention block in float64, then 20 sampled parameters of
    the end-to-end network on a 32x32 input. Returns max relative errors.
    """
    from .blocks import (
        DenseSparseAttention,
        SpatialFrequencyBlock,
        TokenBatch,
        record_attention_pieces,
    )

    cfg = cfg or NetworkConfig()
    report = {}
    gen = torch.Generator().manual_seed(0)

    sfi = SpatialFrequencyBlock(4).double()
    x = torch.randn(4, 8, 8, generator=gen, dtype=torch.float64, requires_grad=True)
    w_out = torch.randn(4, 8, 8, generator=gen, dtype=torch.float64)
    tensors = [x] + list(sfi.parameters())
    report["sfi_max_rel_err"] = _finite_difference(
        lambda: ((sfi(x) * w_out).sum(), ()), tensors
    )

    attn = DenseSparseAttention(8, 2).double()
    tok = torch.randn(2, 4, 8, generator=gen, dtype=torch.float64, requires_grad=True)
    w_tok = torch.randn(2, 4, 8, generator=gen, dtype=torch.float64)
    perm = torch.randperm(8, generator=gen)

    def dsla_probe():
        pieces = []
        with record_attention_pieces(pieces):
            out = attn(TokenBatch(tok, perm, (2, 4)))
        return (out.tokens * w_tok).sum(), tuple(pieces)

    tensors = [tok] + list(attn.parameters())
    report["dsla_max_rel_err"] = _finite_difference(
        dsla_probe, tensors, steps=(1e-5, 1e-6, 1e-7)
    )

    model = build_model(cfg).double()
    rng = np.random.default_rng(0)
    img = rng.uniform(0.2, 0.8, size=(1, 4, 32, 32))
    inp = torch.from_numpy(img)
    wy = torch.from_numpy(rng.standard_normal((1, 3, 32, 32)))
    wm = torch.from_numpy(rng.standard_normal((1, 1, 32, 32)))
    policy = PermutationPolicy(EVAL)

    def net_probe():
        pieces = []
        with record_attention_pieces(pieces):
            y, m = model(inp, policy)
        pieces.append(int(((y == 0) | (y == 1)).sum()))
        return (y * wy).sum() + (m * wm).sum(), tuple(pieces)

    params = [p for p in model.parameters() if p.requires_grad]
    picks = rng.choice(len(params), size=20, replace=False)
    tensors, coords = [], []
    for pi in picks:
        p = params[int(pi)]
        tensors.append(p)
        coords.append([int(rng.integers(p.numel()))])
    report["end_to_end_max_rel_err"] = _finite_difference(
        net_probe, tensors, coords=coords, steps=(1e-5, 1e-6, 1e-7, 1e-8)
    )

    report["sfi_pass"] = report["sfi_max_rel_err"] < 1e-3
    report["dsla_pass"] = report["dsla_max_rel_err"] < 1e-3
    report["end_to_end_pass"] = report["end_to_end_max_rel_err"] < 1e-2
    return report
