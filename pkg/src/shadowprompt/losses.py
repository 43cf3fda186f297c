"""Training loss: weighted reconstruction error plus mask prediction error."""

from dataclasses import dataclass

import torch

from .errors import ArgumentError

BCE_EPS = 1e-7


@dataclass
class LossConfig:
    lambda_re: float = 3.0

    def __post_init__(self):
        if self.lambda_re <= 0:
            raise ArgumentError("lambda_re must be positive")


def _as_tensor(x):
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(x, dtype=torch.float64)


def reconstruction_loss(y_hat, y) -> torch.Tensor:
    """Mean absolute error over all pixels and channels."""
    y_hat, y = _as_tensor(y_hat), _as_tensor(y)
    if y_hat.shape != y.shape:
        raise ArgumentError(f"shape mismatch {tuple(y_hat.shape)} vs {tuple(y.shape)}")
    return (y_hat - y).abs().mean()


def mask_prediction_loss(m_hat, m) -> torch.Tensor:
    """Mean binary cross-entropy with predictions clamped away from {0, 1}."""
    m_hat, m = _as_tensor(m_hat), _as_tensor(m)
    if m_hat.shape != m.shape:
        raise ArgumentError(f"shape mismatch {tuple(m_hat.shape)} vs {tuple(m.shape)}")
    p = m_hat.clamp(BCE_EPS, 1.0 - BCE_EPS)
    return -(m * torch.log(p) + (1.0 - m) * torch.log(1.0 - p)).mean()


def loss_total(y_hat, y, m_hat, m, cfg: LossConfig) -> torch.Tensor:
    """lambda * reconstruction MAE + mask BCE (scalar tensor).

    The mask target must be binary.
    """
    m_t = _as_tensor(m)
    if not ((m_t == 0) | (m_t == 1)).all():
        raise ArgumentError("mask target must be binary")
    return cfg.lambda_re * reconstruction_loss(y_hat, y) + mask_prediction_loss(m_hat, m)
