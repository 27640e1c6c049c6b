"""Loss functionals for the adversarial pair generator and the N2N despeckler.

All functions accept torch tensors and stay differentiable. Image losses take
either a single [H, W] image or a batch shaped [B, H, W] / [B, 1, H, W];
batched total-variation is the mean over images of the per-image sums, so the
TV weight keeps one scale regardless of batch size.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

TV_EPS = 1e-8


def _as_batch(images: torch.Tensor, name: str) -> torch.Tensor:
    """Normalize [H,W] / [B,H,W] / [B,1,H,W] input to [B,H,W]."""
    if images.ndim == 2:
        return images.unsqueeze(0)
    if images.ndim == 3:
        return images
    if images.ndim == 4:
        if images.shape[1] != 1:
            raise ValueError(f"{name} must be single-channel, got {images.shape[1]} channels")
        return images[:, 0]
    raise ValueError(f"{name} must be 2-D, 3-D or 4-D, got shape {tuple(images.shape)}")


def _check_same_shape(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def wgan_loss(critic_on_real: torch.Tensor, critic_on_fake: torch.Tensor) -> torch.Tensor:
    """Wasserstein critic gap: mean(real scores) - mean(fake scores).

    The critic step ascends this value; the generator step descends it
    (equivalently ascends the mean fake score).
    """
    if critic_on_real.numel() == 0 or critic_on_fake.numel() == 0:
        raise ValueError("critic score batches must be non-empty")
    return critic_on_real.mean() - critic_on_fake.mean()


def cycle_loss(original: torch.Tensor, reconstructed: torch.Tensor) -> torch.Tensor:
    """Backward cycle-consistency: mean absolute pixel difference."""
    _check_same_shape(original, reconstructed, "cycle_loss")
    return (original - reconstructed).abs().mean()


def mse_loss(target: torch.Tensor, prediction: torch.Tensor) -> torch.Tensor:
    """Mean squared pixel difference over batch and pixels."""
    _check_same_shape(target, prediction, "mse_loss")
    return (target - prediction).square().mean()


def tv_loss(image: torch.Tensor) -> torch.Tensor:
    """Isotropic total variation, summed over the interior difference grid.

    Per image: sum over the first H-1 rows and W-1 columns of
    sqrt(|right - here|^2 + |down - here|^2); the last row/column carry no
    term. Exactly tied neighbor pairs contribute exactly 0 (with zero
    gradient); everywhere else a small eps inside the sqrt keeps the gradient
    finite near ties. Batched input returns the mean of per-image sums.
    """
    batch = _as_batch(image, "tv_loss image")
    if batch.shape[-2] < 2 or batch.shape[-1] < 2:
        raise ValueError(f"tv_loss needs at least 2x2 pixels, got {tuple(batch.shape[-2:])}")
    dx = batch[:, :-1, 1:] - batch[:, :-1, :-1]
    dy = batch[:, 1:, :-1] - batch[:, :-1, :-1]
    sq = dx.square() + dy.square()
    terms = torch.where(sq > 0, torch.sqrt(sq + TV_EPS), torch.zeros_like(sq))
    return terms.sum(dim=(-2, -1)).mean()


@dataclass
class LossValue:
    """Composite generator objective with its weighted breakdown.

    ``total`` stays attached to the autograd graph when the components are;
    the float components are for logging.
    """

    total: torch.Tensor
    wgan: float
    cycle: float
    tv: float
    alpha: float

    @property
    def components(self) -> dict[str, float]:
        return {"wgan": self.wgan, "cycle": self.cycle, "tv": self.tv}

    @property
    def value(self) -> float:
        return float(self.total.detach()) if isinstance(self.total, torch.Tensor) else float(self.total)


def generator_objective(wgan, cycle, tv, alpha: float) -> LossValue:
    """Combined objective wgan + cycle + alpha * tv.

    ``alpha`` must be non-negative; it should stay far below 1 so the TV term
    smooths without flattening the generated content.
    """
    alpha = float(alpha)
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    total = wgan + cycle + alpha * tv
    as_float = lambda v: float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
    return LossValue(
        total=total,
        wgan=as_float(wgan),
        cycle=as_float(cycle),
        tv=as_float(tv),
        alpha=alpha,
    )
