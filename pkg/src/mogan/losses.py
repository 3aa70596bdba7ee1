"""Training objectives: critic/generator adversarial terms, gradient penalty,
cosine and pixel reconstruction losses, and their weighted totals.

All functions accept torch tensors (returning tensors that carry gradients)
or plain arrays (returning floats).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch
from torch import Tensor

__all__ = [
    "LossWeights",
    "weights_for_scale",
    "ReconAnchor",
    "adversarial_losses",
    "gradient_penalty",
    "cosine_loss",
    "mse_loss",
    "generator_total",
    "discriminator_total",
]


@dataclass(frozen=True)
class LossWeights:
    """Weights of the generator/discriminator totals.

    alpha scales the cosine term, beta the pixel term, lambda_gp the gradient
    penalty.  beta is scale-dependent for the ROI branch; use
    weights_for_scale to assemble the right triple.
    """

    alpha: float = 50.0
    beta: float = 10.0
    lambda_gp: float = 1.0

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0 or self.lambda_gp < 0:
            raise ValueError(f"loss weights must be >= 0: {self}")


def weights_for_scale(
    branch_kind: str,
    scale_index: int,
    num_downsamples: int,
    alpha: float = 50.0,
    lambda_gp: float = 1.0,
) -> LossWeights:
    """Per-scale weights: ROI uses beta=10 at the two coarsest scales, else 5;
    the background branch uses beta=10 everywhere."""
    if branch_kind == "roi":
        beta = 10.0 if scale_index >= num_downsamples - 1 else 5.0
    elif branch_kind == "background":
        beta = 10.0
    else:
        raise ValueError(f"unknown branch kind {branch_kind!r}")
    return LossWeights(alpha=alpha, beta=beta, lambda_gp=lambda_gp)


@dataclass(frozen=True)
class ReconAnchor:
    """Fixed reconstruction input: zero noise at every scale, identity
    augmentation.  Never resampled once a scale starts training, so the
    pixel losses always chase the same target trajectory."""

    num_levels: int

    @property
    def amplitudes(self) -> list[float]:
        return [0.0] * self.num_levels


def _wants_tensor(*values) -> bool:
    return any(isinstance(v, Tensor) for v in values)


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return torch.as_tensor(np.asarray(value), dtype=torch.float64)


def adversarial_losses(d_real, d_fake) -> tuple:
    """Wasserstein critic terms from two score maps.

    Returns (g_term, d_term): the generator minimizes -mean(D_fake), the
    critic minimizes mean(D_fake) - mean(D_real).
    """
    keep = _wants_tensor(d_real, d_fake)
    real_t, fake_t = _as_tensor(d_real), _as_tensor(d_fake)
    g_term = -fake_t.mean()
    d_term = fake_t.mean() - real_t.mean()
    if keep:
        return g_term, d_term
    return float(g_term), float(d_term)


def gradient_penalty(
    discriminator: Callable[[Tensor], Tensor],
    real: Tensor,
    fake: Tensor,
    seed: int | torch.Generator = 0,
    point: str = "interpolate",
) -> Tensor:
    """Squared deviation of the critic's input-gradient norm from 1.

    The critic is evaluated at a random convex combination of real and fake
    (point="interpolate", one epsilon draw per call) or literally at the fake
    sample (point="fake"); its score map is reduced to the spatial mean
    before differentiation.
    """
    if point not in ("interpolate", "fake"):
        raise ValueError(f"unknown gradient-penalty point {point!r}")
    if point == "interpolate":
        if isinstance(seed, torch.Generator):
            generator = seed
        else:
            generator = torch.Generator().manual_seed(int(seed))
        eps = torch.rand(1, generator=generator, dtype=real.dtype).item()
        x = eps * real.detach() + (1.0 - eps) * fake.detach()
    else:
        x = fake.detach().clone()
    x.requires_grad_(True)
    score = discriminator(x)
    if isinstance(score, Tensor) and score.dim() > 0:
        score = score.mean()
    (grad,) = torch.autograd.grad(score, x, create_graph=True)
    if not torch.isfinite(grad).all():
        raise FloatingPointError("non-finite critic gradient in gradient penalty")
    norm = grad.flatten().norm(2)
    return (norm - 1.0) ** 2


def cosine_loss(generated, target):
    """1 - cosine similarity of the flattened inputs; 0 when proportional."""
    keep = _wants_tensor(generated, target)
    a = _as_tensor(generated).flatten()
    b = _as_tensor(target).flatten()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    norm_a, norm_b = a.norm(2), b.norm(2)
    if float(norm_a.detach()) == 0.0 or float(norm_b.detach()) == 0.0:
        raise ValueError("cosine loss undefined for a zero-norm input")
    loss = 1.0 - (a * b).sum() / (norm_a * norm_b)
    return loss if keep else float(loss)


def mse_loss(generated, target, mask=None):
    """Mean squared difference; with a mask, the mean runs over mask=1 pixels only.

    The mask is H×W and broadcast over channels.
    """
    keep = _wants_tensor(generated, target)
    a = _as_tensor(generated)
    b = _as_tensor(target)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    sq = (a - b) ** 2
    if mask is None:
        loss = sq.mean()
    else:
        m = _as_tensor(mask).to(sq.dtype)
        if m.shape != sq.shape:
            # H×W×3 arrays are channel-last images; everything else aligns the
            # mask with the trailing spatial axes (CHW / BCHW tensors).
            if sq.dim() == 3 and sq.shape[2] == 3 and sq.shape[:2] == m.shape:
                m = m.unsqueeze(-1)
            elif sq.shape[-2:] == m.shape:
                while m.dim() < sq.dim():
                    m = m.unsqueeze(0)
            else:
                raise ValueError(
                    f"mask shape {tuple(m.shape)} incompatible with {tuple(sq.shape)}"
                )
        weights = torch.broadcast_to(m, sq.shape)
        total = weights.sum()
        if float(total) == 0.0:
            raise ValueError("mask excludes every element")
        loss = (sq * weights).sum() / total
    return loss if keep else float(loss)


def generator_total(l0_g, l1, l2, weights: LossWeights):
    """Generator objective: adversarial + alpha·cosine + beta·pixel."""
    total = l0_g + weights.alpha * l1 + weights.beta * l2
    return total


def discriminator_total(l0_d, gp, weights: LossWeights):
    """Critic objective: adversarial + lambda_gp·gradient penalty."""
    return l0_d + weights.lambda_gp * gp
