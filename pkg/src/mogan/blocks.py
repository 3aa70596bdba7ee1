"""Neural building blocks shared by both generator branches.

All blocks are fully convolutional and shape-preserving (stride 1, same
padding), so a stack built from them accepts any spatial size at or above
its receptive field.  Normalization layers never track running statistics:
every forward pass is a pure function of (parameters, input), which keeps
generation deterministic and makes finite-difference gradient checks exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn

__all__ = [
    "BlockConfig",
    "StyleParams",
    "modulate",
    "StyleInjector",
    "DeformableConv2d",
    "GatedConv2d",
    "ChannelAttention",
    "RoiResBlock",
    "BackgroundResBlock",
    "MarkovianDiscriminator",
    "init_weights",
]


@dataclass(frozen=True)
class BlockConfig:
    """Widths and toggles for one scale's generator/discriminator pair."""

    base_channels: int = 32
    kernel_size: int = 3
    num_resblocks: int = 3
    attention_enabled: bool = True
    deform_enabled: bool = True
    gated_enabled: bool = True
    injector_enabled: bool = True
    injector_stages: int = 3
    style_damping: float = 1.0
    attention_kernel: int = 3
    discriminator_layers: int = 5

    def __post_init__(self) -> None:
        if self.num_resblocks < 1:
            raise ValueError(f"num_resblocks must be >= 1, got {self.num_resblocks}")
        if self.kernel_size % 2 != 1:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")
        if not 0.0 < self.style_damping <= 1.0:
            raise ValueError(f"style_damping must be in (0, 1], got {self.style_damping}")


@dataclass
class StyleParams:
    """Affine modulation pair emitted by a style injector."""

    weight: Tensor  # multiplicative, same shape as the map it modulates
    shift: Tensor  # additive


def modulate(x: Tensor, style: StyleParams, damping: float = 1.0) -> Tensor:
    """Apply weight ⊙ x + shift; damping < 1 pulls the affine toward identity."""
    if style.weight.shape != x.shape or style.shift.shape != x.shape:
        raise ValueError(
            f"style shape {tuple(style.weight.shape)} does not match "
            f"feature map shape {tuple(x.shape)}"
        )
    if damping == 1.0:
        return style.weight * x + style.shift
    weight = 1.0 + damping * (style.weight - 1.0)
    return weight * x + damping * style.shift


class _BypassStage(nn.Module):
    """Residual conv stage used inside injector bypasses."""

    def __init__(self, in_channels: int, out_channels: int, stride: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1)
        self.skip = nn.Conv2d(in_channels, out_channels, 1, stride=stride)
        self.act = nn.LeakyReLU(0.2)

    def forward(self, x: Tensor) -> Tensor:
        return self.act(self.conv(x)) + self.skip(x)


class _InjectorBypass(nn.Module):
    def __init__(self, out_channels: int, width: int, stages: int):
        super().__init__()
        strides = [1] + [2] * (stages - 1)
        channels = [3] + [width] * stages
        self.stages = nn.Sequential(
            *[
                _BypassStage(channels[i], channels[i + 1], strides[i])
                for i in range(stages)
            ]
        )
        self.head = nn.Conv2d(width, out_channels, 3, padding=1)

    def forward(self, aug_image: Tensor, target_hw: tuple[int, int]) -> Tensor:
        encoded = self.head(self.stages(aug_image))
        if encoded.shape[-2:] == target_hw:
            return encoded
        return F.interpolate(
            encoded, size=target_hw, mode="bilinear", align_corners=False
        )


class StyleInjector(nn.Module):
    """Encodes an augmented image into a spatial affine (weight, shift) pair.

    Two bypasses with identical formation but unshared parameters produce the
    multiplicative and additive maps.  The head convolutions start at zero so
    an untrained injector is the identity modulation (weight=1, shift=0); both
    bypasses train end-to-end with the rest of the model.
    """

    def __init__(self, out_channels: int, width: int = 32, stages: int = 3):
        super().__init__()
        if stages < 1:
            raise ValueError(f"stages must be >= 1, got {stages}")
        self.out_channels = out_channels
        self.scale_path = _InjectorBypass(out_channels, width, stages)
        self.shift_path = _InjectorBypass(out_channels, width, stages)
        self.reset_structural_parameters()

    def reset_structural_parameters(self) -> None:
        for bypass in (self.scale_path, self.shift_path):
            nn.init.zeros_(bypass.head.weight)
            nn.init.zeros_(bypass.head.bias)

    def forward(self, aug_image: Tensor, target_shape: tuple[int, int, int]) -> StyleParams:
        channels, height, width = target_shape
        if channels != self.out_channels:
            raise ValueError(
                f"injector emits {self.out_channels} channels, target asks for {channels}"
            )
        weight = 1.0 + self.scale_path(aug_image, (height, width))
        shift = self.shift_path(aug_image, (height, width))
        return StyleParams(weight=weight, shift=shift)


class DeformableConv2d(nn.Module):
    """Convolution sampling at learned fractional offsets (stride 1, same pad).

    A standard convolution predicts 2·K² per-position offsets; the main
    kernel then gathers its taps at (grid + offset) via bilinear
    interpolation.  The offset branch starts at zero, where the layer reduces
    exactly to a standard convolution with the same weights.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.weight = nn.Parameter(torch.empty(out_channels, in_channels, kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.zeros(out_channels))
        self.offset_conv = nn.Conv2d(
            in_channels, 2 * kernel_size * kernel_size, kernel_size, padding=kernel_size // 2
        )
        nn.init.kaiming_uniform_(self.weight, a=0.2)
        self.reset_structural_parameters()

    def reset_structural_parameters(self) -> None:
        nn.init.zeros_(self.offset_conv.weight)
        nn.init.zeros_(self.offset_conv.bias)

    def forward(self, x: Tensor) -> Tensor:
        offsets = self.offset_conv(x)
        return self.sample_and_convolve(x, offsets)

    def sample_and_convolve(self, x: Tensor, offsets: Tensor) -> Tensor:
        """Gather taps at grid+offset and contract with the kernel.

        offsets has shape (B, 2·K², H, W), reshaped as (B, K², 2, H, W) where
        index 0 of the pair axis is the row offset and index 1 the column.
        """
        b, c, h, w = x.shape
        k = self.kernel_size
        taps = k * k
        offsets = offsets.view(b, taps, 2, h, w)
        pad = k // 2
        dtype, device = x.dtype, x.device
        rows = torch.arange(h, dtype=dtype, device=device).view(1, 1, h, 1)
        cols = torch.arange(w, dtype=dtype, device=device).view(1, 1, 1, w)
        tap_rows = (torch.arange(taps, device=device) // k - pad).to(dtype).view(1, taps, 1, 1)
        tap_cols = (torch.arange(taps, device=device) % k - pad).to(dtype).view(1, taps, 1, 1)
        sample_rows = rows + tap_rows + offsets[:, :, 0]
        sample_cols = cols + tap_cols + offsets[:, :, 1]
        # align_corners=False: index i maps to normalized (2i+1)/size - 1.
        grid_y = (2.0 * sample_rows + 1.0) / h - 1.0
        grid_x = (2.0 * sample_cols + 1.0) / w - 1.0
        grid = torch.stack([grid_x, grid_y], dim=-1).view(b, taps * h, w, 2)
        gathered = F.grid_sample(
            x, grid, mode="bilinear", padding_mode="zeros", align_corners=False
        ).view(b, c, taps, h, w)
        out = torch.einsum("bcthw,oct->bohw", gathered, self.weight.view(self.out_channels, c, taps))
        return out + self.bias.view(1, -1, 1, 1)


class GatedConv2d(nn.Module):
    """Feature convolution gated elementwise by a sigmoid of a twin convolution."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3):
        super().__init__()
        pad = kernel_size // 2
        self.feature = nn.Conv2d(in_channels, out_channels, kernel_size, padding=pad)
        self.gate = nn.Conv2d(in_channels, out_channels, kernel_size, padding=pad)

    def forward(self, x: Tensor) -> Tensor:
        return self.feature(x) * torch.sigmoid(self.gate(x))


class ChannelAttention(nn.Module):
    """Per-channel gating from a 1-D cross-channel convolution of pooled means."""

    def __init__(self, kernel_size: int = 3):
        super().__init__()
        self.conv = nn.Conv1d(1, 1, kernel_size, padding=kernel_size // 2, bias=True)

    def gates(self, x: Tensor) -> Tensor:
        pooled = x.mean(dim=(2, 3))
        return torch.sigmoid(self.conv(pooled.unsqueeze(1))).squeeze(1)

    def forward(self, x: Tensor) -> Tensor:
        return x * self.gates(x).unsqueeze(-1).unsqueeze(-1)


def _batch_norm(channels: int) -> nn.BatchNorm2d:
    # track_running_stats=False keeps the forward pass stateless.
    return nn.BatchNorm2d(channels, track_running_stats=False)


class RoiResBlock(nn.Module):
    """Pre-activation residual block: BN-LeakyReLU-conv twice, the second conv
    deformable with channel attention behind it, plus the identity skip."""

    def __init__(self, channels: int, config: BlockConfig):
        super().__init__()
        pad = config.kernel_size // 2
        self.norm1 = _batch_norm(channels)
        self.norm2 = _batch_norm(channels)
        self.act = nn.LeakyReLU(0.2)
        self.conv1 = nn.Conv2d(channels, channels, config.kernel_size, padding=pad)
        if config.deform_enabled:
            self.conv2: nn.Module = DeformableConv2d(channels, channels, config.kernel_size)
        else:
            self.conv2 = nn.Conv2d(channels, channels, config.kernel_size, padding=pad)
        self.attention = (
            ChannelAttention(config.attention_kernel) if config.attention_enabled else None
        )

    def forward(self, x: Tensor) -> Tensor:
        h = self.conv1(self.act(self.norm1(x)))
        h = self.conv2(self.act(self.norm2(h)))
        if self.attention is not None:
            h = self.attention(h)
        return x + h


class BackgroundResBlock(nn.Module):
    """Residual block with two gated convolutions and InstanceNorm-ELU."""

    def __init__(self, channels: int, config: BlockConfig):
        super().__init__()
        pad = config.kernel_size // 2
        self.norm1 = nn.InstanceNorm2d(channels, affine=True)
        self.norm2 = nn.InstanceNorm2d(channels, affine=True)
        self.act = nn.ELU()
        if config.gated_enabled:
            self.conv1: nn.Module = GatedConv2d(channels, channels, config.kernel_size)
            self.conv2: nn.Module = GatedConv2d(channels, channels, config.kernel_size)
        else:
            self.conv1 = nn.Conv2d(channels, channels, config.kernel_size, padding=pad)
            self.conv2 = nn.Conv2d(channels, channels, config.kernel_size, padding=pad)
        self.attention = (
            ChannelAttention(config.attention_kernel) if config.attention_enabled else None
        )

    def forward(self, x: Tensor) -> Tensor:
        h = self.conv1(self.act(self.norm1(x)))
        h = self.conv2(self.act(self.norm2(h)))
        if self.attention is not None:
            h = self.attention(h)
        return x + h


class MarkovianDiscriminator(nn.Module):
    """Fully convolutional critic emitting a per-patch score map.

    Five stride-1 convolutions with LeakyReLU between and no normalization:
    every output position is a pure function of its receptive field, so the
    map stays local (an input perturbation moves only the patch scores whose
    field covers it) and the same parameters judge any spatial size at or
    above that field.  Reflect padding keeps the map aligned with the input.
    """

    def __init__(self, config: BlockConfig, in_channels: int = 3):
        super().__init__()
        k = config.kernel_size
        pad = k // 2
        c = config.base_channels
        layers: list[nn.Module] = [
            nn.Conv2d(in_channels, c, k, padding=pad, padding_mode="reflect")
        ]
        for _ in range(config.discriminator_layers - 2):
            layers += [
                nn.LeakyReLU(0.2),
                nn.Conv2d(c, c, k, padding=pad, padding_mode="reflect"),
            ]
        layers += [
            nn.LeakyReLU(0.2),
            nn.Conv2d(c, 1, k, padding=pad, padding_mode="reflect"),
        ]
        self.net = nn.Sequential(*layers)
        self.receptive_field = config.discriminator_layers * (k - 1) + 1

    def forward(self, x: Tensor) -> Tensor:
        if min(x.shape[-2], x.shape[-1]) < self.receptive_field:
            raise ValueError(
                f"input {x.shape[-2]}×{x.shape[-1]} is smaller than the "
                f"receptive field {self.receptive_field}"
            )
        return self.net(x)

    def score(self, x: Tensor) -> Tensor:
        return self.forward(x).mean()


def _gaussian_init(module: nn.Module) -> None:
    # Biases get a small spread too: an exactly-zero bias chain would map the
    # all-zero reconstruction input to an exactly-zero output, where the
    # cosine objective is undefined.
    if isinstance(module, (nn.Conv2d, nn.Conv1d, DeformableConv2d)):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.normal_(module.bias, 0.0, 0.02)
    elif isinstance(module, (nn.BatchNorm2d, nn.InstanceNorm2d)):
        if module.weight is not None:
            nn.init.normal_(module.weight, 1.0, 0.02)
        if module.bias is not None:
            nn.init.normal_(module.bias, 0.0, 0.02)


def init_weights(net: nn.Module) -> nn.Module:
    """Gaussian init, then restore the structural zeros (offsets, injector heads)."""
    net.apply(_gaussian_init)
    for module in net.modules():
        reset = getattr(module, "reset_structural_parameters", None)
        if callable(reset):
            reset()
    return net
