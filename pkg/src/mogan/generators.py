"""Two parallel coarse-to-fine branch recursions over per-scale GAN stacks.

The ROI branch threads an augmented copy of the training crop through style
injectors at every scale; the background branch runs the same recursion
without injectors on the masked image.  Tensors live in [-1, 1] internally;
the public functions accept and return [0, 1] images.
"""

from __future__ import annotations

import hashlib
from contextlib import nullcontext
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from . import augment
from .augment import AugmentDescriptor
from .blocks import (
    BackgroundResBlock,
    BlockConfig,
    MarkovianDiscriminator,
    RoiResBlock,
    StyleInjector,
    StyleParams,
    init_weights,
    modulate,
)
from .imaging import RoiBox, resize_image, validate_image

__all__ = [
    "ROI",
    "BACKGROUND",
    "NoiseSpec",
    "ScaleModel",
    "BranchStack",
    "ScaleGenerator",
    "InjectorSet",
    "UntrainedScaleError",
    "FrozenStackError",
    "build_branch_stack",
    "roi_generate",
    "background_generate",
    "inject_edit",
    "to_internal",
    "to_image",
    "upsample_to",
    "module_digest",
]

ROI = "roi"
BACKGROUND = "background"


class UntrainedScaleError(RuntimeError):
    """Raised when generation would pass through an untrained scale."""


class FrozenStackError(RuntimeError):
    """Raised when an operation requires a fully frozen (or unfrozen) stack."""


def to_internal(image: np.ndarray) -> Tensor:
    """[0,1] H×W×3 image to a 1×3×H×W tensor in [-1, 1]."""
    arr = validate_image(image)
    t = torch.from_numpy(np.ascontiguousarray(arr)).permute(2, 0, 1).unsqueeze(0)
    return t * 2.0 - 1.0


def to_image(tensor: Tensor) -> np.ndarray:
    """1×3×H×W tensor in [-1, 1] back to a clipped [0,1] H×W×3 image."""
    arr = tensor.detach().squeeze(0).permute(1, 2, 0).cpu().numpy()
    return np.clip((arr + 1.0) / 2.0, 0.0, 1.0).astype(np.float32)


def upsample_to(tensor: Tensor, dims: tuple[int, int]) -> Tensor:
    if tensor.shape[-2:] == dims:
        return tensor
    return F.interpolate(tensor, size=dims, mode="bilinear", align_corners=False)


class ScaleGenerator(nn.Module):
    """One scale's generator: head conv, residual middle, pre-activation tail.

    The ROI variant modulates the dataflow right in front of every residual
    block with externally supplied style params.
    """

    def __init__(self, config: BlockConfig, branch_kind: str):
        super().__init__()
        c = config.base_channels
        k = config.kernel_size
        pad = k // 2
        self.branch_kind = branch_kind
        self.head = nn.Conv2d(3, c, k, padding=pad)
        if branch_kind == ROI:
            self.blocks = nn.ModuleList(
                RoiResBlock(c, config) for _ in range(config.num_resblocks)
            )
            self.tail_norm: nn.Module = nn.BatchNorm2d(c, track_running_stats=False)
            self.tail_act: nn.Module = nn.LeakyReLU(0.2)
        elif branch_kind == BACKGROUND:
            self.blocks = nn.ModuleList(
                BackgroundResBlock(c, config) for _ in range(config.num_resblocks)
            )
            self.tail_norm = nn.InstanceNorm2d(c, affine=True)
            self.tail_act = nn.ELU()
        else:
            raise ValueError(f"unknown branch kind {branch_kind!r}")
        self.tail = nn.Conv2d(c, 3, k, padding=pad)

    def forward(
        self,
        x: Tensor,
        styles: Sequence[StyleParams] | None = None,
        damping: float = 1.0,
    ) -> Tensor:
        h = self.head(x)
        for i, block in enumerate(self.blocks):
            if styles is not None:
                h = modulate(h, styles[i], damping)
            h = block(h)
        return torch.tanh(self.tail(self.tail_act(self.tail_norm(h))))


class InjectorSet(nn.Module):
    """One style injector per residual block; no parameter sharing."""

    def __init__(self, config: BlockConfig):
        super().__init__()
        self.injectors = nn.ModuleList(
            StyleInjector(
                config.base_channels,
                width=config.base_channels,
                stages=config.injector_stages,
            )
            for _ in range(config.num_resblocks)
        )

    def forward(
        self, aug_image: Tensor, target_shape: tuple[int, int, int]
    ) -> list[StyleParams]:
        return [inj(aug_image, target_shape) for inj in self.injectors]


def module_digest(module: nn.Module) -> str:
    """SHA-256 over the module's parameters in sorted name order."""
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().numpy().astype("<f4").tobytes())
    return digest.hexdigest()


@dataclass
class ScaleModel:
    """Trainable unit at one pyramid level."""

    scale_index: int
    generator: ScaleGenerator
    discriminator: MarkovianDiscriminator
    injectors: InjectorSet | None = None
    noise_amp: float = 1.0
    frozen: bool = False

    def trainable_modules(self) -> list[nn.Module]:
        mods: list[nn.Module] = [self.generator, self.discriminator]
        if self.injectors is not None:
            mods.append(self.injectors)
        return mods

    def generator_parameters(self):
        params = list(self.generator.parameters())
        if self.injectors is not None:
            params += list(self.injectors.parameters())
        return params

    def freeze(self) -> None:
        for module in self.trainable_modules():
            module.requires_grad_(False)
            module.eval()
        self.frozen = True

    def param_hash(self) -> str:
        digest = hashlib.sha256()
        for module in self.trainable_modules():
            digest.update(module_digest(module).encode("ascii"))
        return digest.hexdigest()


@dataclass
class BranchStack:
    """Ordered per-scale models plus the pyramid they were trained against.

    scales[n] pairs with pyramid[n]; index 0 is the finest level.
    """

    branch_kind: str
    scales: list[ScaleModel]
    pyramid: list[np.ndarray]
    config: BlockConfig
    masks: list[np.ndarray] | None = None  # background only: bool H×W per level
    box: RoiBox | None = None  # roi only: source box at the finest scale

    def __post_init__(self) -> None:
        if len(self.scales) != len(self.pyramid):
            raise ValueError("one scale model per pyramid level required")
        if self.branch_kind == ROI and self.masks is not None:
            raise ValueError("roi stacks carry no masks")
        if self.branch_kind == BACKGROUND:
            if self.masks is None or len(self.masks) != len(self.pyramid):
                raise ValueError("background stacks need one mask per level")
            for model in self.scales:
                if model.injectors is not None:
                    raise ValueError("background stacks own no injectors")

    @property
    def num_downsamples(self) -> int:
        return len(self.pyramid) - 1

    @property
    def fully_frozen(self) -> bool:
        return all(m.frozen for m in self.scales)

    def level_dims(self, n: int) -> tuple[int, int]:
        return self.pyramid[n].shape[0], self.pyramid[n].shape[1]

    def stack_digest(self) -> str:
        digest = hashlib.sha256()
        for model in self.scales:
            digest.update(model.param_hash().encode("ascii"))
        return digest.hexdigest()


def build_branch_stack(
    branch_kind: str,
    pyramid: list[np.ndarray],
    config: BlockConfig,
    masks: list[np.ndarray] | None = None,
    box: RoiBox | None = None,
    init_seed: int = 0,
) -> BranchStack:
    """Construct and initialize fresh scale models for every pyramid level.

    The same init_seed always yields bit-identical parameters, which is what
    makes interrupted trainings resumable.
    """
    torch.manual_seed(init_seed)
    scales = []
    for n in range(len(pyramid)):
        generator = init_weights(ScaleGenerator(config, branch_kind))
        discriminator = init_weights(MarkovianDiscriminator(config))
        injectors = None
        if branch_kind == ROI and config.injector_enabled:
            injectors = init_weights(InjectorSet(config))
        scales.append(
            ScaleModel(
                scale_index=n,
                generator=generator,
                discriminator=discriminator,
                injectors=injectors,
            )
        )
    return BranchStack(
        branch_kind=branch_kind,
        scales=scales,
        pyramid=[validate_image(level) for level in pyramid],
        config=config,
        masks=masks,
        box=box,
    )


@dataclass(frozen=True)
class NoiseSpec:
    """Seed plus optional per-scale amplitude overrides (index 0 = finest).

    Without overrides, the coarsest scale draws at amplitude 1 and finer
    scales use the amplitude recorded at training handoff.
    """

    seed: int
    amplitudes: tuple[float, ...] | None = None

    def amplitude_for(self, stack: BranchStack, scale_index: int) -> float:
        if self.amplitudes is not None:
            return self.amplitudes[scale_index]
        if scale_index == stack.num_downsamples:
            return 1.0
        return stack.scales[scale_index].noise_amp


def draw_noise(
    rng: torch.Generator, dims: tuple[int, int], broadcast: bool
) -> Tensor:
    """Gaussian noise map; the coarsest scale shares one channel across RGB."""
    h, w = dims
    if broadcast:
        return torch.randn(1, 1, h, w, generator=rng).expand(1, 3, h, w)
    return torch.randn(1, 3, h, w, generator=rng)


def run_pyramid(
    stack: BranchStack,
    rng: torch.Generator,
    injector_source: Callable[[int], np.ndarray] | None,
    stop_scale: int = 0,
    amplitudes: Sequence[float] | None = None,
    grad_scale: int | None = None,
    damping: float = 1.0,
    require_frozen: bool = True,
) -> Tensor:
    """Coarse-to-fine recursion from the top scale down to stop_scale.

    Each scale adds its generator output to the upsampled previous result;
    the coarsest consumes noise alone.  Returns the internal-domain tensor at
    stop_scale.  grad_scale marks the single scale whose forward runs with
    autograd (training); everything else is detached.
    """
    top = stack.num_downsamples
    if not 0 <= stop_scale <= top:
        raise ValueError(f"stop_scale {stop_scale} outside [0, {top}]")
    prev: Tensor | None = None
    for n in range(top, stop_scale - 1, -1):
        model = stack.scales[n]
        if require_frozen and not model.frozen and n != grad_scale:
            raise UntrainedScaleError(
                f"scale {n} of the {stack.branch_kind} stack is not trained"
            )
        dims = stack.level_dims(n)
        amp = (
            amplitudes[n]
            if amplitudes is not None
            else (1.0 if n == top else model.noise_amp)
        )
        noise = draw_noise(rng, dims, broadcast=(n == top)) * amp
        context = nullcontext() if n == grad_scale else torch.no_grad()
        with context:
            if n == top:
                x_in = noise
                carried = None
            else:
                carried = upsample_to(prev, dims)
                x_in = noise + carried
            styles = None
            if model.injectors is not None:
                if injector_source is None:
                    raise ValueError("roi generation requires an injector source")
                guide = to_internal(injector_source(n)).to(x_in.dtype)
                target = (stack.config.base_channels, dims[0], dims[1])
                styles = model.injectors(guide, target)
            out = model.generator(x_in, styles, damping)
            prev = out if carried is None else out + carried
    assert prev is not None
    return prev


def roi_generate(
    stack: BranchStack,
    noise: NoiseSpec,
    aug: AugmentDescriptor,
    stop_scale: int = 0,
) -> np.ndarray:
    """Sample the ROI branch guided by an augmented copy of its training crop."""
    if stack.branch_kind != ROI:
        raise ValueError(f"expected a roi stack, got {stack.branch_kind}")
    rng = torch.Generator().manual_seed(noise.seed)
    amps = [noise.amplitude_for(stack, n) for n in range(len(stack.scales))]

    def source(n: int) -> np.ndarray:
        return augment.apply(stack.pyramid[n], aug)

    tensor = run_pyramid(
        stack,
        rng,
        source,
        stop_scale=stop_scale,
        amplitudes=amps,
        damping=stack.config.style_damping,
    )
    return to_image(tensor)


def background_generate(
    stack: BranchStack, noise: NoiseSpec, stop_scale: int = 0
) -> np.ndarray:
    """Sample the background branch; the ROI area content is unconstrained."""
    if stack.branch_kind != BACKGROUND:
        raise ValueError(f"expected a background stack, got {stack.branch_kind}")
    rng = torch.Generator().manual_seed(noise.seed)
    amps = [noise.amplitude_for(stack, n) for n in range(len(stack.scales))]
    tensor = run_pyramid(stack, rng, None, stop_scale=stop_scale, amplitudes=amps)
    return to_image(tensor)


def inject_edit(
    stack: BranchStack,
    edited_image: np.ndarray,
    noise: NoiseSpec,
    guide_min_scale: int = 0,
) -> np.ndarray:
    """Drive the frozen ROI branch with an edited crop instead of augmentation.

    edited_image must match the stack's finest-level crop dimensions; it is
    rescaled to every scale and fed to the injectors.  No parameters change.
    guide_min_scale restricts the edit guidance to scales at or above that
    index (coarse scales); finer injectors see the unedited training crop.
    """
    if stack.branch_kind != ROI:
        raise ValueError(f"expected a roi stack, got {stack.branch_kind}")
    if not stack.fully_frozen:
        raise FrozenStackError("editing requires a fully frozen stack")
    edited = validate_image(edited_image)
    if edited.shape[:2] != stack.pyramid[0].shape[:2]:
        raise ValueError(
            f"edited crop dims {edited.shape[:2]} do not match the stack's "
            f"finest level {stack.pyramid[0].shape[:2]}"
        )
    rng = torch.Generator().manual_seed(noise.seed)
    amps = [noise.amplitude_for(stack, n) for n in range(len(stack.scales))]

    def source(n: int) -> np.ndarray:
        if n < guide_min_scale:
            return stack.pyramid[n]
        return resize_image(edited, stack.level_dims(n))

    tensor = run_pyramid(
        stack,
        rng,
        source,
        amplitudes=amps,
        damping=stack.config.style_damping,
    )
    return to_image(tensor)
