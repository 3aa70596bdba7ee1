"""Coarse-to-fine training of a branch stack, plus checkpoint persistence.

Scales train strictly from coarsest to finest; each gets a fresh Adam pair,
runs its discriminator/generator steps, records its noise amplitude and is
frozen before the next one starts.  All randomness is drawn from generators
derived from (seed, branch tag, scale), so the two branches can train
concurrently or resume mid-run without changing results.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from . import augment
from .blocks import BlockConfig
from .generators import (
    BACKGROUND,
    ROI,
    BranchStack,
    build_branch_stack,
    run_pyramid,
    to_image,
    to_internal,
    upsample_to,
)
from .imaging import (
    PyramidSpec,
    RoiBox,
    build_pyramid,
    check_boxes,
    crop_roi,
    load_image,
    mask_background,
    save_image,
    scale_box,
    validate_image,
)
from .losses import (
    ReconAnchor,
    adversarial_losses,
    cosine_loss,
    discriminator_total,
    generator_total,
    gradient_penalty,
    mse_loss,
    weights_for_scale,
)

__all__ = [
    "AblationFlags",
    "TrainConfig",
    "TrainingDivergedError",
    "ChecksumError",
    "train_branch",
    "reconstruction_pass",
    "save_checkpoint",
    "load_checkpoint",
    "Checkpoint",
    "derive_seed",
]

ProgressSink = Callable[[dict], None]

CHECKPOINT_FORMAT = "mogan-checkpoint-v1"


class TrainingDivergedError(RuntimeError):
    def __init__(self, branch: str, scale: int, step: int, term: str):
        super().__init__(
            f"non-finite {term} while training {branch} scale {scale} at step {step}"
        )
        self.branch = branch
        self.scale = scale
        self.step = step


class ChecksumError(RuntimeError):
    """Checkpoint blob does not match its manifest digest."""


@dataclass(frozen=True)
class AblationFlags:
    """Component toggles reproducing the ablation configurations."""

    disable_deformable: bool = False
    disable_channel_attention: bool = False
    disable_style_injector: bool = False
    disable_gated_conv: bool = False

    @classmethod
    def preset(cls, name: str) -> "AblationFlags":
        presets = {
            "full": cls(),
            "no_deformable": cls(disable_deformable=True),
            "no_attention": cls(disable_channel_attention=True),
            "no_injector": cls(disable_style_injector=True),
            # All extras off: both branches reduce to the plain single-image
            # pyramid GAN used as the comparison baseline.
            "baseline": cls(
                disable_deformable=True,
                disable_channel_attention=True,
                disable_style_injector=True,
                disable_gated_conv=True,
            ),
        }
        if name not in presets:
            raise ValueError(f"unknown ablation preset {name!r}; options: {sorted(presets)}")
        return presets[name]

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "AblationFlags":
        return cls(**data)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    adam_beta1: float = 0.0
    adam_beta2: float = 0.99
    iters_per_scale: int = 2000
    d_steps: int = 3
    g_steps: int = 3
    alpha: float = 50.0
    lambda_gp: float = 1.0
    seed: int = 0
    noise_amp_factor: float = 0.1
    gp_point: str = "interpolate"
    style_damping: float = 1.0
    base_channels: int = 32
    kernel_size: int = 3
    num_resblocks: int = 3
    injector_stages: int = 3
    augment_kinds: tuple[str, ...] = (
        "vflip",
        "hflip",
        "rotation",
        "affine",
        "perspective",
        "erasing",
    )
    rescale_factor: float = 4.0 / 3.0
    min_coarse_dim: int = 25
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.iters_per_scale < 1:
            raise ValueError(f"iters_per_scale must be >= 1, got {self.iters_per_scale}")
        if self.d_steps < 1 or self.g_steps < 1:
            raise ValueError("d_steps and g_steps must be >= 1")

    @classmethod
    def profile(cls, name: str, **overrides) -> "TrainConfig":
        profiles = {"desk": {"iters_per_scale": 200}, "paper": {"iters_per_scale": 2000}}
        if name not in profiles:
            raise ValueError(f"unknown profile {name!r}; options: desk, paper")
        return cls(**{**profiles[name], **overrides})

    def block_config(self, branch_kind: str) -> BlockConfig:
        """Assemble the block toggles for a branch, ablations applied."""
        if branch_kind == ROI:
            return BlockConfig(
                base_channels=self.base_channels,
                kernel_size=self.kernel_size,
                num_resblocks=self.num_resblocks,
                attention_enabled=not self.ablation.disable_channel_attention,
                deform_enabled=not self.ablation.disable_deformable,
                injector_enabled=not self.ablation.disable_style_injector,
                injector_stages=self.injector_stages,
                style_damping=self.style_damping,
            )
        if branch_kind == BACKGROUND:
            return BlockConfig(
                base_channels=self.base_channels,
                kernel_size=self.kernel_size,
                num_resblocks=self.num_resblocks,
                attention_enabled=not self.ablation.disable_channel_attention,
                gated_enabled=not self.ablation.disable_gated_conv,
                injector_enabled=False,
                style_damping=self.style_damping,
            )
        raise ValueError(f"unknown branch kind {branch_kind!r}")

    def to_json(self) -> dict:
        data = asdict(self)
        data["augment_kinds"] = list(self.augment_kinds)
        data["ablation"] = self.ablation.to_json()
        return data

    @classmethod
    def from_json(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        data["augment_kinds"] = tuple(data.get("augment_kinds", cls.augment_kinds))
        data["ablation"] = AblationFlags.from_json(data.get("ablation", {}))
        return cls(**data)


def derive_seed(base: int, *parts) -> int:
    """Stable sub-seed from a base seed and a tag path."""
    digest = hashlib.sha256(repr((base, parts)).encode("ascii")).digest()
    return int.from_bytes(digest[:4], "little")


def _select_unmasked(tensor: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
    if mask is None:
        return tensor.flatten()
    return tensor.squeeze(0)[:, mask].flatten()


def _recon_input(
    stack: BranchStack, scale: int, base: torch.Tensor | None
) -> torch.Tensor:
    h, w = stack.level_dims(scale)
    if base is None:
        return torch.zeros(1, 3, h, w)
    return base


def _scale_recon_forward(
    stack: BranchStack, scale: int, base: torch.Tensor | None
) -> torch.Tensor:
    """Reconstruction forward at one scale: zero noise, identity guidance."""
    model = stack.scales[scale]
    x_in = _recon_input(stack, scale, base)
    styles = None
    if model.injectors is not None:
        guide = to_internal(stack.pyramid[scale])
        target = (stack.config.base_channels, *stack.level_dims(scale))
        styles = model.injectors(guide, target)
    out = model.generator(x_in, styles, stack.config.style_damping)
    return out if base is None else out + base


def _recon_chain(stack: BranchStack, stop_scale: int) -> torch.Tensor:
    """Full zero-noise reconstruction down to stop_scale (no gradients)."""
    anchor = ReconAnchor(num_levels=len(stack.pyramid))
    rng = torch.Generator().manual_seed(0)  # amplitudes are all zero
    source = (lambda n: stack.pyramid[n]) if stack.branch_kind == ROI else None
    return run_pyramid(
        stack,
        rng,
        source,
        stop_scale=stop_scale,
        amplitudes=anchor.amplitudes,
        damping=stack.config.style_damping,
        require_frozen=False,
    )


def reconstruction_pass(stack: BranchStack, scale: int) -> tuple[np.ndarray, float, float]:
    """Generate with the fixed reconstruction anchor and score it against the
    training image at that scale.  Returns (image, cosine term, pixel term)
    in the [0,1] image domain; the background branch restricts both terms to
    its visible (mask=1) pixels."""
    with torch.no_grad():
        tensor = _recon_chain(stack, scale)
    image = to_image(tensor)
    target = stack.pyramid[scale]
    if stack.branch_kind == BACKGROUND:
        mask = stack.masks[scale]
        l1 = cosine_loss(image[mask], target[mask])
        l2 = mse_loss(image, target, mask=mask)
    else:
        l1 = cosine_loss(image, target)
        l2 = mse_loss(image, target)
    return image, float(l1), float(l2)


def _random_fake(
    stack: BranchStack,
    scale: int,
    rng: torch.Generator,
    aug_rng: np.random.Generator,
    config: TrainConfig,
    grad: bool,
) -> torch.Tensor:
    """One random-pass sample down to `scale`, optionally with gradients there."""
    source = None
    if stack.branch_kind == ROI:
        desc = augment.sample_descriptor(
            int(aug_rng.integers(2**31 - 1)), config.augment_kinds
        )
        source = lambda n: augment.apply(stack.pyramid[n], desc)
    return run_pyramid(
        stack,
        rng,
        source,
        stop_scale=scale,
        grad_scale=scale if grad else None,
        damping=stack.config.style_damping,
        require_frozen=False,
    )


def _check_finite(value: torch.Tensor, branch: str, scale: int, step: int, term: str):
    if not torch.isfinite(value).all():
        raise TrainingDivergedError(branch, scale, step, term)


def _train_scale(
    stack: BranchStack,
    scale: int,
    config: TrainConfig,
    progress_sink: ProgressSink | None,
    tag: str,
) -> None:
    model = stack.scales[scale]
    top = stack.num_downsamples
    weights = weights_for_scale(
        stack.branch_kind, scale, top, alpha=config.alpha, lambda_gp=config.lambda_gp
    )
    torch_rng = torch.Generator().manual_seed(derive_seed(config.seed, tag, scale, "torch"))
    aug_rng = np.random.default_rng(derive_seed(config.seed, tag, scale, "augment"))

    # Noise amplitude at handoff: RMSE between the upsampled reconstruction
    # from the previous scale and this scale's target.
    recon_base = None
    if scale < top:
        with torch.no_grad():
            prev = _recon_chain(stack, scale + 1)
            recon_base = upsample_to(prev, stack.level_dims(scale))
        target_t = to_internal(stack.pyramid[scale])
        rmse = float(torch.sqrt(((recon_base - target_t) ** 2).mean()))
        model.noise_amp = config.noise_amp_factor * rmse
    else:
        model.noise_amp = 1.0

    real = to_internal(stack.pyramid[scale])
    mask_t = None
    if stack.branch_kind == BACKGROUND:
        mask_t = torch.from_numpy(stack.masks[scale])
    target_flat = _select_unmasked(real, mask_t)

    opt_g = torch.optim.Adam(
        model.generator_parameters(),
        lr=config.lr,
        betas=(config.adam_beta1, config.adam_beta2),
    )
    opt_d = torch.optim.Adam(
        model.discriminator.parameters(),
        lr=config.lr,
        betas=(config.adam_beta1, config.adam_beta2),
    )

    for step in range(config.iters_per_scale):
        for _ in range(config.d_steps):
            with torch.no_grad():
                fake = _random_fake(stack, scale, torch_rng, aug_rng, config, grad=False)
            d_real = model.discriminator(real)
            d_fake = model.discriminator(fake)
            _, d_term = adversarial_losses(d_real, d_fake)
            gp = gradient_penalty(
                model.discriminator, real, fake, seed=torch_rng, point=config.gp_point
            )
            d_loss = discriminator_total(d_term, gp, weights)
            _check_finite(d_loss, stack.branch_kind, scale, step, "discriminator loss")
            opt_d.zero_grad()
            d_loss.backward()
            opt_d.step()

        for _ in range(config.g_steps):
            fake = _random_fake(stack, scale, torch_rng, aug_rng, config, grad=True)
            adv = -model.discriminator(fake).mean()
            recon = _scale_recon_forward(stack, scale, recon_base)
            l1 = cosine_loss(_select_unmasked(recon, mask_t), target_flat)
            l2 = mse_loss(recon, real, mask=mask_t)
            g_loss = generator_total(adv, l1, l2, weights)
            _check_finite(g_loss, stack.branch_kind, scale, step, "generator loss")
            opt_g.zero_grad()
            g_loss.backward()
            opt_g.step()

        if progress_sink is not None:
            progress_sink(
                {
                    "branch": tag,
                    "scale": scale,
                    "step": step,
                    "l0_g": float(adv.detach()),
                    "l0_d": float(d_term.detach()),
                    "l1": float(l1.detach()),
                    "l2": float(l2.detach()),
                    "gp": float(gp.detach()),
                }
            )

    model.freeze()


def train_branch(
    stack: BranchStack,
    config: TrainConfig,
    progress_sink: ProgressSink | None = None,
    on_scale_complete: Callable[[BranchStack, int], None] | None = None,
    tag: str | None = None,
) -> BranchStack:
    """Train every unfrozen scale, coarsest first, freezing each when done.

    The tag names this stack's RNG stream (and its progress records), so two
    stacks trained concurrently under different tags never share randomness.
    Resuming is implicit: scales already frozen (restored from a checkpoint)
    are skipped, and per-scale RNG streams make the result identical to an
    uninterrupted run.
    """
    top = stack.num_downsamples
    tag = tag if tag is not None else stack.branch_kind
    for n in range(top, -1, -1):
        if stack.scales[n].frozen:
            continue
        _train_scale(stack, n, config, progress_sink, tag)
        if on_scale_complete is not None:
            on_scale_complete(stack, n)
    return stack


# ---------------------------------------------------------------------------
# Checkpoint persistence
#
# Layout: <dir>/manifest.json, <dir>/source.png and one blob per module at
# <dir>/<stack>/scale_<n>_<G|D|SI>.bin.  A blob is a sequence of flat
# little-endian float32 arrays, each preceded by a shape header (rank, then
# dims, as uint32); array order is the manifest's parameter list.
# ---------------------------------------------------------------------------


def _write_blob(path: Path, module: torch.nn.Module) -> tuple[str, list]:
    names = sorted(module.state_dict().keys())
    state = module.state_dict()
    chunks = []
    params = []
    for name in names:
        arr = state[name].detach().cpu().numpy().astype("<f4")
        header = struct.pack("<I", arr.ndim) + struct.pack(
            f"<{arr.ndim}I", *arr.shape
        )
        chunks.append(header + arr.tobytes())
        params.append({"name": name, "shape": list(arr.shape)})
    blob = b"".join(chunks)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
    return hashlib.sha256(blob).hexdigest(), params


def _read_blob(path: Path, expected_digest: str, params: list) -> dict:
    blob = path.read_bytes()
    digest = hashlib.sha256(blob).hexdigest()
    if digest != expected_digest:
        raise ChecksumError(
            f"{path.name}: digest {digest[:12]}… does not match manifest "
            f"{expected_digest[:12]}…"
        )
    state = {}
    offset = 0
    for entry in params:
        (rank,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        shape = struct.unpack_from(f"<{rank}I", blob, offset)
        offset += 4 * rank
        if list(shape) != list(entry["shape"]):
            raise ChecksumError(
                f"{path.name}: stored shape {shape} does not match manifest "
                f"{entry['shape']} for {entry['name']}"
            )
        count = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        state[entry["name"]] = torch.from_numpy(data.copy().reshape(shape))
    if offset != len(blob):
        raise ChecksumError(f"{path.name}: trailing bytes after last array")
    return state


@dataclass
class Checkpoint:
    source_image: np.ndarray
    boxes: list[RoiBox]
    pyramid_spec: PyramidSpec
    config: TrainConfig
    stacks: dict[str, BranchStack]
    manifest: dict


_BLOB_KEYS = {"G": "generator", "D": "discriminator", "SI": "injectors"}


def save_checkpoint(
    directory: str | Path,
    source_image: np.ndarray,
    boxes: list[RoiBox],
    pyramid_spec: PyramidSpec,
    config: TrainConfig,
    stacks: dict[str, BranchStack],
) -> Path:
    """Persist manifest + parameter blobs; partial (mid-training) stacks are
    saved with only their frozen scales."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_image(source_image, directory / "source.png")
    manifest: dict = {
        "format": CHECKPOINT_FORMAT,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "pyramid_spec": pyramid_spec.to_json(),
        "roi_boxes": [box.to_json() for box in boxes],
        "config": config.to_json(),
        "stacks": {},
    }
    for name, stack in stacks.items():
        scales = []
        for model in stack.scales:
            if not model.frozen:
                continue
            blobs = {}
            for tag, attr in _BLOB_KEYS.items():
                module = getattr(model, attr)
                if module is None:
                    continue
                rel = f"{name}/scale_{model.scale_index}_{tag}.bin"
                digest, params = _write_blob(directory / rel, module)
                blobs[tag] = {"file": rel, "digest": digest, "params": params}
            scales.append(
                {
                    "index": model.scale_index,
                    "noise_amp": model.noise_amp,
                    "blobs": blobs,
                }
            )
        manifest["stacks"][name] = {
            "branch_kind": stack.branch_kind,
            "box": stack.box.to_json() if stack.box is not None else None,
            "num_levels": len(stack.pyramid),
            "frozen_scales": [s["index"] for s in scales],
            "scales": scales,
        }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return directory


def _load_into_stack(directory: Path, entry: dict, stack: BranchStack) -> None:
    for scale_entry in entry["scales"]:
        model = stack.scales[scale_entry["index"]]
        model.noise_amp = float(scale_entry["noise_amp"])
        for tag, attr in _BLOB_KEYS.items():
            if tag not in scale_entry["blobs"]:
                continue
            blob = scale_entry["blobs"][tag]
            state = _read_blob(directory / blob["file"], blob["digest"], blob["params"])
            getattr(model, attr).load_state_dict(state, strict=True)
        model.freeze()


def load_checkpoint(directory: str | Path) -> Checkpoint:
    """Rebuild stacks from a checkpoint directory, verifying every digest.

    Scales missing from the manifest (an interrupted run) come back freshly
    initialized from the config seed, ready for train_branch to resume.
    """
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a recognized checkpoint: {directory}")
    source = load_image(directory / "source.png")
    boxes = [RoiBox.from_json(b) for b in manifest["roi_boxes"]]
    spec = PyramidSpec.from_json(manifest["pyramid_spec"])
    config = TrainConfig.from_json(manifest["config"])
    stacks = build_project_stacks(source, boxes, spec, config)
    for name, entry in manifest["stacks"].items():
        _load_into_stack(directory, entry, stacks[name])
    return Checkpoint(
        source_image=source,
        boxes=boxes,
        pyramid_spec=spec,
        config=config,
        stacks=stacks,
        manifest=manifest,
    )


def build_project_stacks(
    source_image: np.ndarray,
    boxes: list[RoiBox],
    pyramid_spec: PyramidSpec,
    config: TrainConfig,
) -> dict[str, BranchStack]:
    """Fresh (untrained) stacks for a training image and its ROI boxes:
    one ROI stack per box plus one background stack over the masked image."""
    image = validate_image(source_image, min_dim=25)
    h, w = image.shape[:2]
    check_boxes(boxes, h, w)
    stacks: dict[str, BranchStack] = {}
    for i, box in enumerate(boxes):
        crop = crop_roi(image, box)
        crop_spec = PyramidSpec.derive(
            crop.shape[0],
            crop.shape[1],
            rescale_factor=pyramid_spec.rescale_factor,
            min_coarse_dim=pyramid_spec.min_coarse_dim,
        )
        pyramid = build_pyramid(crop, crop_spec)
        name = f"roi_{i}"
        stacks[name] = build_branch_stack(
            ROI,
            pyramid,
            config.block_config(ROI),
            box=box,
            init_seed=derive_seed(config.seed, name, "init"),
        )
    bg_pyramid = build_pyramid(image, pyramid_spec)
    masks = []
    masked_levels = []
    for level in bg_pyramid:
        lh, lw = level.shape[:2]
        level_boxes = [scale_box(b, (h, w), (lh, lw)) for b in boxes]
        masked = mask_background(level, level_boxes)
        masks.append(masked.mask)
        masked_levels.append(masked.image)
    stacks["background"] = build_branch_stack(
        BACKGROUND,
        masked_levels,
        config.block_config(BACKGROUND),
        masks=masks,
        init_seed=derive_seed(config.seed, "background", "init"),
    )
    return stacks
