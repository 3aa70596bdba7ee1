"""Sample composition over a trained checkpoint.

Every sample is fully determined by (checkpoint, plan): the plan's seed
derives per-stack noise seeds and per-box augmentation descriptors, so a
stored plan regenerates its sample bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import augment
from .augment import AugmentDescriptor
from .generators import NoiseSpec, background_generate, inject_edit, roi_generate
from .imaging import crop_roi, fuse
from .trainer import Checkpoint, derive_seed

__all__ = [
    "SamplePlan",
    "ComposedSample",
    "plan_random_sample",
    "plan_fixed_sample",
    "compose",
    "compose_random",
    "compose_edit",
    "roi_sample",
    "background_sample",
    "roi_stack_names",
    "finest_background_mask",
    "derive_sample_seed",
]


def derive_sample_seed(base: int, *parts) -> int:
    return derive_seed(base, "sample", *parts)


def roi_stack_names(checkpoint: Checkpoint) -> list[str]:
    return [f"roi_{i}" for i in range(len(checkpoint.boxes))]


def finest_background_mask(checkpoint: Checkpoint) -> np.ndarray:
    return checkpoint.stacks["background"].masks[0]


@dataclass(frozen=True)
class SamplePlan:
    """Reproducible recipe for one composed sample."""

    seed: int
    band_px: int
    descriptors: tuple[AugmentDescriptor, ...]  # one per ROI box

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "band_px": self.band_px,
            "descriptors": [d.to_json() for d in self.descriptors],
        }

    @classmethod
    def from_json(cls, data: dict) -> "SamplePlan":
        return cls(
            seed=int(data["seed"]),
            band_px=int(data["band_px"]),
            descriptors=tuple(
                AugmentDescriptor.from_json(d) for d in data["descriptors"]
            ),
        )


@dataclass(frozen=True)
class ComposedSample:
    whole: np.ndarray
    roi_crops: tuple[np.ndarray, ...]
    background: np.ndarray
    plan: SamplePlan


def plan_random_sample(
    checkpoint: Checkpoint,
    seed: int,
    band_px: int,
    allowed_kinds: tuple[str, ...] | None = None,
) -> SamplePlan:
    kinds = allowed_kinds or checkpoint.config.augment_kinds
    descriptors = tuple(
        augment.sample_descriptor(derive_seed(seed, "augment", i), kinds)
        for i in range(len(checkpoint.boxes))
    )
    return SamplePlan(seed=seed, band_px=band_px, descriptors=descriptors)


def plan_fixed_sample(
    checkpoint: Checkpoint, seed: int, band_px: int, descriptor: AugmentDescriptor
) -> SamplePlan:
    """Same descriptor for every box: animation frames and level sweeps."""
    return SamplePlan(
        seed=seed,
        band_px=band_px,
        descriptors=tuple(descriptor for _ in checkpoint.boxes),
    )


def _roi_noise(plan_seed: int, box_index: int) -> NoiseSpec:
    return NoiseSpec(seed=derive_seed(plan_seed, "noise", "roi", box_index))


def _background_noise(plan_seed: int) -> NoiseSpec:
    return NoiseSpec(seed=derive_seed(plan_seed, "noise", "background"))


def compose(checkpoint: Checkpoint, plan: SamplePlan) -> ComposedSample:
    """ROI branch per box + background branch, fused with the plan's band."""
    crops = []
    for i, name in enumerate(roi_stack_names(checkpoint)):
        crops.append(
            roi_generate(
                checkpoint.stacks[name], _roi_noise(plan.seed, i), plan.descriptors[i]
            )
        )
    background = background_generate(
        checkpoint.stacks["background"], _background_noise(plan.seed)
    )
    whole = fuse(list(zip(crops, checkpoint.boxes)), background, plan.band_px)
    return ComposedSample(
        whole=whole, roi_crops=tuple(crops), background=background, plan=plan
    )


def compose_random(checkpoint: Checkpoint, seed: int, band_px: int) -> ComposedSample:
    return compose(checkpoint, plan_random_sample(checkpoint, seed, band_px))


def compose_edit(
    checkpoint: Checkpoint,
    edited_image: np.ndarray,
    seed: int,
    band_px: int,
    guide_min_scale: int = 0,
) -> ComposedSample:
    """Feed per-box crops of an edited image to the frozen injectors and fuse
    the results over a freshly generated background."""
    if edited_image.shape[:2] != checkpoint.source_image.shape[:2]:
        raise ValueError(
            f"edited image dims {edited_image.shape[:2]} do not match source "
            f"{checkpoint.source_image.shape[:2]}"
        )
    crops = []
    for i, (name, box) in enumerate(zip(roi_stack_names(checkpoint), checkpoint.boxes)):
        edited_crop = crop_roi(edited_image, box)
        crops.append(
            inject_edit(
                checkpoint.stacks[name],
                edited_crop,
                _roi_noise(seed, i),
                guide_min_scale=guide_min_scale,
            )
        )
    background = background_generate(
        checkpoint.stacks["background"], _background_noise(seed)
    )
    whole = fuse(list(zip(crops, checkpoint.boxes)), background, band_px)
    plan = SamplePlan(seed=seed, band_px=band_px, descriptors=())
    return ComposedSample(
        whole=whole, roi_crops=tuple(crops), background=background, plan=plan
    )


def roi_sample(checkpoint: Checkpoint, box_index: int, seed: int) -> np.ndarray:
    """A single random ROI-branch sample at the crop's native size."""
    name = f"roi_{box_index}"
    desc = augment.sample_descriptor(
        derive_seed(seed, "augment", box_index), checkpoint.config.augment_kinds
    )
    return roi_generate(checkpoint.stacks[name], _roi_noise(seed, box_index), desc)


def background_sample(checkpoint: Checkpoint, seed: int) -> np.ndarray:
    return background_generate(checkpoint.stacks["background"], _background_noise(seed))
