"""Image I/O, pyramid construction, ROI extraction, masking and fusion.

Images are H×W×3 float32 arrays with RGB values in [0, 1].  All functions
here are pure: they never mutate their inputs and are safe to call
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from PIL import Image as PILImage

__all__ = [
    "RoiBox",
    "PyramidSpec",
    "MaskedImage",
    "validate_image",
    "load_image",
    "save_image",
    "load_mask",
    "save_mask",
    "resize_image",
    "build_pyramid",
    "crop_roi",
    "scale_box",
    "mask_background",
    "fuse",
]


def validate_image(image: np.ndarray, min_dim: int | None = None) -> np.ndarray:
    """Check an array against the image contract and return it as float32."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected H×W×3 image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(
            f"image values outside [0, 1]: range [{arr.min():.4f}, {arr.max():.4f}]"
        )
    if min_dim is not None and min(arr.shape[0], arr.shape[1]) < min_dim:
        raise ValueError(
            f"image {arr.shape[0]}×{arr.shape[1]} is smaller than the required "
            f"minimum dimension {min_dim}"
        )
    return arr.astype(np.float32, copy=False)


@dataclass(frozen=True)
class RoiBox:
    """Axis-aligned region of interest, inclusive-exclusive pixel coordinates."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box: ({self.x_min},{self.y_min},{self.x_max},{self.y_max})"
            )
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError(f"box origin must be non-negative: {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    def check_inside(self, height: int, width: int) -> None:
        if self.x_max > width:
            raise ValueError(f"box x_max={self.x_max} exceeds image width {width}")
        if self.y_max > height:
            raise ValueError(f"box y_max={self.y_max} exceeds image height {height}")

    def intersects(self, other: "RoiBox") -> bool:
        return (
            self.x_min < other.x_max
            and other.x_min < self.x_max
            and self.y_min < other.y_max
            and other.y_min < self.y_max
        )

    def to_json(self) -> dict:
        return {
            "x_min": self.x_min,
            "y_min": self.y_min,
            "x_max": self.x_max,
            "y_max": self.y_max,
        }

    @classmethod
    def from_json(cls, data: dict) -> "RoiBox":
        return cls(
            x_min=int(data["x_min"]),
            y_min=int(data["y_min"]),
            x_max=int(data["x_max"]),
            y_max=int(data["y_max"]),
        )


def check_boxes(boxes: Sequence[RoiBox], height: int, width: int) -> None:
    """Validate a box set: in bounds and pairwise non-overlapping."""
    for box in boxes:
        box.check_inside(height, width)
    for i, a in enumerate(boxes):
        for b in boxes[i + 1 :]:
            if a.intersects(b):
                raise ValueError(f"overlapping ROI boxes: {a} and {b}")


@dataclass(frozen=True)
class PyramidSpec:
    """Downsampling schedule: num_scales applications of 1/rescale_factor."""

    rescale_factor: float = 4.0 / 3.0
    num_scales: int = 0
    min_coarse_dim: int = 25

    def __post_init__(self) -> None:
        if self.rescale_factor <= 1.0:
            raise ValueError(f"rescale_factor must be > 1, got {self.rescale_factor}")
        if self.num_scales < 0:
            raise ValueError(f"num_scales must be >= 0, got {self.num_scales}")

    def level_dims(self, height: int, width: int, level: int) -> tuple[int, int]:
        scale = self.rescale_factor**level
        return round(height / scale), round(width / scale)

    @classmethod
    def derive(
        cls,
        height: int,
        width: int,
        rescale_factor: float = 4.0 / 3.0,
        min_coarse_dim: int = 25,
    ) -> "PyramidSpec":
        """Largest num_scales whose coarsest level keeps min dim >= min_coarse_dim."""
        if min(height, width) < min_coarse_dim:
            raise ValueError(
                f"image {height}×{width} already smaller than min_coarse_dim "
                f"{min_coarse_dim}"
            )
        n = 0
        while True:
            scale = rescale_factor ** (n + 1)
            if min(round(height / scale), round(width / scale)) < min_coarse_dim:
                break
            n += 1
        return cls(
            rescale_factor=rescale_factor, num_scales=n, min_coarse_dim=min_coarse_dim
        )

    def to_json(self) -> dict:
        return {
            "rescale_factor": self.rescale_factor,
            "num_scales": self.num_scales,
            "min_coarse_dim": self.min_coarse_dim,
        }

    @classmethod
    def from_json(cls, data: dict) -> "PyramidSpec":
        return cls(
            rescale_factor=float(data["rescale_factor"]),
            num_scales=int(data["num_scales"]),
            min_coarse_dim=int(data["min_coarse_dim"]),
        )


@dataclass(frozen=True)
class MaskedImage:
    """An image with its ROI pixels zeroed plus the binary visibility mask.

    mask is H×W bool: True = background (visible), False = ROI (hidden).
    """

    image: np.ndarray
    mask: np.ndarray


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG/JPEG file into an H×W×3 float32 array in [0, 1]."""
    with PILImage.open(path) as img:
        rgb = img.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float32) / 255.0
    return arr


def save_image(image: np.ndarray, path: str | Path) -> Path:
    """Write an image as 8-bit PNG; values are rounded, not dithered."""
    arr = validate_image(image)
    data = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(data, mode="RGB").save(path, format="PNG")
    return path


def save_mask(mask: np.ndarray, path: str | Path) -> Path:
    """Write a binary mask as single-channel PNG (background=255, ROI=0)."""
    data = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(data, mode="L").save(path, format="PNG")
    return path


def load_mask(path: str | Path) -> np.ndarray:
    with PILImage.open(path) as img:
        data = np.asarray(img.convert("L"))
    return data >= 128


def resize_image(image: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    """Bilinear resize to (height, width); anti-aliased when shrinking."""
    arr = validate_image(image)
    h, w = dims
    if (h, w) == arr.shape[:2]:
        return arr.copy()
    if h < 1 or w < 1:
        raise ValueError(f"target dims must be positive, got {dims}")
    tensor = torch.from_numpy(np.ascontiguousarray(arr)).permute(2, 0, 1).unsqueeze(0)
    antialias = h < arr.shape[0] or w < arr.shape[1]
    out = torch.nn.functional.interpolate(
        tensor, size=(h, w), mode="bilinear", align_corners=False, antialias=antialias
    )
    result = out.squeeze(0).permute(1, 2, 0).numpy()
    return np.clip(result, 0.0, 1.0)


def build_pyramid(image: np.ndarray, spec: PyramidSpec) -> list[np.ndarray]:
    """Downsampling pyramid [finest, ..., coarsest] with num_scales+1 levels.

    Level n has dims round(H / r^n) × round(W / r^n); level 0 is the input
    unchanged.  Raises if the coarsest level would fall below
    spec.min_coarse_dim.
    """
    arr = validate_image(image)
    h, w = arr.shape[:2]
    coarse_h, coarse_w = spec.level_dims(h, w, spec.num_scales)
    if min(coarse_h, coarse_w) < spec.min_coarse_dim:
        raise ValueError(
            f"coarsest level would be {coarse_h}×{coarse_w}, below "
            f"min_coarse_dim {spec.min_coarse_dim}"
        )
    levels = [arr.copy()]
    for n in range(1, spec.num_scales + 1):
        levels.append(resize_image(arr, spec.level_dims(h, w, n)))
    return levels


def crop_roi(image: np.ndarray, box: RoiBox) -> np.ndarray:
    """Cut the box out of the image; output dims are height(box)×width(box)."""
    arr = validate_image(image)
    box.check_inside(arr.shape[0], arr.shape[1])
    return arr[box.y_min : box.y_max, box.x_min : box.x_max].copy()


def scale_box(
    box: RoiBox, from_dims: tuple[int, int], to_dims: tuple[int, int]
) -> RoiBox:
    """Map a box between pyramid levels, keeping at least 1 px extent."""
    fh, fw = from_dims
    th, tw = to_dims
    x_min = round(box.x_min * tw / fw)
    x_max = round(box.x_max * tw / fw)
    y_min = round(box.y_min * th / fh)
    y_max = round(box.y_max * th / fh)
    x_min = min(x_min, tw - 1)
    y_min = min(y_min, th - 1)
    x_max = max(min(x_max, tw), x_min + 1)
    y_max = max(min(y_max, th), y_min + 1)
    return RoiBox(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max)


def mask_background(image: np.ndarray, boxes: Sequence[RoiBox]) -> MaskedImage:
    """Zero out every box and return the result with its visibility mask."""
    arr = validate_image(image)
    check_boxes(list(boxes), arr.shape[0], arr.shape[1])
    mask = np.ones(arr.shape[:2], dtype=bool)
    out = arr.copy()
    for box in boxes:
        mask[box.y_min : box.y_max, box.x_min : box.x_max] = False
        out[box.y_min : box.y_max, box.x_min : box.x_max] = 0.0
    return MaskedImage(image=out, mask=mask)


def _blend_weights(height: int, width: int, band_px: int) -> np.ndarray:
    """ROI weight ramp: (d+1)/(band_px+1) within band_px of the border, 1 inside."""
    if band_px <= 0:
        return np.ones((height, width), dtype=np.float32)
    rows = np.arange(height)
    cols = np.arange(width)
    dist_r = np.minimum(rows, height - 1 - rows)[:, None]
    dist_c = np.minimum(cols, width - 1 - cols)[None, :]
    dist = np.minimum(dist_r, dist_c).astype(np.float32)
    return np.minimum((dist + 1.0) / (band_px + 1.0), 1.0)


def fuse(
    roi_samples: Sequence[tuple[np.ndarray, RoiBox]],
    background: np.ndarray,
    band_px: int = 3,
) -> np.ndarray:
    """Paste ROI samples over the background with a linear cross-fade band.

    Outside every box the output equals the background.  Inside a box the
    ROI sample is blended over a band of band_px pixels at the border and
    pasted verbatim beyond it; band_px=0 is a hard paste.
    """
    bg = validate_image(background)
    if band_px < 0:
        raise ValueError(f"band_px must be >= 0, got {band_px}")
    out = bg.copy()
    for sample, box in roi_samples:
        patch = validate_image(sample)
        box.check_inside(bg.shape[0], bg.shape[1])
        if patch.shape[:2] != (box.height, box.width):
            raise ValueError(
                f"ROI sample dims {patch.shape[:2]} do not match box "
                f"{box.height}×{box.width}"
            )
        weights = _blend_weights(box.height, box.width, band_px)[:, :, None]
        region = out[box.y_min : box.y_max, box.x_min : box.x_max]
        out[box.y_min : box.y_max, box.x_min : box.x_max] = (
            weights * patch + (1.0 - weights) * region
        )
    return np.clip(out, 0.0, 1.0)
