"""Structure-preserving augmentation family with a continuous level control.

Every transform is a pure function of (image, descriptor): the descriptor's
seed fixes all auxiliary randomness (directions, corner displacements, erase
placement) and the level scales the magnitude, so level=0 is always the
identity.  Geometric transforms keep the input dimensions and fill vacated
areas with zeros.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import torch

from .imaging import validate_image

__all__ = [
    "KINDS",
    "AugmentDescriptor",
    "AugmentLimits",
    "apply",
    "sample_descriptor",
    "level_schedule",
]

KINDS = ("identity", "vflip", "hflip", "rotation", "affine", "perspective", "erasing")

# Kinds whose effect varies smoothly with level (flips are discrete).
CONTINUOUS_KINDS = ("rotation", "affine", "perspective", "erasing")


@dataclass(frozen=True)
class AugmentLimits:
    """Level→parameter mapping at level=1; magnitudes scale linearly below."""

    rotation_max_deg: float = 30.0
    affine_max: float = 0.10
    perspective_max: float = 0.20
    erase_max_area: float = 0.20


DEFAULT_LIMITS = AugmentLimits()


@dataclass(frozen=True)
class AugmentDescriptor:
    kind: str
    level: float
    seed: int

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown augmentation kind {self.kind!r}")
        if not 0.0 <= self.level <= 1.0:
            raise ValueError(f"level must be in [0, 1], got {self.level}")

    def to_json(self) -> dict:
        return {"kind": self.kind, "level": self.level, "seed": self.seed}

    @classmethod
    def from_json(cls, data: dict) -> "AugmentDescriptor":
        return cls(kind=data["kind"], level=float(data["level"]), seed=int(data["seed"]))


IDENTITY = AugmentDescriptor(kind="identity", level=0.0, seed=0)


def _warp(image: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Warp with a 3×3 homography mapping output pixel centers to source ones."""
    h, w = image.shape[:2]
    ys, xs = np.meshgrid(
        np.arange(h, dtype=np.float64) + 0.5,
        np.arange(w, dtype=np.float64) + 0.5,
        indexing="ij",
    )
    ones = np.ones_like(xs)
    coords = np.stack([xs, ys, ones], axis=-1) @ matrix.T
    src_x = coords[..., 0] / coords[..., 2]
    src_y = coords[..., 1] / coords[..., 2]
    # align_corners=False convention: pixel center j+0.5 sits at (2j+1)/W - 1.
    grid = np.stack([2.0 * src_x / w - 1.0, 2.0 * src_y / h - 1.0], axis=-1)
    grid_t = torch.from_numpy(grid.astype(np.float32)).unsqueeze(0)
    img_t = torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1).unsqueeze(0)
    out = torch.nn.functional.grid_sample(
        img_t, grid_t, mode="bilinear", padding_mode="zeros", align_corners=False
    )
    return out.squeeze(0).permute(1, 2, 0).numpy()


def _rotation_matrix(h: int, w: int, angle_deg: float) -> np.ndarray:
    # Output->source map: inverse rotation about the image center.
    theta = np.deg2rad(angle_deg)
    cos, sin = np.cos(theta), np.sin(theta)
    cx, cy = w / 2.0, h / 2.0
    to_origin = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1]], dtype=np.float64)
    rot = np.array([[cos, sin, 0], [-sin, cos, 0], [0, 0, 1]], dtype=np.float64)
    back = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1]], dtype=np.float64)
    return back @ rot @ to_origin


def _affine_matrix(
    h: int, w: int, shear_x: float, shear_y: float, tx: float, ty: float
) -> np.ndarray:
    cx, cy = w / 2.0, h / 2.0
    forward = np.array(
        [[1.0, shear_x, tx * w], [shear_y, 1.0, ty * h], [0.0, 0.0, 1.0]],
        dtype=np.float64,
    )
    to_origin = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1]], dtype=np.float64)
    back = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1]], dtype=np.float64)
    return np.linalg.inv(back @ forward @ to_origin)


def _solve_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3×3 matrix H with H @ [x, y, 1]^T ~ dst for each src point."""
    rows = []
    rhs = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        rhs.append(u)
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        rhs.append(v)
    params = np.linalg.solve(np.array(rows, dtype=np.float64), np.array(rhs))
    return np.append(params, 1.0).reshape(3, 3)


def _perspective_matrix(h: int, w: int, strength: float, rng: np.random.Generator) -> np.ndarray:
    corners = np.array(
        [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]], dtype=np.float64
    )
    # Each corner moves inward/outward by up to strength * dim.
    shift = rng.uniform(-1.0, 1.0, size=(4, 2)) * strength * np.array([w, h])
    displaced = corners + shift
    # Sampling needs the output->source map: displaced corners back to corners.
    return _solve_homography(displaced, corners)


def _erase(
    image: np.ndarray, level: float, max_area: float, rng: np.random.Generator
) -> np.ndarray:
    h, w = image.shape[:2]
    area_scale = rng.uniform(0.25, 1.0)
    aspect = np.exp(rng.uniform(np.log(0.5), np.log(2.0)))
    cx, cy = rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)
    area = max_area * level * area_scale * h * w
    eh = max(int(round(np.sqrt(area * aspect))), 1)
    ew = max(int(round(np.sqrt(area / aspect))), 1)
    y0 = int(np.clip(round(cy * h - eh / 2), 0, max(h - eh, 0)))
    x0 = int(np.clip(round(cx * w - ew / 2), 0, max(w - ew, 0)))
    out = image.copy()
    out[y0 : min(y0 + eh, h), x0 : min(x0 + ew, w)] = 0.0
    return out


def apply(
    image: np.ndarray,
    desc: AugmentDescriptor,
    limits: AugmentLimits = DEFAULT_LIMITS,
) -> np.ndarray:
    """Transform the image per the descriptor; dims are preserved."""
    arr = validate_image(image)
    if desc.kind == "identity" or desc.level == 0.0:
        return arr.copy()
    rng = np.random.default_rng(desc.seed)
    if desc.kind == "vflip":
        return arr[::-1].copy()
    if desc.kind == "hflip":
        return arr[:, ::-1].copy()
    h, w = arr.shape[:2]
    if desc.kind == "rotation":
        direction = 1.0 if rng.integers(2) == 1 else -1.0
        angle = direction * desc.level * limits.rotation_max_deg
        warped = _warp(arr, _rotation_matrix(h, w, angle))
    elif desc.kind == "affine":
        sx, sy, tx, ty = rng.uniform(-1.0, 1.0, size=4) * limits.affine_max * desc.level
        warped = _warp(arr, _affine_matrix(h, w, sx, sy, tx, ty))
    elif desc.kind == "perspective":
        warped = _warp(
            arr, _perspective_matrix(h, w, limits.perspective_max * desc.level, rng)
        )
    elif desc.kind == "erasing":
        warped = _erase(arr, desc.level, limits.erase_max_area, rng)
    else:  # unreachable: descriptor validates kind
        raise ValueError(f"unknown augmentation kind {desc.kind!r}")
    return np.clip(warped, 0.0, 1.0)


def sample_descriptor(
    rng_seed: int, allowed_kinds: Iterable[str] = KINDS
) -> AugmentDescriptor:
    """Uniformly sample a kind and level, reproducibly from rng_seed."""
    kinds = sorted(set(allowed_kinds))
    if not kinds:
        raise ValueError("allowed_kinds must not be empty")
    for kind in kinds:
        if kind not in KINDS:
            raise ValueError(f"unknown augmentation kind {kind!r}")
    rng = np.random.default_rng(rng_seed)
    kind = kinds[int(rng.integers(len(kinds)))]
    level = float(rng.uniform(0.0, 1.0))
    seed = int(rng.integers(0, 2**31 - 1))
    if kind == "identity":
        level = 0.0
    return AugmentDescriptor(kind=kind, level=level, seed=seed)


def level_schedule(
    kind: str, num_frames: int, level_max: float, seed: int = 0
) -> list[AugmentDescriptor]:
    """Descriptors with levels linearly spaced from 0 to level_max."""
    if num_frames < 2:
        raise ValueError(f"num_frames must be >= 2, got {num_frames}")
    if not 0.0 <= level_max <= 1.0:
        raise ValueError(f"level_max must be in [0, 1], got {level_max}")
    levels = np.linspace(0.0, level_max, num_frames)
    return [AugmentDescriptor(kind=kind, level=float(l), seed=seed) for l in levels]
