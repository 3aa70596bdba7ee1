"""Generation quality metrics over single-image models.

SIFID treats the spatial positions of a deep feature map as samples and
measures the Fréchet distance between the statistics of one real and one
generated image.  Diversity is the average per-pixel coefficient of
variation across a sample set, and the generation quality index is their
ratio diversity / SIFID.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import torch
from torch import nn

from .imaging import validate_image

__all__ = [
    "EXTRACTOR_KINDS",
    "FeatureExtractor",
    "MetricsReport",
    "matrix_sqrt",
    "frechet_distance",
    "sifid",
    "diversity",
    "gqi",
    "evaluate_project",
]

EXTRACTOR_KINDS = ("fixed_random_convnet", "raw_patches", "inception_early_layer")


def _build_random_convnet(seed: int) -> nn.Sequential:
    net = nn.Sequential(
        nn.Conv2d(3, 16, 3, stride=2, padding=1),
        nn.LeakyReLU(0.2),
        nn.Conv2d(16, 32, 3, stride=2, padding=1),
        nn.LeakyReLU(0.2),
        nn.Conv2d(32, 64, 3, padding=1),
    )
    rng = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in net.parameters():
            p.copy_(torch.randn(p.shape, generator=rng) * 0.2)
    net.requires_grad_(False)
    net.eval()
    return net


class FeatureExtractor:
    """Deterministic spatial features for Fréchet statistics.

    Kinds:
      fixed_random_convnet  - frozen random conv stack (default; no downloads)
      raw_patches           - flattened sliding 5×5 patches
      inception_early_layer - first pool of a pretrained Inception v3
                              (requires downloadable torchvision weights)
    """

    def __init__(self, kind: str = "fixed_random_convnet", seed: int = 1234):
        if kind not in EXTRACTOR_KINDS:
            raise ValueError(f"unknown extractor kind {kind!r}; options: {EXTRACTOR_KINDS}")
        self.kind = kind
        self.seed = seed
        self._net: nn.Module | None = None
        if kind == "fixed_random_convnet":
            self._net = _build_random_convnet(seed)
        elif kind == "inception_early_layer":
            self._net = self._load_inception()

    @staticmethod
    def _load_inception() -> nn.Module:
        try:
            from torchvision.models import Inception_V3_Weights, inception_v3

            model = inception_v3(weights=Inception_V3_Weights.IMAGENET1K_V1)
        except Exception as exc:  # pragma: no cover - needs network access
            raise RuntimeError(
                "inception_early_layer needs the pretrained torchvision weights; "
                "use fixed_random_convnet where downloads are unavailable"
            ) from exc
        stem = nn.Sequential(
            model.Conv2d_1a_3x3,
            model.Conv2d_2a_3x3,
            model.Conv2d_2b_3x3,
            model.maxpool1,
        )
        stem.requires_grad_(False)
        stem.eval()
        return stem

    @property
    def params_digest(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.kind.encode("ascii"))
        if self._net is not None:
            for name, p in sorted(self._net.state_dict().items()):
                digest.update(name.encode())
                digest.update(p.numpy().astype("<f4").tobytes())
        return digest.hexdigest()

    def features(self, image: np.ndarray) -> np.ndarray:
        """Feature matrix with one row per spatial position."""
        arr = validate_image(image)
        if self.kind == "raw_patches":
            return _patch_features(arr, size=5)
        tensor = torch.from_numpy(np.ascontiguousarray(arr)).permute(2, 0, 1)
        tensor = tensor.unsqueeze(0) * 2.0 - 1.0
        with torch.no_grad():
            maps = self._net(tensor)
        c = maps.shape[1]
        return maps.squeeze(0).reshape(c, -1).T.numpy().astype(np.float64)


def _patch_features(arr: np.ndarray, size: int) -> np.ndarray:
    h, w, c = arr.shape
    if h < size or w < size:
        raise ValueError(f"image {h}×{w} too small for {size}×{size} patches")
    windows = np.lib.stride_tricks.sliding_window_view(arr, (size, size), axis=(0, 1))
    return windows.reshape(-1, c * size * size).astype(np.float64)


def matrix_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Principal matrix square root (real part for numerically complex output)."""
    root = scipy.linalg.sqrtm(np.asarray(matrix, dtype=np.float64))
    if np.iscomplexobj(root):
        root = root.real
    return root


def frechet_distance(mu1, sigma1, mu2, sigma2, eps: float = 1e-6) -> float:
    """‖μ₁-μ₂‖² + Tr(Σ₁+Σ₂-2(Σ₁Σ₂)^1/2) with covariances regularized by eps·I."""
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=np.float64))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=np.float64))
    sigma1 = np.atleast_2d(np.asarray(sigma1, dtype=np.float64))
    sigma2 = np.atleast_2d(np.asarray(sigma2, dtype=np.float64))
    if mu1.shape != mu2.shape or sigma1.shape != sigma2.shape:
        raise ValueError("statistics shapes do not match")
    dim = mu1.shape[0]
    s1 = sigma1 + eps * np.eye(dim)
    s2 = sigma2 + eps * np.eye(dim)
    covmean = matrix_sqrt(s1 @ s2)
    dist = float(
        np.sum((mu1 - mu2) ** 2) + np.trace(s1) + np.trace(s2) - 2.0 * np.trace(covmean)
    )
    return max(dist, 0.0)


def _feature_stats(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = features.mean(axis=0)
    centered = features - mu
    # population covariance: positions are the full sample set, not a draw
    cov = centered.T @ centered / features.shape[0]
    return mu, cov


def sifid(real_image: np.ndarray, fake_image: np.ndarray, fx: FeatureExtractor) -> float:
    """Fréchet distance between the two images' spatial feature statistics."""
    real_feats = fx.features(real_image)
    fake_feats = fx.features(fake_image)
    if real_feats.shape[0] < 2 or fake_feats.shape[0] < 2:
        raise ValueError("need at least 2 spatial feature positions per image")
    mu_r, cov_r = _feature_stats(real_feats)
    mu_f, cov_f = _feature_stats(fake_feats)
    return frechet_distance(mu_r, cov_r, mu_f, cov_f)


def diversity(samples: list[np.ndarray]) -> float:
    """Average per-pixel coefficient of variation across the sample set.

    Population standard deviation; pixels whose mean intensity is zero
    contribute zero.  Invariant under scaling all samples by k > 0.
    """
    if len(samples) < 2:
        raise ValueError(f"need at least 2 samples, got {len(samples)}")
    arrs = [validate_image(s) for s in samples]
    dims = arrs[0].shape
    for arr in arrs[1:]:
        if arr.shape != dims:
            raise ValueError(f"sample dims differ: {arr.shape} vs {dims}")
    stack = np.stack(arrs).astype(np.float64)
    mean = stack.mean(axis=0)
    std = stack.std(axis=0)
    cv = np.divide(std, mean, out=np.zeros_like(std), where=mean > 0)
    return float(cv.mean())


def gqi(sifid_value: float, diversity_value: float) -> float:
    """Generation quality index: diversity divided by SIFID."""
    if sifid_value < 0:
        raise ValueError(f"SIFID must be >= 0, got {sifid_value}")
    if sifid_value == 0.0:
        warnings.warn("SIFID is zero (overfit indicator); GQI reported as infinite")
        return math.inf
    return diversity_value / sifid_value


@dataclass(frozen=True)
class MetricsReport:
    target: str  # whole | roi_only | background_only
    sifid: float
    diversity: float
    gqi: float
    sample_count: int

    @classmethod
    def compute(cls, target: str, sifid_value: float, diversity_value: float, sample_count: int):
        return cls(
            target=target,
            sifid=sifid_value,
            diversity=diversity_value,
            gqi=gqi(sifid_value, diversity_value),
            sample_count=sample_count,
        )

    def to_json(self) -> dict:
        return {
            "target": self.target,
            "sifid": self.sifid,
            "diversity": self.diversity,
            "gqi": self.gqi if math.isfinite(self.gqi) else None,
            "sample_count": self.sample_count,
        }


TARGETS = ("whole", "roi_only", "background_only")


def evaluate_project(
    project,
    num_samples: int = 20,
    targets: tuple[str, ...] = TARGETS,
    fx: FeatureExtractor | None = None,
    seed: int = 0,
    band_px: int = 3,
) -> list[MetricsReport]:
    """Generate samples from a trained project and score every target.

    whole             fused full-frame samples against the training image
    roi_only          per-box crops against the training crop (box-averaged)
    background_only   background samples with the ROI area zeroed out of both
                      real and fake before feature extraction
    """
    from . import sampling  # local import: sampling pulls in the generator stack

    if not getattr(project, "is_trained", False):
        raise ValueError("metrics need a fully trained project")
    if num_samples < 2:
        raise ValueError(f"need at least 2 samples, got {num_samples}")
    for target in targets:
        if target not in TARGETS:
            raise ValueError(f"unknown target {target!r}; options: {TARGETS}")
    fx = fx or FeatureExtractor()
    checkpoint = project.checkpoint
    reports = []
    for target in targets:
        if target == "whole":
            real = checkpoint.source_image
            fakes = [
                sampling.compose_random(
                    checkpoint, sampling.derive_sample_seed(seed, "whole", i), band_px
                ).whole
                for i in range(num_samples)
            ]
            mean_sifid = float(np.mean([sifid(real, f, fx) for f in fakes]))
            div = diversity(fakes)
        elif target == "roi_only":
            per_box_sifid = []
            per_box_div = []
            for b, stack_name in enumerate(sampling.roi_stack_names(checkpoint)):
                stack = checkpoint.stacks[stack_name]
                real = stack.pyramid[0]
                fakes = [
                    sampling.roi_sample(
                        checkpoint,
                        b,
                        sampling.derive_sample_seed(seed, "roi_only", b, i),
                    )
                    for i in range(num_samples)
                ]
                per_box_sifid.append(float(np.mean([sifid(real, f, fx) for f in fakes])))
                per_box_div.append(diversity(fakes))
            mean_sifid = float(np.mean(per_box_sifid))
            div = float(np.mean(per_box_div))
        else:  # background_only
            mask = sampling.finest_background_mask(checkpoint)
            real = checkpoint.source_image * mask[:, :, None]
            fakes = []
            for i in range(num_samples):
                bg = sampling.background_sample(
                    checkpoint, sampling.derive_sample_seed(seed, "background_only", i)
                )
                fakes.append(bg * mask[:, :, None])
            mean_sifid = float(np.mean([sifid(real, f, fx) for f in fakes]))
            div = diversity(fakes)
        reports.append(MetricsReport.compute(target, mean_sifid, div, num_samples))
    return reports
