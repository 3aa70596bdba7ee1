"""Region-aware generative learning from a single image.

Two parallel multi-scale GAN branches learn a user-marked region of interest
and its background separately; augmented copies of the training image steer
the ROI branch through trainable style injectors.  The package ships the
training library, a CLI, an HTTP job service and evaluation metrics.
"""

from .augment import AugmentDescriptor, apply, level_schedule, sample_descriptor
from .imaging import MaskedImage, PyramidSpec, RoiBox, build_pyramid, crop_roi, fuse, mask_background
from .metrics import FeatureExtractor, MetricsReport, diversity, gqi, sifid
from .project import ProjectStore, SampleRecord, TrainedProject
from .trainer import AblationFlags, TrainConfig, load_checkpoint, save_checkpoint, train_branch

__version__ = "0.1.0"

__all__ = [
    "AugmentDescriptor",
    "apply",
    "level_schedule",
    "sample_descriptor",
    "MaskedImage",
    "PyramidSpec",
    "RoiBox",
    "build_pyramid",
    "crop_roi",
    "fuse",
    "mask_background",
    "FeatureExtractor",
    "MetricsReport",
    "diversity",
    "gqi",
    "sifid",
    "ProjectStore",
    "SampleRecord",
    "TrainedProject",
    "AblationFlags",
    "TrainConfig",
    "load_checkpoint",
    "save_checkpoint",
    "train_branch",
    "__version__",
]
