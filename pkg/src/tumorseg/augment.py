"""Joint image/mask geometric augmentation: horizontal flip, rotation, scaling.

Every transform is applied identically to an image and its mask so the label
stays spatially aligned. Images are resampled bilinearly; masks are resampled
nearest-neighbor and re-binarized, so resampling can never leak non-binary
values downstream. Out-of-bounds regions are filled with 0 (background).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage

from .dataset import Sample, binarize_mask
from .errors import ConfigurationError


class AugmentationKind(str, Enum):
    NONE = "none"
    HORIZONTAL_FLIP = "horizontal_flip"
    ROTATION = "rotation"
    SCALING = "scaling"


@dataclass
class AugmentationSpec:
    """Which transform to apply, its parameter range, and the affected share.

    ``fraction`` is the share of the training set that receives the transform
    (0.5 by default). When ``grow`` is True the transformed copies are
    appended, expanding the dataset; otherwise the selected samples are
    replaced in place.
    """

    kind: AugmentationKind = AugmentationKind.NONE
    fraction: float = 0.5
    rotation_range_deg: tuple[float, float] = (-15.0, 15.0)
    scale_range: tuple[float, float] = (0.8, 1.2)
    seed: int = 0
    grow: bool = True

    def __post_init__(self) -> None:
        self.kind = AugmentationKind(self.kind)
        if not 0.0 <= self.fraction <= 1.0:
            raise ConfigurationError(f"fraction must be in [0, 1], got {self.fraction}")
        lo, hi = self.rotation_range_deg
        if not (-180.0 <= lo <= hi <= 180.0):
            raise ConfigurationError(
                f"rotation range must be an interval within [-180, 180], got {self.rotation_range_deg}"
            )
        lo, hi = self.scale_range
        if not (0.0 < lo <= hi <= 4.0):
            raise ConfigurationError(
                f"scale range must be an interval within (0, 4], got {self.scale_range}"
            )


def hflip(sample: Sample) -> Sample:
    """Mirror image and mask about the vertical axis (column c -> W-1-c)."""
    return Sample(
        id=sample.id + "_hflip",
        image=sample.image[:, ::-1].copy(),
        mask=sample.mask[:, ::-1].copy(),
        tumor_type=sample.tumor_type,
    )


def rotate(sample: Sample, angle_deg: float) -> Sample:
    """Rotate image and mask about the image center; dimensions unchanged.

    angle_deg == 0 is an exact identity.
    """
    if not -180.0 <= angle_deg <= 180.0:
        raise ConfigurationError(f"rotation angle must be within [-180, 180], got {angle_deg}")
    new_id = f"{sample.id}_rot{angle_deg:+.2f}"
    if angle_deg == 0.0:
        return Sample(new_id, sample.image.copy(), sample.mask.copy(), sample.tumor_type)
    image = ndimage.rotate(
        sample.image, angle_deg, reshape=False, order=1, mode="constant", cval=0.0
    )
    mask = ndimage.rotate(
        sample.mask, angle_deg, reshape=False, order=0, mode="constant", cval=0
    )
    return Sample(
        id=new_id,
        image=np.clip(image, 0.0, 1.0).astype(np.float32),
        mask=binarize_mask(mask),
        tumor_type=sample.tumor_type,
    )


def rescale(sample: Sample, factor: float) -> Sample:
    """Scale content about the center by factor; dimensions unchanged.

    factor > 1 magnifies and center-crops back to the original size; factor < 1
    shrinks and zero-pads. factor == 1 is an exact identity.
    """
    if not 0.0 < factor <= 4.0:
        raise ConfigurationError(f"scale factor must be within (0, 4], got {factor}")
    new_id = f"{sample.id}_scale{factor:.3f}"
    if factor == 1.0:
        return Sample(new_id, sample.image.copy(), sample.mask.copy(), sample.tumor_type)
    h, w = sample.image.shape
    # inverse map: in = center + (out - center) / factor
    centers = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    matrix = np.diag([1.0 / factor, 1.0 / factor])
    offset = centers * (1.0 - 1.0 / factor)
    image = ndimage.affine_transform(
        sample.image, matrix, offset=offset, order=1, mode="constant", cval=0.0
    )
    mask = ndimage.affine_transform(
        sample.mask, matrix, offset=offset, order=0, mode="constant", cval=0
    )
    return Sample(
        id=new_id,
        image=np.clip(image, 0.0, 1.0).astype(np.float32),
        mask=binarize_mask(mask),
        tumor_type=sample.tumor_type,
    )


def apply_augmentation(train: list[Sample], spec: AugmentationSpec) -> list[Sample]:
    """Augment a deterministic selection of the training list.

    Selects floor(fraction * len(train)) samples without replacement and draws
    one transform parameter per selected sample, all from spec.seed, so the
    result is a pure function of (train order, spec). With spec.grow the
    transformed copies are appended; otherwise they replace the originals.
    kind == NONE returns the input list unchanged.
    """
    if spec.kind is AugmentationKind.NONE:
        return list(train)
    count = math.floor(spec.fraction * len(train))
    if count == 0:
        return list(train)
    rng = np.random.default_rng(spec.seed)
    selected = rng.choice(len(train), size=count, replace=False)
    if spec.kind is AugmentationKind.HORIZONTAL_FLIP:
        transformed = [hflip(train[i]) for i in selected]
    elif spec.kind is AugmentationKind.ROTATION:
        angles = rng.uniform(*spec.rotation_range_deg, size=count)
        transformed = [rotate(train[i], float(a)) for i, a in zip(selected, angles)]
    else:
        factors = rng.uniform(*spec.scale_range, size=count)
        transformed = [rescale(train[i], float(f)) for i, f in zip(selected, factors)]
    if spec.grow:
        return list(train) + transformed
    out = list(train)
    for i, t in zip(selected, transformed):
        out[i] = t
    return out
