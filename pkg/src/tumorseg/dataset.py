"""Dataset ingestion, preprocessing, splitting, and synthetic corpus generation.

Images are grayscale float32 arrays in [0, 1]; masks are uint8 arrays in {0, 1}.
Expected on-disk layout::

    <root>/images/<id>.png
    <root>/masks/<id>.png

pairing by filename stem. 8-bit and 16-bit grayscale rasters are accepted;
RGB inputs are collapsed to luminance (ITU-R BT.601 weights).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigurationError, ImageFormatError, ValidationError

# Half of one 8-bit quantum after /255 normalization: a resampled mask pixel
# counts as foreground only if it is indistinguishable from 1.0 on 8-bit data.
BINARIZE_TOLERANCE = 1.0 / 510.0

TUMOR_TYPES = ("meningioma", "glioma", "pituitary", "unknown")

IMAGE_EXTENSIONS = (".png", ".bmp", ".tif", ".tiff")

_SIXTEEN_BIT_MODES = ("I", "I;16", "I;16L", "I;16B", "I;16N")


@dataclass
class Sample:
    """One grayscale image with its binary mask and identity metadata."""

    id: str
    image: np.ndarray
    mask: np.ndarray
    tumor_type: str | None = None


@dataclass
class DatasetSplits:
    """Deterministic train/val/test partition plus the seed that produced it."""

    train: list[Sample]
    val: list[Sample]
    test: list[Sample]
    seed: int

    def ids(self) -> dict[str, list[str]]:
        return {
            "train": [s.id for s in self.train],
            "val": [s.id for s in self.val],
            "test": [s.id for s in self.test],
        }


def validate_sample(sample: Sample) -> None:
    """Check the image/mask invariants; raises ValidationError on violation."""
    img, mask = sample.image, sample.mask
    if img.ndim != 2 or mask.ndim != 2:
        raise ValidationError(f"sample {sample.id!r}: image and mask must be 2D")
    if img.shape != mask.shape:
        raise ValidationError(
            f"sample {sample.id!r}: image shape {img.shape} != mask shape {mask.shape}"
        )
    if float(img.min()) < 0.0 or float(img.max()) > 1.0:
        raise ValidationError(f"sample {sample.id!r}: image pixels outside [0, 1]")
    if not np.isin(mask, (0, 1)).all():
        raise ValidationError(f"sample {sample.id!r}: mask contains non-binary values")
    if sample.tumor_type is not None and sample.tumor_type not in TUMOR_TYPES:
        raise ValidationError(f"sample {sample.id!r}: unknown tumor type {sample.tumor_type!r}")


def binarize_mask(raw: np.ndarray) -> np.ndarray:
    """Map a normalized mask array in [0, 1] to a strict {0, 1} uint8 mask.

    A pixel becomes 1 only when it is within BINARIZE_TOLERANCE of 1.0;
    every other value (including anything strictly between 0 and 1) becomes 0.
    Values outside [0, 1] signal a normalization bug upstream and raise.
    """
    raw = np.asarray(raw)
    if raw.size and (float(raw.min()) < 0.0 or float(raw.max()) > 1.0):
        raise ValidationError(
            f"mask values outside [0, 1] (min={raw.min()}, max={raw.max()}); "
            "normalize before binarizing"
        )
    return (raw >= 1.0 - BINARIZE_TOLERANCE).astype(np.uint8)


def _decode_gray(path: Path) -> np.ndarray:
    """Decode a raster file to a float32 grayscale array scaled to [0, 1]."""
    try:
        with Image.open(path) as img:
            if img.mode in _SIXTEEN_BIT_MODES:
                return np.asarray(img, dtype=np.float32) / 65535.0
            # convert("L") applies ITU-R BT.601 luma weights to RGB inputs
            return np.asarray(img.convert("L"), dtype=np.float32) / 255.0
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"cannot decode {path} as a raster image") from exc


def _resize_float(arr: np.ndarray, size: int, resample: Image.Resampling) -> np.ndarray:
    if arr.shape == (size, size):
        return arr
    img = Image.fromarray(arr.astype(np.float32), mode="F")
    return np.asarray(img.resize((size, size), resample), dtype=np.float32)


def load_sample(
    image_path: str | Path,
    mask_path: str | Path,
    target_size: int = 256,
    tumor_type: str | None = None,
) -> Sample:
    """Load one image/mask pair and apply the standard preprocessing.

    The image is decoded as grayscale, normalized to [0, 1], and resized to
    target_size x target_size with bilinear interpolation. The mask is resized
    with nearest-neighbor interpolation (so resampling cannot invent
    intermediate values) and then binarized. The sample id is the image
    filename stem.
    """
    image_path, mask_path = Path(image_path), Path(mask_path)
    for p in (image_path, mask_path):
        if not p.exists():
            raise FileNotFoundError(f"no such file: {p}")
    image = _resize_float(_decode_gray(image_path), target_size, Image.Resampling.BILINEAR)
    image = np.clip(image, 0.0, 1.0)
    raw_mask = _resize_float(_decode_gray(mask_path), target_size, Image.Resampling.NEAREST)
    sample = Sample(
        id=image_path.stem,
        image=image,
        mask=binarize_mask(raw_mask),
        tumor_type=tumor_type,
    )
    validate_sample(sample)
    return sample


def load_dataset(root: str | Path, target_size: int = 256) -> list[Sample]:
    """Load every image/mask pair under root, sorted by id.

    Unpaired files are a hard error: silently skipping them hides data bugs.
    """
    root = Path(root)
    images_dir, masks_dir = root / "images", root / "masks"
    for d in (images_dir, masks_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"no such directory: {d}")

    def index(d: Path) -> dict[str, Path]:
        return {
            p.stem: p
            for p in sorted(d.iterdir())
            if p.suffix.lower() in IMAGE_EXTENSIONS
        }

    images, masks = index(images_dir), index(masks_dir)
    unpaired = sorted(set(images) ^ set(masks))
    if unpaired:
        raise ValidationError(
            f"unpaired image/mask files under {root}: {', '.join(unpaired[:10])}"
            + (" ..." if len(unpaired) > 10 else "")
        )
    return [load_sample(images[stem], masks[stem], target_size) for stem in sorted(images)]


def save_dataset(samples: list[Sample], root: str | Path) -> None:
    """Write samples to the on-disk layout (8-bit PNGs; masks stored as 0/255)."""
    root = Path(root)
    images_dir, masks_dir = root / "images", root / "masks"
    images_dir.mkdir(parents=True, exist_ok=True)
    masks_dir.mkdir(parents=True, exist_ok=True)
    for s in samples:
        img8 = np.round(s.image * 255.0).astype(np.uint8)
        Image.fromarray(img8, mode="L").save(images_dir / f"{s.id}.png")
        Image.fromarray(s.mask * np.uint8(255), mode="L").save(masks_dir / f"{s.id}.png")


def split_sizes(n: int) -> tuple[int, int, int]:
    """60/20/20 split sizes: train floor(0.6n), val round(0.2n), test the rest.

    Integer arithmetic throughout; yields (1838, 613, 613) for n=3064 and
    (3, 1, 1) for n=5.
    """
    train = (3 * n) // 5
    val = (2 * n + 5) // 10
    return train, val, n - train - val


def split_dataset(samples: list[Sample], seed: int) -> DatasetSplits:
    """Shuffle deterministically by seed and partition 60/20/20.

    Pure function of (ordered input, seed): the same call always yields the
    same id assignment.
    """
    if len(samples) < 5:
        raise ConfigurationError(
            f"need at least 5 samples to form non-empty splits, got {len(samples)}"
        )
    order = np.random.default_rng(seed).permutation(len(samples))
    shuffled = [samples[i] for i in order]
    n_train, n_val, _ = split_sizes(len(samples))
    return DatasetSplits(
        train=shuffled[:n_train],
        val=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
        seed=seed,
    )


def generate_synthetic_dataset(n: int, size: int, seed: int) -> list[Sample]:
    """Generate a corpus of noisy dark backgrounds with 0-2 bright ellipses.

    The mask is 1 exactly on ellipse interiors. Ellipse areas are drawn so the
    foreground covers at most 15% of the pixels (usually 1-13%), mimicking the
    tumor/background class imbalance. Fully deterministic given the seed.

    Per-sample draw order: ellipse count, then per ellipse (area fraction,
    center x, center y, aspect, tilt, brightness), then background noise,
    then per-ellipse texture noise.
    """
    if n < 1:
        raise ConfigurationError(f"need n >= 1, got {n}")
    if size < 16:
        raise ConfigurationError(f"need size >= 16, got {size}")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    samples = []
    for i in range(n):
        k = int(rng.choice(3, p=(0.1, 0.6, 0.3)))
        ellipses = []
        for _ in range(k):
            frac = rng.uniform(0.02, 0.13) if k == 1 else rng.uniform(0.01, 0.065)
            cx = rng.uniform(0.3, 0.7) * size
            cy = rng.uniform(0.3, 0.7) * size
            aspect = rng.uniform(0.6, 1.8)
            tilt = rng.uniform(0.0, np.pi)
            brightness = rng.uniform(0.65, 0.9)
            ellipses.append((frac, cx, cy, aspect, tilt, brightness))

        image = np.clip(
            0.08 + 0.04 * rng.standard_normal((size, size)), 0.0, 1.0
        ).astype(np.float32)
        mask = np.zeros((size, size), dtype=np.uint8)
        for frac, cx, cy, aspect, tilt, brightness in ellipses:
            a = np.sqrt(frac * size * size * aspect / np.pi)
            b = np.sqrt(frac * size * size / (aspect * np.pi))
            dx, dy = xx - cx, yy - cy
            xr = dx * np.cos(tilt) + dy * np.sin(tilt)
            yr = -dx * np.sin(tilt) + dy * np.cos(tilt)
            inside = (xr / a) ** 2 + (yr / b) ** 2 <= 1.0
            texture = brightness + 0.05 * rng.standard_normal((size, size))
            image[inside] = np.clip(texture, 0.0, 1.0).astype(np.float32)[inside]
            mask[inside] = 1
        sample = Sample(id=f"synth_{i:04d}", image=image, mask=mask)
        validate_sample(sample)
        samples.append(sample)
    return samples


def write_split_manifest(splits: DatasetSplits, path: str | Path) -> None:
    """Persist the split as text (seed plus the ids per split) for re-creation."""
    lines = [f"seed={splits.seed}"]
    for name, ids in splits.ids().items():
        lines.append(f"[{name}]")
        lines.extend(ids)
    Path(path).write_text("\n".join(lines) + "\n")


def read_split_manifest(path: str | Path) -> tuple[int, dict[str, list[str]]]:
    """Parse a split manifest back into (seed, {split name: ids})."""
    seed = None
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("seed="):
            seed = int(line.split("=", 1)[1])
        elif line.startswith("[") and line.endswith("]"):
            current = sections.setdefault(line[1:-1], [])
        elif current is not None:
            current.append(line)
        else:
            raise ValidationError(f"{path}:{lineno}: unexpected line {line!r}")
    if seed is None or set(sections) != {"train", "val", "test"}:
        raise ValidationError(f"{path}: incomplete split manifest")
    return seed, sections


def stack_images(samples: list[Sample]) -> np.ndarray:
    """Stack sample images into an (N, H, W) float32 array."""
    return np.stack([s.image for s in samples]).astype(np.float32)


def stack_masks(samples: list[Sample]) -> np.ndarray:
    """Stack sample masks into an (N, H, W) uint8 array."""
    return np.stack([s.mask for s in samples])
