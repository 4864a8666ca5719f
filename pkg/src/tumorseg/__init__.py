"""U-Net brain tumor segmentation: focal loss and augmentation experiments."""

from .augment import AugmentationKind, AugmentationSpec, apply_augmentation, hflip, rescale, rotate
from .dataset import (
    DatasetSplits,
    Sample,
    binarize_mask,
    generate_synthetic_dataset,
    load_dataset,
    load_sample,
    save_dataset,
    split_dataset,
)
from .losses import FocalParams, focal_loss, focal_loss_gradient
from .metrics import (
    ConfusionCounts,
    MetricReport,
    binarize_prediction,
    compute_metrics,
    confusion_counts,
    evaluate_dataset,
)
from .trainer import TrainingConfig, TrainingHistory, evaluate, train
from .unet import UNet, UNetConfig, build_unet, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "AugmentationKind",
    "AugmentationSpec",
    "ConfusionCounts",
    "DatasetSplits",
    "FocalParams",
    "MetricReport",
    "Sample",
    "TrainingConfig",
    "TrainingHistory",
    "UNet",
    "UNetConfig",
    "apply_augmentation",
    "binarize_mask",
    "binarize_prediction",
    "build_unet",
    "compute_metrics",
    "confusion_counts",
    "evaluate",
    "evaluate_dataset",
    "focal_loss",
    "focal_loss_gradient",
    "generate_synthetic_dataset",
    "hflip",
    "load_checkpoint",
    "load_dataset",
    "load_sample",
    "rescale",
    "rotate",
    "save_checkpoint",
    "save_dataset",
    "split_dataset",
    "train",
]
