"""Training protocol: Adam, fixed epoch schedule, per-epoch history.

The schedule is fixed on purpose: every run trains for exactly
``cfg.epochs`` epochs with no early stopping, so runs with different loss
parameters or augmentations stay comparable and overfitting tendencies remain
visible in the curves. The best-validation-loss checkpoint is saved alongside
the last-epoch weights but is never used for reporting.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .augment import AugmentationSpec, apply_augmentation
from .dataset import DatasetSplits, Sample, stack_images, stack_masks
from .errors import ConfigurationError, TrainingDivergedError, ValidationError
from .losses import PROB_CLAMP, FocalParams, focal_loss
from .metrics import MetricReport, evaluate_dataset
from .unet import UNet, forward, save_checkpoint

HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")

_AUG_SUFFIX = re.compile(r"(_hflip|_rot[+-]?\d+\.\d+|_scale\d+\.\d+)$")


@dataclass
class TrainingConfig:
    batch_size: int = 8
    learning_rate: float = 1e-4
    epochs: int = 200
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    seed: int = 0
    checkpoint_dir: str | Path | None = None
    eval_threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0.0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.optimizer != "adam":
            raise ConfigurationError(f"unsupported optimizer {self.optimizer!r}")
        if not 0.0 < self.eval_threshold < 1.0:
            raise ConfigurationError(
                f"eval_threshold must lie in (0, 1), got {self.eval_threshold}"
            )


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def series(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.records]

    def save_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(HISTORY_COLUMNS)
            for r in self.records:
                writer.writerow([r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc])
        return path

    @classmethod
    def load_csv(cls, path: str | Path) -> "TrainingHistory":
        path = Path(path)
        history = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != HISTORY_COLUMNS:
                raise ValidationError(f"{path}:1: expected header {','.join(HISTORY_COLUMNS)}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(HISTORY_COLUMNS):
                    raise ValidationError(f"{path}:{lineno}: expected {len(HISTORY_COLUMNS)} fields")
                try:
                    history.records.append(
                        EpochRecord(int(row[0]), *(float(v) for v in row[1:]))
                    )
                except ValueError as exc:
                    raise ValidationError(f"{path}:{lineno}: {exc}") from exc
        return history


def _focal_loss_torch(pred: torch.Tensor, target: torch.Tensor, params: FocalParams) -> torch.Tensor:
    """Differentiable counterpart of losses.focal_loss for the training path."""
    p = pred.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    fg = target >= 0.5
    pt = torch.where(fg, p, 1.0 - p)
    if params.class_balanced:
        alpha = torch.where(
            fg, pred.new_tensor(params.alpha), pred.new_tensor(1.0 - params.alpha)
        )
    else:
        alpha = params.alpha
    return (-alpha * (1.0 - pt) ** params.gamma * torch.log(pt)).mean()


def _pixel_accuracy(pred: torch.Tensor, target: torch.Tensor, threshold: float) -> float:
    return ((pred >= threshold) == (target >= 0.5)).float().mean().item()


def _audit_split_isolation(train_samples: list[Sample], splits: DatasetSplits) -> None:
    """No val/test id (or augmented derivative of one) may enter weight updates."""
    train_ids = {s.id for s in splits.train}
    held_out = {s.id for s in splits.val} | {s.id for s in splits.test}
    for s in train_samples:
        base = _AUG_SUFFIX.sub("", s.id)
        if s.id in held_out or base in held_out:
            raise ValidationError(f"held-out sample {s.id!r} reached the training set")
        if s.id not in train_ids and base not in train_ids:
            raise ValidationError(f"training sample {s.id!r} does not derive from the train split")


def _to_tensors(samples: list[Sample], input_size: int) -> tuple[torch.Tensor, torch.Tensor]:
    images, masks = stack_images(samples), stack_masks(samples)
    if images.shape[1] != input_size or images.shape[2] != input_size:
        raise ValueError(
            f"expected {input_size}x{input_size} samples, got {images.shape[1]}x{images.shape[2]}"
        )
    x = torch.from_numpy(images).unsqueeze(1)
    y = torch.from_numpy(masks.astype(np.float32)).unsqueeze(1)
    return x, y


def _eval_loss_acc(
    model: UNet,
    x: torch.Tensor,
    y: torch.Tensor,
    focal: FocalParams,
    batch_size: int,
    threshold: float,
) -> tuple[float, float]:
    model.eval()
    loss_sum = acc_sum = 0.0
    with torch.no_grad():
        for start in range(0, len(x), batch_size):
            xb, yb = x[start : start + batch_size], y[start : start + batch_size]
            pb = model(xb)
            loss_sum += _focal_loss_torch(pb, yb, focal).item() * len(xb)
            acc_sum += _pixel_accuracy(pb, yb, threshold) * len(xb)
    return loss_sum / len(x), acc_sum / len(x)


def train(
    model: UNet,
    splits: DatasetSplits,
    focal: FocalParams,
    aug: AugmentationSpec,
    cfg: TrainingConfig,
) -> tuple[UNet, TrainingHistory]:
    """Train for exactly cfg.epochs epochs, recording per-epoch history.

    Augmentation is applied to the train split only, once, before the first
    epoch. Batches are reshuffled every epoch from a generator seeded with
    cfg.seed, so identical inputs and seeds reproduce the run. Aborts with
    TrainingDivergedError if any recorded loss turns non-finite.
    """
    if not splits.train or not splits.val:
        raise ConfigurationError("train and val splits must be non-empty")
    train_samples = apply_augmentation(splits.train, aug)
    _audit_split_isolation(train_samples, splits)

    torch.manual_seed(cfg.seed)  # dropout draws
    rng = np.random.default_rng(cfg.seed)  # batch shuffling
    x_train, y_train = _to_tensors(train_samples, model.config.input_size)
    x_val, y_val = _to_tensors(splits.val, model.config.input_size)

    optimizer = torch.optim.Adam(
        model.parameters(),
        lr=cfg.learning_rate,
        betas=(cfg.beta1, cfg.beta2),
        eps=cfg.epsilon,
    )
    ckpt_dir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir is not None else None
    best_val_loss = float("inf")
    history = TrainingHistory()
    n = len(x_train)

    for epoch in range(1, cfg.epochs + 1):
        model.train()
        perm = rng.permutation(n)
        loss_sum = acc_sum = 0.0
        for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
            idx = torch.as_tensor(perm[start : start + cfg.batch_size])
            xb, yb = x_train[idx], y_train[idx]
            optimizer.zero_grad()
            pb = model(xb)
            loss = _focal_loss_torch(pb, yb, focal)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch}, batch {batch_index}"
                )
            loss.backward()
            optimizer.step()
            loss_sum += loss.item() * len(idx)
            acc_sum += _pixel_accuracy(pb.detach(), yb, cfg.eval_threshold) * len(idx)

        val_loss, val_acc = _eval_loss_acc(
            model, x_val, y_val, focal, cfg.batch_size, cfg.eval_threshold
        )
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        history.records.append(
            EpochRecord(epoch, loss_sum / n, acc_sum / n, val_loss, val_acc)
        )
        if ckpt_dir is not None and val_loss < best_val_loss:
            best_val_loss = val_loss
            save_checkpoint(model, ckpt_dir / "best_val.ckpt")

    if ckpt_dir is not None:
        save_checkpoint(model, ckpt_dir / "last.ckpt")
    model.eval()
    return model, history


def predict_probabilities(model: UNet, images: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Deterministic inference over (N, H, W) images, batched."""
    chunks = [
        forward(model, images[start : start + batch_size])
        for start in range(0, len(images), batch_size)
    ]
    return np.concatenate(chunks, axis=0)


def report_from_probabilities(
    probs: np.ndarray, masks: np.ndarray, focal: FocalParams, threshold: float = 0.5
) -> MetricReport:
    """Fill a complete report: focal loss on raw probabilities, overlap metrics
    on thresholded masks, micro-aggregated over all pixels."""
    report = evaluate_dataset(probs, masks, threshold)
    report.loss = focal_loss(probs, masks, focal)
    return report


def evaluate(
    model: UNet,
    test: list[Sample],
    focal: FocalParams,
    threshold: float = 0.5,
    batch_size: int = 8,
) -> MetricReport:
    """Run inference over a held-out set and fill every report field."""
    if not test:
        raise ValueError("cannot evaluate an empty test set")
    images, masks = stack_images(test), stack_masks(test)
    probs = predict_probabilities(model, images, batch_size)
    return report_from_probabilities(probs, masks, focal, threshold)
