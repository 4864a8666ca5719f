"""Focal loss for binary segmentation, with an analytic gradient.

The loss of one pixel is ``-alpha * (1 - p_t)**gamma * log(p_t)`` where
``p_t`` is the probability the model assigns to the pixel's true class
(``p`` when the label is 1, ``1 - p`` when it is 0). The modulating factor
``(1 - p_t)**gamma`` down-weights well-classified pixels so training focuses
on hard ones; ``gamma == 0`` recovers plain cross-entropy (times ``alpha``).

The reduction is the mean over all elements, which keeps the value
batch-size independent. Probabilities are clamped to
``[PROB_CLAMP, 1 - PROB_CLAMP]`` before the log so saturated sigmoid outputs
cannot produce infinities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ValidationError

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class FocalParams:
    """The (alpha, gamma) pair controlling class weighting and focusing.

    By default ``alpha`` multiplies every pixel's loss as a single constant.
    With ``class_balanced`` set, the foreground weight is ``alpha`` and the
    background weight ``1 - alpha`` (the class-conditional alpha_t variant);
    this requires ``alpha < 1``.
    """

    alpha: float = 0.25
    gamma: float = 2.0
    class_balanced: bool = False

    def __post_init__(self) -> None:
        if self.alpha <= 0.0:
            raise ConfigurationError(f"alpha must be positive, got {self.alpha}")
        if self.gamma < 0.0:
            raise ConfigurationError(f"gamma must be non-negative, got {self.gamma}")
        if self.class_balanced and self.alpha >= 1.0:
            raise ConfigurationError(
                f"class-balanced weighting needs alpha < 1, got {self.alpha}"
            )


def _check_inputs(pred: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"pred shape {pred.shape} != target shape {target.shape}")
    if not np.isin(target, (0, 1)).all():
        raise ValidationError("target must contain only 0 and 1")
    return pred, target.astype(np.float64)


def _alpha_weights(target: np.ndarray, params: FocalParams) -> np.ndarray | float:
    if params.class_balanced:
        return np.where(target == 1.0, params.alpha, 1.0 - params.alpha)
    return params.alpha


def focal_loss(pred: np.ndarray, target: np.ndarray, params: FocalParams) -> float:
    """Mean focal loss over all elements of pred/target (any matching shapes)."""
    pred, target = _check_inputs(pred, target)
    p = np.clip(pred, PROB_CLAMP, 1.0 - PROB_CLAMP)
    pt = np.where(target == 1.0, p, 1.0 - p)
    losses = -_alpha_weights(target, params) * (1.0 - pt) ** params.gamma * np.log(pt)
    return float(losses.mean())


def focal_loss_gradient(pred: np.ndarray, target: np.ndarray, params: FocalParams) -> np.ndarray:
    """Elementwise derivative of the mean focal loss with respect to pred.

    For a foreground pixel (p_t = p):

        d/dp [-a (1-p)^g log p] = a g (1-p)^(g-1) log p - a (1-p)^g / p

    and symmetrically for background (p_t = 1-p) with the sign flipped.
    Entries clamped away by PROB_CLAMP get gradient 0, matching what
    focal_loss actually computes there.
    """
    pred, target = _check_inputs(pred, target)
    p = np.clip(pred, PROB_CLAMP, 1.0 - PROB_CLAMP)
    a = _alpha_weights(target, params)
    g = params.gamma
    # foreground branch: derivative wrt p at p_t = p
    fg = a * g * (1.0 - p) ** (g - 1.0) * np.log(p) - a * (1.0 - p) ** g / p
    # background branch: p_t = 1 - p, chain rule flips the sign
    bg = -a * g * p ** (g - 1.0) * np.log(1.0 - p) + a * p ** g / (1.0 - p)
    grad = np.where(target == 1.0, fg, bg)
    clamped = (pred < PROB_CLAMP) | (pred > 1.0 - PROB_CLAMP)
    grad[clamped] = 0.0
    return grad / pred.size
