"""U-Net encoder-decoder for binary segmentation.

Four downsampling blocks of two 3x3 same-padding convolutions (ReLU,
He-normal init) followed by 2x2 max-pooling and dropout; a two-convolution
bottleneck; four upsampling blocks of a 2x2 stride-2 transposed convolution,
skip concatenation with the matching encoder output, dropout, and two more
convolutions; a 1x1 convolution with sigmoid produces per-pixel foreground
probabilities. Filter counts double per encoder level (64 ... 1024 at the
bottleneck for the default config) and mirror back down in the decoder.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ConfigurationError

PROB_EPS = 1e-7  # inference outputs are clamped into (0, 1) by this margin


@dataclass
class UNetConfig:
    """Architecture hyperparameters; bottleneck_filters derives from the rest."""

    input_size: int = 256
    input_channels: int = 1
    base_filters: int = 64
    depth: int = 4
    bottleneck_filters: int | None = None
    kernel_size: int = 3
    dropout_rate: float = 0.3
    pool_size: int = 2

    def __post_init__(self) -> None:
        expected_bottleneck = self.base_filters * 2**self.depth
        if self.bottleneck_filters is None:
            self.bottleneck_filters = expected_bottleneck
        if self.bottleneck_filters != expected_bottleneck:
            raise ConfigurationError(
                f"bottleneck_filters must be base_filters * 2**depth = {expected_bottleneck}, "
                f"got {self.bottleneck_filters}"
            )
        if self.input_size % self.pool_size**self.depth != 0:
            raise ConfigurationError(
                f"input_size {self.input_size} must be divisible by "
                f"pool_size**depth = {self.pool_size ** self.depth}"
            )
        if self.kernel_size % 2 != 1:
            raise ConfigurationError(f"kernel_size must be odd, got {self.kernel_size}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def encoder_filters(self) -> list[int]:
        return [self.base_filters * 2**i for i in range(self.depth)]

    @property
    def bottleneck_size(self) -> int:
        return self.input_size // self.pool_size**self.depth


class _DoubleConv(nn.Module):
    """Two same-padding convolutions, each followed by ReLU."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int):
        super().__init__()
        pad = kernel // 2
        self.conv1 = nn.Conv2d(in_ch, out_ch, kernel, padding=pad)
        self.conv2 = nn.Conv2d(out_ch, out_ch, kernel, padding=pad)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(self.conv2(self.act(self.conv1(x))))


class UNet(nn.Module):
    def __init__(self, config: UNetConfig, seed: int = 0):
        super().__init__()
        self.config = config
        k = config.kernel_size
        filters = config.encoder_filters

        self.encoders = nn.ModuleList()
        in_ch = config.input_channels
        for f in filters:
            self.encoders.append(_DoubleConv(in_ch, f, k))
            in_ch = f
        self.pool = nn.MaxPool2d(config.pool_size)
        self.dropout = nn.Dropout(config.dropout_rate)
        self.bottleneck = _DoubleConv(filters[-1], config.bottleneck_filters, k)

        self.upconvs = nn.ModuleList()
        self.decoders = nn.ModuleList()
        up_in = config.bottleneck_filters
        for f in reversed(filters):
            self.upconvs.append(
                nn.ConvTranspose2d(up_in, f, config.pool_size, stride=config.pool_size)
            )
            self.decoders.append(_DoubleConv(2 * f, f, k))
            up_in = f
        self.head = nn.Conv2d(filters[0], 1, kernel_size=1)
        self._init_weights(seed)

    def _init_weights(self, seed: int) -> None:
        # He-normal (variance 2/fan_in) on every conv kernel, zero biases;
        # a dedicated generator keeps the init independent of global RNG state.
        g = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for m in self.modules():
                if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                    fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
                    m.weight.normal_(0.0, math.sqrt(2.0 / fan_in), generator=g)
                    m.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            x = self.dropout(self.pool(x))
        x = self.bottleneck(x)
        for up, dec, skip in zip(self.upconvs, self.decoders, reversed(skips)):
            x = up(x)
            x = torch.cat([skip, x], dim=1)
            x = self.dropout(x)
            x = dec(x)
        return torch.sigmoid(self.head(x))


def build_unet(config: UNetConfig, seed: int = 0) -> UNet:
    """Construct the network with deterministically seeded He-normal weights."""
    model = UNet(config, seed=seed)
    model.eval()
    return model


def num_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def layer_summary(model: UNet) -> list[dict[str, object]]:
    """Ordered layer description: kind, output channels/size, parameter count."""
    cfg = model.config
    rows: list[dict[str, object]] = []

    def conv_params(m: nn.Module) -> int:
        return sum(p.numel() for p in m.parameters())

    def add(name: str, kind: str, channels: int, size: int, params: int = 0) -> None:
        rows.append(
            {"name": name, "kind": kind, "out_channels": channels, "out_size": size,
             "params": params}
        )

    size = cfg.input_size
    for i, (enc, f) in enumerate(zip(model.encoders, cfg.encoder_filters)):
        add(f"enc{i}_conv1", "conv", f, size, conv_params(enc.conv1))
        add(f"enc{i}_conv2", "conv", f, size, conv_params(enc.conv2))
        size //= cfg.pool_size
        add(f"enc{i}_pool", "maxpool", f, size)
        add(f"enc{i}_dropout", "dropout", f, size)
    add("bottleneck_conv1", "conv", cfg.bottleneck_filters, size,
        conv_params(model.bottleneck.conv1))
    add("bottleneck_conv2", "conv", cfg.bottleneck_filters, size,
        conv_params(model.bottleneck.conv2))
    for i, (up, dec, f) in enumerate(
        zip(model.upconvs, model.decoders, reversed(cfg.encoder_filters))
    ):
        size *= cfg.pool_size
        add(f"dec{i}_upconv", "transposed_conv", f, size, conv_params(up))
        add(f"dec{i}_concat", "concat", 2 * f, size)
        add(f"dec{i}_dropout", "dropout", 2 * f, size)
        add(f"dec{i}_conv1", "conv", f, size, conv_params(dec.conv1))
        add(f"dec{i}_conv2", "conv", f, size, conv_params(dec.conv2))
    add("head", "conv", 1, size, conv_params(model.head))
    add("sigmoid", "sigmoid", 1, size)
    return rows


def forward(model: UNet, batch: np.ndarray, training_mode: bool = False) -> np.ndarray:
    """Run a numpy batch through the model, returning per-pixel probabilities.

    Accepts (B, H, W) or (B, H, W, 1) with H = W = config.input_size and
    mirrors the input shape on output. Outputs are clamped strictly inside
    (0, 1). Dropout is active only with training_mode set; inference is
    deterministic without it.
    """
    batch = np.asarray(batch, dtype=np.float32)
    squeeze = batch.ndim == 3
    if squeeze:
        batch = batch[..., np.newaxis]
    expected = model.config.input_size
    if batch.ndim != 4 or batch.shape[1] != expected or batch.shape[2] != expected:
        raise ValueError(
            f"expected batch of shape (B, {expected}, {expected}, 1), got {batch.shape}"
        )
    x = torch.from_numpy(np.ascontiguousarray(batch.transpose(0, 3, 1, 2)))
    model.train(training_mode)
    with torch.no_grad():
        out = model(x)
    model.eval()
    probs = out.numpy().transpose(0, 2, 3, 1)
    probs = np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    return probs[..., 0] if squeeze else probs


def save_checkpoint(model: UNet, path: str | Path) -> Path:
    """Persist weights plus the embedded architecture config."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"config": asdict(model.config), "state_dict": model.state_dict()}, path)
    return path


def load_checkpoint(path: str | Path, expected_config: UNetConfig | None = None) -> UNet:
    """Rebuild a model from a checkpoint, validating config compatibility."""
    payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    config = UNetConfig(**payload["config"])
    if expected_config is not None and config != expected_config:
        raise ConfigurationError(
            f"checkpoint config {config} does not match expected {expected_config}"
        )
    model = UNet(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
