"""Convolutional coefficient estimator.

A small residual feature extractor with two independent regression heads,
one per distortion coefficient. Built on torch; the architecture and the
split distortion loss are defined here, and the loss matches the numpy
implementation in :mod:`radistort.loss` on the same grid.

Input images are RGB in [-1, 1], shape (batch, 3, input_size, input_size).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import DomainError
from .loss import default_grid
from .weights_io import Weights


@dataclass(frozen=True)
class NetworkConfig:
    """Desk-scale architecture knobs."""

    input_size: int = 64
    stage_channels: tuple = (16, 32, 64)
    blocks_per_stage: int = 2
    head_width: int = 32
    leaky_slope: float = 0.01

    def __post_init__(self):
        down = 2 ** (len(self.stage_channels) + 1)
        if self.input_size % down != 0:
            raise DomainError(
                f"input_size must be divisible by {down} "
                f"(stem + {len(self.stage_channels)} strided stages)")
        if self.head_width < 1:
            raise DomainError("head_width must be >= 1")
        if self.blocks_per_stage < 1:
            raise DomainError("blocks_per_stage must be >= 1")


class ResidualBlock(nn.Module):
    def __init__(self, in_ch, out_ch, stride, slope):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch, momentum=0.1, eps=1e-5)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, stride=1, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch, momentum=0.1, eps=1e-5)
        self.act = nn.LeakyReLU(slope)
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch, momentum=0.1, eps=1e-5),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.act(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.act(out + self.shortcut(x))


class RegressionHead(nn.Module):
    """dense(head_width) -> batch norm -> LeakyReLU -> dense(1)."""

    def __init__(self, in_features, width, slope):
        super().__init__()
        self.fc1 = nn.Linear(in_features, width)
        self.bn = nn.BatchNorm1d(width, momentum=0.1, eps=1e-5)
        self.act = nn.LeakyReLU(slope)
        self.fc2 = nn.Linear(width, 1)

    def forward(self, x):
        return self.fc2(self.act(self.bn(self.fc1(x)))).squeeze(-1)


class CoefficientEstimator(nn.Module):
    """Shared extractor feeding independent k1 and k2 heads."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        ch0 = cfg.stage_channels[0]
        self.stem = nn.Sequential(
            nn.Conv2d(3, ch0, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(ch0, momentum=0.1, eps=1e-5),
            nn.LeakyReLU(cfg.leaky_slope),
        )
        stages = []
        in_ch = ch0
        for ch in cfg.stage_channels:
            blocks = []
            for b in range(cfg.blocks_per_stage):
                stride = 2 if b == 0 else 1
                blocks.append(ResidualBlock(in_ch, ch, stride, cfg.leaky_slope))
                in_ch = ch
            stages.append(nn.Sequential(*blocks))
        self.stages = nn.Sequential(*stages)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head_k1 = RegressionHead(in_ch, cfg.head_width, cfg.leaky_slope)
        self.head_k2 = RegressionHead(in_ch, cfg.head_width, cfg.leaky_slope)

    def forward(self, x):
        feats = self.pool(self.stages(self.stem(x))).flatten(1)
        return self.head_k1(feats), self.head_k2(feats)


def build_model(cfg: NetworkConfig, seed: int = 0) -> CoefficientEstimator:
    """Construct a model with deterministic fan-in-scaled initialization."""
    torch.manual_seed(seed)
    model = CoefficientEstimator(cfg)
    for m in model.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, a=cfg.leaky_slope, mode="fan_in",
                                    nonlinearity="leaky_relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, (nn.BatchNorm1d, nn.BatchNorm2d)):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
    return model


def _float_state_items(model: nn.Module):
    # num_batches_tracked is an int64 counter irrelevant under fixed-momentum
    # batch norm; everything else in the state dict is float.
    return [(name, t) for name, t in model.state_dict().items()
            if t.dtype.is_floating_point]


def weights_from_model(model: nn.Module) -> Weights:
    tensors = tuple((name, t.detach().cpu().numpy().astype(np.float32, copy=True))
                    for name, t in _float_state_items(model))
    return Weights(tensors=tensors)


def apply_weights(model: nn.Module, w: Weights) -> nn.Module:
    expected = [name for name, _ in _float_state_items(model)]
    if expected != list(w.names()):
        raise DomainError(
            f"weight tensors do not match the configured architecture: "
            f"expected {len(expected)} tensors, got {len(w.tensors)}")
    state = {}
    for (name, arr), t in zip(w.tensors, (t for _, t in _float_state_items(model))):
        if tuple(arr.shape) != tuple(t.shape):
            raise DomainError(f"tensor {name!r} has shape {arr.shape}, expected {tuple(t.shape)}")
        state[name] = torch.from_numpy(np.ascontiguousarray(arr))
    missing, unexpected = model.load_state_dict(state, strict=False)
    missing = [m for m in missing if not m.endswith("num_batches_tracked")]
    if missing or unexpected:
        raise DomainError(f"weight mismatch: missing={missing} unexpected={unexpected}")
    return model


def init_weights(cfg: NetworkConfig, seed: int = 0) -> Weights:
    return weights_from_model(build_model(cfg, seed))


def model_from_weights(w: Weights, cfg: NetworkConfig) -> CoefficientEstimator:
    model = CoefficientEstimator(cfg)
    return apply_weights(model, w)


def forward(w: Weights, batch, cfg: NetworkConfig | None = None, mode: str = "eval"):
    """Functional forward pass: (k1 predictions, k2 predictions) as numpy arrays.

    `batch` is (N, 3, S, S) float in [-1, 1].
    """
    cfg = cfg or NetworkConfig()
    if mode not in ("train", "eval"):
        raise DomainError(f"mode must be 'train' or 'eval', got {mode!r}")
    model = model_from_weights(w, cfg)
    model.train(mode == "train")
    x = torch.as_tensor(np.asarray(batch), dtype=torch.float32)
    if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != cfg.input_size or x.shape[3] != cfg.input_size:
        raise DomainError(f"batch shape {tuple(x.shape)} does not match "
                          f"(N, 3, {cfg.input_size}, {cfg.input_size})")
    with torch.no_grad():
        k1, k2 = model(x)
    return k1.numpy(), k2.numpy()


def normalize_images(images_u8) -> np.ndarray:
    """uint8 (N, H, W, 3) -> float32 (N, 3, H, W) in [-1, 1]."""
    arr = np.asarray(images_u8)
    if arr.ndim == 3:
        arr = arr[None]
    x = arr.astype(np.float32) / 255.0 * 2.0 - 1.0
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2))


def predict(w: Weights, image_u8, cfg: NetworkConfig | None = None):
    """Width-normalized (k1, k2) for one RGB image already at input size."""
    cfg = cfg or NetworkConfig()
    batch = normalize_images(image_u8)
    k1, k2 = forward(w, batch, cfg, mode="eval")
    return float(k1[0]), float(k2[0])


def split_loss_torch(pred_k1, pred_k2, label_k1, label_k2, radii: torch.Tensor):
    """Per-sample split-loss totals on a radius grid (differentiable).

    Mirrors the numpy loss: each coefficient is scored by the squared curve
    discrepancy with the other coefficient held at its true value.
    """
    r = radii.reshape(1, -1)
    r3 = r**3
    r5 = r**5

    def curve(k1, k2):
        return r + k1.reshape(-1, 1) * r3 + k2.reshape(-1, 1) * r5

    p_true = curve(label_k1, label_k2)
    l_k1 = ((p_true - curve(pred_k1, label_k2)) ** 2).sum(dim=1)
    l_k2 = ((p_true - curve(label_k1, pred_k2)) ** 2).sum(dim=1)
    return l_k1 + l_k2


def batch_loss_tensors(model: nn.Module, x: torch.Tensor, labels: torch.Tensor,
                       radii: torch.Tensor) -> torch.Tensor:
    """Mean split-loss total over a batch (labels shape (N, 2))."""
    k1, k2 = model(x)
    return split_loss_torch(k1, k2, labels[:, 0], labels[:, 1], radii).mean()


def loss_and_grad(w: Weights, batch, labels, grid=None,
                  cfg: NetworkConfig | None = None, mode: str = "train"):
    """Mean batch loss plus gradients for every parameter tensor.

    Returns (loss, {parameter name: gradient array}). Raises on a
    non-finite loss.
    """
    cfg = cfg or NetworkConfig()
    grid = grid or default_grid()
    model = model_from_weights(w, cfg)
    model.train(mode == "train")
    x = torch.as_tensor(np.asarray(batch), dtype=torch.float32)
    y = torch.as_tensor(np.asarray(labels, dtype=np.float32))
    radii = torch.as_tensor(grid.radii, dtype=torch.float32)
    loss = batch_loss_tensors(model, x, y, radii)
    if not torch.isfinite(loss):
        from .errors import TrainingError

        raise TrainingError(f"non-finite loss {loss.item()!r} "
                            f"(batch of {x.shape[0]}, labels {y.tolist()[:4]}...)")
    loss.backward()
    grads = {name: p.grad.detach().numpy().copy()
             for name, p in model.named_parameters()}
    return float(loss.item()), grads
