"""Estimator training against synthesized crop datasets."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import DataError, DomainError, TrainingError
from .imaging import read_image, resize_bilinear
from .loss import RadiusGrid, default_grid
from .network import (
    NetworkConfig,
    batch_loss_tensors,
    model_from_weights,
    normalize_images,
    weights_from_model,
)
from .panorama import read_manifest
from .weights_io import Weights


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters; the paper leaves all of these open."""

    optimizer: str = "adam"
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    grid: RadiusGrid = field(default_factory=default_grid)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise DomainError("learning rate must be >= 0")
        if self.batch_size < 1:
            raise DomainError("batch size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise DomainError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class CropDataset:
    """Decoded crops (float32, normalized, NCHW) with their labels (N, 2)."""

    images: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return self.images.shape[0]

    def subset(self, idx):
        return CropDataset(self.images[idx], self.labels[idx])


def load_dataset(manifest_path, data_dir=None, input_size: int = 64) -> CropDataset:
    """Load every crop referenced by a manifest into memory.

    Images not already at input_size x input_size are resized bilinearly.
    """
    manifest = read_manifest(manifest_path)
    base = Path(data_dir) if data_dir is not None else Path(manifest_path).parent
    images = []
    labels = []
    for filename, params in manifest.records:
        img = read_image(base / filename)
        if img.shape[0] != input_size or img.shape[1] != input_size:
            img = resize_bilinear(img, input_size, input_size)
        images.append(img)
        labels.append((params.k1, params.k2))
    if not images:
        raise DataError(f"manifest {manifest_path} lists no images")
    return CropDataset(
        images=normalize_images(np.stack(images)),
        labels=np.asarray(labels, dtype=np.float32),
    )


def _make_optimizer(tc: TrainConfig, params):
    if tc.optimizer == "adam":
        return torch.optim.Adam(params, lr=tc.learning_rate)
    return torch.optim.SGD(params, lr=tc.learning_rate)


def train(w: Weights, dataset: CropDataset, tc: TrainConfig,
          cfg: NetworkConfig | None = None, val_dataset: CropDataset | None = None,
          log_fn=None):
    """Train from the given weights; returns (Weights, per-epoch log).

    The log holds one dict per epoch: {"epoch", "train_loss", "val_loss"}
    (val_loss is None without a validation set). Deterministic for a fixed
    seed in single-worker use. A non-finite loss aborts with a
    TrainingError carrying the weights from the last completed epoch.
    """
    cfg = cfg or NetworkConfig()
    if dataset.images.shape[2] != cfg.input_size:
        raise DomainError(f"dataset images are {dataset.images.shape[2]}px, "
                          f"config expects {cfg.input_size}px")
    torch.manual_seed(tc.seed)
    model = model_from_weights(w, cfg)
    optimizer = _make_optimizer(tc, model.parameters())
    radii = torch.as_tensor(tc.grid.radii, dtype=torch.float32)
    images = torch.from_numpy(dataset.images)
    labels = torch.from_numpy(dataset.labels)
    order_rng = np.random.default_rng(tc.seed)
    n = len(dataset)
    log = []
    last_good = weights_from_model(model)
    for epoch in range(tc.epochs):
        model.train(True)
        perm = order_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, tc.batch_size):
            idx = perm[start:start + tc.batch_size]
            optimizer.zero_grad()
            loss = batch_loss_tensors(model, images[idx], labels[idx], radii)
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"training diverged at epoch {epoch} (non-finite loss); "
                    f"last good checkpoint attached", last_weights=last_good)
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.item()) * len(idx)
        entry = {"epoch": epoch, "train_loss": epoch_loss / n, "val_loss": None}
        if val_dataset is not None:
            entry["val_loss"] = evaluate_loss(model, val_dataset, radii)
        last_good = weights_from_model(model)
        log.append(entry)
        if log_fn is not None:
            log_fn(entry)
    return last_good, log


def evaluate_loss(model, dataset: CropDataset, radii, batch_size: int = 256) -> float:
    """Mean split-loss total over a dataset in eval mode."""
    model.train(False)
    images = torch.from_numpy(dataset.images)
    labels = torch.from_numpy(dataset.labels)
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            x = images[start:start + batch_size]
            y = labels[start:start + batch_size]
            total += float(batch_loss_tensors(model, x, y, radii).item()) * x.shape[0]
    return total / len(dataset)


def predict_dataset(w: Weights, dataset: CropDataset, cfg: NetworkConfig | None = None,
                    batch_size: int = 256) -> np.ndarray:
    """Eval-mode predictions (N, 2) for every crop in the dataset."""
    cfg = cfg or NetworkConfig()
    model = model_from_weights(w, cfg)
    model.train(False)
    images = torch.from_numpy(dataset.images)
    preds = []
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            k1, k2 = model(images[start:start + batch_size])
            preds.append(np.stack([k1.numpy(), k2.numpy()], axis=1))
    return np.concatenate(preds, axis=0)
