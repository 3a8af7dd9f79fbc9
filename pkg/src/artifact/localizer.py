"""Autoencoder-based artifact localization.

The autoencoder is trained only on real images, so regions it cannot
reconstruct are evidence of content off the real-image manifold. Per-pixel
reconstruction error (squared difference summed over channels) becomes an
ErrorMap, a highlight rule turns it into a boolean mask, and the overlay
renders it as a red tint for humans and the explanation stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .classifier import clip_gradients, dataset_fingerprint, load_dataset
from .core.ops import gaussian_blur_plane
from .core.types import DatasetManifest, ImageTensor, Label, RngStream
from .nn.network import LayerSpec, Model, loss_value, sgd_step


@dataclass
class ErrorMap:
    """H x W nonnegative per-pixel reconstruction loss with summary stats."""

    values: np.ndarray
    stats: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"error map must be 2-D, got shape {self.values.shape}")
        if (self.values < 0).any():
            raise ValueError("error map values must be nonnegative")
        if not self.stats:
            self.stats = {
                "mean": float(self.values.mean()),
                "max": float(self.values.max()),
                "p90": float(np.percentile(self.values, 90)),
            }

    def to_grid(self) -> list[list[float]]:
        return self.values.tolist()


@dataclass(frozen=True)
class ImagePercentile:
    """Mask pixels strictly above this map's own p-th percentile."""

    p: float = 90.0

    def __post_init__(self):
        if not (0.0 < self.p < 100.0):
            raise ValueError(f"percentile must be in (0, 100), got {self.p}")


@dataclass(frozen=True)
class GlobalSigma:
    """Mask pixels above mean + k*sigma of training-time real-image errors."""

    k: float = 2.0
    mean: float = 0.0
    std: float = 0.0


HighlightRule = Union[ImagePercentile, GlobalSigma]


@dataclass
class AutoencoderTrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 0.5
    momentum: float = 0.9
    seed: int = 0
    clip_norm: float = 1.0
    lr_decay_factor: float = 0.2
    lr_decay_epoch: int = 0  # 0 disables the step


def default_autoencoder_specs() -> list[LayerSpec]:
    return [
        LayerSpec.make("center"),
        LayerSpec.make("conv2d", in_ch=3, out_ch=16, kernel=3, stride=1, padding=1),
        LayerSpec.make("relu"),
        LayerSpec.make("maxpool2d", size=2),
        LayerSpec.make("conv2d", in_ch=16, out_ch=32, kernel=3, stride=1, padding=1),
        LayerSpec.make("relu"),
        LayerSpec.make("maxpool2d", size=2),
        LayerSpec.make("conv_transpose2d", in_ch=32, out_ch=16, kernel=2, stride=2),
        LayerSpec.make("relu"),
        LayerSpec.make("conv_transpose2d", in_ch=16, out_ch=3, kernel=2, stride=2),
        LayerSpec.make("sigmoid"),
    ]


def build_default_autoencoder(seed: int = 0) -> Model:
    """3x32x32 -> 3x32x32 with an 8x8 spatial bottleneck."""
    return Model.initialize(default_autoencoder_specs(), seed=seed, metadata={"name": "autoencoder"})


def train_autoencoder(manifest: DatasetManifest, cfg: AutoencoderTrainConfig) -> tuple[Model, list[dict]]:
    """Minimize MSE reconstruction over a real-only manifest.

    Any fake-labeled entry is refused outright: training on fakes would
    invalidate the reconstruction-gap reasoning downstream.
    """
    for path, label in manifest.entries:
        if label is not Label.REAL:
            raise ValueError(f"autoencoder training requires real-only data; {path} is labeled fake")
    if not manifest.entries:
        raise ValueError("autoencoder training manifest is empty")

    x_all, _, _ = load_dataset(manifest)
    model = build_default_autoencoder(cfg.seed)
    model.metadata["dataset"] = dataset_fingerprint(manifest)
    params = model.copy_params()
    velocity = None
    rng = RngStream(cfg.seed).derive(0xAE)

    history: list[dict] = []
    n = len(x_all)
    for epoch in range(cfg.epochs):
        lr = cfg.lr
        if cfg.lr_decay_epoch and epoch >= cfg.lr_decay_epoch:
            lr = cfg.lr * cfg.lr_decay_factor
        order = rng.derive(epoch).generator().permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            batch = x_all[order[start : start + cfg.batch_size]]
            recon = model.forward(batch)
            losses.append(loss_value("mse", recon, batch))
            grads, _ = model.backward("mse", batch)
            grads = clip_gradients(grads, cfg.clip_norm)
            params, velocity = sgd_step(params, grads, lr, cfg.momentum, velocity)
            model.set_params(params)
        history.append({"epoch": epoch + 1, "train_loss": float(np.mean(losses))})

    # Training-time error statistics drive the GlobalSigma highlight rule.
    pixel_errors = []
    for start in range(0, n, cfg.batch_size):
        batch = x_all[start : start + cfg.batch_size]
        recon = model.forward(batch)
        diff = (batch.astype(np.float64) - recon.astype(np.float64)) ** 2
        pixel_errors.append(diff.sum(axis=1).ravel())
    errs = np.concatenate(pixel_errors)
    model.metadata["err_mean"] = float(errs.mean())
    model.metadata["err_std"] = float(errs.std())
    model.metadata["epochs_trained"] = cfg.epochs
    return model, history


def reconstruct(model: Model, img: ImageTensor) -> ImageTensor:
    out = model.forward(img.data[None].astype(np.float32))[0]
    return ImageTensor(np.clip(out.astype(np.float64), 0.0, 1.0))


def error_map(model: Model, img: ImageTensor) -> ErrorMap:
    """Per-pixel squared reconstruction error summed over channels."""
    if img.shape != (3, 32, 32):
        raise ValueError(f"error_map expects 3x32x32, got {img.shape}")
    recon = reconstruct(model, img)
    values = ((img.data - recon.data) ** 2).sum(axis=0)
    return ErrorMap(values=values)


def highlight(errmap: ErrorMap, rule: HighlightRule) -> np.ndarray:
    """Boolean mask from an error map by the named rule.

    ImagePercentile uses a strict comparison, so a constant map highlights
    nothing. GlobalSigma can also highlight nothing when the image is clean.
    """
    if isinstance(rule, ImagePercentile):
        threshold = np.percentile(errmap.values, rule.p)
        return errmap.values > threshold
    if isinstance(rule, GlobalSigma):
        return errmap.values > rule.mean + rule.k * rule.std
    raise TypeError(f"unknown highlight rule {rule!r}")


def global_sigma_rule(model: Model, k: float = 2.0) -> GlobalSigma:
    """Build a GlobalSigma rule from a trained autoencoder's stored statistics."""
    if "err_mean" not in model.metadata or "err_std" not in model.metadata:
        raise ValueError("model metadata has no training-time error statistics")
    return GlobalSigma(k=k, mean=model.metadata["err_mean"], std=model.metadata["err_std"])


def heatmap_overlay(img: ImageTensor, errmap: ErrorMap, mask: np.ndarray | None = None,
                    alpha: float = 0.5) -> ImageTensor:
    """Red-tint blend: tint strength is the max-normalized error, forced to
    full strength under the mask. Pixels with zero error and no mask pass
    through unchanged."""
    if errmap.values.shape != (img.height, img.width):
        raise ValueError("error map shape does not match image")
    peak = errmap.values.max()
    strength = errmap.values / peak if peak > 0 else np.zeros_like(errmap.values)
    if mask is not None:
        strength = np.where(mask, 1.0, strength)
    t = alpha * strength
    red = np.array([1.0, 0.0, 0.0])[:, None, None]
    out = img.data * (1.0 - t)[None] + red * t[None]
    return ImageTensor(out)


def anomaly_score(errmap: ErrorMap) -> float:
    """Mean reconstruction error: a secondary fake indicator."""
    return float(errmap.values.mean())


def smoothed(errmap: ErrorMap, sigma: float) -> ErrorMap:
    """Optional Gaussian smoothing of an error map (off by default)."""
    if sigma <= 0:
        return errmap
    return ErrorMap(values=np.maximum(gaussian_blur_plane(errmap.values, sigma), 0.0))


def ranking_auc(positives: list[float], negatives: list[float]) -> float:
    """Exact pairwise AUC: P(score_pos > score_neg) with ties counting half."""
    if not positives or not negatives:
        raise ValueError("need both positive and negative scores")
    wins = 0.0
    for p in positives:
        for q in negatives:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(positives) * len(negatives))


def plant_patch(img: ImageTensor, rng: RngStream, size: int = 8,
                noise: str = "uniform") -> tuple[ImageTensor, tuple[int, int, int, int]]:
    """Paste one noisy size x size patch; returns (image, (y0, x0, y1, x1)).

    noise="uniform" draws U(0,1) values; noise="binary" draws salt-and-pepper
    extremes, which no smooth reconstruction can approach anywhere.
    """
    gen = rng.generator()
    _, h, w = img.shape
    y0 = int(gen.integers(0, h - size + 1))
    x0 = int(gen.integers(0, w - size + 1))
    out = img.data.copy()
    values = gen.random((img.channels, size, size))
    if noise == "binary":
        values = (values < 0.5).astype(np.float64)
    elif noise != "uniform":
        raise ValueError(f"unknown patch noise {noise!r}")
    out[:, y0 : y0 + size, x0 : x0 + size] = values
    return ImageTensor(out), (y0, x0, y0 + size, x0 + size)
