"""Real/fake detector: reference CNN, augmented training loop, evaluation.

Training applies the geometric transform schedule (flips, rotation,
perspective, grayscale, erasing, each with its configured probability) and
then the optional perturbation pipeline, per image, with per-image derived
rng streams so parallel and serial batch assembly agree bit-for-bit.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import augment
from .core.io import load_png
from .core.types import DatasetManifest, ImageTensor, Label, RngStream
from .nn.network import LayerSpec, Model, loss_value, sgd_step

VAL_SPLIT = 0.1  # stratified by label, fixed


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    flip_h_p: float = 0.6
    flip_v_p: float = 0.6
    erase_p: float = 0.6
    grayscale_p: float = 0.6
    perspective_p: float = 0.6
    rotation_max_deg: float = 30.0
    lr: float = 0.03
    momentum: float = 0.9
    seed: int = 0
    early_stop_patience: int = 3
    # optional step decay: lr multiplies by lr_decay_factor at lr_decay_epoch
    lr_decay_factor: float = 0.2
    lr_decay_epoch: int = 0  # 0 disables the step
    clip_norm: float = 2.0  # global gradient-norm ceiling; 0 disables

    def __post_init__(self):
        for name in ("flip_h_p", "flip_v_p", "erase_p", "grayscale_p", "perspective_p"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class EvalResult:
    accuracy: float
    confusion: dict[str, dict[str, int]]  # confusion[actual][predicted]
    predictions: list[dict] = field(default_factory=list)
    median_infer_ms: float = 0.0
    unreadable: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": self.confusion,
            "predictions": self.predictions,
            "median_infer_ms": self.median_infer_ms,
            "unreadable": self.unreadable,
        }


def default_classifier_specs() -> list[LayerSpec]:
    return [
        LayerSpec.make("center"),
        LayerSpec.make("conv2d", in_ch=3, out_ch=32, kernel=3, stride=1, padding=1),
        LayerSpec.make("relu"),
        LayerSpec.make("maxpool2d", size=2),
        LayerSpec.make("conv2d", in_ch=32, out_ch=64, kernel=3, stride=1, padding=1),
        LayerSpec.make("relu"),
        LayerSpec.make("maxpool2d", size=2),
        LayerSpec.make("conv2d", in_ch=64, out_ch=128, kernel=3, stride=1, padding=1),
        LayerSpec.make("relu"),
        LayerSpec.make("maxpool2d", size=2),
        LayerSpec.make("flatten"),
        LayerSpec.make("dense", in_dim=128 * 4 * 4, out_dim=256),
        LayerSpec.make("relu"),
        LayerSpec.make("dense", in_dim=256, out_dim=1),
        LayerSpec.make("sigmoid"),
    ]


def build_default_classifier(seed: int = 0) -> Model:
    """Small CNN for 3x32x32 inputs emitting a scalar P(fake)."""
    model = Model.initialize(default_classifier_specs(), seed=seed, metadata={"name": "classifier"})
    assert model.param_count() <= 2_000_000
    return model


# ---------------------------------------------------------------------------
# Geometric training transforms
# ---------------------------------------------------------------------------

def _bilinear_sample(data: np.ndarray, sy: np.ndarray, sx: np.ndarray) -> np.ndarray:
    """Gather (c, H, W) at float coords with edge clamping."""
    _, h, w = data.shape
    sy = np.clip(sy, 0.0, h - 1.0)
    sx = np.clip(sx, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = sy - y0
    wx = sx - x0
    top = data[:, y0, x0] * (1 - wx) + data[:, y0, x1] * wx
    bot = data[:, y1, x0] * (1 - wx) + data[:, y1, x1] * wx
    return top * (1 - wy) + bot * wy


def _rotate(data: np.ndarray, angle_deg: float) -> np.ndarray:
    if angle_deg == 0.0:
        return data
    _, h, w = data.shape
    theta = math.radians(angle_deg)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    dy, dx = ys - cy, xs - cx
    sy = math.cos(theta) * dy - math.sin(theta) * dx + cy
    sx = math.sin(theta) * dy + math.cos(theta) * dx + cx
    return _bilinear_sample(data, sy, sx)


def _homography(src_pts: np.ndarray, dst_pts: np.ndarray) -> np.ndarray:
    """3x3 matrix mapping dst (x, y) to src for 4 point pairs."""
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((u, v), (x, y)) in enumerate(zip(src_pts, dst_pts)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -x * u, -y * u]
        b[2 * i] = u
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -x * v, -y * v]
        b[2 * i + 1] = v
    h = np.linalg.solve(a, b)
    return np.array([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])


def _perspective(data: np.ndarray, rng_gen: np.random.Generator, max_frac: float = 0.15) -> np.ndarray:
    _, h, w = data.shape
    corners = np.array([[0, 0], [w - 1.0, 0], [w - 1.0, h - 1.0], [0, h - 1.0]])
    jitter = rng_gen.uniform(-max_frac, max_frac, size=(4, 2)) * np.array([w - 1.0, h - 1.0])
    src = corners + jitter
    m = _homography(src, corners)
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    denom = m[2, 0] * xs + m[2, 1] * ys + m[2, 2]
    sx = (m[0, 0] * xs + m[0, 1] * ys + m[0, 2]) / denom
    sy = (m[1, 0] * xs + m[1, 1] * ys + m[1, 2]) / denom
    return _bilinear_sample(data, sy, sx)


def _grayscale3(data: np.ndarray) -> np.ndarray:
    luma = 0.299 * data[0] + 0.587 * data[1] + 0.114 * data[2]
    return np.stack([luma, luma, luma])


def augment_image(data: np.ndarray, cfg: TrainConfig, rng: RngStream) -> np.ndarray:
    """Geometric schedule for one (3, H, W) float64 image in [0, 1]."""
    out = data
    if rng.derive(0).generator().random() < cfg.flip_h_p:
        out = out[:, :, ::-1]
    if rng.derive(1).generator().random() < cfg.flip_v_p:
        out = out[:, ::-1, :]
    if cfg.rotation_max_deg > 0:
        angle = rng.derive(2).generator().uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg)
        out = _rotate(np.ascontiguousarray(out), angle)
    pgen = rng.derive(3).generator()
    if pgen.random() < cfg.perspective_p:
        out = _perspective(np.ascontiguousarray(out), pgen)
    if rng.derive(4).generator().random() < cfg.grayscale_p:
        out = _grayscale3(out)
    if rng.derive(5).generator().random() < cfg.erase_p:
        erased = augment.random_erase(ImageTensor(np.clip(out, 0.0, 1.0)), 0.1, rng.derive(6))
        out = erased.data
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Dataset plumbing
# ---------------------------------------------------------------------------

def load_dataset(manifest: DatasetManifest) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Load every manifest entry into (N, 3, 32, 32) float32 + labels (fake=1)."""
    xs, ys, paths = [], [], []
    for path, label in manifest.entries:
        img = load_png(path)
        if img.shape != (3, 32, 32):
            raise ValueError(f"{path}: training expects 3x32x32 images, got {img.shape}")
        xs.append(img.data.astype(np.float32))
        ys.append(1.0 if label is Label.FAKE else 0.0)
        paths.append(path)
    return np.stack(xs), np.asarray(ys, dtype=np.float32)[:, None], paths


def stratified_split(labels: np.ndarray, seed: int, val_frac: float = VAL_SPLIT,
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic per-class split; tiny classes keep everything in train."""
    gen = RngStream(seed).derive(0xA11).generator()
    train_idx, val_idx = [], []
    for cls in (0.0, 1.0):
        idx = np.flatnonzero(labels[:, 0] == cls)
        perm = idx[gen.permutation(len(idx))]
        n_val = int(math.floor(val_frac * len(idx)))
        if n_val >= len(idx):
            n_val = len(idx) - 1
        val_idx.extend(perm[:n_val])
        train_idx.extend(perm[n_val:])
    return np.sort(np.asarray(train_idx, dtype=np.int64)), np.sort(np.asarray(val_idx, dtype=np.int64))


def dataset_fingerprint(manifest: DatasetManifest) -> str:
    import hashlib

    h = hashlib.sha256()
    for path, label in manifest.entries:
        h.update(path.encode())
        h.update(label.value.encode())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Training and evaluation
# ---------------------------------------------------------------------------

def _batch_forward_loss(model: Model, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    preds = model.forward(x)
    acc = float(np.mean((preds > 0.5).astype(np.float32) == y))
    return loss_value("bce", preds, y), acc


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale the whole gradient set down to a global L2 norm ceiling."""
    if max_norm <= 0:
        return grads
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
    if total <= max_norm:
        return grads
    scale = max_norm / total
    return {name: np.asarray(g * scale, dtype=g.dtype) for name, g in grads.items()}


def train_classifier(manifest: DatasetManifest, cfg: TrainConfig,
                     perturb: list[augment.PerturbationSpec] | None = None,
                     ) -> tuple[Model, list[dict]]:
    """Train the default CNN; returns the model (best-val weights) and history.

    Early stopping: if validation loss fails to improve for
    ``early_stop_patience`` consecutive epochs, training stops and the
    weights of the best epoch are restored.
    """
    perturb = perturb or []
    manifest.require_both_classes()
    x_all, y_all, _ = load_dataset(manifest)
    train_idx, val_idx = stratified_split(y_all, cfg.seed)
    x_train, y_train = x_all[train_idx], y_all[train_idx]
    x_val, y_val = x_all[val_idx], y_all[val_idx]

    model = build_default_classifier(cfg.seed)
    model.metadata["dataset"] = dataset_fingerprint(manifest)
    params = model.copy_params()
    velocity = None
    base_rng = RngStream(cfg.seed).derive(0x7A1)

    needs_model = any(s.kind is augment.PerturbationKind.ADVERSARIAL_NOISE for s in perturb)
    history: list[dict] = []
    best_val = math.inf
    best_params = model.copy_params()
    best_epoch = 0
    bad_epochs = 0

    n = len(train_idx)
    for epoch in range(cfg.epochs):
        lr = cfg.lr
        if cfg.lr_decay_epoch and epoch >= cfg.lr_decay_epoch:
            lr = cfg.lr * cfg.lr_decay_factor
        epoch_rng = base_rng.derive(epoch)
        order = epoch_rng.derive(0).generator().permutation(n)
        losses, accs = [], []
        for start in range(0, n, cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            imgs: list[ImageTensor] = []
            rngs = []
            for ti in sel:
                img_rng = epoch_rng.derive(1, int(ti))
                data = augment_image(x_train[ti].astype(np.float64), cfg, img_rng)
                imgs.append(ImageTensor(data))
                rngs.append(img_rng.derive(100))
            if perturb:
                imgs = augment.apply_pipeline_batch(
                    imgs, perturb, rngs, model=model if needs_model else None)
            batch = np.stack([img.data for img in imgs]).astype(np.float32)
            targets = y_train[sel]
            preds = model.forward(batch)
            losses.append(loss_value("bce", preds, targets))
            accs.append(float(np.mean((preds > 0.5).astype(np.float32) == targets)))
            grads, _ = model.backward("bce", targets)
            grads = clip_gradients(grads, cfg.clip_norm)
            params, velocity = sgd_step(params, grads, lr, cfg.momentum, velocity)
            model.set_params(params)

        if len(val_idx):
            val_loss, val_acc = _batch_forward_loss(model, x_val, y_val)
        else:
            val_loss, val_acc = float(np.mean(losses)), float(np.mean(accs))
        history.append({
            "epoch": epoch + 1,
            "train_loss": float(np.mean(losses)),
            "val_loss": val_loss,
            "train_acc": float(np.mean(accs)),
            "val_acc": val_acc,
        })

        if val_loss < best_val:
            best_val = val_loss
            best_params = model.copy_params()
            best_epoch = epoch + 1
            bad_epochs = 0
        else:
            bad_epochs += 1
            if len(val_idx) and bad_epochs >= cfg.early_stop_patience:
                break

    model.set_params(best_params)
    model.metadata["epochs_trained"] = best_epoch
    return model, history


def predict(model: Model, img: ImageTensor) -> tuple[Label, float]:
    """Fake iff P(fake) > 0.5 (ties are Real); confidence = max(P, 1-P)."""
    if img.shape != (3, 32, 32):
        raise ValueError(f"predict expects 3x32x32, got {img.shape}")
    p = float(model.forward(img.data[None].astype(np.float32))[0, 0])
    label = Label.FAKE if p > 0.5 else Label.REAL
    return label, max(p, 1.0 - p)


def evaluate(model: Model, manifest: DatasetManifest) -> EvalResult:
    """Accuracy, confusion counts, per-image predictions and forward timing.

    Unreadable entries are collected, not fatal. Timing is the median
    single-image forward wall time with the model preloaded.
    """
    if not manifest.entries:
        raise ValueError("cannot evaluate an empty manifest")
    confusion = {"real": {"real": 0, "fake": 0}, "fake": {"real": 0, "fake": 0}}
    predictions = []
    unreadable = []
    times = []
    for path, label in manifest.entries:
        try:
            img = load_png(path)
            if img.shape != (3, 32, 32):
                raise ValueError(f"bad shape {img.shape}")
        except Exception:
            unreadable.append(path)
            continue
        t0 = time.perf_counter()
        pred, conf = predict(model, img)
        times.append((time.perf_counter() - t0) * 1000.0)
        confusion[label.value][pred.value] += 1
        predictions.append({
            "path": path, "label": label.value, "predicted": pred.value,
            "confidence": conf,
        })
    total = sum(sum(row.values()) for row in confusion.values())
    correct = confusion["real"]["real"] + confusion["fake"]["fake"]
    return EvalResult(
        accuracy=correct / total if total else 0.0,
        confusion=confusion,
        predictions=predictions,
        median_infer_ms=float(np.median(times)) if times else 0.0,
        unreadable=unreadable,
    )


def history_to_csv(history: list[dict], path: str | Path) -> None:
    lines = ["epoch,train_loss,val_loss,train_acc,val_acc"]
    for row in history:
        lines.append(
            f"{row['epoch']},{row['train_loss']:.6f},{row['val_loss']:.6f},"
            f"{row['train_acc']:.4f},{row['val_acc']:.4f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
