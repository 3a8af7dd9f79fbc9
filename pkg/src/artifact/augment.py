"""Synthetic perturbation generators for building robust training sets.

Nine generators, each pure given its RngStream, each keeping values in [0, 1]
and preserving dimensions. A pipeline is an ordered list of PerturbationSpec;
every spec flips one independent coin per image, drawn from a substream keyed
by the spec's position, so adding or removing a spec never disturbs the
randomness seen by the others.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .core.ops import hsv_to_rgb, rgb_to_hsv
from .core.types import ImageTensor, RngStream

if TYPE_CHECKING:
    from .nn.network import Model


class PerturbationKind(Enum):
    GAUSSIAN_NOISE = "gaussian_noise"
    SALT_PEPPER = "salt_pepper"
    MOTION_BLUR = "motion_blur"
    PIXELATE = "pixelate"
    HUE_SAT_JITTER = "hue_sat_jitter"
    RANDOM_ERASE = "random_erase"
    ADVERSARIAL_NOISE = "adversarial_noise"
    QUANTIZATION = "quantization"
    MASK_CORRUPTION = "mask_corruption"


# Parameter names (with defaults) each kind requires.
PARAM_DEFAULTS: dict[PerturbationKind, dict[str, float]] = {
    PerturbationKind.GAUSSIAN_NOISE: {"sigma": 0.05},
    PerturbationKind.SALT_PEPPER: {"p": 0.05},
    PerturbationKind.MOTION_BLUR: {"length": 5, "angle_deg": 0.0},
    PerturbationKind.PIXELATE: {"block": 4},
    PerturbationKind.HUE_SAT_JITTER: {"max_dh": 0.1, "max_ds": 0.2},
    PerturbationKind.RANDOM_ERASE: {"area_frac": 0.1},
    PerturbationKind.ADVERSARIAL_NOISE: {"epsilon": 0.03},
    PerturbationKind.QUANTIZATION: {"levels": 8},
    PerturbationKind.MASK_CORRUPTION: {"n_blobs": 3, "blob_size": 6},
}


@dataclass
class PerturbationSpec:
    kind: PerturbationKind
    params: dict[str, float] = field(default_factory=dict)
    probability: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.probability <= 1.0):
            raise ValueError(f"probability must be in [0, 1], got {self.probability}")
        merged = dict(PARAM_DEFAULTS[self.kind])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ValueError(f"{self.kind.value}: unknown params {sorted(unknown)}")
        merged.update(self.params)
        self.params = merged

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "params": dict(self.params), "probability": self.probability}

    @classmethod
    def from_dict(cls, d: dict) -> "PerturbationSpec":
        return cls(kind=PerturbationKind(d["kind"]), params=dict(d.get("params", {})),
                   probability=float(d.get("probability", 1.0)))


def gaussian_noise(img: ImageTensor, sigma: float, rng: RngStream) -> ImageTensor:
    """Additive per-value N(0, sigma^2) noise, clamped to [0, 1]."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img.copy()
    noise = rng.generator().normal(0.0, sigma, size=img.shape)
    return ImageTensor(np.clip(img.data + noise, 0.0, 1.0))


def salt_pepper(img: ImageTensor, p: float, rng: RngStream) -> ImageTensor:
    """Each pixel becomes 0 or 1 (even odds) with probability p, all channels together."""
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p must be in [0, 1], got {p}")
    gen = rng.generator()
    _, h, w = img.shape
    hit = gen.random((h, w)) < p
    value = (gen.random((h, w)) < 0.5).astype(np.float64)
    out = img.data.copy()
    out[:, hit] = value[hit]
    return ImageTensor(out)


def _line_kernel(length: int, angle_deg: float) -> list[tuple[int, int, float]]:
    """Nearest-pixel rasterized line of `length` taps, normalized weights."""
    theta = math.radians(angle_deg)
    dx, dy = math.cos(theta), -math.sin(theta)  # image y axis points down
    center = (length - 1) / 2.0
    counts: dict[tuple[int, int], int] = {}
    for t in range(length):
        off = t - center
        cell = (round(off * dy), round(off * dx))
        counts[cell] = counts.get(cell, 0) + 1
    return [(cy, cx, c / length) for (cy, cx), c in sorted(counts.items())]


def motion_blur_aug(img: ImageTensor, length: int, angle_deg: float = 0.0,
                    rng: RngStream | None = None) -> ImageTensor:
    """Directional line-kernel blur, edge-clamped. length=1 is the identity."""
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if length == 1:
        return img.copy()
    _, h, w = img.shape
    ys, xs = np.arange(h), np.arange(w)
    out = np.zeros_like(img.data)
    for cy, cx, weight in _line_kernel(length, angle_deg):
        yy = np.clip(ys + cy, 0, h - 1)
        xx = np.clip(xs + cx, 0, w - 1)
        out += weight * img.data[:, yy[:, None], xx[None, :]]
    return ImageTensor(out)


def pixelate(img: ImageTensor, block: int) -> ImageTensor:
    """Replace each block x block cell by its own mean (edge cells by theirs)."""
    if block < 1:
        raise ValueError(f"block must be >= 1, got {block}")
    if block == 1:
        return img.copy()
    _, h, w = img.shape
    out = img.data.copy()
    for y in range(0, h, block):
        for x in range(0, w, block):
            cell = img.data[:, y : y + block, x : x + block]
            out[:, y : y + block, x : x + block] = cell.mean(axis=(1, 2), keepdims=True)
    return ImageTensor(out)


def hue_saturation_jitter(img: ImageTensor, max_dh: float, max_ds: float, rng: RngStream) -> ImageTensor:
    """Shift hue (wrapping) and saturation (clamped) by uniform offsets; V is untouched."""
    if not (0.0 <= max_dh <= 0.5):
        raise ValueError(f"max_dh must be in [0, 0.5], got {max_dh}")
    if not (0.0 <= max_ds <= 1.0):
        raise ValueError(f"max_ds must be in [0, 1], got {max_ds}")
    gen = rng.generator()
    dh = gen.uniform(-max_dh, max_dh)
    ds = gen.uniform(-max_ds, max_ds)
    hsv = rgb_to_hsv(img).data
    hsv[0] = (hsv[0] + dh) % 1.0
    hsv[1] = np.clip(hsv[1] + ds, 0.0, 1.0)
    return hsv_to_rgb(ImageTensor(hsv))


def random_erase(img: ImageTensor, area_frac: float, rng: RngStream) -> ImageTensor:
    """Fill one random rectangle (~area_frac of the image, aspect in [0.5, 2])
    with uniform noise. Falls back to a full-width strip when it cannot fit."""
    if not (0.0 < area_frac < 1.0):
        raise ValueError(f"area_frac must be in (0, 1), got {area_frac}")
    gen = rng.generator()
    _, h, w = img.shape
    area = area_frac * h * w
    aspect = gen.uniform(0.5, 2.0)
    rh = max(1, round(math.sqrt(area * aspect)))
    rw = max(1, round(area / rh))
    if rh > h or rw > w:
        rw = w
        rh = min(h, max(1, round(area / w)))
    y0 = int(gen.integers(0, h - rh + 1))
    x0 = int(gen.integers(0, w - rw + 1))
    out = img.data.copy()
    out[:, y0 : y0 + rh, x0 : x0 + rw] = gen.random((img.channels, rh, rw))
    return ImageTensor(out)


def adversarial_noise(img: ImageTensor, model: "Model", epsilon: float) -> ImageTensor:
    """Fast-gradient-sign perturbation against the model's own prediction.

    The loss is binary cross-entropy between the model output and its own
    predicted label (untargeted), so no ground truth is needed. The change is
    bounded by epsilon per pixel in L-infinity.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if epsilon == 0:
        return img.copy()
    sign = _fgsm_sign(img.data[None].astype(np.float32), model)[0]
    # Perturb in float64 so the L-infinity bound holds exactly on the tensor.
    return ImageTensor(np.clip(img.data + epsilon * sign.astype(np.float64), 0.0, 1.0))


def _fgsm_sign(batch: np.ndarray, model: "Model") -> np.ndarray:
    preds = model.forward(batch)
    own_labels = (preds > 0.5).astype(batch.dtype)
    _, dinput = model.backward("bce", own_labels)
    return np.sign(dinput)


def adversarial_noise_batch(batch: np.ndarray, model: "Model", epsilon: float) -> np.ndarray:
    """Batched FGSM; per-sample results equal the single-image path because
    sign(grad of mean loss) = sign(grad of per-sample loss)."""
    return np.clip(batch + epsilon * _fgsm_sign(batch, model), 0.0, 1.0)


def quantization(img: ImageTensor, levels: int) -> ImageTensor:
    """Snap every value to `levels` uniform steps (ties round to even)."""
    if levels < 2:
        raise ValueError(f"levels must be >= 2, got {levels}")
    q = levels - 1
    return ImageTensor(np.round(img.data * q) / q)


def mask_corruption(img: ImageTensor, n_blobs: int, blob_size: int, rng: RngStream) -> ImageTensor:
    """Fill n random square blobs with the image's per-channel mean color."""
    if n_blobs < 1:
        raise ValueError(f"n_blobs must be >= 1, got {n_blobs}")
    gen = rng.generator()
    _, h, w = img.shape
    size_h = min(blob_size, h)
    size_w = min(blob_size, w)
    mean_color = img.data.mean(axis=(1, 2), keepdims=True)
    out = img.data.copy()
    for _ in range(n_blobs):
        y0 = int(gen.integers(0, h - size_h + 1))
        x0 = int(gen.integers(0, w - size_w + 1))
        out[:, y0 : y0 + size_h, x0 : x0 + size_w] = mean_color
    return ImageTensor(out)


def apply_spec(img: ImageTensor, spec: PerturbationSpec, rng: RngStream,
               model: "Model | None" = None) -> ImageTensor:
    """Apply one generator unconditionally (the probability coin lives in the pipeline)."""
    p = spec.params
    kind = spec.kind
    if kind is PerturbationKind.GAUSSIAN_NOISE:
        return gaussian_noise(img, p["sigma"], rng)
    if kind is PerturbationKind.SALT_PEPPER:
        return salt_pepper(img, p["p"], rng)
    if kind is PerturbationKind.MOTION_BLUR:
        return motion_blur_aug(img, int(p["length"]), p["angle_deg"], rng)
    if kind is PerturbationKind.PIXELATE:
        return pixelate(img, int(p["block"]))
    if kind is PerturbationKind.HUE_SAT_JITTER:
        return hue_saturation_jitter(img, p["max_dh"], p["max_ds"], rng)
    if kind is PerturbationKind.RANDOM_ERASE:
        return random_erase(img, p["area_frac"], rng)
    if kind is PerturbationKind.ADVERSARIAL_NOISE:
        if model is None:
            raise ValueError("adversarial_noise requires a classifier model")
        return adversarial_noise(img, model, p["epsilon"])
    if kind is PerturbationKind.QUANTIZATION:
        return quantization(img, int(p["levels"]))
    if kind is PerturbationKind.MASK_CORRUPTION:
        return mask_corruption(img, int(p["n_blobs"]), int(p["blob_size"]), rng)
    raise AssertionError(f"unhandled kind {kind}")


def apply_pipeline(img: ImageTensor, specs: list[PerturbationSpec], rng: RngStream,
                   model: "Model | None" = None) -> ImageTensor:
    """Apply each spec in order with its probability: one coin per spec.

    Substream j of `rng` feeds spec j (coin first, then the generator), so
    schedules with probability 0 are bit-identical to schedules without the
    spec at all.
    """
    out = img
    for j, spec in enumerate(specs):
        sub = rng.derive(j)
        coin = sub.generator().random()
        if coin < spec.probability:
            out = apply_spec(out, spec, sub.derive(1), model=model)
    return out


def apply_pipeline_batch(images: list[ImageTensor], specs: list[PerturbationSpec],
                         rngs: list[RngStream], model: "Model | None" = None,
                         ) -> list[ImageTensor]:
    """Pipeline over many images with the same per-image coin semantics as
    :func:`apply_pipeline`, but adversarial steps run as one batched
    forward/backward (the gradient sign is per-sample, so results match).
    """
    out = list(images)
    for j, spec in enumerate(specs):
        subs = [rng.derive(j) for rng in rngs]
        fired = [i for i, sub in enumerate(subs)
                 if sub.generator().random() < spec.probability]
        if not fired:
            continue
        if spec.kind is PerturbationKind.ADVERSARIAL_NOISE:
            if model is None:
                raise ValueError("adversarial_noise requires a classifier model")
            batch = np.stack([out[i].data for i in fired]).astype(np.float32)
            perturbed = adversarial_noise_batch(batch, model, spec.params["epsilon"])
            for bi, i in enumerate(fired):
                out[i] = ImageTensor(perturbed[bi].astype(np.float64))
        else:
            for i in fired:
                out[i] = apply_spec(out[i], spec, subs[i].derive(1), model=model)
    return out


def default_pipeline(probability: float = 0.3) -> list[PerturbationSpec]:
    """The nine-generator schedule with library default parameters."""
    return [PerturbationSpec(kind=k, probability=probability) for k in PerturbationKind]


def pipeline_to_json(specs: list[PerturbationSpec]) -> list[dict]:
    return [s.to_dict() for s in specs]


def pipeline_from_json(data: list[dict]) -> list[PerturbationSpec]:
    return [PerturbationSpec.from_dict(d) for d in data]
