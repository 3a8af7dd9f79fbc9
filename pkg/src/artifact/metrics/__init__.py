"""Perturbation detectors: 13 scalar image statistics plus threshold flags.

Each detector either measures an artifact directly present in the image
(noise, blur, pattern peaks, brightness) or probes susceptibility by applying
a distortion and measuring how much the image changes (pixel shuffle, motion
blur, down/up resampling, JPEG). All scores are nonnegative; MSE means mean
squared error over every channel and pixel.

The constants below (TV iterations and weights, Canny thresholds, the motion
kernel length, the 4x-median peak rule, the resize factor) are fixed so that
scores reproduce bit-for-bit; all of them can be overridden per call.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core.ops import (
    ResizeMode,
    convolve2d_clamped,
    fft2d_magnitude,
    gaussian_blur,
    gaussian_blur_plane,
    resize,
    rgb_to_gray,
    rgb_to_hsv,
    sobel_gradients,
)
from ..core.types import ImageTensor, RngStream
from .jpeg import jpeg_roundtrip

DETECTORS = (
    "noise",
    "compression",
    "blur",
    "edge_intensity",
    "color_shift",
    "saturation_variance",
    "pixel_shuffle",
    "jpeg",
    "resize",
    "edge_smoothing",
    "motion_blur",
    "pattern_injection",
    "brightness",
)

LAPLACIAN_KERNEL = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])

TV_ITERATIONS = 50
TV_WEIGHT = 0.1
TV_STEP = 0.05
TV_EPS = 1e-12

CANNY_SIGMA = 1.0
CANNY_LOW_FRAC = 0.1
CANNY_HIGH_FRAC = 0.2
# Gradient peaks below this are accumulation dust, not structure: one 8-bit
# step is ~4e-3, so this floor only silences flat images.
CANNY_FLAT_EPS = 1e-12

MOTION_KERNEL_LENGTH = 5
PATTERN_PEAK_FACTOR = 4.0
DEFAULT_JPEG_QUALITY = 50
DEFAULT_RESIZE_FACTOR = 0.5


def mse(a: ImageTensor, b: ImageTensor) -> float:
    return float(np.mean((a.data - b.data) ** 2))


# ---------------------------------------------------------------------------
# TV denoising (ROF objective, fixed-step gradient descent)
# ---------------------------------------------------------------------------

def _tv_denoise_plane(f: np.ndarray, weight: float, step: float, iterations: int) -> np.ndarray:
    u = f.copy()
    for _ in range(iterations):
        gx = np.zeros_like(u)
        gy = np.zeros_like(u)
        gx[:, :-1] = u[:, 1:] - u[:, :-1]
        gy[:-1, :] = u[1:, :] - u[:-1, :]
        norm = np.sqrt(gx * gx + gy * gy + TV_EPS)
        px = gx / norm
        py = gy / norm
        div = px + py
        div[:, 1:] -= px[:, :-1]
        div[1:, :] -= py[:-1, :]
        u -= step * ((u - f) - weight * div)
    return u


def tv_denoise(img: ImageTensor, weight: float = TV_WEIGHT, step: float = TV_STEP,
               iterations: int = TV_ITERATIONS) -> ImageTensor:
    """Isotropic ROF denoising by 50 steps of fixed-rate gradient descent.

    Identity on constant images. The result may drift a hair outside [0, 1]
    mid-descent, so it is clamped on return.
    """
    out = np.stack([_tv_denoise_plane(ch, weight, step, iterations) for ch in img.data])
    return ImageTensor(np.clip(out, 0.0, 1.0))


def noise_score(img: ImageTensor) -> float:
    """Residual energy removed by TV denoising."""
    return mse(img, tv_denoise(img))


# ---------------------------------------------------------------------------
# Resampling-based detectors
# ---------------------------------------------------------------------------

def compression_score(img: ImageTensor) -> float:
    """MSE against a half-size bilinear down/up round trip."""
    _, h, w = img.shape
    if h < 2 or w < 2:
        raise ValueError(f"compression_score needs at least 2x2, got {h}x{w}")
    small = resize(img, h // 2, w // 2, ResizeMode.BILINEAR)
    return mse(img, resize(small, h, w, ResizeMode.BILINEAR))


def resize_artifact_score(img: ImageTensor, factor: float = DEFAULT_RESIZE_FACTOR) -> float:
    """Same probe as compression_score but with a configurable shrink factor."""
    if not (0.0 < factor < 1.0):
        raise ValueError(f"factor must be in (0, 1), got {factor}")
    _, h, w = img.shape
    th, tw = int(factor * h), int(factor * w)
    if th < 1 or tw < 1:
        raise ValueError(f"factor {factor} degenerates {h}x{w} to {th}x{tw}")
    small = resize(img, th, tw, ResizeMode.BILINEAR)
    return mse(img, resize(small, h, w, ResizeMode.BILINEAR))


def blur_score(img: ImageTensor) -> float:
    """Laplacian variance of the grayscale image. Low values mean blurry."""
    gray = rgb_to_gray(img) if img.channels == 3 else img
    response = convolve2d_clamped(gray.data[0], LAPLACIAN_KERNEL)
    return float(np.var(response))


def edge_smoothing_score(img: ImageTensor) -> float:
    """MSE against a sigma=1 Gaussian blur of the image."""
    return mse(img, gaussian_blur(img, 1.0))


def motion_blur_score(img: ImageTensor) -> float:
    """MSE against a horizontal box blur of length 5, edge-clamped."""
    blurred = _horizontal_box_blur(img.data, MOTION_KERNEL_LENGTH)
    return float(np.mean((img.data - blurred) ** 2))


def _horizontal_box_blur(data: np.ndarray, length: int) -> np.ndarray:
    _, _, w = data.shape
    half = (length - 1) // 2
    xs = np.arange(w)
    out = np.zeros_like(data)
    for off in range(-half, length - half):
        out += data[:, :, np.clip(xs + off, 0, w - 1)]
    return out / length


# ---------------------------------------------------------------------------
# Canny edge fraction
# ---------------------------------------------------------------------------

def canny_edges(img: ImageTensor, sigma: float = CANNY_SIGMA,
                low_frac: float = CANNY_LOW_FRAC, high_frac: float = CANNY_HIGH_FRAC) -> np.ndarray:
    """Boolean edge map: Gaussian blur, Sobel, 4-direction non-maximum
    suppression, then hysteresis at low/high fractions of the max gradient.

    Out-of-bounds NMS neighbors count as 0; thresholds are strict (>), so a
    constant image yields no edges.
    """
    gray = rgb_to_gray(img) if img.channels == 3 else img
    plane = gaussian_blur_plane(gray.data[0], sigma)
    gray_t = ImageTensor(np.clip(plane, 0.0, 1.0)[None])
    gx, gy = sobel_gradients(gray_t)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak < CANNY_FLAT_EPS:
        return np.zeros(mag.shape, dtype=bool)

    ang = np.degrees(np.arctan2(gy, gx)) % 180.0
    sector = np.floor(((ang + 22.5) % 180.0) / 45.0).astype(np.int64)

    padded = np.pad(mag, 1, mode="constant")
    def shifted(dy: int, dx: int) -> np.ndarray:
        return padded[1 + dy : 1 + dy + mag.shape[0], 1 + dx : 1 + dx + mag.shape[1]]

    neighbor_pairs = {0: ((0, 1), (0, -1)), 1: ((1, 1), (-1, -1)),
                      2: ((1, 0), (-1, 0)), 3: ((1, -1), (-1, 1))}
    keep = np.zeros(mag.shape, dtype=bool)
    for s, ((dy1, dx1), (dy2, dx2)) in neighbor_pairs.items():
        in_sector = sector == s
        keep |= in_sector & (mag >= shifted(dy1, dx1)) & (mag >= shifted(dy2, dx2))
    nms = np.where(keep, mag, 0.0)

    high = high_frac * peak
    low = low_frac * peak
    strong = nms > high
    weak = nms > low
    edges = strong.copy()
    while True:
        grown = np.pad(edges, 1, mode="constant")
        dilated = np.zeros_like(edges)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                dilated |= grown[1 + dy : 1 + dy + edges.shape[0], 1 + dx : 1 + dx + edges.shape[1]]
        nxt = edges | (weak & dilated)
        if np.array_equal(nxt, edges):
            return edges
        edges = nxt


def edge_intensity(img: ImageTensor) -> float:
    """Fraction of pixels marked edge by Canny."""
    return float(canny_edges(img).mean())


# ---------------------------------------------------------------------------
# Color statistics
# ---------------------------------------------------------------------------

def color_shift(img: ImageTensor) -> float:
    """Mean over pixels of (|R-G| + |G-B| + |R-B|) / 3."""
    if img.channels != 3:
        raise ValueError(f"color_shift expects 3 channels, got {img.channels}")
    r, g, b = img.data
    return float(np.mean((np.abs(r - g) + np.abs(g - b) + np.abs(r - b)) / 3.0))


def saturation_variance(img: ImageTensor) -> float:
    """Population variance of the HSV saturation channel."""
    if img.channels != 3:
        raise ValueError(f"saturation_variance expects 3 channels, got {img.channels}")
    return float(np.var(rgb_to_hsv(img).data[1]))


def brightness(img: ImageTensor) -> float:
    """Mean pixel intensity over all channels."""
    return float(np.mean(img.data))


# ---------------------------------------------------------------------------
# Stochastic and codec probes
# ---------------------------------------------------------------------------

def pixel_shuffle_distortion(img: ImageTensor, rng: RngStream) -> float:
    """MSE against a Fisher-Yates pixel permutation (channels move together)."""
    _, h, w = img.shape
    n = h * w
    perm = np.arange(n)
    gen = rng.generator()
    for i in range(n - 1, 0, -1):
        j = int(gen.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    flat = img.data.reshape(img.channels, n)
    shuffled = flat[:, perm].reshape(img.shape)
    return float(np.mean((img.data - shuffled) ** 2))


def jpeg_artifact_score(img: ImageTensor, quality: int = DEFAULT_JPEG_QUALITY) -> float:
    """MSE against the deterministic DCT-quantization round trip."""
    return mse(img, jpeg_roundtrip(img, quality))


def pattern_injection_score(img: ImageTensor) -> float:
    """Fraction of non-DC spectral energy held by dominant periodic peaks.

    Peak bins are those outside the wrapped 3x3 low-frequency neighborhood of
    DC whose magnitude exceeds 4x the median non-DC magnitude. Returns 0 when
    no bin qualifies.
    """
    _, h, w = img.shape
    if h < 8 or w < 8:
        raise ValueError(f"pattern_injection_score needs at least 8x8, got {h}x{w}")
    gray = rgb_to_gray(img) if img.channels == 3 else img
    mag = fft2d_magnitude(gray)

    nondc = np.ones(mag.shape, dtype=bool)
    nondc[0, 0] = False
    excluded = np.zeros(mag.shape, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            excluded[dy % h, dx % w] = True

    median = float(np.median(mag[nondc]))
    total_energy = float(np.sum(mag[nondc] ** 2))
    if total_energy == 0.0:
        return 0.0
    peaks = (~excluded) & (mag > PATTERN_PEAK_FACTOR * median)
    if not peaks.any():
        return 0.0
    return float(np.sum(mag[peaks] ** 2) / total_energy)


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------

# Fallback thresholds, frozen from a mean + 2*sigma calibration over 300
# clean real images of the synthetic desk corpus (seed 0). Use the
# `calibrate` command to recompute for any other corpus.
DEFAULT_THRESHOLDS = {
    "noise": 5.76795e-4,
    "compression": 2.58026e-4,
    "blur": 2.28988e-3,
    "edge_intensity": 0.331047,
    "color_shift": 0.380393,
    "saturation_variance": 4.10073e-2,
    "pixel_shuffle": 4.25778e-2,
    "jpeg": 4.00865e-4,
    "resize": 2.58026e-4,
    "edge_smoothing": 2.28538e-4,
    "motion_blur": 3.34353e-4,
    "pattern_injection": 0.590442,
    "brightness": 0.689978,
}


@dataclass
class ThresholdConfig:
    """Per-detector flag thresholds; a score above its threshold raises a flag."""

    thresholds: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))

    def __post_init__(self):
        for name in DETECTORS:
            if name not in self.thresholds:
                raise ValueError(f"missing threshold for detector {name!r}")
            if self.thresholds[name] < 0:
                raise ValueError(f"threshold for {name!r} must be >= 0")

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.thresholds, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ThresholdConfig":
        return cls(thresholds=json.loads(Path(path).read_text()))


@dataclass
class PerturbationReport:
    scores: dict[str, float]
    flags: dict[str, bool]

    def to_dict(self) -> dict:
        return {"scores": dict(self.scores), "flags": dict(self.flags)}

    @classmethod
    def from_dict(cls, d: dict) -> "PerturbationReport":
        return cls(scores=dict(d["scores"]), flags=dict(d["flags"]))


def compute_scores(img: ImageTensor, rng: RngStream,
                   jpeg_quality: int = DEFAULT_JPEG_QUALITY,
                   resize_factor: float = DEFAULT_RESIZE_FACTOR) -> dict[str, float]:
    return {
        "noise": noise_score(img),
        "compression": compression_score(img),
        "blur": blur_score(img),
        "edge_intensity": edge_intensity(img),
        "color_shift": color_shift(img),
        "saturation_variance": saturation_variance(img),
        "pixel_shuffle": pixel_shuffle_distortion(img, rng),
        "jpeg": jpeg_artifact_score(img, jpeg_quality),
        "resize": resize_artifact_score(img, resize_factor),
        "edge_smoothing": edge_smoothing_score(img),
        "motion_blur": motion_blur_score(img),
        "pattern_injection": pattern_injection_score(img),
        "brightness": brightness(img),
    }


def perturbation_report(img: ImageTensor, thresholds: ThresholdConfig | None = None,
                        rng: RngStream | None = None, **score_kwargs) -> PerturbationReport:
    """All 13 scores plus per-detector boolean flags (score > threshold)."""
    thresholds = thresholds or ThresholdConfig()
    rng = rng or RngStream(0)
    scores = compute_scores(img, rng, **score_kwargs)
    flags = {name: scores[name] > thresholds.thresholds[name] for name in DETECTORS}
    return PerturbationReport(scores=scores, flags=flags)


def calibrate_thresholds(images: "list[ImageTensor]", rng: RngStream,
                         sigma_factor: float = 2.0) -> ThresholdConfig:
    """mean + 2*sigma of every detector over a clean image set.

    Each image gets its own derived rng stream so results match any batch
    fan-out order.
    """
    if not images:
        raise ValueError("calibration needs at least one image")
    per_detector: dict[str, list[float]] = {name: [] for name in DETECTORS}
    for i, img in enumerate(images):
        scores = compute_scores(img, rng.derive(i))
        for name in DETECTORS:
            per_detector[name].append(scores[name])
    thresholds = {}
    for name, vals in per_detector.items():
        arr = np.asarray(vals)
        thresholds[name] = float(max(arr.mean() + sigma_factor * arr.std(), 0.0))
    return ThresholdConfig(thresholds=thresholds)
