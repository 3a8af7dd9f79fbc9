"""Deterministic image primitives shared by every analysis stage.

Conventions, fixed once and used everywhere so scores reproduce bit-for-bit:

* Resampling uses pixel-center alignment: source coordinate of target index
  ``t`` is ``(t + 0.5) * src/dst - 0.5``.
* All convolutions and samplers clamp coordinates at the border (edge
  replication), never zero-pad, unless a function says otherwise.
* Hue of an achromatic pixel is 0 by convention.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .types import ImageTensor

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


class ResizeMode(Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"


def rgb_to_gray(img: ImageTensor) -> ImageTensor:
    """Weighted luma: 0.299 R + 0.587 G + 0.114 B."""
    if img.channels != 3:
        raise ValueError(f"rgb_to_gray expects 3 channels, got {img.channels}")
    r, g, b = img.data
    gray = GRAY_WEIGHTS[0] * r + GRAY_WEIGHTS[1] * g + GRAY_WEIGHTS[2] * b
    return ImageTensor(gray[None, :, :])


def rgb_to_hsv(img: ImageTensor) -> ImageTensor:
    """Standard hexcone HSV with H scaled to [0, 1); achromatic hue is 0."""
    if img.channels != 3:
        raise ValueError(f"rgb_to_hsv expects 3 channels, got {img.channels}")
    r, g, b = img.data
    v = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    delta = v - mn

    s = np.where(v > 0.0, delta / np.where(v > 0.0, v, 1.0), 0.0)

    with np.errstate(invalid="ignore", divide="ignore"):
        safe = np.where(delta > 0.0, delta, 1.0)
        h_r = ((g - b) / safe) % 6.0
        h_g = (b - r) / safe + 2.0
        h_b = (r - g) / safe + 4.0
    h = np.where(v == r, h_r, np.where(v == g, h_g, h_b))
    h = np.where(delta > 0.0, h / 6.0, 0.0)
    h = np.where(h >= 1.0, h - 1.0, h)  # keep H in [0, 1)
    return ImageTensor(np.stack([h, s, v]))


def hsv_to_rgb(img: ImageTensor) -> ImageTensor:
    """Inverse of :func:`rgb_to_hsv`; V is reproduced exactly."""
    if img.channels != 3:
        raise ValueError(f"hsv_to_rgb expects 3 channels, got {img.channels}")
    h, s, v = img.data
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return ImageTensor(np.stack([r, g, b]))


def _axis_coords(dst: int, src: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bilinear sample positions for one axis under pixel-center alignment."""
    pos = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    lo = np.floor(pos).astype(np.int64)
    w = pos - lo
    lo0 = np.clip(lo, 0, src - 1)
    lo1 = np.clip(lo + 1, 0, src - 1)
    return lo0, lo1, w


def resize(img: ImageTensor, new_h: int, new_w: int, mode: ResizeMode = ResizeMode.BILINEAR) -> ImageTensor:
    if new_h <= 0 or new_w <= 0:
        raise ValueError(f"target size must be positive, got {new_h}x{new_w}")
    c, h, w = img.shape
    if (new_h, new_w) == (h, w):
        return img.copy()
    if mode is ResizeMode.NEAREST:
        ys = np.clip(np.floor((np.arange(new_h) + 0.5) * (h / new_h)).astype(np.int64), 0, h - 1)
        xs = np.clip(np.floor((np.arange(new_w) + 0.5) * (w / new_w)).astype(np.int64), 0, w - 1)
        return ImageTensor(img.data[:, ys[:, None], xs[None, :]])

    y0, y1, wy = _axis_coords(new_h, h)
    x0, x1, wx = _axis_coords(new_w, w)
    # rows first, then columns; with edge clamping this equals the 2-D gather
    rows = img.data[:, y0, :] * (1.0 - wy)[None, :, None] + img.data[:, y1, :] * wy[None, :, None]
    out = rows[:, :, x0] * (1.0 - wx)[None, None, :] + rows[:, :, x1] * wx[None, None, :]
    return ImageTensor(out)


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian with radius ceil(3*sigma); [1] when sigma=0."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return np.array([1.0])
    radius = int(np.ceil(3.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return k / k.sum()


def convolve1d_clamped(plane: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """1-D correlation along an axis of a 2-D plane with edge-clamped borders."""
    radius = (len(kernel) - 1) // 2
    n = plane.shape[axis]
    idx = np.arange(n)
    out = np.zeros_like(plane, dtype=np.float64)
    for j, kv in enumerate(kernel):
        shifted = np.clip(idx + (j - radius), 0, n - 1)
        out += kv * (plane[shifted, :] if axis == 0 else plane[:, shifted])
    return out


def gaussian_blur_plane(plane: np.ndarray, sigma: float) -> np.ndarray:
    kernel = gaussian_kernel_1d(sigma)
    if len(kernel) == 1:
        return plane.astype(np.float64, copy=True)
    return convolve1d_clamped(convolve1d_clamped(plane, kernel, axis=0), kernel, axis=1)


def gaussian_blur(img: ImageTensor, sigma: float) -> ImageTensor:
    """Separable Gaussian blur, edge-clamped; sigma=0 is the identity."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img.copy()
    out = np.stack([gaussian_blur_plane(ch, sigma) for ch in img.data])
    # Kernel is normalized, so convex combination of [0,1] values stays in range.
    return ImageTensor(out)


SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = np.array([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]])


def convolve2d_clamped(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """2-D correlation (no kernel flip) with edge-clamped borders."""
    kh, kw = kernel.shape
    ry, rx = (kh - 1) // 2, (kw - 1) // 2
    h, w = plane.shape
    ys = np.arange(h)
    xs = np.arange(w)
    out = np.zeros((h, w), dtype=np.float64)
    for i in range(kh):
        yy = np.clip(ys + (i - ry), 0, h - 1)
        for j in range(kw):
            if kernel[i, j] == 0.0:
                continue
            xx = np.clip(xs + (j - rx), 0, w - 1)
            out += kernel[i, j] * plane[yy[:, None], xx[None, :]]
    return out


def sobel_gradients(gray: ImageTensor) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel responses (gx, gy) of a 1-channel image, edge-clamped."""
    if gray.channels != 1:
        raise ValueError(f"sobel_gradients expects 1 channel, got {gray.channels}")
    plane = gray.data[0]
    return convolve2d_clamped(plane, SOBEL_X), convolve2d_clamped(plane, SOBEL_Y)


def fft2d_magnitude(gray: ImageTensor) -> np.ndarray:
    """Magnitude of the 2-D DFT with DC at index (0, 0)."""
    if gray.channels != 1:
        raise ValueError(f"fft2d_magnitude expects 1 channel, got {gray.channels}")
    return np.abs(np.fft.fft2(gray.data[0]))
