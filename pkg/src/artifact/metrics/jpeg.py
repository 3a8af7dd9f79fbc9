"""Self-contained JPEG-style degradation: 8x8 block DCT + table quantization.

Only the pixel effect matters for scoring, so there is no entropy coding and
no chroma subsampling: RGB -> YCbCr (JFIF), blockwise orthonormal DCT,
quantization with the standard luminance/chrominance tables scaled by the
libjpeg quality formula, then the exact inverse. Everything is float64 and
deterministic.
"""

from __future__ import annotations

import numpy as np

from ..core.types import ImageTensor

LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)

CHROMA_TABLE = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)


def _dct_matrix() -> np.ndarray:
    # Orthonormal DCT-II basis: block_dct = C @ B @ C.T
    c = np.zeros((8, 8))
    for u in range(8):
        alpha = np.sqrt(1.0 / 8.0) if u == 0 else np.sqrt(2.0 / 8.0)
        for x in range(8):
            c[u, x] = alpha * np.cos((2 * x + 1) * u * np.pi / 16.0)
    return c


DCT_MAT = _dct_matrix()


def scaled_table(base: np.ndarray, quality: int) -> np.ndarray:
    """libjpeg quality scaling: floor((t*scale + 50)/100), clamped to >= 1."""
    if not (1 <= quality <= 100):
        raise ValueError(f"quality must be in 1..100, got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    t = np.floor((base * scale + 50.0) / 100.0)
    return np.maximum(t, 1.0)


def _rgb_to_ycbcr(data: np.ndarray) -> np.ndarray:
    """JFIF transform on byte-scaled values (channels first)."""
    r, g, b = data
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168735892 * r - 0.331264108 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418687589 * g - 0.081312411 * b + 128.0
    return np.stack([y, cb, cr])


def _ycbcr_to_rgb(data: np.ndarray) -> np.ndarray:
    y, cb, cr = data
    r = y + 1.402 * (cr - 128.0)
    g = y - 0.344136286 * (cb - 128.0) - 0.714136286 * (cr - 128.0)
    b = y + 1.772 * (cb - 128.0)
    return np.stack([r, g, b])


def _pad_to_blocks(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    ph = (8 - h % 8) % 8
    pw = (8 - w % 8) % 8
    if ph or pw:
        plane = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    return plane


def _roundtrip_plane(plane: np.ndarray, qtable: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    padded = _pad_to_blocks(plane - 128.0)
    out = np.empty_like(padded)
    for by in range(0, padded.shape[0], 8):
        for bx in range(0, padded.shape[1], 8):
            block = padded[by : by + 8, bx : bx + 8]
            coef = DCT_MAT @ block @ DCT_MAT.T
            quant = np.round(coef / qtable) * qtable
            out[by : by + 8, bx : bx + 8] = DCT_MAT.T @ quant @ DCT_MAT
    return out[:h, :w] + 128.0


def jpeg_roundtrip(img: ImageTensor, quality: int) -> ImageTensor:
    """Compress-decompress an image at the given quality without a real codec."""
    luma_q = scaled_table(LUMA_TABLE, quality)
    byte_data = img.data * 255.0
    if img.channels == 1:
        rec = _roundtrip_plane(byte_data[0], luma_q)[None, :, :]
    elif img.channels == 3:
        chroma_q = scaled_table(CHROMA_TABLE, quality)
        ycc = _rgb_to_ycbcr(byte_data)
        rec_y = _roundtrip_plane(ycc[0], luma_q)
        rec_cb = _roundtrip_plane(ycc[1], chroma_q)
        rec_cr = _roundtrip_plane(ycc[2], chroma_q)
        rec = _ycbcr_to_rgb(np.stack([rec_y, rec_cb, rec_cr]))
    else:
        raise ValueError(f"jpeg_roundtrip expects 1 or 3 channels, got {img.channels}")
    return ImageTensor(np.clip(rec / 255.0, 0.0, 1.0))
