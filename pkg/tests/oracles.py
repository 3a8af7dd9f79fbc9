"""Naive double-precision reference implementations.

Every function here recomputes a library operation from its documented
definition with plain loops (or textbook numpy), independent of the library's
vectorized code paths. Tests freeze expected values or compare directly
against these.
"""

from __future__ import annotations

import math

import numpy as np

# ---------------------------------------------------------------------------
# core primitives
# ---------------------------------------------------------------------------

GRAY_W = (0.299, 0.587, 0.114)


def gray_ref(data: np.ndarray) -> np.ndarray:
    c, h, w = data.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            out[y, x] = (GRAY_W[0] * data[0, y, x] + GRAY_W[1] * data[1, y, x]
                         + GRAY_W[2] * data[2, y, x])
    return out


def hsv_ref(data: np.ndarray) -> np.ndarray:
    _, h, w = data.shape
    out = np.zeros_like(data)
    for y in range(h):
        for x in range(w):
            r, g, b = data[:, y, x]
            v = max(r, g, b)
            mn = min(r, g, b)
            delta = v - mn
            s = 0.0 if v == 0 else delta / v
            if delta == 0:
                hh = 0.0
            elif v == r:
                hh = ((g - b) / delta) % 6.0
            elif v == g:
                hh = (b - r) / delta + 2.0
            else:
                hh = (r - g) / delta + 4.0
            hh = hh / 6.0
            if hh >= 1.0:
                hh -= 1.0
            out[:, y, x] = (hh, s, v)
    return out


def bilinear_resize_ref(data: np.ndarray, th: int, tw: int) -> np.ndarray:
    c, h, w = data.shape
    out = np.zeros((c, th, tw))
    for ch in range(c):
        for ty in range(th):
            py = (ty + 0.5) * (h / th) - 0.5
            y0 = math.floor(py)
            wy = py - y0
            y0c = min(max(y0, 0), h - 1)
            y1c = min(max(y0 + 1, 0), h - 1)
            for tx in range(tw):
                px = (tx + 0.5) * (w / tw) - 0.5
                x0 = math.floor(px)
                wx = px - x0
                x0c = min(max(x0, 0), w - 1)
                x1c = min(max(x0 + 1, 0), w - 1)
                out[ch, ty, tx] = (
                    data[ch, y0c, x0c] * (1 - wy) * (1 - wx)
                    + data[ch, y0c, x1c] * (1 - wy) * wx
                    + data[ch, y1c, x0c] * wy * (1 - wx)
                    + data[ch, y1c, x1c] * wy * wx
                )
    return out


def nearest_resize_ref(data: np.ndarray, th: int, tw: int) -> np.ndarray:
    c, h, w = data.shape
    out = np.zeros((c, th, tw))
    for ch in range(c):
        for ty in range(th):
            sy = min(max(math.floor((ty + 0.5) * h / th), 0), h - 1)
            for tx in range(tw):
                sx = min(max(math.floor((tx + 0.5) * w / tw), 0), w - 1)
                out[ch, ty, tx] = data[ch, sy, sx]
    return out


def gaussian_kernel_ref(sigma: float) -> np.ndarray:
    if sigma == 0:
        return np.array([1.0])
    radius = math.ceil(3.0 * sigma)
    ks = np.array([math.exp(-(i * i) / (2 * sigma * sigma)) for i in range(-radius, radius + 1)])
    return ks / ks.sum()


def gaussian_blur_plane_ref(plane: np.ndarray, sigma: float) -> np.ndarray:
    """Full 2-D kernel (outer product), edge-clamped sampling."""
    k1 = gaussian_kernel_ref(sigma)
    radius = (len(k1) - 1) // 2
    k2 = np.outer(k1, k1)
    h, w = plane.shape
    out = np.zeros_like(plane)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for i in range(-radius, radius + 1):
                for j in range(-radius, radius + 1):
                    yy = min(max(y + i, 0), h - 1)
                    xx = min(max(x + j, 0), w - 1)
                    acc += k2[i + radius, j + radius] * plane[yy, xx]
            out[y, x] = acc
    return out


def conv2d_clamped_ref(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    kh, kw = kernel.shape
    ry, rx = (kh - 1) // 2, (kw - 1) // 2
    h, w = plane.shape
    out = np.zeros_like(plane)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for i in range(kh):
                for j in range(kw):
                    yy = min(max(y + i - ry, 0), h - 1)
                    xx = min(max(x + j - rx, 0), w - 1)
                    acc += kernel[i, j] * plane[yy, xx]
            out[y, x] = acc
    return out


SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = np.array([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]])


def dft2d_magnitude_ref(plane: np.ndarray) -> np.ndarray:
    """O(N^4) direct DFT."""
    h, w = plane.shape
    out = np.zeros((h, w))
    for u in range(h):
        for v in range(w):
            acc = 0.0 + 0.0j
            for y in range(h):
                for x in range(w):
                    acc += plane[y, x] * np.exp(-2j * np.pi * (u * y / h + v * x / w))
            out[u, v] = abs(acc)
    return out


# ---------------------------------------------------------------------------
# detector references
# ---------------------------------------------------------------------------

def mse_ref(a: np.ndarray, b: np.ndarray) -> float:
    total = 0.0
    for va, vb in zip(a.ravel(), b.ravel()):
        total += (va - vb) ** 2
    return total / a.size


def tv_denoise_ref(data: np.ndarray, weight: float = 0.1, step: float = 0.05,
                   iterations: int = 50, eps: float = 1e-12) -> np.ndarray:
    """Loop transcription of the fixed-step ROF gradient descent, clamped."""
    out = np.zeros_like(data)
    c, h, w = data.shape
    for ch in range(c):
        f = data[ch]
        u = f.copy()
        for _ in range(iterations):
            gx = np.zeros((h, w))
            gy = np.zeros((h, w))
            for y in range(h):
                for x in range(w):
                    if x < w - 1:
                        gx[y, x] = u[y, x + 1] - u[y, x]
                    if y < h - 1:
                        gy[y, x] = u[y + 1, x] - u[y, x]
            px = np.zeros((h, w))
            py = np.zeros((h, w))
            for y in range(h):
                for x in range(w):
                    nrm = math.sqrt(gx[y, x] ** 2 + gy[y, x] ** 2 + eps)
                    px[y, x] = gx[y, x] / nrm
                    py[y, x] = gy[y, x] / nrm
            un = u.copy()
            for y in range(h):
                for x in range(w):
                    div = px[y, x] + py[y, x]
                    if x > 0:
                        div -= px[y, x - 1]
                    if y > 0:
                        div -= py[y - 1, x]
                    un[y, x] = u[y, x] - step * ((u[y, x] - f[y, x]) - weight * div)
            u = un
        out[ch] = np.clip(u, 0.0, 1.0)
    return out


def laplacian_variance_ref(gray_plane: np.ndarray) -> float:
    lap = conv2d_clamped_ref(gray_plane, np.array([[0.0, 1.0, 0.0],
                                                   [1.0, -4.0, 1.0],
                                                   [0.0, 1.0, 0.0]]))
    mean = lap.sum() / lap.size
    return float(((lap - mean) ** 2).sum() / lap.size)


def canny_ref(gray_plane: np.ndarray, sigma: float = 1.0, low_frac: float = 0.1,
              high_frac: float = 0.2, flat_eps: float = 1e-12) -> np.ndarray:
    """Loop Canny: blur, Sobel, 4-direction NMS (out-of-bounds neighbors are 0),
    strict hysteresis thresholds at fractions of the max gradient."""
    plane = gaussian_blur_plane_ref(gray_plane, sigma)
    gx = conv2d_clamped_ref(plane, SOBEL_X)
    gy = conv2d_clamped_ref(plane, SOBEL_Y)
    h, w = plane.shape
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak < flat_eps:
        return np.zeros((h, w), dtype=bool)
    neighbor = {0: ((0, 1), (0, -1)), 1: ((1, 1), (-1, -1)),
                2: ((1, 0), (-1, 0)), 3: ((1, -1), (-1, 1))}
    nms = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            ang = math.degrees(math.atan2(gy[y, x], gx[y, x])) % 180.0
            sector = int(((ang + 22.5) % 180.0) // 45.0)
            keep = True
            for dy, dx in neighbor[sector]:
                yy, xx = y + dy, x + dx
                other = mag[yy, xx] if 0 <= yy < h and 0 <= xx < w else 0.0
                if mag[y, x] < other:
                    keep = False
            nms[y, x] = mag[y, x] if keep else 0.0
    high = high_frac * peak
    low = low_frac * peak
    edges = nms > high
    weak = nms > low
    changed = True
    while changed:
        changed = False
        for y in range(h):
            for x in range(w):
                if weak[y, x] and not edges[y, x]:
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            yy, xx = y + dy, x + dx
                            if 0 <= yy < h and 0 <= xx < w and edges[yy, xx]:
                                edges[y, x] = True
                                changed = True
                                break
                        if edges[y, x]:
                            break
    return edges


LUMA_Q = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99]], dtype=float)

CHROMA_Q = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99]], dtype=float)


def jpeg_quality_table_ref(base: np.ndarray, quality: int) -> np.ndarray:
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    t = np.floor((base * scale + 50.0) / 100.0)
    t[t < 1] = 1.0
    return t


def dct2_ref(block: np.ndarray) -> np.ndarray:
    out = np.zeros((8, 8))
    for u in range(8):
        for v in range(8):
            au = math.sqrt(1 / 8) if u == 0 else math.sqrt(2 / 8)
            av = math.sqrt(1 / 8) if v == 0 else math.sqrt(2 / 8)
            acc = 0.0
            for y in range(8):
                for x in range(8):
                    acc += (block[y, x]
                            * math.cos((2 * y + 1) * u * math.pi / 16)
                            * math.cos((2 * x + 1) * v * math.pi / 16))
            out[u, v] = au * av * acc
    return out


def idct2_ref(coef: np.ndarray) -> np.ndarray:
    out = np.zeros((8, 8))
    for y in range(8):
        for x in range(8):
            acc = 0.0
            for u in range(8):
                for v in range(8):
                    au = math.sqrt(1 / 8) if u == 0 else math.sqrt(2 / 8)
                    av = math.sqrt(1 / 8) if v == 0 else math.sqrt(2 / 8)
                    acc += (au * av * coef[u, v]
                            * math.cos((2 * y + 1) * u * math.pi / 16)
                            * math.cos((2 * x + 1) * v * math.pi / 16))
            out[y, x] = acc
    return out


def jpeg_roundtrip_ref(data: np.ndarray, quality: int) -> np.ndarray:
    """RGB/gray [0,1] -> YCbCr -> blockwise DCT quantization -> back."""
    c, h, w = data.shape
    byte = data * 255.0
    if c == 3:
        r, g, b = byte
        planes = [
            0.299 * r + 0.587 * g + 0.114 * b,
            -0.168735892 * r - 0.331264108 * g + 0.5 * b + 128.0,
            0.5 * r - 0.418687589 * g - 0.081312411 * b + 128.0,
        ]
        tables = [jpeg_quality_table_ref(LUMA_Q, quality),
                  jpeg_quality_table_ref(CHROMA_Q, quality),
                  jpeg_quality_table_ref(CHROMA_Q, quality)]
    else:
        planes = [byte[0]]
        tables = [jpeg_quality_table_ref(LUMA_Q, quality)]

    rec_planes = []
    ph = (8 - h % 8) % 8
    pw = (8 - w % 8) % 8
    for plane, table in zip(planes, tables):
        padded = np.pad(plane - 128.0, ((0, ph), (0, pw)), mode="edge")
        rec = np.zeros_like(padded)
        for by in range(0, padded.shape[0], 8):
            for bx in range(0, padded.shape[1], 8):
                block = padded[by:by + 8, bx:bx + 8]
                coef = dct2_ref(block)
                quant = np.round(coef / table) * table
                rec[by:by + 8, bx:bx + 8] = idct2_ref(quant)
        rec_planes.append(rec[:h, :w] + 128.0)

    if c == 3:
        yy, cb, cr = rec_planes
        out = np.stack([
            yy + 1.402 * (cr - 128.0),
            yy - 0.344136286 * (cb - 128.0) - 0.714136286 * (cr - 128.0),
            yy + 1.772 * (cb - 128.0),
        ])
    else:
        out = np.stack(rec_planes)
    return np.clip(out / 255.0, 0.0, 1.0)


def motion_blur_ref(data: np.ndarray, length: int = 5) -> np.ndarray:
    c, h, w = data.shape
    half = (length - 1) // 2
    out = np.zeros_like(data)
    for ch in range(c):
        for y in range(h):
            for x in range(w):
                acc = 0.0
                for off in range(-half, length - half):
                    acc += data[ch, y, min(max(x + off, 0), w - 1)]
                out[ch, y, x] = acc / length
    return out


def pattern_injection_ref(gray_plane: np.ndarray, factor: float = 4.0) -> float:
    mag = np.abs(np.fft.fft2(gray_plane))
    h, w = mag.shape
    nondc = [(y, x) for y in range(h) for x in range(w) if (y, x) != (0, 0)]
    excluded = {((dy) % h, (dx) % w) for dy in (-1, 0, 1) for dx in (-1, 0, 1)}
    values = sorted(mag[y, x] for y, x in nondc)
    mid = len(values) // 2
    median = values[mid] if len(values) % 2 else 0.5 * (values[mid - 1] + values[mid])
    total = sum(mag[y, x] ** 2 for y, x in nondc)
    if total == 0:
        return 0.0
    peak_energy = sum(
        mag[y, x] ** 2 for y, x in nondc
        if (y, x) not in excluded and mag[y, x] > factor * median
    )
    return peak_energy / total if peak_energy > 0 else 0.0


def color_shift_ref(data: np.ndarray) -> float:
    r, g, b = data
    total = 0.0
    h, w = r.shape
    for y in range(h):
        for x in range(w):
            total += (abs(r[y, x] - g[y, x]) + abs(g[y, x] - b[y, x])
                      + abs(r[y, x] - b[y, x])) / 3.0
    return total / (h * w)


def variance_ref(values: np.ndarray) -> float:
    flat = values.ravel()
    mean = flat.sum() / flat.size
    return float(((flat - mean) ** 2).sum() / flat.size)


# ---------------------------------------------------------------------------
# nn references
# ---------------------------------------------------------------------------

def conv2d_forward_ref(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                       stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation with zero padding, all loops."""
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((n, cout, ho, wo))
    for ni in range(n):
        for oc in range(cout):
            for oy in range(ho):
                for ox in range(wo):
                    acc = b[oc]
                    for ic in range(cin):
                        for i in range(kh):
                            for j in range(kw):
                                acc += (w[oc, ic, i, j]
                                        * xp[ni, ic, oy * stride + i, ox * stride + j])
                    out[ni, oc, oy, ox] = acc
    return out


def conv_transpose2d_forward_ref(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                                 stride: int) -> np.ndarray:
    n, cin, h, wd = x.shape
    _, cout, kh, kw = w.shape
    ho = (h - 1) * stride + kh
    wo = (wd - 1) * stride + kw
    out = np.zeros((n, cout, ho, wo))
    for ni in range(n):
        for oc in range(cout):
            out[ni, oc, :, :] = b[oc]
    for ni in range(n):
        for ic in range(cin):
            for iy in range(h):
                for ix in range(wd):
                    for oc in range(cout):
                        for i in range(kh):
                            for j in range(kw):
                                out[ni, oc, iy * stride + i, ix * stride + j] += (
                                    x[ni, ic, iy, ix] * w[ic, oc, i, j]
                                )
    return out


def maxpool_forward_ref(x: np.ndarray, size: int) -> np.ndarray:
    n, c, h, w = x.shape
    ho, wo = h // size, w // size
    out = np.zeros((n, c, ho, wo))
    for ni in range(n):
        for ci in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    out[ni, ci, oy, ox] = x[ni, ci,
                                            oy * size:(oy + 1) * size,
                                            ox * size:(ox + 1) * size].max()
    return out


def dense_forward_ref(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, _ = x.shape
    out_dim, in_dim = w.shape
    out = np.zeros((n, out_dim))
    for ni in range(n):
        for o in range(out_dim):
            acc = b[o]
            for i in range(in_dim):
                acc += w[o, i] * x[ni, i]
            out[ni, o] = acc
    return out


def bce_ref(pred: np.ndarray, target: np.ndarray, eps: float = 1e-7) -> float:
    total = 0.0
    for p, t in zip(pred.ravel(), target.ravel()):
        pc = min(max(p, eps), 1.0 - eps)
        total += -t * math.log(pc) - (1 - t) * math.log(1 - pc)
    return total / pred.size


def percentile_ref(values: np.ndarray, p: float) -> float:
    """Linear-interpolation percentile, matching numpy's default method."""
    flat = sorted(values.ravel())
    rank = (p / 100.0) * (len(flat) - 1)
    lo = math.floor(rank)
    hi = math.ceil(rank)
    if lo == hi:
        return flat[lo]
    return flat[lo] + (rank - lo) * (flat[hi] - flat[lo])


def auc_ref(pos: list[float], neg: list[float]) -> float:
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else (0.5 if p == q else 0.0)
    return wins / (len(pos) * len(neg))


def fisher_yates_ref(n: int, gen: np.random.Generator) -> np.ndarray:
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(gen.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm
