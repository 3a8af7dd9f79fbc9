"""File ingestion and export: PNG, CIFAR-style binary records, manifests."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .types import DatasetManifest, ImageTensor, Label, LabeledImage

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 x 1024 planar pixel bytes


class UnsupportedImageError(ValueError):
    """Raised for PNGs outside the supported 8-bit RGB/grayscale subset."""


def load_png(path: str | Path) -> ImageTensor:
    """Decode an 8-bit RGB or grayscale PNG; values become byte/255 exactly."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise UnsupportedImageError(f"{path}: not a PNG file (format={im.format})")
            if im.mode not in ("RGB", "L"):
                raise UnsupportedImageError(
                    f"{path}: unsupported PNG mode {im.mode!r}; only 8-bit RGB or grayscale"
                )
            arr = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise UnsupportedImageError(f"{path}: cannot decode as image") from exc
    if arr.ndim == 2:
        arr = arr[None, :, :]
    else:
        arr = arr.transpose(2, 0, 1)
    return ImageTensor(arr.astype(np.float64) / 255.0)


def save_png(img: ImageTensor, path: str | Path) -> None:
    """Write as 8-bit PNG. Bytes are floor(v*255 + 0.5) (round half up)."""
    path = Path(path)
    data = np.floor(img.data * 255.0 + 0.5).astype(np.uint8)
    if img.channels == 1:
        pil = Image.fromarray(data[0], mode="L")
    elif img.channels == 3:
        pil = Image.fromarray(data.transpose(1, 2, 0), mode="RGB")
    else:
        raise ValueError(f"can only save 1- or 3-channel images, got {img.channels}")
    path.parent.mkdir(parents=True, exist_ok=True)
    pil.save(path, format="PNG")


def png_bytes(img: ImageTensor) -> bytes:
    """PNG encoding of an image as an in-memory byte string."""
    import io as _io

    buf = _io.BytesIO()
    data = np.floor(img.data * 255.0 + 0.5).astype(np.uint8)
    if img.channels == 1:
        Image.fromarray(data[0], mode="L").save(buf, format="PNG")
    else:
        Image.fromarray(data.transpose(1, 2, 0), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def load_cifar_binary(path: str | Path, label_map: dict[int, Label] | None = None) -> list[LabeledImage]:
    """Parse CIFAR-style records: 1 label byte + 1024 R + 1024 G + 1024 B.

    ``label_map`` maps the label byte to a class; default {0: REAL, 1: FAKE}.
    """
    if label_map is None:
        label_map = {0: Label.REAL, 1: Label.FAKE}
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) % CIFAR_RECORD_BYTES != 0:
        raise ValueError(
            f"{path}: truncated file; {len(raw)} bytes is not a multiple of {CIFAR_RECORD_BYTES}"
        )
    out: list[LabeledImage] = []
    n = len(raw) // CIFAR_RECORD_BYTES
    for i in range(n):
        rec = raw[i * CIFAR_RECORD_BYTES : (i + 1) * CIFAR_RECORD_BYTES]
        label_byte = rec[0]
        if label_byte not in label_map:
            raise ValueError(f"{path}: record {i}: label byte {label_byte} outside label map")
        planes = np.frombuffer(rec, dtype=np.uint8, offset=1).reshape(3, 32, 32)
        img = ImageTensor(planes.astype(np.float64) / 255.0)
        out.append(LabeledImage(image=img, label=label_map[label_byte], source_path=f"{path}#{i}"))
    return out


def build_manifest_from_dirs(src: str | Path) -> DatasetManifest:
    """Scan a two-folder layout (src/real/*.png, src/fake/*.png) into a manifest."""
    src = Path(src)
    entries: list[tuple[str, Label]] = []
    for label in (Label.REAL, Label.FAKE):
        folder = src / label.value
        if folder.is_dir():
            for p in sorted(folder.glob("*.png")):
                entries.append((str(p), label))
    if not entries:
        raise ValueError(f"{src}: no real/ or fake/ PNG files found")
    return DatasetManifest(entries=entries)
