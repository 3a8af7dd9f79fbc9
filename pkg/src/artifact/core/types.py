"""Shared value types: images, labels, dataset manifests, and random streams.

Pixel data lives in [0, 1] as float64 everywhere inside the library; byte
conversion happens only at I/O boundaries. All types here are treated as
immutable values -- operations return new objects instead of mutating.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

# Excursions smaller than this are treated as float round-off and clamped;
# anything larger is a genuine range violation.
_RANGE_SLACK = 1e-9

# SplitMix64 constants, used to derive decorrelated child streams.
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


class Label(Enum):
    REAL = "real"
    FAKE = "fake"

    @classmethod
    def from_string(cls, s: str) -> "Label":
        try:
            return cls(s.strip().lower())
        except ValueError:
            raise ValueError(f"unknown label {s!r}; expected 'real' or 'fake'") from None


class ImageTensor:
    """A channels x height x width image with float values in [0, 1].

    The constructor validates shape, finiteness, and range; values within
    float round-off of the boundaries are clamped so downstream invariant
    checks stay strict.
    """

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"image data must be 3-D (c, h, w), got shape {arr.shape}")
        c, h, w = arr.shape
        if c <= 0 or h <= 0 or w <= 0:
            raise ValueError(f"image dimensions must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image data contains NaN or Inf")
        lo, hi = arr.min(), arr.max()
        if lo < -_RANGE_SLACK or hi > 1.0 + _RANGE_SLACK:
            raise ValueError(f"image values outside [0, 1]: min={lo}, max={hi}")
        if lo < 0.0 or hi > 1.0:
            arr = np.clip(arr, 0.0, 1.0)
        self.data = np.ascontiguousarray(arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @classmethod
    def zeros(cls, channels: int, height: int, width: int) -> "ImageTensor":
        return cls(np.zeros((channels, height, width)))

    @classmethod
    def full(cls, channels: int, height: int, width: int, value: float) -> "ImageTensor":
        return cls(np.full((channels, height, width), float(value)))

    def copy(self) -> "ImageTensor":
        return ImageTensor(self.data.copy())

    def __repr__(self) -> str:
        return f"ImageTensor(shape={self.data.shape})"


@dataclass(frozen=True)
class LabeledImage:
    image: ImageTensor
    label: Label
    source_path: str = ""


@dataclass
class DatasetManifest:
    """Ordered list of (path, label) entries plus split bookkeeping.

    Serialized form is line-delimited JSON records {"path": ..., "label":
    "real"|"fake"}; seed and split are runtime parameters, not file content.
    """

    entries: list[tuple[str, Label]] = field(default_factory=list)
    seed: int = 0
    split: float = 0.1

    def __post_init__(self):
        paths = [p for p, _ in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError("manifest paths must be unique")
        if not (0.0 < self.split < 1.0):
            raise ValueError(f"split must be in (0, 1), got {self.split}")

    def __len__(self) -> int:
        return len(self.entries)

    def class_counts(self) -> dict[str, int]:
        counts = {"real": 0, "fake": 0}
        for _, label in self.entries:
            counts[label.value] += 1
        return counts

    def require_both_classes(self) -> None:
        counts = self.class_counts()
        if counts["real"] == 0 or counts["fake"] == 0:
            raise ValueError(f"manifest must contain both classes, got {counts}")

    def filter_label(self, label: Label) -> "DatasetManifest":
        kept = [(p, l) for p, l in self.entries if l is label]
        return DatasetManifest(entries=kept, seed=self.seed, split=self.split)

    def save(self, path: str | Path) -> None:
        lines = [
            json.dumps({"path": p, "label": l.value}, sort_keys=True)
            for p, l in self.entries
        ]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))

    @classmethod
    def load(cls, path: str | Path, seed: int = 0, split: float = 0.1) -> "DatasetManifest":
        entries: list[tuple[str, Label]] = []
        for line_no, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                entries.append((rec["path"], Label.from_string(rec["label"])))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}:{line_no}: bad manifest record: {exc}") from exc
        return cls(entries=entries, seed=seed, split=split)


def _splitmix64(x: int) -> int:
    x = (x + _SPLITMIX_GAMMA) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class RngStream:
    """An immutable seed for a counter-based (Philox) generator.

    Value semantics: ``generator()`` always starts from the same state, so a
    function taking an RngStream is pure. Child streams come from
    ``derive(index)``, which mixes the index through SplitMix64 instead of a
    bare XOR so that nearby indices give decorrelated streams.
    """

    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64):
            object.__setattr__(self, "seed", self.seed & _MASK64)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed))

    def derive(self, *indices: int) -> "RngStream":
        s = self.seed
        for idx in indices:
            s = _splitmix64(s ^ ((idx & _MASK64) * _SPLITMIX_GAMMA & _MASK64))
        return RngStream(s)
