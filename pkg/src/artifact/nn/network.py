"""Model assembly: layer specs, forward/backward orchestration, losses, SGD.

A model is an ordered list of layer specs plus the parameter tensors built
from them and a free-form metadata dict. Backward gives the exact gradient of
the mean loss with respect to every parameter and the input batch.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..core.types import RngStream
from .layers import (Conv2D, ConvTranspose2D, Dense, Flatten, InputCenter, Layer,
                     MaxPool2D, ReLU, Sigmoid)

LAYER_KINDS = ("conv2d", "conv_transpose2d", "maxpool2d", "relu", "sigmoid", "flatten",
               "dense", "center")

BCE_EPS = 1e-7


@dataclass(frozen=True)
class LayerSpec:
    """Declarative layer description; hyperparams depend on kind.

    conv2d: in_ch, out_ch, kernel, stride, padding
    conv_transpose2d: in_ch, out_ch, kernel, stride
    maxpool2d: size
    dense: in_dim, out_dim
    relu / sigmoid / flatten / center: no hyperparams
    """

    kind: str
    hyper: tuple[tuple[str, int], ...] = ()

    @classmethod
    def make(cls, kind: str, **hyper: int) -> "LayerSpec":
        if kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {kind!r}")
        return cls(kind=kind, hyper=tuple(sorted(hyper.items())))

    @property
    def h(self) -> dict[str, int]:
        return dict(self.hyper)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.h}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        d = dict(d)
        kind = d.pop("kind")
        return cls.make(kind, **{k: int(v) for k, v in d.items()})

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        h = self.h
        if self.kind == "conv2d":
            c, hh, ww = in_shape
            if c != h["in_ch"]:
                raise ValueError(f"conv2d expects {h['in_ch']} channels, got {c}")
            s, p, k = h["stride"], h["padding"], h["kernel"]
            return (h["out_ch"], (hh + 2 * p - k) // s + 1, (ww + 2 * p - k) // s + 1)
        if self.kind == "conv_transpose2d":
            c, hh, ww = in_shape
            if c != h["in_ch"]:
                raise ValueError(f"conv_transpose2d expects {h['in_ch']} channels, got {c}")
            s, k = h["stride"], h["kernel"]
            return (h["out_ch"], (hh - 1) * s + k, (ww - 1) * s + k)
        if self.kind == "maxpool2d":
            c, hh, ww = in_shape
            k = h["size"]
            if hh % k or ww % k:
                raise ValueError(f"maxpool2d size {k} does not divide {hh}x{ww}")
            return (c, hh // k, ww // k)
        if self.kind == "flatten":
            return (int(np.prod(in_shape)),)
        if self.kind == "dense":
            if in_shape != (h["in_dim"],):
                raise ValueError(f"dense expects ({h['in_dim']},), got {in_shape}")
            return (h["out_dim"],)
        return in_shape  # relu / sigmoid / center

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        h = self.h
        if self.kind == "conv2d":
            return {"W": (h["out_ch"], h["in_ch"], h["kernel"], h["kernel"]), "b": (h["out_ch"],)}
        if self.kind == "conv_transpose2d":
            return {"W": (h["in_ch"], h["out_ch"], h["kernel"], h["kernel"]), "b": (h["out_ch"],)}
        if self.kind == "dense":
            return {"W": (h["out_dim"], h["in_dim"]), "b": (h["out_dim"],)}
        return {}

    def init_params(self, rng: RngStream, dtype=np.float32) -> dict[str, np.ndarray]:
        """Kaiming-uniform weights (bound sqrt(6/fan_in)), zero biases."""
        shapes = self.param_shapes()
        if not shapes:
            return {}
        h = self.h
        if self.kind == "dense":
            fan_in = h["in_dim"]
        else:
            fan_in = h["in_ch"] * h["kernel"] * h["kernel"]
        bound = float(np.sqrt(6.0 / fan_in))
        gen = rng.generator()
        w = gen.uniform(-bound, bound, size=shapes["W"]).astype(dtype)
        b = np.zeros(shapes["b"], dtype=dtype)
        return {"W": w, "b": b}

    def build(self, params: dict[str, np.ndarray]) -> Layer:
        h = self.h
        if self.kind == "conv2d":
            return Conv2D(params["W"], params["b"], stride=h["stride"], padding=h["padding"])
        if self.kind == "conv_transpose2d":
            return ConvTranspose2D(params["W"], params["b"], stride=h["stride"])
        if self.kind == "maxpool2d":
            return MaxPool2D(size=h["size"])
        if self.kind == "relu":
            return ReLU()
        if self.kind == "sigmoid":
            return Sigmoid()
        if self.kind == "flatten":
            return Flatten()
        if self.kind == "center":
            return InputCenter()
        if self.kind == "dense":
            return Dense(params["W"], params["b"])
        raise AssertionError(self.kind)


def loss_value(kind: str, predictions: np.ndarray, targets: np.ndarray) -> float:
    """Mean loss over batch and elements. BCE demands predictions in [0, 1]."""
    if predictions.shape != targets.shape:
        raise ValueError(f"shape mismatch: {predictions.shape} vs {targets.shape}")
    if kind == "mse":
        return float(np.mean((predictions - targets) ** 2))
    if kind == "bce":
        if predictions.min() < 0.0 or predictions.max() > 1.0:
            raise ValueError("bce predictions must lie in [0, 1]")
        p = np.clip(predictions, BCE_EPS, 1.0 - BCE_EPS)
        return float(np.mean(-targets * np.log(p) - (1.0 - targets) * np.log(1.0 - p)))
    raise ValueError(f"unknown loss kind {kind!r}")


def loss_grad(kind: str, predictions: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Gradient of the mean loss with respect to the predictions."""
    n = predictions.size
    if kind == "mse":
        return (2.0 / n) * (predictions - targets)
    if kind == "bce":
        p = np.clip(predictions, BCE_EPS, 1.0 - BCE_EPS)
        return (-targets / p + (1.0 - targets) / (1.0 - p)) / n
    raise ValueError(f"unknown loss kind {kind!r}")


class Model:
    """Architecture + parameters + metadata, with cached-forward backprop."""

    def __init__(self, specs: list[LayerSpec], params: list[dict[str, np.ndarray]],
                 metadata: dict | None = None):
        if len(specs) != len(params):
            raise ValueError("one param dict per layer spec required")
        self.specs = list(specs)
        self.layers = [spec.build(p) for spec, p in zip(specs, params)]
        self.metadata = dict(metadata or {})
        self._last_output: np.ndarray | None = None

    @classmethod
    def initialize(cls, specs: list[LayerSpec], seed: int, dtype=np.float32,
                   metadata: dict | None = None) -> "Model":
        rng = RngStream(seed)
        params = [spec.init_params(rng.derive(i), dtype=dtype) for i, spec in enumerate(specs)]
        meta = {"seed": seed}
        meta.update(metadata or {})
        return cls(specs, params, metadata=meta)

    # -- parameter bookkeeping ------------------------------------------------

    def named_params(self) -> Iterator[tuple[str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params.items():
                yield f"{i}.{name}", arr

    @property
    def params(self) -> dict[str, np.ndarray]:
        return dict(self.named_params())

    def param_count(self) -> int:
        return sum(arr.size for _, arr in self.named_params())

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        for name, arr in self.named_params():
            arr[...] = params[name]

    def copy_params(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.named_params()}

    def share_copy(self) -> "Model":
        """A new Model aliasing the same parameter arrays.

        Forward caches live in the layer objects, so concurrent inference
        needs one Model per thread; parameters stay shared and read-only.
        """
        per_layer = [dict(layer.params) for layer in self.layers]
        return Model(self.specs, per_layer, metadata=self.metadata)

    def checksum(self) -> int:
        crc = 0
        for _, arr in self.named_params():
            crc = zlib.crc32(np.ascontiguousarray(arr, dtype=np.float32).tobytes(), crc)
        return crc

    def model_id(self) -> str:
        return f"{self.metadata.get('name', 'model')}-{self.checksum():08x}"

    # -- evaluation ------------------------------------------------------------

    def forward(self, batch: np.ndarray) -> np.ndarray:
        """Layer-by-layer evaluation; caches activations for backward."""
        out = batch
        for i, layer in enumerate(self.layers):
            try:
                out = layer.forward(out)
            except ValueError as exc:
                raise ValueError(f"layer {i} ({self.specs[i].kind}): {exc}") from exc
        self._last_output = out
        return out

    def backward(self, loss_kind: str, targets: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Exact gradients of the mean loss; returns (param grads, input grad)."""
        if self._last_output is None:
            raise RuntimeError("backward called before forward")
        grad = loss_grad(loss_kind, self._last_output, targets)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        grads = {}
        for i, layer in enumerate(self.layers):
            for name, g in layer.grads.items():
                grads[f"{i}.{name}"] = g
        return grads, grad

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        shape = in_shape
        for spec in self.specs:
            shape = spec.output_shape(shape)
        return shape


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float,
             momentum: float = 0.0, velocity: dict[str, np.ndarray] | None = None,
             ) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Classical momentum: v <- momentum*v + g; p <- p - lr*v.

    Returns (updated params, velocity). With momentum=0 one step is exactly
    p - lr*g.
    """
    if set(params) != set(grads):
        raise ValueError("params and grads must have identical names")
    if velocity is None:
        velocity = {name: np.zeros_like(p) for name, p in params.items()}
    new_params = {}
    for name, p in params.items():
        if grads[name].shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        velocity[name] = momentum * velocity[name] + grads[name]
        new_params[name] = p - lr * velocity[name]
    return new_params, velocity
