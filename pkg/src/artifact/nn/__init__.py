from .network import LayerSpec, Model, loss_grad, loss_value, sgd_step
from .serialize import (
    BadMagicError,
    ChecksumMismatchError,
    ModelFormatError,
    TruncatedModelError,
    VersionMismatchError,
    load_model,
    model_bytes,
    save_model,
)

__all__ = [
    "BadMagicError",
    "ChecksumMismatchError",
    "LayerSpec",
    "Model",
    "ModelFormatError",
    "TruncatedModelError",
    "VersionMismatchError",
    "load_model",
    "loss_grad",
    "loss_value",
    "model_bytes",
    "save_model",
    "sgd_step",
]
