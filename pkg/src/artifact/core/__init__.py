from .types import DatasetManifest, ImageTensor, Label, LabeledImage, RngStream
from .ops import (
    ResizeMode,
    fft2d_magnitude,
    gaussian_blur,
    hsv_to_rgb,
    resize,
    rgb_to_gray,
    rgb_to_hsv,
    sobel_gradients,
)
from .io import (
    UnsupportedImageError,
    build_manifest_from_dirs,
    load_cifar_binary,
    load_png,
    png_bytes,
    save_png,
)

__all__ = [
    "DatasetManifest",
    "ImageTensor",
    "Label",
    "LabeledImage",
    "ResizeMode",
    "RngStream",
    "UnsupportedImageError",
    "build_manifest_from_dirs",
    "fft2d_magnitude",
    "gaussian_blur",
    "hsv_to_rgb",
    "load_cifar_binary",
    "load_png",
    "png_bytes",
    "resize",
    "rgb_to_gray",
    "rgb_to_hsv",
    "save_png",
    "sobel_gradients",
]
