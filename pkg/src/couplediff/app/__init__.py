"""Batch pipeline: image I/O, configuration, manifests and the command line."""
from .images import (
    BoundaryLift,
    ImageBuffer,
    ImageFormatError,
    add_gaussian_noise,
    field_to_image,
    image_spec,
    image_to_field,
    load_image,
    psnr,
    save_image,
    synthetic_shapes,
)

__all__ = [
    "BoundaryLift", "ImageBuffer", "ImageFormatError", "add_gaussian_noise", "field_to_image", "image_spec",
    "image_to_field", "load_image", "psnr", "save_image", "synthetic_shapes",
]
