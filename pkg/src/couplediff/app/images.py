"""Grayscale image buffers, PGM/PNG I/O, field conversion, noise and PSNR."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from ..grid import GridSpec, ScalarField

MAX_PIXELS = 1 << 28  # refuse headers that claim absurd sizes
PSNR_CAP = 99.0


class ImageFormatError(ValueError):
    """Malformed or unsupported image data."""


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """A grayscale image; ``pixels`` has shape (height, width)."""

    width: int
    height: int
    pixels: np.ndarray
    maxval: int = 255

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ImageFormatError(f"image dimensions must be positive, got {self.width}x{self.height}")
        if not 0 < self.maxval <= 65535:
            raise ImageFormatError(f"maxval {self.maxval} outside 1..65535")
        px = np.asarray(self.pixels)
        if px.shape != (self.height, self.width):
            raise ImageFormatError(f"pixel array shape {px.shape} does not match {self.height}x{self.width}")
        if px.size and (px.min() < 0 or px.max() > self.maxval):
            raise ImageFormatError(f"pixel values exceed bit depth (maxval {self.maxval})")
        dtype = np.uint8 if self.maxval < 256 else np.uint16
        px = px.astype(dtype, copy=True)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, pixels, maxval: int = 255) -> "ImageBuffer":
        pixels = np.asarray(pixels)
        if pixels.ndim != 2:
            raise ImageFormatError("grayscale images must be 2-D")
        return cls(pixels.shape[1], pixels.shape[0], pixels, maxval)

    @property
    def bit_depth(self) -> int:
        return 8 if self.maxval < 256 else 16

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return (self.width, self.height, self.maxval) == (other.width, other.height, other.maxval) and \
            np.array_equal(self.pixels, other.pixels)


# ---------------------------------------------------------------------------
# PGM

def _header_tokens(data: bytes, count: int):
    """Return ``count`` header tokens and the offset just past the last one."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise ImageFormatError("malformed PGM header: unexpected end of file")
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def _parse_pgm(data: bytes) -> ImageBuffer:
    tokens, pos = _header_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise ImageFormatError(f"malformed PGM header: bad magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError(f"malformed PGM header: {exc}") from None
    if width <= 0 or height <= 0:
        raise ImageFormatError(f"malformed PGM header: dimensions {width}x{height}")
    if width * height > MAX_PIXELS:
        raise ImageFormatError(f"dimension overflow: {width}x{height} exceeds {MAX_PIXELS} pixels")
    if not 0 < maxval <= 65535:
        raise ImageFormatError(f"bit-depth mismatch: maxval {maxval} outside 1..65535")
    count = width * height
    if magic == b"P5":
        if pos >= len(data) or not data[pos:pos + 1].isspace():
            raise ImageFormatError("malformed PGM header: missing separator before raster")
        raster = data[pos + 1:]
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(raster) < need:
            raise ImageFormatError(f"truncated raster: {len(raster)} of {need} bytes")
        pixels = np.frombuffer(raster[:need], dtype=dtype).reshape(height, width)
    else:
        body = b" ".join(line.split(b"#", 1)[0] for line in data[pos:].splitlines())
        try:
            values = np.array([int(t) for t in body.split()], dtype=np.int64)
        except ValueError as exc:
            raise ImageFormatError(f"malformed ASCII raster: {exc}") from None
        if values.size < count:
            raise ImageFormatError(f"truncated raster: {values.size} of {count} samples")
        pixels = values[:count].reshape(height, width)
    if pixels.size and pixels.max() > maxval:
        raise ImageFormatError(f"bit-depth mismatch: sample {int(pixels.max())} exceeds maxval {maxval}")
    return ImageBuffer(width, height, pixels, maxval)


def _format_pgm(buf: ImageBuffer, binary: bool) -> bytes:
    header = f"{'P5' if binary else 'P2'}\n{buf.width} {buf.height}\n{buf.maxval}\n".encode()
    if binary:
        dtype = ">u2" if buf.maxval > 255 else "u1"
        return header + buf.pixels.astype(dtype).tobytes()
    lines = [" ".join(str(int(p)) for p in row) for row in buf.pixels]
    return header + ("\n".join(lines) + "\n").encode()


# ---------------------------------------------------------------------------
# PNG (optional, via Pillow)

def _pil():
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover - depends on the environment
        raise ImageFormatError("PNG support needs Pillow (pip install Pillow)") from None
    return Image


def _load_png(path) -> ImageBuffer:
    Image = _pil()
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im, dtype=np.int64)
                return ImageBuffer.from_array(arr, 65535)
            if im.mode != "L":
                raise ImageFormatError(f"only grayscale PNG is supported, got mode {im.mode}")
            return ImageBuffer.from_array(np.asarray(im), 255)
    except OSError as exc:
        raise ImageFormatError(f"cannot read PNG: {exc}") from None


def _save_png(buf: ImageBuffer, path):
    Image = _pil()
    if buf.maxval not in (255, 65535):
        raise ImageFormatError("PNG output needs maxval 255 or 65535")
    if buf.maxval == 255:
        im = Image.fromarray(np.ascontiguousarray(buf.pixels, dtype=np.uint8), mode="L")
    else:
        im = Image.new("I;16", (buf.width, buf.height))
        im.frombytes(np.ascontiguousarray(buf.pixels, dtype="<u2").tobytes())
    im.save(path, format="PNG")


def load_image(path) -> ImageBuffer:
    """Read a PGM (P2 or P5, 8/16 bit) or grayscale PNG file."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(b"\x89PNG"):
        return _load_png(path)
    with open(path, "rb") as fh:
        return _parse_pgm(fh.read())


def save_image(buf: ImageBuffer, path, binary: bool = True):
    """Write ``buf``; the format follows the extension (.png, otherwise PGM)."""
    path = os.fspath(path)
    if path.lower().endswith(".png"):
        _save_png(buf, path)
        return
    with open(path, "wb") as fh:
        fh.write(_format_pgm(buf, binary))


# ---------------------------------------------------------------------------
# image <-> field

@dataclass(frozen=True, eq=False)
class BoundaryLift:
    """The part of the image carried outside the evolving field.

    ``values`` has the interior shape; the restored intensity is
    ``field + values`` (both on the [0, 1] scale).
    """

    mode: str
    values: np.ndarray
    maxval: int


def frame_lift(pixels: np.ndarray, smooth: float = 4.0) -> np.ndarray:
    """Transfinite (Coons) interpolant of the outer pixel ring.

    The edge rows and columns are taken as the boundary data one node
    outside the image; the lift is the bilinearly blended patch through
    them, so ``pixels - lift`` is small near the frame.  The ring is first
    smoothed along itself (Gaussian, ``smooth`` pixels) so that noise on
    the border is not smeared across the whole image.
    """
    p = np.array(pixels, dtype=float)
    if smooth > 0:
        ring = gaussian_filter(p, smooth, mode="nearest")
        p[0], p[-1], p[:, 0], p[:, -1] = ring[0], ring[-1], ring[:, 0], ring[:, -1]
    ny, nx = p.shape
    s = np.arange(1, nx + 1) / (nx + 1)  # x position of node i on the padded grid
    t = np.arange(1, ny + 1) / (ny + 1)
    # boundary curves, extended to the corners by copying the corner pixels
    top = np.concatenate([[p[0, 0]], p[0], [p[0, -1]]])
    bottom = np.concatenate([[p[-1, 0]], p[-1], [p[-1, -1]]])
    left = np.concatenate([[p[0, 0]], p[:, 0], [p[-1, 0]]])
    right = np.concatenate([[p[0, -1]], p[:, -1], [p[-1, -1]]])
    S, T = np.meshgrid(s, t)
    L, R = left[1:-1][:, None], right[1:-1][:, None]
    B, Tp = top[1:-1][None, :], bottom[1:-1][None, :]
    c00, c10, c01, c11 = p[0, 0], p[0, -1], p[-1, 0], p[-1, -1]
    return ((1 - S) * L + S * R + (1 - T) * B + T * Tp
            - ((1 - S) * (1 - T) * c00 + S * (1 - T) * c10 + (1 - S) * T * c01 + S * T * c11))


def image_spec(buf: ImageBuffer, spacing: float = 1.0) -> GridSpec:
    """Grid whose interior nodes are the pixels, at the given spacing."""
    return GridSpec(buf.width, buf.height, (buf.width + 1) * spacing, (buf.height + 1) * spacing)


def image_to_field(buf: ImageBuffer, spec: GridSpec, mode: str = "raw") -> tuple[ScalarField, BoundaryLift]:
    """Intensities scaled to [0, 1] on the interior nodes of ``spec``.

    ``mode="raw"`` uses the pixels directly, so the zero boundary acts as
    a black frame.  ``mode="lift"`` subtracts :func:`frame_lift` first and
    returns the lift for :func:`field_to_image`.
    """
    if (spec.ny, spec.nx) != (buf.height, buf.width):
        raise ValueError(f"dimension mismatch: image {buf.height}x{buf.width}, grid {spec.ny}x{spec.nx}")
    scaled = buf.pixels.astype(float) / buf.maxval
    if mode == "raw":
        lift = np.zeros_like(scaled)
    elif mode == "lift":
        lift = frame_lift(scaled)
    else:
        raise ValueError(f"unknown image mode {mode!r}")
    return ScalarField(spec, scaled - lift), BoundaryLift(mode, lift, buf.maxval)


def field_to_image(field: ScalarField, lift: BoundaryLift | None = None, maxval: int = 255) -> ImageBuffer:
    """Inverse of :func:`image_to_field`, rounded and clamped to the bit depth."""
    if lift is not None:
        maxval = lift.maxval
        values = field.values + lift.values
    else:
        values = field.values
    px = np.clip(np.rint(values * maxval), 0, maxval)
    return ImageBuffer.from_array(px.astype(np.int64), maxval)


# ---------------------------------------------------------------------------
# noise, metrics, synthetic data

def add_gaussian_noise(buf: ImageBuffer, sigma: float, seed: int) -> ImageBuffer:
    """Independent N(0, sigma^2) per pixel (intensity units), rounded and clamped."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return buf
    rng = np.random.default_rng(seed)
    noisy = buf.pixels.astype(float) + sigma * rng.standard_normal(buf.pixels.shape)
    px = np.clip(np.rint(noisy), 0, buf.maxval).astype(np.int64)
    return ImageBuffer.from_array(px, buf.maxval)


def mse(clean: ImageBuffer, test: ImageBuffer) -> float:
    if clean.pixels.shape != test.pixels.shape:
        raise ValueError("images differ in size")
    d = clean.pixels.astype(float) - test.pixels.astype(float)
    return float(np.mean(d * d))


def psnr(clean: ImageBuffer, test: ImageBuffer) -> float:
    """Peak signal-to-noise ratio in dB, capped at 99 dB for identical images."""
    if clean.maxval != test.maxval:
        raise ValueError("images differ in bit depth")
    err = mse(clean, test)
    if err == 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(clean.maxval**2 / err)))


def synthetic_shapes(size: int = 256, maxval: int = 255) -> ImageBuffer:
    """Piecewise-constant test image: disk, square and triangle on a flat background."""
    y, x = np.mgrid[0:size, 0:size] / size
    img = np.full((size, size), 0.25)
    img[((x - 0.32) ** 2 + (y - 0.35) ** 2) < 0.17**2] = 0.85
    img[(np.abs(x - 0.70) < 0.15) & (np.abs(y - 0.30) < 0.12)] = 0.55
    tri = (y > 0.55) & (y < 0.88) & (np.abs(x - 0.55) < (y - 0.55) * 0.8)
    img[tri] = 0.70
    return ImageBuffer.from_array(np.rint(img * maxval).astype(np.int64), maxval)
