"""Pixel containers, PNG/JPEG codecs, bilinear resizing, and sRGB to CIE Lab."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError


class DecodeError(ValueError):
    """Malformed or unsupported image stream."""


# sRGB (linear) to XYZ under D65, with the matching reference white.
_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Image as an (H, W, C) array.

    Either uint8 samples in [0, 255] or, when ``normalized`` is set,
    float64 samples in [0, 1]. C is 1 (gray), 3 (RGB), or 4 (RGBA).
    """

    pixels: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] not in (1, 3, 4):
            raise ValueError(f"expected an (H, W, C) array with C in {{1,3,4}}, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if self.normalized:
            if px.dtype != np.float64:
                object.__setattr__(self, "pixels", px.astype(np.float64))
        elif px.dtype != np.uint8:
            raise ValueError(f"non-normalized image must be uint8, got {px.dtype}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True, eq=False)
class LabImage:
    """CIE L*a*b* image, (H, W, 3) float64 with L in [0, 100]."""

    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("Lab image must be (H, W, 3)")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def decode_image(data: bytes) -> RasterImage:
    """Decode a PNG or JPEG byte stream.

    Channel count follows the file: grayscale gives 1, RGB 3, RGBA 4.
    Palette and exotic modes are converted to the nearest of those.
    """
    buf = io.BytesIO(data)
    try:
        with Image.open(buf) as im:
            im.load()
            mode = im.mode
            if mode == "L":
                arr = np.asarray(im, dtype=np.uint8)[:, :, None]
            elif mode in ("RGB", "RGBA"):
                arr = np.asarray(im, dtype=np.uint8)
            elif mode == "LA":
                arr = np.asarray(im.convert("RGBA"), dtype=np.uint8)
            elif mode == "P":
                target = "RGBA" if "transparency" in im.info else "RGB"
                arr = np.asarray(im.convert(target), dtype=np.uint8)
            elif mode in ("I", "I;16", "F"):
                arr = np.asarray(im.convert("L"), dtype=np.uint8)[:, :, None]
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"cannot decode image stream (failed at byte offset {buf.tell()}): {exc}") from exc
    return RasterImage(arr)


def encode_png(img: RasterImage) -> bytes:
    """Encode losslessly as PNG with pinned settings (identical pixels, identical bytes)."""
    arr = to_uint8(img).pixels
    mode = {1: "L", 3: "RGB", 4: "RGBA"}[arr.shape[2]]
    pil = Image.fromarray(arr[:, :, 0] if mode == "L" else arr, mode=mode)
    buf = io.BytesIO()
    pil.save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


def to_uint8(img: RasterImage) -> RasterImage:
    if not img.normalized:
        return img
    arr = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    return RasterImage(arr)


def to_normalized(img: RasterImage) -> RasterImage:
    if img.normalized:
        return img
    return RasterImage(img.pixels.astype(np.float64) / 255.0, normalized=True)


def _axis_coords(n_out: int, n_in: int):
    # half-pixel-center alignment, clamped to the valid sample range
    x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    x = np.clip(x, 0.0, n_in - 1.0)
    lo = np.floor(x).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, x - lo


def resize_bilinear(img: RasterImage, width: int, height: int) -> RasterImage:
    """Resize with bilinear interpolation (half-pixel centers).

    Alpha, if present, is resampled exactly like the color channels.
    """
    if width < 1 or height < 1:
        raise ValueError("target dimensions must be >= 1")
    if (width, height) == (img.width, img.height):
        return RasterImage(img.pixels.copy(), img.normalized)
    src = img.pixels.astype(np.float64)
    x0, x1, fx = _axis_coords(width, img.width)
    y0, y1, fy = _axis_coords(height, img.height)
    fx = fx[None, :, None]
    fy = fy[:, None, None]
    top = src[y0][:, x0] * (1.0 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1.0 - fx) + src[y1][:, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    if img.normalized:
        return RasterImage(out, normalized=True)
    return RasterImage(np.clip(np.rint(out), 0, 255).astype(np.uint8))


def rgb_to_lab(img: RasterImage) -> LabImage:
    """Convert sRGB (or sRGB+alpha; alpha is dropped) to CIE L*a*b* under D65."""
    if img.channels not in (3, 4):
        raise ValueError(f"Lab conversion needs RGB or RGBA input, got {img.channels} channel(s)")
    rgb = img.pixels[:, :, :3].astype(np.float64)
    if not img.normalized:
        rgb = rgb / 255.0
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = (lin @ _SRGB_TO_XYZ.T) / _D65_WHITE
    delta = 6.0 / 29.0
    f = np.where(xyz > delta**3, np.cbrt(xyz), xyz / (3.0 * delta**2) + 4.0 / 29.0)
    lab = np.empty_like(f)
    # clamp the sub-1e-5 overshoot from the 7-digit matrix constants
    lab[..., 0] = np.clip(116.0 * f[..., 1] - 16.0, 0.0, 100.0)
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return LabImage(lab)
