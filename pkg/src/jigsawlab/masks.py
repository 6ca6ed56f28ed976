"""Binary fragment masks: the four-step cleanup pipeline and a procedural sampler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import RasterImage, decode_image, encode_png, to_normalized


class EmptyMaskError(ValueError):
    """Operation needs at least one foreground pixel."""


class MaskSamplingError(RuntimeError):
    """Procedural sampling kept producing invalid masks."""


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Square boolean occupancy grid."""

    bits: np.ndarray

    def __post_init__(self):
        b = self.bits
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError(f"mask must be square, got shape {b.shape}")
        if b.dtype != np.bool_:
            object.__setattr__(self, "bits", b.astype(bool))

    @property
    def side(self) -> int:
        return self.bits.shape[0]

    @property
    def area(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class ProceduralMaskParams:
    """Knobs for the star-convex polygon sampler.

    Defaults are calibrated so that batches of 128x128 masks land near the
    target mean area of 10,716 px^2 with moderately rough boundaries.
    """

    base_radius_fraction: float = 0.466
    vertex_count: tuple[int, int] = (10, 18)
    radial_noise_amplitude: float = 0.14
    boundary_roughness_scale: float = 1.6

    def __post_init__(self):
        if not 0.0 < self.base_radius_fraction <= 0.5:
            raise ValueError("base_radius_fraction must be in (0, 0.5]")
        lo, hi = self.vertex_count
        if lo < 3 or hi < lo:
            raise ValueError("vertex_count range must be non-empty with min >= 3")
        if self.radial_noise_amplitude < 0 or self.boundary_roughness_scale < 0:
            raise ValueError("noise amplitudes must be >= 0")


def _shift(m: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(m)
    h, w = m.shape
    ys = slice(max(dy, 0), h + min(dy, 0))
    xs = slice(max(dx, 0), w + min(dx, 0))
    ys_src = slice(max(-dy, 0), h + min(-dy, 0))
    xs_src = slice(max(-dx, 0), w + min(-dx, 0))
    out[ys, xs] = m[ys_src, xs_src]
    return out


_N4 = ((-1, 0), (1, 0), (0, -1), (0, 1))


def _spread4(m: np.ndarray) -> np.ndarray:
    out = m.copy()
    for dy, dx in _N4:
        out |= _shift(m, dy, dx)
    return out


def _border_reachable_background(bits: np.ndarray) -> np.ndarray:
    """Background pixels 4-connected to the image border."""
    bg = ~bits
    reach = np.zeros_like(bg)
    reach[0, :] = bg[0, :]
    reach[-1, :] = bg[-1, :]
    reach[:, 0] = bg[:, 0]
    reach[:, -1] |= bg[:, -1]
    while True:
        grown = _spread4(reach) & bg
        if grown.sum() == reach.sum():
            return reach
        reach = grown


def _label4(bits: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected labeling; label order equals row-major discovery order."""
    labels = np.zeros(bits.shape, dtype=np.int32)
    remaining = bits.copy()
    count = 0
    flat = remaining.reshape(-1)
    while flat.any():
        count += 1
        seed_idx = int(np.argmax(flat))
        comp = np.zeros_like(bits)
        comp.reshape(-1)[seed_idx] = True
        while True:
            grown = _spread4(comp) & remaining
            if grown.sum() == comp.sum():
                break
            comp = grown
        labels[comp] = count
        remaining &= ~comp
    return labels, count


def binarize(gray: RasterImage, threshold: float = 0.5) -> BinaryMask:
    """Threshold a grayscale image; a sample becomes foreground iff it is strictly above."""
    if gray.channels != 1:
        raise ValueError("binarize expects a single-channel image")
    if gray.height != gray.width:
        raise ValueError(f"mask source must be square, got {gray.width}x{gray.height}")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    values = to_normalized(gray).pixels[:, :, 0]
    return BinaryMask(values > threshold)


def fill_holes(mask: BinaryMask) -> BinaryMask:
    """Fill background regions not 4-connected-reachable from the border."""
    return BinaryMask(~_border_reachable_background(mask.bits))


def largest_component(mask: BinaryMask) -> BinaryMask:
    """Keep the largest 4-connected component; ties go to the earliest row-major pixel."""
    if not mask.bits.any():
        raise EmptyMaskError("mask has no foreground")
    labels, count = _label4(mask.bits)
    if count == 1:
        return mask
    sizes = np.bincount(labels.reshape(-1))[1:]
    best = int(np.argmax(sizes)) + 1
    return BinaryMask(labels == best)


def _disk_offsets(radius: int) -> list[tuple[int, int]]:
    r = int(radius)
    offs = []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy * dy + dx * dx <= radius * radius:
                offs.append((dy, dx))
    return offs


def morphological_close(mask: BinaryMask, radius: int = 2) -> BinaryMask:
    """Dilate then erode with a discrete disk; out-of-frame counts as background."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    offs = _disk_offsets(radius)
    padded = np.pad(mask.bits, radius)
    dil = np.zeros_like(padded)
    for dy, dx in offs:
        dil |= _shift(padded, dy, dx)
    ero = np.ones_like(padded)
    for dy, dx in offs:
        ero &= _shift(dil, dy, dx)
    r = radius
    return BinaryMask(ero[r:-r, r:-r])


def postprocess(raw: RasterImage, threshold: float = 0.5, close_radius: int = 2) -> BinaryMask:
    """Binarize, fill holes, keep the largest component, then close. In that order."""
    mask = binarize(raw, threshold)
    mask = fill_holes(mask)
    mask = largest_component(mask)
    return morphological_close(mask, close_radius)


def count_components(mask: BinaryMask) -> int:
    return _label4(mask.bits)[1]


def has_holes(mask: BinaryMask) -> bool:
    return bool((fill_holes(mask).bits != mask.bits).any())


def _polygon_radius_at(angles: np.ndarray, vert_angles: np.ndarray, vert_radii: np.ndarray) -> np.ndarray:
    """Boundary radius of the star polygon (straight edges) at the query angles."""
    n = len(vert_angles)
    ext_angles = np.concatenate([vert_angles, [vert_angles[0] + 2.0 * np.pi]])
    ext_radii = np.concatenate([vert_radii, [vert_radii[0]]])
    rel = np.mod(angles - vert_angles[0], 2.0 * np.pi) + vert_angles[0]
    seg = np.clip(np.searchsorted(ext_angles, rel, side="right") - 1, 0, n - 1)
    a1, a2 = ext_angles[seg], ext_angles[seg + 1]
    r1, r2 = ext_radii[seg], ext_radii[seg + 1]
    span = a2 - a1
    # chord of the segment in polar form; degenerate spans fall back to r1
    denom = r2 * np.sin(a2 - rel) + r1 * np.sin(rel - a1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = r1 * r2 * np.sin(span) / denom
    return np.where((span < 1e-9) | (denom <= 1e-12), r1, r)


def _raster_star_polygon(rng: np.random.Generator, side: int, params: ProceduralMaskParams) -> np.ndarray:
    lo, hi = params.vertex_count
    n = int(rng.integers(lo, hi + 1))
    base_angle = float(rng.uniform(0.0, 2.0 * np.pi))
    jitter_amp = 0.35 if params.radial_noise_amplitude > 0 else 0.0
    jitter = rng.uniform(-jitter_amp, jitter_amp, n)
    vert_angles = base_angle + (np.arange(n) + jitter) * (2.0 * np.pi / n)
    base_radius = params.base_radius_fraction * side
    vert_radii = base_radius * (1.0 + params.radial_noise_amplitude * rng.uniform(-1.0, 1.0, n))

    # low-order harmonics give the boundary its roughness
    orders = np.arange(3, 9)
    coeffs = rng.normal(0.0, params.boundary_roughness_scale / np.sqrt(len(orders)), len(orders))
    phases = rng.uniform(0.0, 2.0 * np.pi, len(orders))

    c = (side - 1) / 2.0
    yy, xx = np.mgrid[0:side, 0:side]
    dy = yy - c
    dx = xx - c
    r_pix = np.hypot(dy, dx)
    theta = np.arctan2(dy, dx)
    r_bound = _polygon_radius_at(theta.reshape(-1), vert_angles, vert_radii).reshape(side, side)
    if params.boundary_roughness_scale > 0:
        r_bound = r_bound + np.sum(
            coeffs[:, None, None] * np.cos(orders[:, None, None] * theta[None] + phases[:, None, None]),
            axis=0,
        )
    return r_pix <= r_bound


def sample_procedural_mask(
    rng: np.random.Generator,
    side: int = 128,
    params: ProceduralMaskParams | None = None,
) -> BinaryMask:
    """Draw one cleaned-up fragment mask.

    Rasterizes a star-convex polygon with randomized vertex radii plus boundary
    roughness, then runs the full postprocess pipeline. Resamples (up to 16
    attempts) if rasterization comes out empty or the cleaned mask fails the
    single-component / no-holes contract.
    """
    if side < 32:
        raise ValueError("side must be >= 32")
    if params is None:
        params = ProceduralMaskParams()
    for _ in range(16):
        bits = _raster_star_polygon(rng, side, params)
        gray = RasterImage(bits.astype(np.float64)[:, :, None], normalized=True)
        try:
            mask = postprocess(gray)
        except EmptyMaskError:
            continue
        if count_components(mask) == 1 and not has_holes(mask):
            return mask
    raise MaskSamplingError("no valid mask after 16 attempts; params too extreme")


def save_mask_png(mask: BinaryMask, path) -> None:
    arr = np.where(mask.bits, 255, 0).astype(np.uint8)[:, :, None]
    data = encode_png(RasterImage(arr))
    with open(path, "wb") as fh:
        fh.write(data)


def load_mask_png(path) -> BinaryMask:
    with open(path, "rb") as fh:
        img = decode_image(fh.read())
    if img.channels != 1:
        raise ValueError(f"mask PNG must be grayscale, got {img.channels} channels: {path}")
    return BinaryMask(img.pixels[:, :, 0] >= 128)
