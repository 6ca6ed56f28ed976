"""Puzzle assembly: grid layout, mask application, shuffling, splits, manifests."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .masks import BinaryMask, ProceduralMaskParams, sample_procedural_mask
from .raster import RasterImage, decode_image, encode_png, resize_bilinear

FRAME = 128  # piece frame side in pixels

MANIFEST_SCHEMA_VERSION = "1"

MaskProvider = Callable[[np.random.Generator], BinaryMask]


class PuzzleConfigError(ValueError):
    pass


class ManifestVersionError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    k: int
    canvas: int

    def __post_init__(self):
        if self.k < 1:
            raise PuzzleConfigError(f"grid side must be >= 1, got {self.k}")
        if self.canvas % self.k != 0:
            raise PuzzleConfigError(
                f"canvas {self.canvas} is not divisible by k={self.k}"
            )

    @property
    def cell(self) -> int:
        return self.canvas // self.k

    @property
    def n_pieces(self) -> int:
        return self.k * self.k

    @staticmethod
    def default(k: int) -> "GridSpec":
        canvas = {3: 384, 5: 640}.get(k, FRAME * k)
        return GridSpec(k=k, canvas=canvas)


@dataclass(frozen=True, eq=False)
class Piece:
    piece_id: int
    image: RasterImage  # RGBA, FRAME x FRAME
    mask: BinaryMask


@dataclass(frozen=True, eq=False)
class PuzzleInstance:
    puzzle_id: str
    grid: GridSpec
    pieces: tuple[Piece, ...]
    ground_truth: np.ndarray  # ground_truth[i] = grid slot of pieces[i]
    source: str
    split: str

    def __post_init__(self):
        n = self.grid.n_pieces
        if len(self.pieces) != n:
            raise ValueError(f"expected {n} pieces, got {len(self.pieces)}")
        gt = np.asarray(self.ground_truth)
        if sorted(gt.tolist()) != list(range(n)):
            raise ValueError("ground truth is not a permutation")


# ---------------------------------------------------------------------------
# mask providers

def square_mask_provider(inset: int = 0) -> MaskProvider:
    """Full-frame square masks, optionally inset from the frame border."""
    if not 0 <= inset < FRAME // 2:
        raise ValueError("inset out of range")

    def provide(rng: np.random.Generator) -> BinaryMask:
        bits = np.zeros((FRAME, FRAME), dtype=bool)
        bits[inset : FRAME - inset, inset : FRAME - inset] = True
        return BinaryMask(bits=bits)

    return provide


def procedural_mask_provider(params: ProceduralMaskParams | None = None) -> MaskProvider:
    def provide(rng: np.random.Generator) -> BinaryMask:
        return sample_procedural_mask(rng, FRAME, params)

    return provide


def pool_mask_provider(masks: list[BinaryMask]) -> MaskProvider:
    """Draws uniformly from a fixed pool (e.g. masks cut from real fragments)."""
    if not masks:
        raise ValueError("mask pool is empty")

    def provide(rng: np.random.Generator) -> BinaryMask:
        return masks[int(rng.integers(0, len(masks)))]

    return provide


# ---------------------------------------------------------------------------
# assembly

def _as_rgb(image: RasterImage) -> RasterImage:
    px = image.pixels
    if image.normalized:
        px = np.clip(np.rint(px * 255.0), 0, 255).astype(np.uint8)
    if px.shape[2] == 3:
        rgb = px
    elif px.shape[2] == 4:
        rgb = px[:, :, :3]
    else:
        rgb = np.repeat(px, 3, axis=2)
    return RasterImage(pixels=rgb)


def make_puzzle(
    image: RasterImage,
    grid: GridSpec,
    mask_source: MaskProvider,
    rng: np.random.Generator,
    puzzle_id: str = "puzzle",
    source: str = "synthetic",
    split: str = "train",
) -> PuzzleInstance:
    """Cut one image into k*k masked pieces with identity ground truth.

    The image is resized to the canvas, one mask is drawn per cell, and each
    piece takes its texture from the cell's center frame: alpha equals the mask,
    RGB is the image where opaque and zero elsewhere.
    """
    if grid.cell < FRAME:
        raise PuzzleConfigError(
            f"cell {grid.cell}px cannot hold the {FRAME}px piece frame"
        )
    rgb = _as_rgb(image)
    canvas = resize_bilinear(rgb, grid.canvas, grid.canvas)
    offset = (grid.cell - FRAME) // 2
    pieces = []
    for idx in range(grid.n_pieces):
        row, col = divmod(idx, grid.k)
        mask = mask_source(rng)
        if mask.side != FRAME:
            raise PuzzleConfigError(
                f"mask side {mask.side} does not match the {FRAME}px frame"
            )
        top = row * grid.cell + offset
        left = col * grid.cell + offset
        crop = canvas.pixels[top : top + FRAME, left : left + FRAME]
        rgba = np.zeros((FRAME, FRAME, 4), dtype=np.uint8)
        rgba[:, :, :3] = np.where(mask.bits[:, :, None], crop, 0)
        rgba[:, :, 3] = np.where(mask.bits, 255, 0)
        pieces.append(Piece(piece_id=idx, image=RasterImage(pixels=rgba), mask=mask))
    return PuzzleInstance(
        puzzle_id=puzzle_id,
        grid=grid,
        pieces=tuple(pieces),
        ground_truth=np.arange(grid.n_pieces, dtype=np.int64),
        source=source,
        split=split,
    )


def gradient_image(side: int, rng: np.random.Generator) -> RasterImage:
    """Synthetic texture: per-channel bivariate linear gradient.

    Both axes carry signal (amplitudes bounded away from zero) so every grid
    cell gets a distinct color signature, and the plane is placed to span
    [5, 250] without clipping.
    """
    y, x = np.mgrid[0:side, 0:side].astype(np.float64) / max(side - 1, 1)
    channels = []
    for _ in range(3):
        ax = float(rng.uniform(35.0, 90.0) * rng.choice((-1.0, 1.0)))
        ay = float(rng.uniform(35.0, 90.0) * rng.choice((-1.0, 1.0)))
        lo = 5.0 - min(0.0, ax) - min(0.0, ay)
        hi = 250.0 - max(0.0, ax) - max(0.0, ay)
        base = float(rng.uniform(lo, hi))
        channels.append(base + ax * x + ay * y)
    px = np.clip(np.rint(np.stack(channels, axis=2)), 0, 255).astype(np.uint8)
    return RasterImage(pixels=px)


# ---------------------------------------------------------------------------
# permutations and shuffling

def random_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform permutation of 0..n-1 by Fisher-Yates."""
    perm = np.arange(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def shuffle(instance: PuzzleInstance, rng: np.random.Generator) -> PuzzleInstance:
    """Permute piece order; ground truth still sends each piece to its home slot."""
    n = instance.grid.n_pieces
    sigma = random_permutation(n, rng)
    pieces = tuple(instance.pieces[int(s)] for s in sigma)
    gt = instance.ground_truth[sigma].copy()
    return replace(instance, pieces=pieces, ground_truth=gt)


def derive_puzzle_seed(dataset_seed: int, puzzle_id: str) -> int:
    """Stable per-puzzle seed so batch generation is order-independent."""
    digest = hashlib.sha256(f"{dataset_seed}:{puzzle_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def split_dataset(
    ids: list,
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
    rng: np.random.Generator | None = None,
) -> dict[str, list]:
    """Disjoint train/val/test assignment; floor counts, remainder to train."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    if rng is None:
        rng = np.random.default_rng(0)
    n = len(ids)
    order = random_permutation(n, rng)
    shuffled = [ids[int(i)] for i in order]
    n_val = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_val - n_test
    return {
        "train": shuffled[:n_train],
        "val": shuffled[n_train : n_train + n_val],
        "test": shuffled[n_train + n_val :],
    }


# ---------------------------------------------------------------------------
# manifest I/O

def _piece_filename(piece_id: int) -> str:
    return f"piece_{piece_id:02d}.png"


def manifest_json(instance: PuzzleInstance) -> str:
    doc = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "puzzle_id": instance.puzzle_id,
        "k": instance.grid.k,
        "canvas": instance.grid.canvas,
        "split": instance.split,
        "source": instance.source,
        "pieces": [
            {
                "piece_id": p.piece_id,
                "file": _piece_filename(p.piece_id),
                "gt_row": int(instance.ground_truth[i]) // instance.grid.k,
                "gt_col": int(instance.ground_truth[i]) % instance.grid.k,
            }
            for i, p in enumerate(instance.pieces)
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def write_manifest(instance: PuzzleInstance, root: str) -> str:
    """Writes <root>/<split>/<puzzle_id>/manifest.json plus piece PNGs."""
    out = os.path.join(root, instance.split, instance.puzzle_id)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        fh.write(manifest_json(instance))
    for p in instance.pieces:
        with open(os.path.join(out, _piece_filename(p.piece_id)), "wb") as fh:
            fh.write(encode_png(p.image))
    return out


def read_manifest(path: str) -> PuzzleInstance:
    """Inverse of write_manifest; accepts the directory or the manifest file."""
    if os.path.isdir(path):
        path = os.path.join(path, "manifest.json")
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        raise ManifestVersionError(
            f"unsupported manifest schema {version!r}, expected {MANIFEST_SCHEMA_VERSION!r}"
        )
    grid = GridSpec(k=int(doc["k"]), canvas=int(doc["canvas"]))
    entries = doc["pieces"]
    if len(entries) != grid.n_pieces:
        raise ValueError(
            f"manifest lists {len(entries)} pieces, expected {grid.n_pieces}"
        )
    base = os.path.dirname(path)
    pieces = []
    gt = np.empty(grid.n_pieces, dtype=np.int64)
    for i, entry in enumerate(entries):
        with open(os.path.join(base, entry["file"]), "rb") as fh:
            img = decode_image(fh.read())
        if img.channels != 4:
            raise ValueError(f"piece file {entry['file']} is not RGBA")
        mask = BinaryMask(bits=img.pixels[:, :, 3] >= 128)
        pieces.append(
            Piece(piece_id=int(entry["piece_id"]), image=img, mask=mask)
        )
        gt[i] = int(entry["gt_row"]) * grid.k + int(entry["gt_col"])
    return PuzzleInstance(
        puzzle_id=doc["puzzle_id"],
        grid=grid,
        pieces=tuple(pieces),
        ground_truth=gt,
        source=doc["source"],
        split=doc["split"],
    )
