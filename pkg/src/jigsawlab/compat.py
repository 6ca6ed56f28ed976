"""Edge dissimilarity, normalized compatibility, and best-buddy relations."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .puzzlegen import Piece
from .raster import RasterImage, rgb_to_lab

GRADIENT_EXPONENT = 0.3  # P
SUM_EXPONENT = 0.0625  # Q
NORMALIZER_FLOOR = 1e-12


class Direction(IntEnum):
    RIGHT = 0
    DOWN = 1
    LEFT = 2
    UP = 3

    @property
    def opposite(self) -> "Direction":
        return Direction((self.value + 2) % 4)

    @property
    def offset(self) -> tuple[int, int]:
        return ((0, 1), (1, 0), (0, -1), (-1, 0))[self.value]


@dataclass(frozen=True, eq=False)
class EdgeSequence:
    direction: Direction
    lab_values: np.ndarray  # (length, 3) outermost opaque pixels, scan order
    inner_values: np.ndarray  # (length, 3) second-outermost, outer fallback

    @property
    def length(self) -> int:
        return len(self.lab_values)


def edge_sequence(piece: Piece, direction: Direction) -> EdgeSequence:
    """Facing-boundary Lab samples for one side of a piece.

    For RIGHT, each row contributes its rightmost opaque pixel (empty rows are
    skipped) plus the second-outermost opaque pixel in the same row for the
    gradient term, falling back to the outermost when the row has only one.
    RIGHT/LEFT run top to bottom, UP/DOWN left to right.
    """
    lab = rgb_to_lab(piece.image)
    return _edge_from_lab(lab.pixels, piece.mask.bits, direction)


def _edge_from_lab(lab: np.ndarray, bits: np.ndarray, direction: Direction) -> EdgeSequence:
    if not bits.any():
        raise ValueError("piece has no opaque pixels")
    if direction in (Direction.UP, Direction.DOWN):
        bits = bits.T
        lab = lab.transpose(1, 0, 2)
    # now every scanline is a row and the outermost side is right or left
    from_high = direction in (Direction.RIGHT, Direction.DOWN)
    outer = []
    inner = []
    for line_bits, line_lab in zip(bits, lab):
        idx = np.nonzero(line_bits)[0]
        if len(idx) == 0:
            continue
        if from_high:
            o = idx[-1]
            i = idx[-2] if len(idx) > 1 else o
        else:
            o = idx[0]
            i = idx[1] if len(idx) > 1 else o
        outer.append(line_lab[o])
        inner.append(line_lab[i])
    return EdgeSequence(
        direction=direction,
        lab_values=np.array(outer, dtype=np.float64),
        inner_values=np.array(inner, dtype=np.float64),
    )


def _resample(values: np.ndarray, target: int) -> np.ndarray:
    """Nearest-index downsample of a sequence to `target` entries."""
    n = len(values)
    if n == target:
        return values
    if target == 1:
        return values[(n - 1) // 2 : (n - 1) // 2 + 1]
    idx = np.rint(np.arange(target) * (n - 1) / (target - 1)).astype(np.int64)
    return values[idx]


def dissimilarity_from_edges(
    edge_i: EdgeSequence, edge_j: EdgeSequence
) -> float:
    """Boundary-gradient dissimilarity between two facing edges.

    Per aligned sample k, each side contributes the absolute deviation of the
    neighbor's boundary color from its own along-edge extrapolation: side i
    predicts 2*e_i[k] - e_i[k-1] and side j predicts 2*e_j[k] - e_j[k+1],
    with the k-1/k+1 indices clamped at the sequence ends. Deviations are
    summed over Lab channels; the two contributions are combined as
    (a^P + b^P)^(Q/P) and summed over k. Longer sequences are resampled to
    the shorter by nearest index.
    """
    s = min(edge_i.length, edge_j.length)
    e_i = _resample(edge_i.lab_values, s)
    e_j = _resample(edge_j.lab_values, s)
    prev_i = e_i[np.maximum(np.arange(s) - 1, 0)]
    next_j = e_j[np.minimum(np.arange(s) + 1, s - 1)]
    term_i = np.abs(2.0 * e_i - prev_i - e_j).sum(axis=1)
    term_j = np.abs(2.0 * e_j - next_j - e_i).sum(axis=1)
    p, q = GRADIENT_EXPONENT, SUM_EXPONENT
    return float(((term_i ** p + term_j ** p) ** (q / p)).sum())


@dataclass(frozen=True, eq=False)
class CompatibilityTable:
    D: np.ndarray  # (4, N, N), D[r, i, j]; +inf on diagonals
    C: np.ndarray  # (4, N, N), exp(-D/row normalizer); 0 on diagonals
    best_buddies: frozenset  # of (i, j, Direction)

    @property
    def n_pieces(self) -> int:
        return self.D.shape[1]

    def mutual_buddy_count(self, piece: int) -> int:
        return sum(1 for (i, _, _) in self.best_buddies if i == piece)


def _piece_edges(piece: Piece) -> dict[Direction, EdgeSequence]:
    lab = rgb_to_lab(piece.image)
    return {
        d: _edge_from_lab(lab.pixels, piece.mask.bits, d) for d in Direction
    }


def compatibility_table(pieces) -> CompatibilityTable:
    """Full directional dissimilarity/compatibility table plus best buddies.

    D is computed for RIGHT and DOWN and mirrored to LEFT and UP through the
    exact identity D(i,j,r) = D(j,i,opposite(r)), so the symmetry invariant
    holds bit for bit. Row normalizer: 25th percentile of the off-diagonal
    row, floored at 1e-12.
    """
    n = len(pieces)
    if n < 2:
        raise ValueError("need at least 2 pieces")
    edges = [_piece_edges(p) for p in pieces]
    d_table = np.full((4, n, n), np.inf, dtype=np.float64)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d_table[Direction.RIGHT, i, j] = dissimilarity_from_edges(
                edges[i][Direction.RIGHT], edges[j][Direction.LEFT]
            )
            d_table[Direction.DOWN, i, j] = dissimilarity_from_edges(
                edges[i][Direction.DOWN], edges[j][Direction.UP]
            )
    d_table[Direction.LEFT] = d_table[Direction.RIGHT].T
    d_table[Direction.UP] = d_table[Direction.DOWN].T

    c_table = np.zeros_like(d_table)
    off_diag = ~np.eye(n, dtype=bool)
    for r in range(4):
        for i in range(n):
            row = d_table[r, i][off_diag[i]]
            norm = max(float(np.percentile(row, 25)), NORMALIZER_FLOOR)
            c_table[r, i] = np.exp(-d_table[r, i] / norm)

    buddies = set()
    for r in (Direction.RIGHT, Direction.DOWN):
        rb = r.opposite
        fwd = np.argmax(c_table[r], axis=1)
        bwd = np.argmax(c_table[rb], axis=1)
        for i in range(n):
            j = int(fwd[i])
            if int(bwd[j]) == i:
                buddies.add((i, j, r))
                buddies.add((j, i, rb))
    return CompatibilityTable(
        D=d_table, C=c_table, best_buddies=frozenset(buddies)
    )


def bbm_cells(layout: dict[tuple[int, int], int], table: CompatibilityTable) -> float:
    """Best-buddy fraction over adjacent pairs of an arbitrary placed layout.

    `layout` maps (row, col) cells to piece indices; cells may be sparse.
    With no adjacent pairs the score is 1.0 (nothing to violate).
    """
    total = 0
    hits = 0
    for (r, c), p in layout.items():
        for d in (Direction.RIGHT, Direction.DOWN):
            dr, dc = d.offset
            q = layout.get((r + dr, c + dc))
            if q is None:
                continue
            total += 1
            if (p, q, d) in table.best_buddies:
                hits += 1
    return hits / total if total else 1.0


def bbm(assignment: np.ndarray, table: CompatibilityTable, k: int) -> float:
    """Best-buddy metric of a full assignment (piece -> grid slot) on a k*k grid."""
    layout = {
        (int(s) // k, int(s) % k): p for p, s in enumerate(np.asarray(assignment))
    }
    return bbm_cells(layout, table)


# ---------------------------------------------------------------------------
# binary cache of D

def save_dissimilarity_cache(d_table: np.ndarray, path: str) -> None:
    """Raw little-endian float64 dump, direction-major (4, N, N)."""
    arr = np.ascontiguousarray(d_table, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(arr.tobytes())


def load_dissimilarity_cache(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    count = len(raw) // 8
    n_sq = count // 4
    n = int(round(n_sq ** 0.5))
    if 4 * n * n * 8 != len(raw):
        raise ValueError(f"cache size {len(raw)} is not a 4*N*N float64 grid")
    return np.frombuffer(raw, dtype="<f8").reshape(4, n, n).astype(np.float64)
