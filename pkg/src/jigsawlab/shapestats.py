"""Geometric shape descriptors for fragment masks, summary stats, and PCA reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .masks import BinaryMask, EmptyMaskError

FEATURE_NAMES = (
    "area",
    "perimeter",
    "aspect_ratio",
    "solidity",
    "circularity",
    "compactness",
    "vertices",
    "concavities",
)

# corrected chain-length weights (straight step, diagonal step, per direction change)
_STEP_STRAIGHT = 0.980
_STEP_DIAGONAL = 1.406
_CORNER_CORRECTION = -0.091

_CURVATURE_THRESHOLD = 0.05  # rad per contour step
_SIMPLIFY_TOLERANCE_FRACTION = 0.01


@dataclass(frozen=True)
class ShapeFeatures:
    area: int
    perimeter: float
    aspect_ratio: float
    solidity: float
    circularity: float
    compactness: float
    vertices: int
    concavities: int

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)


@dataclass(frozen=True)
class FeatureSummary:
    mean: float
    sd: float
    median: float
    min: float
    max: float
    iqr: float


# ---------------------------------------------------------------------------
# contour machinery

_MOORE = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def trace_contour(bits: np.ndarray) -> np.ndarray:
    """Outer 8-connected boundary as an ordered (m, 2) array of (row, col) pixels.

    Moore-neighbor tracing from the first foreground pixel in row-major order.
    The tracer state is (current pixel, last background pixel examined); the walk
    stops when the initial state recurs, so thin structures are walked fully
    instead of terminating on the first revisit of the start pixel.
    """
    ys, xs = np.nonzero(bits)
    if len(ys) == 0:
        raise EmptyMaskError("cannot trace an empty mask")
    h, w = bits.shape
    start = (int(ys[0]), int(xs[0]))
    # scan order guarantees the W neighbor of the start pixel is background
    back0 = (start[0], start[1] - 1)

    def advance(p, b):
        """One tracing step: first foreground Moore neighbor clockwise after b."""
        d0 = _MOORE.index((b[0] - p[0], b[1] - p[1]))
        prev_bg = b
        for step in range(1, 9):
            d = (d0 + step) % 8
            ny, nx = p[0] + _MOORE[d][0], p[1] + _MOORE[d][1]
            if 0 <= ny < h and 0 <= nx < w and bits[ny, nx]:
                return (ny, nx), prev_bg
            prev_bg = (ny, nx)
        return None, prev_bg

    # The seeded state can lack a predecessor (thin structures), so the orbit
    # may be rho-shaped; detecting recurrence of any state and slicing out the
    # cycle yields exactly one full period of the boundary walk.
    contour = [start]
    seen = {(start, back0): 0}
    p, b = start, back0
    for _ in range(8 * len(ys) + 16):
        nxt, b = advance(p, b)
        if nxt is None:
            break  # isolated pixel
        state = (nxt, b)
        if state in seen:
            contour = contour[seen[state] :]
            break
        seen[state] = len(contour)
        contour.append(nxt)
        p = nxt
    else:
        raise RuntimeError("contour tracing failed to terminate")
    return np.array(contour, dtype=np.int64)


def _perimeter(contour: np.ndarray, area: int) -> float:
    """Weighted chain length of the closed contour.

    Straight and diagonal steps carry calibrated weights with a small deduction
    per direction change, so smooth digital boundaries measure close to their
    continuous length. Floored at the isoperimetric minimum for the pixel area,
    which also covers degenerate one-pixel contours.
    """
    floor = 2.0 * math.sqrt(math.pi * area)
    m = len(contour)
    if m < 2:
        return floor
    steps = np.roll(contour, -1, axis=0) - contour
    diag = (steps[:, 0] != 0) & (steps[:, 1] != 0)
    codes = steps[:, 0] * 3 + steps[:, 1]
    corners = int((codes != np.roll(codes, 1)).sum())
    length = (
        _STEP_STRAIGHT * float((~diag).sum())
        + _STEP_DIAGONAL * float(diag.sum())
        + _CORNER_CORRECTION * corners
    )
    return max(length, floor)


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew monotone chain; returns hull vertices in counter-clockwise order."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=np.float64)


def polygon_area(vertices: np.ndarray) -> float:
    if len(vertices) < 3:
        return 0.0
    x = vertices[:, 0]
    y = vertices[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def simplify_polyline(points: np.ndarray, tolerance: float) -> np.ndarray:
    """Iterative Douglas-Peucker on an open polyline; returns kept vertex indices."""
    n = len(points)
    if n <= 2:
        return np.arange(n)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        a, b = stack.pop()
        if b - a < 2:
            continue
        seg = points[a + 1 : b].astype(np.float64)
        pa = points[a].astype(np.float64)
        pb = points[b].astype(np.float64)
        chord = pb - pa
        norm = math.hypot(chord[0], chord[1])
        if norm < 1e-12:
            dists = np.hypot(seg[:, 0] - pa[0], seg[:, 1] - pa[1])
        else:
            dists = np.abs(chord[0] * (seg[:, 1] - pa[1]) - chord[1] * (seg[:, 0] - pa[0])) / norm
        worst = int(np.argmax(dists))
        if dists[worst] > tolerance:
            mid = a + 1 + worst
            keep[mid] = True
            stack.append((a, mid))
            stack.append((mid, b))
    return np.nonzero(keep)[0]


def _vertex_count(contour: np.ndarray, tolerance: float) -> int:
    m = len(contour)
    if m <= 3:
        return m
    # closed curve: split at the point farthest from contour[0], simplify both arcs
    d = np.hypot(contour[:, 0] - contour[0, 0], contour[:, 1] - contour[0, 1])
    far = int(np.argmax(d))
    if far == 0:
        return 1
    first = contour[: far + 1]
    second = np.concatenate([contour[far:], contour[:1]], axis=0)
    k1 = len(simplify_polyline(first, tolerance))
    k2 = len(simplify_polyline(second, tolerance))
    return k1 + k2 - 2


def _concavity_count(contour: np.ndarray, threshold: float = _CURVATURE_THRESHOLD) -> int:
    m = len(contour)
    if m < 5:
        return 0
    pts = contour.astype(np.float64)
    # light circular smoothing kills pixel-quantization zigzag before
    # curvature is estimated over the 5-sample window
    kernel = np.ones(5) / 5.0
    smoothed = np.empty_like(pts)
    for c in range(2):
        col = pts[:, c]
        ext = np.concatenate([col[-2:], col, col[:2]])
        smoothed[:, c] = np.convolve(ext, kernel, mode="valid")
    v_in = smoothed - np.roll(smoothed, 2, axis=0)
    v_out = np.roll(smoothed, -2, axis=0) - smoothed
    cross = v_in[:, 0] * v_out[:, 1] - v_in[:, 1] * v_out[:, 0]
    dot = (v_in * v_out).sum(axis=1)
    turns = np.arctan2(cross, dot)
    if turns.sum() < 0:
        turns = -turns
    curvature = turns / 2.0  # each window half spans two contour steps
    return int((curvature < -threshold).sum())


def extract_features(mask: BinaryMask) -> ShapeFeatures:
    """The eight descriptors of one cleaned fragment mask."""
    bits = mask.bits
    area = int(bits.sum())
    if area == 0:
        raise EmptyMaskError("cannot extract features from an empty mask")
    contour = trace_contour(bits)
    perimeter = _perimeter(contour, area)

    ys, xs = np.nonzero(bits)
    width = int(xs.max() - xs.min()) + 1
    height = int(ys.max() - ys.min()) + 1
    aspect_ratio = width / height

    # hull over pixel corners so a convex digitized shape cannot exceed solidity 1
    corners = np.concatenate(
        [contour + off for off in ((-0.5, -0.5), (-0.5, 0.5), (0.5, -0.5), (0.5, 0.5))]
    )
    hull = convex_hull(corners)
    hull_area = polygon_area(hull)
    solidity = area / hull_area if hull_area > 0 else 1.0

    circularity = 4.0 * math.pi * area / (perimeter * perimeter)
    compactness = perimeter * perimeter / area
    vertices = _vertex_count(contour, _SIMPLIFY_TOLERANCE_FRACTION * perimeter)
    concavities = _concavity_count(contour)
    return ShapeFeatures(
        area=area,
        perimeter=float(perimeter),
        aspect_ratio=float(aspect_ratio),
        solidity=float(min(solidity, 1.0)),
        circularity=float(circularity),
        compactness=float(compactness),
        vertices=int(vertices),
        concavities=int(concavities),
    )


# ---------------------------------------------------------------------------
# summary statistics

def _median_low(sorted_vals: np.ndarray) -> float:
    return float(sorted_vals[(len(sorted_vals) - 1) // 2])


def _median_true(sorted_vals: np.ndarray) -> float:
    n = len(sorted_vals)
    mid = n // 2
    if n % 2 == 1:
        return float(sorted_vals[mid])
    return float(sorted_vals[mid - 1] + sorted_vals[mid]) / 2.0


def _summary_of(values: np.ndarray) -> FeatureSummary:
    s = np.sort(values.astype(np.float64))
    n = len(s)
    # Tukey hinges, excluding the median element for odd n
    half = n // 2
    q1 = _median_true(s[:half])
    q3 = _median_true(s[n - half :])
    return FeatureSummary(
        mean=float(s.mean()),
        sd=float(s.std(ddof=1)),
        median=_median_low(s),
        min=float(s[0]),
        max=float(s[-1]),
        iqr=q3 - q1,
    )


def summarize(samples: list[ShapeFeatures]) -> dict[str, FeatureSummary]:
    """Per-feature mean, sample SD, low-median, min, max, and hinge IQR."""
    if len(samples) < 2:
        raise ValueError("need at least 2 samples to summarize")
    matrix = np.stack([s.as_vector() for s in samples])
    return {name: _summary_of(matrix[:, i]) for i, name in enumerate(FEATURE_NAMES)}


def feature_matrix(samples: list[ShapeFeatures]) -> np.ndarray:
    return np.stack([s.as_vector() for s in samples])


# ---------------------------------------------------------------------------
# PCA

@dataclass(frozen=True, eq=False)
class PcaResult:
    component_loadings: np.ndarray  # rows are components
    explained_variance_ratio: np.ndarray
    projected: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    eigenvalues: np.ndarray


def pca(samples: np.ndarray) -> PcaResult:
    """PCA on z-scored features via eigendecomposition of the covariance."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a 2-D sample matrix")
    n, d = x.shape
    if n < 9:
        raise ValueError(f"need at least 9 samples for a stable decomposition, got {n}")
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    dead = np.nonzero(sd < 1e-12)[0]
    if len(dead) > 0:
        names = ", ".join(
            FEATURE_NAMES[i] if d == len(FEATURE_NAMES) else str(i) for i in dead
        )
        raise ValueError(f"constant feature column(s): {names}")
    z = (x - mean) / sd
    cov = (z.T @ z) / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    loadings = eigvecs[:, order].T.copy()
    for row in loadings:
        if row[int(np.argmax(np.abs(row)))] < 0:
            row *= -1.0
    ratios = eigvals / eigvals.sum()
    projected = z @ loadings.T
    return PcaResult(
        component_loadings=loadings,
        explained_variance_ratio=ratios,
        projected=projected,
        mean=mean,
        sd=sd,
        eigenvalues=eigvals,
    )


# ---------------------------------------------------------------------------
# distribution comparison report

@dataclass(frozen=True, eq=False)
class ValidationReport:
    real_stats: dict[str, FeatureSummary]
    synth_stats: dict[str, FeatureSummary]
    relative_mean_diff: dict[str, float | None]
    pca: PcaResult
    labels: list[str]
    projection_2d: np.ndarray

    def to_json_dict(self) -> dict:
        def stats_block(stats: dict[str, FeatureSummary]) -> dict:
            return {
                name: {
                    "mean": fs.mean,
                    "sd": fs.sd,
                    "median": fs.median,
                    "min": fs.min,
                    "max": fs.max,
                    "iqr": fs.iqr,
                }
                for name, fs in stats.items()
            }

        return {
            "features": list(FEATURE_NAMES),
            "real": stats_block(self.real_stats),
            "synthetic": stats_block(self.synth_stats),
            "relative_mean_diff": self.relative_mean_diff,
            "explained_variance_ratio": [float(v) for v in self.pca.explained_variance_ratio],
            "projection": [
                {"group": g, "pc1": float(p[0]), "pc2": float(p[1])}
                for g, p in zip(self.labels, self.projection_2d)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    def to_svg(self, size: int = 480) -> str:
        return _scatter_svg(self.projection_2d, self.labels, self.pca.explained_variance_ratio, size)


def compare_distributions(
    real: list[ShapeFeatures], synth: list[ShapeFeatures]
) -> ValidationReport:
    """Descriptive comparison of two mask populations plus a pooled 2-D projection."""
    if not real or not synth:
        raise ValueError("both groups must be non-empty")
    real_stats = summarize(real) if len(real) >= 2 else None
    synth_stats = summarize(synth) if len(synth) >= 2 else None
    if real_stats is None or synth_stats is None:
        raise ValueError("need at least 2 samples per group")

    rel: dict[str, float | None] = {}
    for name in FEATURE_NAMES:
        rm = real_stats[name].mean
        sm = synth_stats[name].mean
        rel[name] = None if abs(rm) < 1e-12 else (sm - rm) / rm

    pooled = np.concatenate([feature_matrix(real), feature_matrix(synth)])
    result = pca(pooled)
    labels = ["real"] * len(real) + ["synthetic"] * len(synth)
    return ValidationReport(
        real_stats=real_stats,
        synth_stats=synth_stats,
        relative_mean_diff=rel,
        pca=result,
        labels=labels,
        projection_2d=result.projected[:, :2].copy(),
    )


def _scatter_svg(points: np.ndarray, labels: list[str], ratios: np.ndarray, size: int) -> str:
    pad = 40
    span = max(float(np.abs(points).max()), 1e-9)
    scale = (size - 2 * pad) / (2 * span)
    colors = {"real": "#1f77b4", "synthetic": "#d62728"}
    rows = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<line x1="{pad}" y1="{size // 2}" x2="{size - pad}" y2="{size // 2}" stroke="#ccc"/>',
        f'<line x1="{size // 2}" y1="{pad}" x2="{size // 2}" y2="{size - pad}" stroke="#ccc"/>',
    ]
    for p, g in zip(points, labels):
        cx = size / 2 + float(p[0]) * scale
        cy = size / 2 - float(p[1]) * scale
        rows.append(
            f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3" fill="{colors.get(g, "#555")}" fill-opacity="0.55"/>'
        )
    rows.append(
        f'<text x="{pad}" y="{size - 12}" font-size="12" fill="#333">'
        f"PC1 {100 * float(ratios[0]):.1f}% / PC2 {100 * float(ratios[1]):.1f}%</text>"
    )
    for i, (g, c) in enumerate(colors.items()):
        y = pad + 16 * i
        rows.append(f'<circle cx="{size - pad - 70}" cy="{y}" r="4" fill="{c}"/>')
        rows.append(f'<text x="{size - pad - 60}" y="{y + 4}" font-size="12" fill="#333">{g}</text>')
    rows.append("</svg>")
    return "\n".join(rows)


def features_to_csv(samples: list[ShapeFeatures], path, ids: list[str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("mask_id",) + FEATURE_NAMES)
        for i, s in enumerate(samples):
            row_id = ids[i] if ids else f"mask_{i:05d}"
            writer.writerow([row_id] + [getattr(s, n) for n in FEATURE_NAMES])
