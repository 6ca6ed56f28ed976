"""Solution-quality metrics and batch evaluation reports."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np


def _as_perm_batch(perms) -> np.ndarray:
    arr = np.asarray(perms, dtype=np.int64)
    if arr.ndim != 2:
        raise ValueError("expected a batch of equal-length permutations")
    return arr


def _check_pair(preds, gts) -> tuple[np.ndarray, np.ndarray]:
    p = _as_perm_batch(preds)
    g = _as_perm_batch(gts)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    return p, g


def perfect_accuracy(preds, gts) -> float:
    """Percent of puzzles solved exactly."""
    p, g = _check_pair(preds, gts)
    return 100.0 * float((p == g).all(axis=1).mean())


def absolute_accuracy(preds, gts) -> float:
    """Percent of pieces on their true positions, averaged over puzzles."""
    p, g = _check_pair(preds, gts)
    return 100.0 * float((p == g).mean(axis=1).mean())


def _grid_side(n: int) -> int:
    k = int(round(math.sqrt(n)))
    if k * k != n:
        raise ValueError(f"{n} pieces do not form a square grid")
    return k


def sra(pred, gt, k: int | None = None) -> float:
    """Fraction of ground-truth adjacent pairs preserved with the same relation.

    Each unordered adjacency is counted once with canonical direction (right
    for horizontal, down for vertical), giving 2k(k-1) pairs. The grid side is
    validated against (or inferred from) the permutation length.
    """
    return float(sra_batch(np.asarray(pred)[None, :], np.asarray(gt)[None, :], k)[0])


def sra_batch(preds, gts, k: int | None = None) -> np.ndarray:
    """Vectorized SRA over a batch; returns one fraction per row."""
    p, g = _check_pair(preds, gts)
    n = p.shape[1]
    if k is None:
        k = _grid_side(n)
    elif k * k != n:
        raise ValueError(f"{n} pieces do not fill a {k}x{k} grid")
    # position that the piece sitting at ground-truth slot u was moved to
    ppp = np.take_along_axis(p, np.argsort(g, axis=1), axis=1)
    total = 2 * k * (k - 1)
    if total == 0:
        return np.ones(len(p))
    u = np.arange(n)
    horiz = u[u % k != k - 1]
    vert = u[: k * (k - 1)]
    h_ok = (ppp[:, horiz + 1] == ppp[:, horiz] + 1) & (ppp[:, horiz] % k != k - 1)
    v_ok = ppp[:, vert + k] == ppp[:, vert] + k
    return (h_ok.sum(axis=1) + v_ok.sum(axis=1)) / total


def exhaustive_mean_sra(k: int) -> float:
    """Mean SRA of a uniform-random permutation on a k*k grid, by enumeration."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > 3:
        raise ValueError("enumeration over (k*k)! is only tabulated up to k=3")
    n = k * k
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    gts = np.tile(np.arange(n, dtype=np.int64), (len(perms), 1))
    return float(sra_batch(perms, gts).mean())


@dataclass(frozen=True, eq=False)
class MetricsReport:
    n_puzzles: int
    pa: float
    aa: float
    sra: float  # percent, like pa/aa
    rows: tuple  # per-puzzle (puzzle_id, exact, piece_accuracy, sra_fraction)

    def to_json_dict(self) -> dict:
        return {
            "n_puzzles": self.n_puzzles,
            "pa": self.pa,
            "aa": self.aa,
            "sra": self.sra,
            "puzzles": [
                {
                    "puzzle_id": pid,
                    "exact": bool(exact),
                    "piece_accuracy": acc,
                    "sra": s,
                }
                for pid, exact, acc, s in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["puzzle_id", "exact", "piece_accuracy", "sra"])
        for pid, exact, acc, s in self.rows:
            writer.writerow([pid, int(exact), f"{acc:.6f}", f"{s:.6f}"])
        return buf.getvalue()


def evaluate(preds, gts, puzzle_ids=None) -> MetricsReport:
    """Batch metrics; accepts aligned lists of predictions and ground truths."""
    p, g = _check_pair(preds, gts)
    m = len(p)
    if m == 0:
        raise ValueError("nothing to evaluate")
    ids = list(puzzle_ids) if puzzle_ids is not None else [f"puzzle_{i:04d}" for i in range(m)]
    if len(ids) != m:
        raise ValueError("puzzle_ids length mismatch")
    exact = (p == g).all(axis=1)
    acc = (p == g).mean(axis=1)
    s = sra_batch(p, g)
    rows = tuple(
        (ids[i], bool(exact[i]), float(acc[i]), float(s[i])) for i in range(m)
    )
    return MetricsReport(
        n_puzzles=m,
        pa=100.0 * float(exact.mean()),
        aa=100.0 * float(acc.mean()),
        sra=100.0 * float(s.mean()),
        rows=rows,
    )


def report_bar_svg(reports: dict[str, MetricsReport], size: int = 480) -> str:
    """Grouped PA/AA/SRA bars, one group per solver."""
    pad = 48
    groups = list(reports)
    metrics = ("pa", "aa", "sra")
    colors = ("#1f77b4", "#2ca02c", "#d62728")
    gw = (size - 2 * pad) / max(len(groups), 1)
    bw = gw / (len(metrics) + 1)
    height = size * 2 // 3
    rows = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{height}" '
        f'viewBox="0 0 {size} {height}">',
        f'<rect width="{size}" height="{height}" fill="white"/>',
    ]
    base = height - pad
    span = base - pad
    for gi, name in enumerate(groups):
        rep = reports[name]
        for mi, metric in enumerate(metrics):
            v = getattr(rep, metric)
            h = span * v / 100.0
            x = pad + gi * gw + mi * bw
            rows.append(
                f'<rect x="{x:.1f}" y="{base - h:.1f}" width="{bw * 0.85:.1f}" '
                f'height="{h:.1f}" fill="{colors[mi]}"/>'
            )
        rows.append(
            f'<text x="{pad + gi * gw + gw / 2 - bw / 2:.1f}" y="{base + 16}" '
            f'font-size="12" fill="#333" text-anchor="middle">{name}</text>'
        )
    for mi, metric in enumerate(metrics):
        y = pad + 16 * mi
        rows.append(f'<rect x="{size - pad - 70}" y="{y - 9}" width="10" height="10" fill="{colors[mi]}"/>')
        rows.append(f'<text x="{size - pad - 55}" y="{y}" font-size="12" fill="#333">{metric.upper()}</text>')
    rows.append(f'<line x1="{pad}" y1="{base}" x2="{size - pad}" y2="{base}" stroke="#333"/>')
    rows.append("</svg>")
    return "\n".join(rows)
