"""Deterministic best-buddy greedy placement with segment refinement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..compat import CompatibilityTable, Direction, bbm_cells
from ..puzzlegen import GridSpec

_NEIGHBOR_DIRS = tuple(Direction)


@dataclass(frozen=True, eq=False)
class GreedyResult:
    permutation: np.ndarray
    bbm: float


def _bbox_fits(cells, extra, k: int) -> bool:
    rows = [r for r, _ in cells] + [extra[0]]
    cols = [c for _, c in cells] + [extra[1]]
    return (max(rows) - min(rows) < k) and (max(cols) - min(cols) < k)


def _candidate_slots(layout: dict, k: int):
    """Empty cells adjacent to the layout that keep its bounding box inside k*k."""
    seen = {}
    for (r, c) in layout:
        for d in _NEIGHBOR_DIRS:
            dr, dc = d.offset
            cell = (r + dr, c + dc)
            if cell in layout or cell in seen:
                continue
            if _bbox_fits(list(layout.keys()), cell, k):
                n_occ = sum(
                    (cell[0] + o[0], cell[1] + o[1]) in layout
                    for o in ((0, 1), (1, 0), (0, -1), (-1, 0))
                )
                seen[cell] = n_occ
    return seen


def _slot_neighbors(layout: dict, slot: tuple) -> list:
    occupied = []
    for d in _NEIGHBOR_DIRS:
        dr, dc = d.offset
        nbr = (slot[0] + dr, slot[1] + dc)
        if nbr in layout:
            # piece at nbr sees the new piece in the opposite direction
            occupied.append((layout[nbr], d.opposite))
    return occupied


def _best_piece(
    occupied: list, unplaced: set, table: CompatibilityTable
) -> tuple[float, int, int]:
    """(avg compat, buddy count, piece) of the best unplaced piece for a slot."""
    best = None
    for p in sorted(unplaced):
        avg = float(np.mean([table.C[d, q, p] for q, d in occupied]))
        buddy = sum((q, p, d) in table.best_buddies for q, d in occupied)
        key = (avg, buddy, -p)
        if best is None or key > best:
            best = key
    return best[0], best[1], -best[2]


def _fill(layout: dict, unplaced: set, table: CompatibilityTable, k: int) -> None:
    """Phase-2 loop: repeatedly place the best piece at the most-supported slot.

    Support (occupied-neighbor count) ranks slots first; among equally
    supported slots the one whose best remaining piece fits tightest wins,
    with row-major order as the final tie-break. The quality term keeps the
    floating bounding box from drifting past the true assembly border while
    everything is still a one-neighbor tie.
    """
    while unplaced:
        candidates = _candidate_slots(layout, k)
        if not candidates:
            break
        best = None
        for slot in sorted(candidates):
            occupied = _slot_neighbors(layout, slot)
            avg, buddy, piece = _best_piece(occupied, unplaced, table)
            key = (candidates[slot], avg, buddy, (-slot[0], -slot[1]))
            if best is None or key > best[0]:
                best = (key, slot, piece)
        _, slot, piece = best
        layout[slot] = piece
        unplaced.discard(piece)


def _buddy_segments(layout: dict, table: CompatibilityTable) -> list[set]:
    """Connected components of placed cells linked by best-buddy adjacency."""
    cells = set(layout)
    seen = set()
    segments = []
    for cell in sorted(cells):
        if cell in seen:
            continue
        frontier = [cell]
        seen.add(cell)
        comp = {cell}
        while frontier:
            cur = frontier.pop()
            p = layout[cur]
            for d in _NEIGHBOR_DIRS:
                dr, dc = d.offset
                nbr = (cur[0] + dr, cur[1] + dc)
                if nbr in seen or nbr not in cells:
                    continue
                if (p, layout[nbr], d) in table.best_buddies:
                    seen.add(nbr)
                    comp.add(nbr)
                    frontier.append(nbr)
        segments.append(comp)
    return segments


def _largest_segment(segments: list[set], layout: dict) -> set:
    best_size = max(len(s) for s in segments)
    tied = [s for s in segments if len(s) == best_size]
    return min(tied, key=lambda s: min(layout[c] for c in s))


def _anchor(layout: dict, table: CompatibilityTable, k: int) -> dict:
    """Translate the layout into the [0,k)x[0,k) frame.

    BBM is translation-invariant, so all fitting translations tie and the
    smallest (dr, dc) wins, but the scan keeps the stated maximization explicit.
    """
    rows = [r for r, _ in layout]
    cols = [c for _, c in layout]
    r0, r1 = min(rows), max(rows)
    c0, c1 = min(cols), max(cols)
    best = None
    for dr in range(-r0, -r0 + k - (r1 - r0)):
        for dc in range(-c0, -c0 + k - (c1 - c0)):
            moved = {(r + dr, c + dc): p for (r, c), p in layout.items()}
            score = bbm_cells(moved, table)
            key = (-score, dr, dc)
            if best is None or key < best[0]:
                best = (key, moved)
    return best[1]


def greedy_solve(
    table: CompatibilityTable | None, grid: GridSpec
) -> GreedyResult:
    """Three-phase greedy assembly; returns a full piece-to-slot permutation.

    Seeds with the piece holding the most mutual best buddies, grows the layout
    on a working grid whose bounding box may float but never exceeds k*k, then
    repeatedly keeps only the largest best-buddy-connected segment and refills
    while the best-buddy metric strictly improves. Fully deterministic.
    """
    n = grid.n_pieces
    if n == 1:
        return GreedyResult(permutation=np.zeros(1, dtype=np.int64), bbm=1.0)
    assert table is not None and table.n_pieces == n

    counts = [table.mutual_buddy_count(p) for p in range(n)]
    seed = int(np.argmax(counts))
    layout = {(0, 0): seed}
    _fill(layout, set(range(n)) - {seed}, table, grid.k)

    score = bbm_cells(layout, table)
    while True:
        segments = _buddy_segments(layout, table)
        keep = _largest_segment(segments, layout)
        trial = {cell: layout[cell] for cell in keep}
        placed = set(trial.values())
        _fill(trial, set(range(n)) - placed, table, grid.k)
        trial_score = bbm_cells(trial, table)
        if trial_score > score:
            layout, score = trial, trial_score
        else:
            break

    layout = _anchor(layout, table, grid.k)

    perm = np.full(n, -1, dtype=np.int64)
    for (r, c), p in layout.items():
        perm[p] = r * grid.k + c
    leftovers = sorted(np.nonzero(perm < 0)[0].tolist())
    if leftovers:
        free = sorted(set(range(n)) - set(perm[perm >= 0].tolist()))
        for slot in free:
            r, c = divmod(slot, grid.k)
            occupied = []
            for d in _NEIGHBOR_DIRS:
                dr, dc = d.offset
                nbr = (r + dr, c + dc)
                q = layout.get(nbr)
                if q is not None:
                    occupied.append((q, d.opposite))
            if occupied:
                scores = [
                    (float(np.mean([table.C[d, q, p] for q, d in occupied])), -p)
                    for p in leftovers
                ]
                pick = leftovers[max(range(len(scores)), key=lambda i: scores[i])]
            else:
                pick = leftovers[0]
            leftovers.remove(pick)
            perm[pick] = slot
            layout[(r, c)] = pick
    return GreedyResult(permutation=perm, bbm=bbm_cells(layout, table))
