import itertools

import numpy as np

from helpers import gradient_table, solid_piece
from jigsawlab.compat import Direction, bbm, compatibility_table
from jigsawlab.puzzlegen import GridSpec
from jigsawlab.solvers import greedy_solve


def exhaustive_best_layout(table):
    """Minimum-total-seam-cost 2x2 permutation by brute force."""
    best, best_cost = None, np.inf
    for perm in itertools.permutations(range(4)):
        place = np.empty(4, dtype=np.int64)
        for piece, slot in enumerate(perm):
            place[slot] = piece
        cost = (
            table.D[Direction.RIGHT][place[0], place[1]]
            + table.D[Direction.RIGHT][place[2], place[3]]
            + table.D[Direction.DOWN][place[0], place[2]]
            + table.D[Direction.DOWN][place[1], place[3]]
        )
        if cost < best_cost:
            best_cost, best = cost, np.asarray(perm, dtype=np.int64)
    return best


class TestGreedySolve:
    def test_single_piece(self):
        res = greedy_solve(None, GridSpec(k=1, canvas=128))
        assert res.permutation.tolist() == [0]
        assert res.bbm == 1.0

    def test_two_by_two_matches_brute_force(self):
        for seed in range(6000, 6008):
            puz, grid, table = gradient_table(seed, k=2)
            res = greedy_solve(table, grid)
            best = exhaustive_best_layout(table)
            assert np.array_equal(res.permutation, best)
            assert np.array_equal(res.permutation, puz.ground_truth)

    def test_result_is_always_a_permutation(self):
        for seed in (70, 71, 72):
            puz, grid, table = gradient_table(seed, k=3)
            res = greedy_solve(table, grid)
            assert sorted(res.permutation.tolist()) == list(range(9))

    def test_never_worse_than_ground_truth_bbm(self):
        for seed in (73, 74, 75, 76):
            puz, grid, table = gradient_table(seed, k=3)
            res = greedy_solve(table, grid)
            assert res.bbm >= bbm(puz.ground_truth, table, 3) - 1e-9
            assert abs(res.bbm - bbm(res.permutation, table, 3)) < 1e-12

    def test_identical_pieces_are_handled_deterministically(self):
        pieces = [solid_piece(i, (90, 90, 90)) for i in range(4)]
        table = compatibility_table(pieces)
        grid = GridSpec(k=2, canvas=256)
        a = greedy_solve(table, grid)
        b = greedy_solve(table, grid)
        assert sorted(a.permutation.tolist()) == [0, 1, 2, 3]
        assert np.array_equal(a.permutation, b.permutation)
        assert a.bbm == b.bbm
