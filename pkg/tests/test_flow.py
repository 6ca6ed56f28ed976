import numpy as np
import pytest

from helpers import gradient_table, reference_cross_entropy
from jigsawlab.compat import Direction
from jigsawlab.puzzlegen import GridSpec, random_permutation
from jigsawlab.solvers import (
    AssignmentState,
    ConstantScorer,
    FlowConfig,
    FlowTrainingExample,
    LinearScorer,
    LinearScorerParams,
    NeighborCompatScorer,
    OracleScorer,
    cfm_gradient,
    cfm_loss,
    feature_tensor,
    flow_solve,
    greedy_assignment,
    sample_interpolant,
    train_linear_scorer,
)

CHANNEL = {Direction.UP: 0, Direction.DOWN: 1, Direction.LEFT: 2, Direction.RIGHT: 3}


class TestStateAndConfig:
    def test_state_allows_collisions(self):
        state = AssignmentState(positions=np.array([0, 0, 2, 1]), t=0.5)
        assert state.positions.tolist() == [0, 0, 2, 1]

    def test_state_validates_range(self):
        with pytest.raises(ValueError):
            AssignmentState(positions=np.array([0, 4]), t=0.5)
        with pytest.raises(ValueError):
            AssignmentState(positions=np.array([0, 1]), t=1.5)

    def test_config_validates_steps(self):
        assert FlowConfig().steps == 20
        with pytest.raises(ValueError):
            FlowConfig(steps=0)

    def test_params_validate_shape_and_finiteness(self):
        assert LinearScorerParams().weights.tolist() == [0.0] * 7
        with pytest.raises(ValueError):
            LinearScorerParams(weights=np.zeros(5))
        with pytest.raises(ValueError):
            LinearScorerParams(weights=np.full(7, np.nan))


class TestInterpolant:
    def test_endpoints(self):
        rng = np.random.default_rng(90)
        pi0 = np.arange(9)
        pi1 = np.roll(np.arange(9), 1)
        assert np.array_equal(sample_interpolant(pi0, pi1, 0.0, rng).positions, pi0)
        assert np.array_equal(sample_interpolant(pi0, pi1, 1.0, rng).positions, pi1)

    def test_mixture_rate_tracks_t(self):
        rng = np.random.default_rng(91)
        pi0 = np.arange(9)
        pi1 = np.roll(np.arange(9), 1)
        hits = 0
        draws = 100_000
        for _ in range(draws):
            hits += int(np.sum(sample_interpolant(pi0, pi1, 0.25, rng).positions == pi1))
        assert abs(hits / (9 * draws) - 0.25) < 0.01

    def test_validates_inputs(self):
        rng = np.random.default_rng(92)
        with pytest.raises(ValueError):
            sample_interpolant(np.arange(4), np.arange(5), 0.5, rng)
        with pytest.raises(ValueError):
            sample_interpolant(np.arange(4), np.arange(4), -0.1, rng)


class TestFeatureTensor:
    def test_matches_plain_loop_recomputation(self):
        _, _, table = gradient_table(93, k=3)
        rng = np.random.default_rng(93)
        state = AssignmentState(positions=rng.integers(0, 9, size=9), t=0.4)
        phi = feature_tensor(table, 3, state)
        n = 9
        for i in range(n):
            for j in range(n):
                r, c = divmod(j, 3)
                for d in Direction:
                    rr, cc = r + d.offset[0], c + d.offset[1]
                    expected = 0.0
                    if 0 <= rr < 3 and 0 <= cc < 3:
                        q = rr * 3 + cc
                        occupants = [
                            p
                            for p in range(n)
                            if state.positions[p] == q and p != i
                        ]
                        if occupants:
                            expected = float(
                                np.mean([table.C[d][i, p] for p in occupants])
                            )
                    assert abs(phi[i, j, CHANNEL[d]] - expected) < 1e-12
                marker = 1.0 if state.positions[i] == j else 0.0
                assert phi[i, j, 4] == marker
                assert phi[i, j, 5] == state.t
                assert phi[i, j, 6] == 1.0

    def test_linear_scorer_is_a_dot_product(self):
        _, _, table = gradient_table(94, k=2)
        rng = np.random.default_rng(94)
        state = AssignmentState(positions=rng.integers(0, 4, size=4), t=0.7)
        w = rng.normal(size=7)
        scorer = LinearScorer(LinearScorerParams(weights=w), table, 2)
        phi = feature_tensor(table, 2, state)
        assert np.allclose(scorer.logits(state), phi @ w)


class TestLoss:
    def test_confident_oracle_has_negligible_loss(self):
        rng = np.random.default_rng(95)
        target = random_permutation(9, rng)
        scorer = OracleScorer(target, margin=50.0)
        loss = cfm_loss(scorer, np.arange(9), target, 0.5, rng)
        assert loss.per_piece < 1e-9

    def test_uniform_scorer_pays_log_n(self):
        rng = np.random.default_rng(96)
        target = random_permutation(9, rng)
        loss = cfm_loss(ConstantScorer(9), np.arange(9), target, 0.0, rng)
        assert abs(loss.per_piece - np.log(9)) < 1e-12
        assert abs(loss.total - 9 * np.log(9)) < 1e-11

    def test_matches_scalar_cross_entropy(self):
        rng = np.random.default_rng(97)
        _, _, table = gradient_table(97, k=2)
        w = rng.normal(size=7)
        target = random_permutation(4, rng)
        state = sample_interpolant(np.arange(4), target, 0.5, np.random.default_rng(1))
        phi = feature_tensor(table, 2, state)
        logits = phi @ w
        expected = np.mean(
            [
                reference_cross_entropy(logits[i].tolist(), int(target[i]))
                for i in range(4)
            ]
        )
        loss, _ = cfm_gradient(w, phi, target)
        assert abs(loss - expected) < 1e-9

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(98)
        n = 6
        phi = rng.normal(size=(n, n, 7))
        target = rng.permutation(n)
        w = rng.normal(size=7) * 0.5
        _, grad = cfm_gradient(w, phi, target)
        h = 1e-5
        for idx in range(7):
            bump = np.zeros(7)
            bump[idx] = h
            up, _ = cfm_gradient(w + bump, phi, target)
            down, _ = cfm_gradient(w - bump, phi, target)
            fd = (up - down) / (2 * h)
            assert abs(grad[idx] - fd) / max(abs(fd), 1e-6) < 1e-4


class TestGreedyAssignment:
    def test_prefers_high_logits_in_confidence_order(self):
        logits = np.array(
            [
                [10.0, 0.0, 0.0],
                [9.0, 8.0, 0.0],
                [0.0, 0.0, 1.0],
            ]
        )
        out = greedy_assignment(logits)
        assert out.tolist() == [0, 1, 2]

    def test_conflicts_fall_back_to_next_best(self):
        logits = np.array(
            [
                [10.0, 9.0],
                [8.0, 1.0],
            ]
        )
        out = greedy_assignment(logits)
        assert out.tolist() == [0, 1]

    def test_all_ties_still_yield_a_permutation(self):
        logits = np.zeros((5, 5))
        out = greedy_assignment(logits)
        assert sorted(out.tolist()) == list(range(5))
        assert np.array_equal(out, greedy_assignment(np.zeros((5, 5))))


class TestFlowSolve:
    def test_oracle_recovers_the_target(self):
        for n, k in ((9, 3), (16, 4), (25, 5)):
            for steps in (1, 5, 20):
                rng = np.random.default_rng(100 + n + steps)
                target = random_permutation(n, rng)
                res = flow_solve(
                    OracleScorer(target), GridSpec.default(k), FlowConfig(steps=steps), rng
                )
                assert np.array_equal(res.permutation, target)
                assert res.steps == steps

    def test_constant_scorer_output_is_valid_and_reproducible(self):
        grid = GridSpec.default(3)
        a = flow_solve(ConstantScorer(9), grid, FlowConfig(), np.random.default_rng(3))
        b = flow_solve(ConstantScorer(9), grid, FlowConfig(), np.random.default_rng(3))
        assert sorted(a.permutation.tolist()) == list(range(9))
        assert np.array_equal(a.permutation, b.permutation)


class TestTraining:
    def make_examples(self, count, start_seed=7000):
        out = []
        for i in range(count):
            puz, _, table = gradient_table(start_seed + i, k=2)
            out.append(
                FlowTrainingExample(table=table, k=2, target=puz.ground_truth)
            )
        return out

    def test_zero_epochs_keeps_zero_weights(self):
        examples = self.make_examples(2)
        res = train_linear_scorer(examples, 0, 0.5, np.random.default_rng(0))
        assert res.params.weights.tolist() == [0.0] * 7
        assert res.epochs == 0

    def test_same_seed_same_weights(self):
        examples = self.make_examples(3)
        a = train_linear_scorer(examples, 4, 0.5, np.random.default_rng(5))
        b = train_linear_scorer(examples, 4, 0.5, np.random.default_rng(5))
        assert np.array_equal(a.params.weights, b.params.weights)
        assert a.final_loss == b.final_loss
        assert np.any(a.params.weights != 0.0)
        assert np.isfinite(a.final_loss)

    def test_empty_example_list_rejected(self):
        with pytest.raises(ValueError):
            train_linear_scorer([], 1, 0.5, np.random.default_rng(0))

    def test_divergence_is_reported(self):
        examples = self.make_examples(1) * 2
        with np.errstate(invalid="ignore"):
            with pytest.raises(ValueError, match="diverged"):
                train_linear_scorer(examples, 1, np.inf, np.random.default_rng(0))


@pytest.mark.xfail(
    reason="deterministic rebuilds from a random start reach the exact layout "
    "on only a small fraction of 2x2 fixtures (0/100 measured); kept as the "
    "target bar for a future scorer",
    strict=True,
)
def test_neighbor_scorer_solves_most_two_by_twos():
    solved = 0
    for i in range(100):
        puz, grid, table = gradient_table(8000 + i, k=2)
        rng = np.random.default_rng(8500 + i)
        res = flow_solve(NeighborCompatScorer(table, 2), grid, FlowConfig(), rng)
        solved += int(np.array_equal(res.permutation, puz.ground_truth))
    assert solved >= 95
