import numpy as np
import pytest

from convsim.errors import ValidationError
from convsim.turns import (
    TransitionMatrix,
    estimate_transitions,
    next_speaker,
    sample_turn_sequence,
)

FIG_AB = TransitionMatrix(("A", "B"), np.array([[0.367, 0.633], [0.631, 0.369]]))
ALTERNATING = TransitionMatrix(("A", "B"), np.array([[0.0, 1.0], [1.0, 0.0]]))


class TestTransitionMatrix:
    def test_rows_must_be_stochastic(self):
        with pytest.raises(ValidationError):
            TransitionMatrix(("A", "B"), np.array([[0.5, 0.6], [0.5, 0.5]]))

    def test_entries_must_be_probabilities(self):
        with pytest.raises(ValidationError):
            TransitionMatrix(("A", "B"), np.array([[-0.1, 1.1], [0.5, 0.5]]))

    def test_dict_round_trip(self):
        back = TransitionMatrix.from_dict(FIG_AB.to_dict())
        assert back.states == FIG_AB.states
        np.testing.assert_array_equal(back.probs, FIG_AB.probs)


class TestEstimateTransitions:
    def test_bigram_counting(self):
        matrix = estimate_transitions([["A", "B", "A", "A", "B"]])
        assert matrix.row("A") == pytest.approx([1 / 3, 2 / 3])
        assert matrix.row("B") == pytest.approx([1.0, 0.0])

    def test_alternating(self):
        matrix = estimate_transitions([["A", "B"] * 10])
        assert matrix.row("A")[1] == 1.0
        assert matrix.row("B")[0] == 1.0

    def test_can_represent_two_state_asymmetric_rows(self):
        # A matrix with P(A->B)=0.633 and P(B->A)=0.631 must survive an
        # estimate -> sample -> estimate loop.
        rng = np.random.default_rng(42)
        seq = sample_turn_sequence(FIG_AB, "A", 200_000, rng)
        est = estimate_transitions([seq])
        np.testing.assert_allclose(est.probs, FIG_AB.probs, atol=0.01)

    def test_zero_row_becomes_uniform(self):
        matrix = estimate_transitions([["A", "B"]])
        assert matrix.row("B") == pytest.approx([0.5, 0.5])

    def test_empty_input_rejected(self):
        with pytest.raises(ValidationError):
            estimate_transitions([])
        with pytest.raises(ValidationError):
            estimate_transitions([["A"]])

    def test_permutation_invariance(self):
        seqs = [["A", "B", "B"], ["B", "A"], ["A", "A", "B"]]
        forward = estimate_transitions(seqs)
        backward = estimate_transitions(seqs[::-1])
        np.testing.assert_array_equal(forward.probs, backward.probs)

    def test_row_sums(self):
        seqs = [["A", "B", "A", "A", "B", "B", "A"]]
        matrix = estimate_transitions(seqs)
        np.testing.assert_allclose(matrix.probs.sum(axis=1), 1.0, atol=1e-9)


class TestNextSpeaker:
    def test_degenerate_row(self):
        rng = np.random.default_rng(0)
        assert all(next_speaker(ALTERNATING, "A", rng) == "B" for _ in range(20))

    def test_unknown_state(self):
        with pytest.raises(ValidationError):
            next_speaker(ALTERNATING, "C", np.random.default_rng(0))

    def test_uniform_row_frequencies(self):
        uniform = TransitionMatrix(("A", "B"), np.full((2, 2), 0.5))
        rng = np.random.default_rng(3)
        draws = [next_speaker(uniform, "A", rng) for _ in range(20_000)]
        share = draws.count("B") / len(draws)
        assert abs(share - 0.5) < 0.02

    def test_matches_sequence_sampling_stream(self):
        seq = sample_turn_sequence(FIG_AB, "A", 50, np.random.default_rng(9))
        rng = np.random.default_rng(9)
        manual = ["A"]
        for _ in range(49):
            manual.append(next_speaker(FIG_AB, manual[-1], rng))
        assert manual == seq


class TestSampleTurnSequence:
    def test_length_one(self):
        assert sample_turn_sequence(FIG_AB, "B", 1, np.random.default_rng(0)) == ["B"]

    def test_alternating_determinism(self):
        seq = sample_turn_sequence(ALTERNATING, "A", 5, np.random.default_rng(0))
        assert seq == ["A", "B", "A", "B", "A"]

    def test_same_seed_reproducible(self):
        first = sample_turn_sequence(FIG_AB, "A", 1000, np.random.default_rng(5))
        second = sample_turn_sequence(FIG_AB, "A", 1000, np.random.default_rng(5))
        assert first == second

    def test_invalid_length(self):
        with pytest.raises(ValidationError):
            sample_turn_sequence(FIG_AB, "A", 0, np.random.default_rng(0))

    def test_long_run_matches_stationary_distribution(self):
        probs = FIG_AB.probs
        # Stationary distribution of a 2-state chain in closed form.
        p_ab, p_ba = probs[0, 1], probs[1, 0]
        stationary_a = p_ba / (p_ab + p_ba)
        seq = sample_turn_sequence(FIG_AB, "A", 200_000, np.random.default_rng(11))
        share_a = seq.count("A") / len(seq)
        assert abs(share_a - stationary_a) < 0.01
