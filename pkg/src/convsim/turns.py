"""First-order Markov model of speaker turn-taking."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

log = logging.getLogger(__name__)

_ROW_SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic next-speaker probabilities over a fixed state list."""

    states: tuple[str, ...]
    probs: np.ndarray
    _cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != (len(self.states), len(self.states)):
            raise ValidationError(
                f"transition matrix shape {probs.shape} does not match "
                f"{len(self.states)} states"
            )
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValidationError("transition probabilities must lie in [0, 1]")
        row_sums = probs.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > _ROW_SUM_TOL):
            raise ValidationError(f"rows must sum to 1, got {row_sums}")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cumulative", np.cumsum(probs, axis=1))

    def state_index(self, state: str) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise ValidationError(f"unknown state {state!r}") from None

    def row(self, state: str) -> np.ndarray:
        return self.probs[self.state_index(state)]

    def to_dict(self) -> dict:
        return {"states": list(self.states), "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "TransitionMatrix":
        return cls(tuple(data["states"]), np.asarray(data["probs"], dtype=np.float64))


def estimate_transitions(sequences: list[list[str]]) -> TransitionMatrix:
    """Row-normalize bigram counts pooled over all sequences (no smoothing).

    States are ordered by sorted symbol. A state that never transitions out
    gets a uniform row, with a warning.
    """
    states = sorted({symbol for seq in sequences for symbol in seq})
    if not states:
        raise ValidationError("no sequences to estimate transitions from")
    index = {s: i for i, s in enumerate(states)}
    counts = np.zeros((len(states), len(states)), dtype=np.int64)
    for seq in sequences:
        if len(seq) < 2:
            continue
        idx = np.fromiter((index[s] for s in seq), dtype=np.int64, count=len(seq))
        np.add.at(counts, (idx[:-1], idx[1:]), 1)
    if counts.sum() == 0:
        raise ValidationError("sequences contain no transitions")
    probs = np.empty_like(counts, dtype=np.float64)
    for i, state in enumerate(states):
        total = counts[i].sum()
        if total == 0:
            log.warning("state %r has no outgoing transitions; using a uniform row", state)
            probs[i] = 1.0 / len(states)
        else:
            probs[i] = counts[i] / total
    return TransitionMatrix(tuple(states), probs)


def next_speaker(matrix: TransitionMatrix, current: str, rng: np.random.Generator) -> str:
    """Draw the next state from the current row via inverse CDF on one uniform."""
    row = matrix._cumulative[matrix.state_index(current)]
    choice = int(np.searchsorted(row, rng.random(), side="right"))
    return matrix.states[min(choice, len(matrix.states) - 1)]


def sample_turn_sequence(
    matrix: TransitionMatrix, initial: str, n: int, rng: np.random.Generator
) -> list[str]:
    """Sample a length-n state sequence starting from the given state.

    Consumes one uniform per step from the generator, exactly like repeated
    next_speaker calls, so the two agree draw-for-draw under one seed.
    """
    if n < 1:
        raise ValidationError(f"sequence length must be >= 1, got {n}")
    current = matrix.state_index(initial)
    if n == 1:
        return [matrix.states[current]]
    # Plain-float inner loop: over long sequences this is much faster than a
    # per-step numpy searchsorted on a row of two or three entries.
    rows = [tuple(row) for row in matrix._cumulative]
    last = len(matrix.states) - 1
    uniforms = rng.random(n - 1).tolist()
    indices = [current]
    append = indices.append
    for u in uniforms:
        row = rows[current]
        k = 0
        while k < last and row[k] <= u:
            k += 1
        current = k
        append(current)
    states = matrix.states
    return [states[i] for i in indices]
