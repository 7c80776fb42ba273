"""Dialogue simulation: speaker pairing, turn growth, and gap generation.

Builds symbolic dialogue plans from per-speaker utterance pools. Speakers
keep a personal base pause (sampled lazily, then frozen for the dialogue)
and per-event deviations come from the fitted residual model; two naive
baselines (fixed gaps, no concatenation) share the same plan format.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from .annotations import (
    DEFAULT_MAX_DURATION,
    DEFAULT_MIN_DURATION,
    ConversationAnnotation,
    SegmentAnnotation,
    UtteranceEntry,
    UtterancePool,
    filter_pool,
)
from .density import ModelKind, StatsModel
from .errors import ValidationError
from .stats import TransitionType
from .turns import TransitionMatrix, next_speaker

log = logging.getLogger(__name__)

_MAX_PAIRING_RETRIES = 1000
_SEED_MASK = (1 << 64) - 1


class SimMode(Enum):
    SASC = "sasc"
    CSASC = "csasc"
    NAIVE_FIXED_GAP = "naive_fixed_gap"
    NO_CONCAT = "no_concat"


_MODEL_KIND_FOR_MODE = {SimMode.SASC: ModelKind.SASC, SimMode.CSASC: ModelKind.CSASC}


@dataclass(frozen=True)
class SimulationConfig:
    mode: SimMode
    pairs_limit: int = 1
    seed: int = 0
    d_min: float = DEFAULT_MIN_DURATION
    d_max: float = DEFAULT_MAX_DURATION
    fixed_gap: float = 0.25
    clamp_min_start_delta: float = 0.01

    def __post_init__(self):
        if not 1 <= self.pairs_limit <= 5:
            raise ValidationError(
                f"pairs_limit must be in [1, 5], got {self.pairs_limit}"
            )
        if not 0 < self.d_min < self.d_max:
            raise ValidationError(
                f"need 0 < d_min < d_max, got [{self.d_min}, {self.d_max}]"
            )
        if self.fixed_gap <= 0:
            raise ValidationError(f"fixed_gap must be positive, got {self.fixed_gap}")
        if self.clamp_min_start_delta <= 0:
            raise ValidationError("clamp_min_start_delta must be positive")


@dataclass(frozen=True)
class PlanEvent:
    """One scheduled utterance: the sampled gap plus the realized start."""

    index: int
    speaker: str
    utterance_id: str
    gap_before: float
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class DialoguePlan:
    dialogue_id: str
    pair: tuple[str, str]
    events: tuple[PlanEvent, ...]
    seed: int
    mode: SimMode

    @property
    def length_seconds(self) -> float:
        return self.events[-1].end if self.events else 0.0

    def to_dict(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "mode": self.mode.value,
            "seed": self.seed,
            "pair": list(self.pair),
            "events": [
                {
                    "n": e.index,
                    "speaker": e.speaker,
                    "utterance_id": e.utterance_id,
                    "gap_before": e.gap_before,
                    "start": e.start,
                    "duration": e.duration,
                }
                for e in self.events
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DialoguePlan":
        events = tuple(
            PlanEvent(
                index=e["n"],
                speaker=e["speaker"],
                utterance_id=e["utterance_id"],
                gap_before=e["gap_before"],
                start=e["start"],
                duration=e["duration"],
            )
            for e in data["events"]
        )
        return cls(
            dialogue_id=data["dialogue_id"],
            pair=tuple(data["pair"]),
            events=events,
            seed=data["seed"],
            mode=SimMode(data["mode"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DialoguePlan":
        return cls.from_dict(json.loads(text))


def plan_to_annotation(
    plan: DialoguePlan, texts: Mapping[str, str] | None = None
) -> ConversationAnnotation:
    """Realized segment annotation implied by a plan (no audio needed)."""
    segments = tuple(
        SegmentAnnotation(
            conversation_id=plan.dialogue_id,
            speaker=e.speaker,
            start=e.start,
            end=e.end,
            text=texts.get(e.utterance_id) if texts is not None else None,
        )
        for e in plan.events
    )
    return ConversationAnnotation(plan.dialogue_id, segments)


def derive_seed(base_seed: int, *parts) -> int:
    """Stable 64-bit stream seed: base_seed XOR blake2b(parts).

    Machine- and run-independent, so corpora regenerate identically from
    one top-level seed.
    """
    key = "|".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return (base_seed ^ int.from_bytes(digest, "little")) & _SEED_MASK


def make_pairs(
    speakers: list[str], pairs_limit: int, rng: np.random.Generator
) -> list[tuple[str, str]]:
    """Build speaker pairs so nobody appears in more than pairs_limit pairs.

    Each of the pairs_limit rounds shuffles all speakers and pairs them off
    adjacently; a round that would repeat an existing pair is reshuffled
    (bounded retries). With an even speaker count every round pairs every
    speaker exactly once; an odd count leaves one speaker out per round.
    """
    roster = sorted(set(speakers))
    if len(roster) < 2:
        raise ValidationError(f"pairing needs >= 2 speakers, got {len(roster)}")
    seen: set[tuple[str, str]] = set()
    pairs: list[tuple[str, str]] = []
    for round_index in range(pairs_limit):
        for attempt in range(_MAX_PAIRING_RETRIES):
            order = [roster[i] for i in rng.permutation(len(roster))]
            candidate = []
            for k in range(0, len(order) - 1, 2):
                a, b = order[k], order[k + 1]
                candidate.append((a, b) if a <= b else (b, a))
            if all(p not in seen for p in candidate):
                break
        else:
            raise ValidationError(
                f"could not build a duplicate-free pairing for round "
                f"{round_index + 1} after {_MAX_PAIRING_RETRIES} attempts"
            )
        if len(order) % 2 == 1:
            log.info("round %d leaves speaker %s unpaired", round_index + 1, order[-1])
        seen.update(candidate)
        pairs.extend(candidate)
    return pairs


def grow_turn_sequence(
    matrix: TransitionMatrix,
    pool_sizes: Mapping[str, int],
    initial: str,
    rng: np.random.Generator,
) -> list[str]:
    """Extend a turn sequence until the next draw would exhaust a pool.

    Returns the longest sampled prefix whose per-state counts stay within
    the pool sizes (always at least the initial state).
    """
    sequence = [initial]
    counts = {state: 0 for state in matrix.states}
    counts[initial] = 1
    budget = sum(pool_sizes.get(state, 0) for state in matrix.states)
    current = initial
    while len(sequence) < budget:
        nxt = next_speaker(matrix, current, rng)
        if counts[nxt] + 1 > pool_sizes.get(nxt, 0):
            break
        counts[nxt] += 1
        sequence.append(nxt)
        current = nxt
    return sequence


def _clamped_start(prev_start, prev_end, gap, min_delta):
    return max(prev_end + gap, prev_start + min_delta, 0.0)


def plan_dialogue(
    pair: tuple[str, str],
    pools: Mapping[str, tuple[UtteranceEntry, ...]],
    stats_model: StatsModel | None,
    config: SimulationConfig,
    seed: int,
    dialogue_id: str | None = None,
) -> DialoguePlan:
    """Plan one two-speaker dialogue.

    The first event starts at zero with no gap. Later gaps are the frozen
    per-speaker base pause plus a residual draw; in the duration-conditioned
    mode the residual is conditioned on the duration of the utterance being
    placed (chosen chronologically before its gap is sampled). Naive mode
    uses the configured fixed gap instead. Starts are clamped so an
    utterance never begins before its predecessor.
    """
    if config.mode is SimMode.NO_CONCAT:
        raise ValidationError("use plan_no_concat for the no-concatenation mode")
    if stats_model is None:
        raise ValidationError("dialogue planning requires a stats model")
    expected = _MODEL_KIND_FOR_MODE.get(config.mode)
    if expected is not None and stats_model.mode is not expected:
        raise ValidationError(
            f"stats model mode {stats_model.mode.value!r} does not match "
            f"simulation mode {config.mode.value!r}"
        )
    states = stats_model.transition.states
    if len(states) != 2 or len(pair) != 2:
        raise ValidationError("dialogue planning expects a 2-state model and a pair")
    if dialogue_id is None:
        dialogue_id = f"{pair[0]}--{pair[1]}"

    rng = np.random.default_rng(seed)
    by_state = dict(zip(states, pair))
    pool_sizes = {state: len(pools.get(speaker, ())) for state, speaker in by_state.items()}

    candidates = [state for state in states if pool_sizes[state] > 0]
    if not candidates:
        raise ValidationError(f"both pools empty for pair {pair}")
    initial = candidates[int(rng.integers(0, len(candidates)))]
    roles = grow_turn_sequence(stats_model.transition, pool_sizes, initial, rng)

    cursor = {speaker: 0 for speaker in by_state.values()}
    frozen_mu: dict[tuple[str, TransitionType], float] = {}
    events = []
    prev_role = None
    prev_start = 0.0
    prev_end = 0.0
    clamped = 0
    for n, role in enumerate(roles, start=1):
        speaker = by_state[role]
        utterance = pools[speaker][cursor[speaker]]
        cursor[speaker] += 1
        if n == 1:
            gap, start = 0.0, 0.0
        else:
            if config.mode is SimMode.NAIVE_FIXED_GAP:
                gap = config.fixed_gap
            else:
                transition = (
                    TransitionType.SAME if role == prev_role else TransitionType.DIFF
                )
                mu_key = (speaker, transition)
                if mu_key not in frozen_mu:
                    frozen_mu[mu_key] = stats_model.sample_mean(transition, rng)
                if config.mode is SimMode.CSASC:
                    residual = stats_model.sample_residual(
                        transition, rng, d_star=utterance.duration
                    )
                else:
                    residual = stats_model.sample_residual(transition, rng)
                gap = frozen_mu[mu_key] + residual
            start = _clamped_start(prev_start, prev_end, gap, config.clamp_min_start_delta)
            if start != prev_end + gap:
                clamped += 1
        events.append(
            PlanEvent(
                index=n,
                speaker=speaker,
                utterance_id=utterance.utterance_id,
                gap_before=gap,
                start=start,
                duration=utterance.duration,
            )
        )
        prev_role = role
        prev_start = start
        prev_end = start + utterance.duration
    if clamped:
        log.debug("dialogue %s: %d clamped start(s)", dialogue_id, clamped)
    return DialoguePlan(
        dialogue_id=dialogue_id,
        pair=tuple(pair),
        events=tuple(events),
        seed=seed,
        mode=config.mode,
    )


def plan_no_concat(
    pair: tuple[str, str],
    pools: Mapping[str, tuple[UtteranceEntry, ...]],
    config: SimulationConfig,
) -> list[DialoguePlan]:
    """One single-event plan per utterance, presented independently."""
    plans = []
    for speaker in dict.fromkeys(pair):
        for utterance in pools.get(speaker, ()):
            event = PlanEvent(
                index=1,
                speaker=speaker,
                utterance_id=utterance.utterance_id,
                gap_before=0.0,
                start=0.0,
                duration=utterance.duration,
            )
            plans.append(
                DialoguePlan(
                    dialogue_id=f"single_{speaker}_{utterance.utterance_id}",
                    pair=(speaker, speaker),
                    events=(event,),
                    seed=config.seed,
                    mode=SimMode.NO_CONCAT,
                )
            )
    return plans


def count_clamped_events(plan: DialoguePlan, tolerance: float = 0.0) -> int:
    """Events whose realized start differs from predecessor end + gap."""
    clamped = 0
    for prev, cur in zip(plan.events, plan.events[1:]):
        if abs(cur.start - (prev.end + cur.gap_before)) > tolerance:
            clamped += 1
    return clamped


def summarize_plans(plans: list[DialoguePlan]) -> dict:
    """Corpus-level statistics in the style of a dataset infobox."""
    dialogues = len(plans)
    events = [e for p in plans for e in p.events]
    total_audio = sum(e.duration for e in events)
    return {
        "dialogues": dialogues,
        "utterances": len(events),
        "mean_utterances_per_dialogue": len(events) / dialogues if dialogues else 0.0,
        "mean_utterance_duration": total_audio / len(events) if events else 0.0,
        "mean_dialogue_length": (
            sum(p.length_seconds for p in plans) / dialogues if dialogues else 0.0
        ),
        "total_audio_seconds": total_audio,
        "clamped_events": sum(count_clamped_events(p) for p in plans),
    }


def simulate_corpus(
    pool: UtterancePool,
    stats_model: StatsModel | None,
    config: SimulationConfig,
) -> tuple[list[DialoguePlan], dict]:
    """Simulate a whole corpus: filter the pool, pair speakers, plan dialogues.

    Every pair draws on the speaker's full filtered pool (utterances may
    recur across dialogues, never within one); per-dialogue seeds are
    derived from the corpus seed and the pair so regeneration is exact.
    """
    filtered = filter_pool(pool, config.d_min, config.d_max)
    if config.mode is SimMode.NO_CONCAT:
        plans = []
        for speaker in filtered.speakers:
            plans.extend(
                plan_no_concat((speaker, speaker), {speaker: filtered.group(speaker)}, config)
            )
        return plans, summarize_plans(plans)

    speakers = [s for s in filtered.speakers if filtered.group(s)]
    rng = np.random.default_rng(config.seed)
    pairs = make_pairs(speakers, config.pairs_limit, rng)
    plans = []
    for i, pair in enumerate(pairs):
        plan = plan_dialogue(
            pair=pair,
            pools={s: filtered.group(s) for s in pair},
            stats_model=stats_model,
            config=config,
            seed=derive_seed(config.seed, "dialogue", pair[0], pair[1]),
            dialogue_id=f"d{i:04d}_{pair[0]}_{pair[1]}",
        )
        plans.append(plan)
    return plans, summarize_plans(plans)
