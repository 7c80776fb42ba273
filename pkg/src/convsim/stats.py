"""Empirical timing statistics from annotated conversations.

Turns conversation annotations into gap observations (signed inter-utterance
gaps with transition type and following-utterance duration), per-speaker mean
pauses, residuals around those means, and role-mapped turn sequences.
"""

from __future__ import annotations

import io
import csv
import logging
from dataclasses import dataclass
from enum import Enum

from .annotations import ConversationAnnotation
from .errors import ExtractionError, ValidationError

log = logging.getLogger(__name__)

# Minimum observations per (speaker, transition) before the speaker's mean
# counts as "speaker-specific behavior" rather than noise.
DEFAULT_MIN_OBS = 3


class TransitionType(Enum):
    SAME = "same"
    DIFF = "diff"


@dataclass(frozen=True)
class GapObservation:
    """One inter-utterance gap: negative delta = overlap, >= 0 = pause."""

    conversation_id: str
    delta: float
    transition: TransitionType
    incoming_speaker: str
    following_duration: float


@dataclass(frozen=True)
class SpeakerGapSummary:
    """Per-speaker mean gap for each transition type.

    A mean is present only when backed by at least min_obs observations.
    """

    speaker: str
    mean_same: float | None
    mean_diff: float | None
    count_same: int
    count_diff: int


@dataclass(frozen=True)
class ResidualSample:
    """Gap minus the incoming speaker's mean, with the following duration."""

    residual: float
    duration: float
    transition: TransitionType


def extract_gaps(annotation: ConversationAnnotation) -> list[GapObservation]:
    """Compute gap observations between consecutive segments.

    Segments are taken in canonical start order; each pair (previous, next)
    yields delta = next.start - previous.end, attributed to the incoming
    speaker. Exactly len(segments) - 1 observations are returned.
    """
    segments = annotation.segments
    if len(segments) < 2:
        raise ExtractionError(
            f"conversation {annotation.conversation_id} has {len(segments)} "
            "segment(s); need at least 2"
        )
    if len(annotation.speakers) < 2:
        raise ExtractionError(
            f"conversation {annotation.conversation_id} has a single speaker; "
            "need at least 2 for gap extraction"
        )
    observations = []
    for prev, cur in zip(segments, segments[1:]):
        transition = (
            TransitionType.SAME if cur.speaker == prev.speaker else TransitionType.DIFF
        )
        observations.append(
            GapObservation(
                conversation_id=annotation.conversation_id,
                delta=cur.start - prev.end,
                transition=transition,
                incoming_speaker=cur.speaker,
                following_duration=cur.end - cur.start,
            )
        )
    return observations


def extract_corpus_gaps(
    annotations: list[ConversationAnnotation],
) -> list[GapObservation]:
    """Extract gaps from every conversation, merged in conversation-id order."""
    merged = []
    for annotation in sorted(annotations, key=lambda a: a.conversation_id):
        merged.extend(extract_gaps(annotation))
    return merged


def speaker_means(
    observations: list[GapObservation], min_obs: int = DEFAULT_MIN_OBS
) -> list[SpeakerGapSummary]:
    """Per-speaker mean gap for each transition type, sorted by speaker.

    Speakers whose counts fall under min_obs for both transitions are still
    listed (with both means absent) so callers can report them.
    """
    sums: dict[str, dict[TransitionType, list[float]]] = {}
    for obs in observations:
        per_speaker = sums.setdefault(
            obs.incoming_speaker, {TransitionType.SAME: [], TransitionType.DIFF: []}
        )
        per_speaker[obs.transition].append(obs.delta)

    summaries = []
    for speaker in sorted(sums):
        same = sums[speaker][TransitionType.SAME]
        diff = sums[speaker][TransitionType.DIFF]
        summaries.append(
            SpeakerGapSummary(
                speaker=speaker,
                mean_same=sum(same) / len(same) if len(same) >= min_obs else None,
                mean_diff=sum(diff) / len(diff) if len(diff) >= min_obs else None,
                count_same=len(same),
                count_diff=len(diff),
            )
        )
    dropped = [s.speaker for s in summaries if s.mean_same is None and s.mean_diff is None]
    if dropped:
        log.info(
            "%d speaker(s) below min_obs=%d for both transition types: %s",
            len(dropped), min_obs, ", ".join(dropped),
        )
    return summaries


def residuals(
    observations: list[GapObservation], summaries: list[SpeakerGapSummary]
) -> list[ResidualSample]:
    """Center each gap on its speaker's mean for the matching transition.

    Observations whose incoming speaker has no qualifying mean for the
    transition type are skipped.
    """
    means: dict[tuple[str, TransitionType], float] = {}
    for summary in summaries:
        if summary.mean_same is not None:
            means[(summary.speaker, TransitionType.SAME)] = summary.mean_same
        if summary.mean_diff is not None:
            means[(summary.speaker, TransitionType.DIFF)] = summary.mean_diff

    samples = []
    for obs in observations:
        mean = means.get((obs.incoming_speaker, obs.transition))
        if mean is None:
            continue
        samples.append(
            ResidualSample(
                residual=obs.delta - mean,
                duration=obs.following_duration,
                transition=obs.transition,
            )
        )
    return samples


def turn_sequences(annotation: ConversationAnnotation) -> list[str]:
    """Map a two-speaker conversation to an A/B role sequence.

    The first speaker to appear becomes role A. Conversations with more than
    two speakers are rejected; the two-state transition model cannot
    represent them.
    """
    speakers = annotation.speakers
    if len(speakers) > 2:
        raise ExtractionError(
            f"conversation {annotation.conversation_id} has {len(speakers)} "
            "speakers; transition estimation supports exactly 2"
        )
    roles: dict[str, str] = {}
    sequence = []
    for segment in annotation.segments:
        if segment.speaker not in roles:
            roles[segment.speaker] = "A" if not roles else "B"
        sequence.append(roles[segment.speaker])
    return sequence


def overlap_ratio(observations: list[GapObservation]) -> float:
    """Fraction of gaps that are negative (overlapping speech)."""
    if not observations:
        raise ValidationError("overlap_ratio needs at least one observation")
    negative = sum(1 for obs in observations if obs.delta < 0)
    return negative / len(observations)


def observations_to_csv(observations: list[GapObservation]) -> str:
    """Dump observations as CSV for external plotting."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["conversation_id", "delta", "transition", "incoming_speaker", "following_duration"]
    )
    for obs in observations:
        writer.writerow(
            [
                obs.conversation_id,
                repr(obs.delta),
                obs.transition.value,
                obs.incoming_speaker,
                repr(obs.following_duration),
            ]
        )
    return buffer.getvalue()
