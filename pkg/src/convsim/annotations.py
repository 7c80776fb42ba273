"""Conversation annotations and utterance manifests.

Parsing, validation and serialization of the two input formats the toolkit
consumes (RTTM and conversation JSON) plus the per-speaker utterance
manifest that defines the simulation pool.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError

log = logging.getLogger(__name__)

# Default duration filter for the simulation pool, in seconds (inclusive).
DEFAULT_MIN_DURATION = 2.0
DEFAULT_MAX_DURATION = 10.0


@dataclass(frozen=True)
class SegmentAnnotation:
    """A speaker-labeled time interval inside one conversation."""

    conversation_id: str
    speaker: str
    start: float
    end: float
    text: str | None = None

    def __post_init__(self):
        if self.start < 0:
            raise ValidationError(
                f"segment start must be non-negative, got {self.start} "
                f"({self.conversation_id}/{self.speaker})"
            )
        if self.end <= self.start:
            raise ValidationError(
                f"segment end must exceed start, got [{self.start}, {self.end}] "
                f"({self.conversation_id}/{self.speaker})"
            )

    @property
    def duration(self) -> float:
        return self.end - self.start


def _canonical_order(segment: SegmentAnnotation):
    return (segment.start, segment.speaker, segment.end)


@dataclass(frozen=True)
class ConversationAnnotation:
    """An ordered collection of segments for one conversation.

    Segments are kept in canonical order (start time, then speaker id, then
    end time); construction re-sorts whatever order the caller supplies so
    that equal segment multisets compare equal.
    """

    conversation_id: str
    segments: tuple[SegmentAnnotation, ...]

    def __post_init__(self):
        ordered = tuple(sorted(self.segments, key=_canonical_order))
        object.__setattr__(self, "segments", ordered)

    @property
    def speakers(self) -> tuple[str, ...]:
        return tuple(sorted({s.speaker for s in self.segments}))


@dataclass(frozen=True)
class UtteranceEntry:
    """One single-speaker utterance available for simulation."""

    speaker: str
    utterance_id: str
    audio_path: str
    duration: float
    chrono_index: int
    text: str

    def __post_init__(self):
        if self.duration <= 0:
            raise ValidationError(
                f"utterance duration must be positive, got {self.duration} "
                f"({self.utterance_id})"
            )
        if self.chrono_index < 0:
            raise ValidationError(
                f"chrono_index must be non-negative, got {self.chrono_index} "
                f"({self.utterance_id})"
            )


@dataclass(frozen=True)
class UtterancePool:
    """Per-speaker utterance lists, each ordered by chronological index."""

    groups: dict[str, tuple[UtteranceEntry, ...]] = field(default_factory=dict)

    @property
    def speakers(self) -> tuple[str, ...]:
        return tuple(sorted(self.groups))

    @property
    def size(self) -> int:
        return sum(len(g) for g in self.groups.values())

    def group(self, speaker: str) -> tuple[UtteranceEntry, ...]:
        return self.groups.get(speaker, ())


# ---------------------------------------------------------------------------
# RTTM

_RTTM_COMMENT = ";;"


def parse_rttm(text: str) -> list[ConversationAnnotation]:
    """Parse RTTM text into conversation annotations.

    Only SPEAKER records are meaningful here; every non-comment, non-blank
    line must be one. Lines are grouped by the file-id field and segments
    are returned in canonical order, conversations sorted by id.
    """
    segments: dict[str, list[SegmentAnnotation]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(_RTTM_COMMENT):
            continue
        fields = line.split()
        if len(fields) < 9:
            raise ParseError(
                f"RTTM line has {len(fields)} fields, expected at least 9",
                line=lineno,
            )
        if fields[0] != "SPEAKER":
            raise ParseError(f"unexpected RTTM record type {fields[0]!r}", line=lineno)
        conversation_id = fields[1]
        try:
            onset = float(fields[3])
            duration = float(fields[4])
        except ValueError as exc:
            raise ParseError(f"unparseable onset/duration: {exc}", line=lineno) from None
        if duration <= 0:
            raise ValidationError(
                f"RTTM line {lineno}: duration must be positive, got {duration}"
            )
        speaker = fields[7]
        segments.setdefault(conversation_id, []).append(
            SegmentAnnotation(conversation_id, speaker, onset, onset + duration)
        )
    return [
        ConversationAnnotation(cid, tuple(segs))
        for cid, segs in sorted(segments.items())
    ]


def write_rttm(annotation: ConversationAnnotation) -> str:
    """Serialize one conversation as RTTM, onset/duration at 1 ms precision."""
    lines = []
    for seg in annotation.segments:
        lines.append(
            f"SPEAKER {annotation.conversation_id} 1 {seg.start:.3f} "
            f"{seg.duration:.3f} <NA> <NA> {seg.speaker} <NA> <NA>"
        )
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Conversation JSON

def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ParseError(f"missing required field {key!r}", path=path)
    return obj[key]


def _number(obj: dict, key: str, path: str, kind=float):
    value = _require(obj, key, path)
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ParseError(
            f"field {key!r} must be a {kind.__name__}, got {value!r}", path=path
        ) from None


def parse_segment_json(text: str) -> list[ConversationAnnotation]:
    """Parse the conversation JSON schema.

    Expected document: a list of ``{"conversation_id", "segments": [...]}``
    objects where each segment has speaker/start/end and optional text.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, list):
        raise ParseError("document must be a JSON array", path="$")
    annotations = []
    for i, conv in enumerate(doc):
        path = f"$[{i}]"
        if not isinstance(conv, dict):
            raise ParseError("conversation must be an object", path=path)
        cid = _require(conv, "conversation_id", path)
        raw_segments = _require(conv, "segments", path)
        if not isinstance(raw_segments, list):
            raise ParseError("segments must be an array", path=f"{path}.segments")
        segments = []
        for j, seg in enumerate(raw_segments):
            seg_path = f"{path}.segments[{j}]"
            if not isinstance(seg, dict):
                raise ParseError("segment must be an object", path=seg_path)
            speaker = _require(seg, "speaker", seg_path)
            start = _number(seg, "start", seg_path)
            end = _number(seg, "end", seg_path)
            segments.append(
                SegmentAnnotation(cid, speaker, start, end, seg.get("text"))
            )
        annotations.append(ConversationAnnotation(cid, tuple(segments)))
    return sorted(annotations, key=lambda a: a.conversation_id)


def write_segment_json(annotations: list[ConversationAnnotation]) -> str:
    """Serialize conversations to the JSON schema accepted by parse_segment_json."""
    doc = [
        {
            "conversation_id": ann.conversation_id,
            "segments": [
                {"speaker": s.speaker, "start": s.start, "end": s.end, "text": s.text}
                for s in ann.segments
            ],
        }
        for ann in annotations
    ]
    return json.dumps(doc, indent=2)


# ---------------------------------------------------------------------------
# Utterance manifests

def load_manifest(text: str) -> UtterancePool:
    """Load the utterance manifest JSON into a pool grouped by speaker.

    Each speaker's entries are sorted by chrono_index; a duplicated index
    within one speaker is rejected because it breaks chronological ordering.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, list):
        raise ParseError("manifest must be a JSON array", path="$")
    groups: dict[str, list[UtteranceEntry]] = {}
    for i, raw in enumerate(doc):
        path = f"$[{i}]"
        if not isinstance(raw, dict):
            raise ParseError("manifest entry must be an object", path=path)
        entry = UtteranceEntry(
            speaker=_require(raw, "speaker", path),
            utterance_id=_require(raw, "utterance_id", path),
            audio_path=_require(raw, "audio_path", path),
            duration=_number(raw, "duration", path),
            chrono_index=_number(raw, "chrono_index", path, kind=int),
            text=_require(raw, "text", path),
        )
        groups.setdefault(entry.speaker, []).append(entry)
    for speaker, entries in groups.items():
        entries.sort(key=lambda e: e.chrono_index)
        for prev, cur in zip(entries, entries[1:]):
            if cur.chrono_index == prev.chrono_index:
                raise ValidationError(
                    f"duplicate chrono_index {cur.chrono_index} for speaker {speaker}"
                )
    return UtterancePool({s: tuple(v) for s, v in sorted(groups.items())})


def write_manifest(pool: UtterancePool) -> str:
    """Serialize a pool back to manifest JSON (speakers in sorted order)."""
    doc = [
        {
            "speaker": e.speaker,
            "utterance_id": e.utterance_id,
            "audio_path": e.audio_path,
            "duration": e.duration,
            "chrono_index": e.chrono_index,
            "text": e.text,
        }
        for speaker in pool.speakers
        for e in pool.group(speaker)
    ]
    return json.dumps(doc, indent=2)


def filter_pool(
    pool: UtterancePool,
    d_min: float = DEFAULT_MIN_DURATION,
    d_max: float = DEFAULT_MAX_DURATION,
) -> UtterancePool:
    """Keep only utterances with d_min <= duration <= d_max (inclusive).

    Relative order inside each group is preserved; groups emptied by the
    filter stay present (and are logged) so callers can report them.
    """
    if not 0 < d_min < d_max:
        raise ValidationError(f"need 0 < d_min < d_max, got [{d_min}, {d_max}]")
    groups = {}
    for speaker, entries in pool.groups.items():
        kept = tuple(e for e in entries if d_min <= e.duration <= d_max)
        if entries and not kept:
            log.warning(
                "duration filter [%g, %g] removed all %d utterances of speaker %s",
                d_min, d_max, len(entries), speaker,
            )
        groups[speaker] = kept
    return UtterancePool(groups)
