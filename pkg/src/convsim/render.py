"""Audio rendering: placement, mixing, RIR application, and chunking.

Turns dialogue plans into mono PCM audio plus ground-truth artifacts (RTTM,
segment JSON, 30-second training chunks with speaker-change tokens).
"""

from __future__ import annotations

import io
import logging
import math
import wave
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy.signal import fftconvolve

from .annotations import ConversationAnnotation, write_rttm, write_segment_json
from .errors import UnsupportedFormatError, ValidationError
from .simulate import DialoguePlan, plan_to_annotation

log = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_CHUNK_WINDOW = 30.0
DEFAULT_RIR_FRACTION = 0.4

_PCM_SCALE = 32768.0
SC_TOKEN = "<sc>"


@dataclass(eq=False)
class AudioBuffer:
    """Mono audio samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValidationError(f"sample rate must be positive, got {self.sample_rate}")
        self.samples = np.asarray(self.samples, dtype=np.float64)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav(data: bytes) -> AudioBuffer:
    """Decode 16-bit PCM mono WAV bytes; anything else is rejected."""
    try:
        with wave.open(io.BytesIO(data)) as reader:
            if reader.getcomptype() != "NONE":
                raise UnsupportedFormatError(
                    f"compression {reader.getcomptype()!r} unsupported; need PCM"
                )
            if reader.getnchannels() != 1:
                raise UnsupportedFormatError(
                    f"{reader.getnchannels()} channels unsupported; need mono"
                )
            if reader.getsampwidth() != 2:
                raise UnsupportedFormatError(
                    f"{8 * reader.getsampwidth()}-bit samples unsupported; need 16-bit"
                )
            frames = reader.readframes(reader.getnframes())
            rate = reader.getframerate()
    except wave.Error as exc:
        raise UnsupportedFormatError(f"not a readable WAV stream: {exc}") from None
    samples = np.frombuffer(frames, dtype="<i2").astype(np.float64) / _PCM_SCALE
    return AudioBuffer(samples, rate)


def write_wav(buffer: AudioBuffer) -> bytes:
    """Encode as 16-bit PCM mono WAV with saturating conversion."""
    quantized = np.clip(
        np.rint(buffer.samples * _PCM_SCALE), -32768, 32767
    ).astype("<i2")
    out = io.BytesIO()
    with wave.open(out, "wb") as writer:
        writer.setnchannels(1)
        writer.setsampwidth(2)
        writer.setframerate(buffer.sample_rate)
        writer.writeframes(quantized.tobytes())
    return out.getvalue()


def convolve(signal: AudioBuffer, rir: AudioBuffer) -> AudioBuffer:
    """Full linear convolution, rescaled back to the dry signal's peak.

    Uses transform-based convolution; output length is
    len(signal) + len(rir) - 1.
    """
    if signal.sample_rate != rir.sample_rate:
        raise ValidationError(
            f"sample rates differ: {signal.sample_rate} vs {rir.sample_rate}"
        )
    wet = fftconvolve(signal.samples, rir.samples)
    dry_peak = float(np.max(np.abs(signal.samples))) if signal.samples.size else 0.0
    wet_peak = float(np.max(np.abs(wet))) if wet.size else 0.0
    if dry_peak > 0.0 and wet_peak > 0.0:
        wet = wet * (dry_peak / wet_peak)
    elif dry_peak == 0.0:
        wet = np.zeros_like(wet)
    return AudioBuffer(wet, signal.sample_rate)


@dataclass(eq=False)
class RoomSet:
    """Impulse responses grouped by room; one response per speaker position."""

    rooms: dict[str, tuple[AudioBuffer, ...]]

    @classmethod
    def from_dir(cls, root: str | Path) -> "RoomSet":
        """Load the rirs/{room_id}/{position}.wav directory convention."""
        rooms = {}
        root = Path(root)
        for room_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            responses = tuple(
                read_wav(path.read_bytes()) for path in sorted(room_dir.glob("*.wav"))
            )
            if responses:
                rooms[room_dir.name] = responses
        return cls(rooms)


@dataclass(eq=False)
class RirAssignment:
    room_id: str
    by_speaker: dict[str, AudioBuffer]


def assign_rirs(
    plan: DialoguePlan,
    roomset: RoomSet,
    rng: np.random.Generator,
    rir_fraction: float = DEFAULT_RIR_FRACTION,
) -> RirAssignment | None:
    """Decide (from the dialogue's own stream) whether and how to reverberate.

    With probability rir_fraction one room is drawn and each speaker in the
    pair gets a distinct impulse response from it; otherwise returns None.
    """
    if not roomset.rooms:
        return None
    if rng.random() >= rir_fraction:
        return None
    room_ids = sorted(roomset.rooms)
    room_id = room_ids[int(rng.integers(0, len(room_ids)))]
    responses = roomset.rooms[room_id]
    speakers = list(dict.fromkeys(plan.pair))
    if len(responses) < max(len(speakers), 2):
        raise ValidationError(
            f"room {room_id!r} has {len(responses)} impulse response(s); "
            f"need at least {max(len(speakers), 2)}"
        )
    positions = rng.choice(len(responses), size=len(speakers), replace=False)
    return RirAssignment(
        room_id=room_id,
        by_speaker={s: responses[int(p)] for s, p in zip(speakers, positions)},
    )


@dataclass(eq=False)
class RenderedDialogue:
    audio: AudioBuffer
    annotation: ConversationAnnotation
    transcript_events: tuple[str, ...]
    rir_applied: bool
    room_id: str | None = None
    rescale_factor: float | None = None


def render_plan(
    plan: DialoguePlan,
    audio_lookup: Callable[[str], AudioBuffer] | Mapping[str, AudioBuffer],
    texts: Mapping[str, str] | None = None,
    rir_assignment: RirAssignment | None = None,
) -> RenderedDialogue:
    """Mix a plan into one mono buffer with ground-truth annotation.

    Each utterance is placed at round(start * sample_rate) and overlapping
    regions are summed. If the mix peaks above 1 it is rescaled globally to
    0.99 (waveform shape preserved). Convolution tails beyond an utterance's
    annotated end stay in the mix but never extend the dialogue.
    """
    if not plan.events:
        raise ValidationError(f"plan {plan.dialogue_id} has no events")
    lookup = audio_lookup.__getitem__ if hasattr(audio_lookup, "__getitem__") else audio_lookup

    buffers = []
    sample_rate = None
    for event in plan.events:
        try:
            buffer = lookup(event.utterance_id)
        except KeyError:
            buffer = None
        if buffer is None:
            raise ValidationError(
                f"no audio for utterance {event.utterance_id!r} "
                f"(dialogue {plan.dialogue_id})"
            )
        if sample_rate is None:
            sample_rate = buffer.sample_rate
        elif buffer.sample_rate != sample_rate:
            raise ValidationError(
                f"utterance {event.utterance_id!r} has sample rate "
                f"{buffer.sample_rate}, expected {sample_rate}"
            )
        if rir_assignment is not None:
            buffer = convolve(buffer, rir_assignment.by_speaker[event.speaker])
        buffers.append(buffer)

    total = math.ceil(max(e.end for e in plan.events) * sample_rate)
    mix = np.zeros(total, dtype=np.float64)
    for event, buffer in zip(plan.events, buffers):
        offset = round(event.start * sample_rate)
        span = min(buffer.samples.size, total - offset)
        if span > 0:
            mix[offset : offset + span] += buffer.samples[:span]

    rescale = None
    peak = float(np.max(np.abs(mix))) if mix.size else 0.0
    if peak > 1.0:
        rescale = 0.99 / peak
        mix *= rescale
        log.info(
            "dialogue %s peaked at %.3f; rescaled by %.4f", plan.dialogue_id, peak, rescale
        )

    return RenderedDialogue(
        audio=AudioBuffer(mix, sample_rate),
        annotation=plan_to_annotation(plan, texts),
        transcript_events=tuple(
            (texts or {}).get(e.utterance_id, "") for e in plan.events
        ),
        rir_applied=rir_assignment is not None,
        room_id=rir_assignment.room_id if rir_assignment else None,
        rescale_factor=rescale,
    )


@dataclass(eq=False)
class TrainingChunk:
    """A fixed-window slice of the mix with its speaker-change transcript."""

    chunk_index: int
    audio: AudioBuffer
    text: str
    sc_count: int
    boundary_crossings: int


def chunk_dialogue(
    rendered: RenderedDialogue, window: float = DEFAULT_CHUNK_WINDOW
) -> list[TrainingChunk]:
    """Cut the dialogue at fixed window boundaries.

    Audio is cut exactly at k * window; each utterance belongs to the chunk
    containing its start time and keeps its full text there (utterances
    spanning a boundary are counted per chunk). Consecutive texts from
    different speakers are joined with the speaker-change token.
    """
    if window <= 0:
        raise ValidationError(f"chunk window must be positive, got {window}")
    sr = rendered.audio.sample_rate
    samples = rendered.audio.samples
    window_samples = round(window * sr)
    n_chunks = max(1, math.ceil(samples.size / window_samples))

    assigned: dict[int, list[int]] = {}
    for i, segment in enumerate(rendered.annotation.segments):
        k = min(int(segment.start / window), n_chunks - 1)
        assigned.setdefault(k, []).append(i)

    chunks = []
    for k in range(n_chunks):
        indices = assigned.get(k, [])
        parts = []
        sc_count = 0
        crossings = 0
        prev_speaker = None
        for i in indices:
            segment = rendered.annotation.segments[i]
            if prev_speaker is not None and segment.speaker != prev_speaker:
                parts.append(SC_TOKEN)
                sc_count += 1
            parts.append(rendered.transcript_events[i])
            prev_speaker = segment.speaker
            if segment.end > (k + 1) * window:
                crossings += 1
        chunks.append(
            TrainingChunk(
                chunk_index=k,
                audio=AudioBuffer(
                    samples[k * window_samples : (k + 1) * window_samples], sr
                ),
                text=" ".join(parts),
                sc_count=sc_count,
                boundary_crossings=crossings,
            )
        )
    return chunks


@dataclass(eq=False)
class GroundTruth:
    rttm: str
    segments_json: str
    transcripts_tsv: str


def emit_ground_truth(
    rendered: RenderedDialogue,
    chunks: list[TrainingChunk] | None = None,
    window: float = DEFAULT_CHUNK_WINDOW,
) -> GroundTruth:
    """Serialize RTTM, segment JSON, and per-chunk transcript lines."""
    if chunks is None:
        chunks = chunk_dialogue(rendered, window)
    dialogue_id = rendered.annotation.conversation_id
    lines = [f"{dialogue_id}\t{c.chunk_index}\t{c.text}" for c in chunks]
    return GroundTruth(
        rttm=write_rttm(rendered.annotation),
        segments_json=write_segment_json([rendered.annotation]),
        transcripts_tsv="\n".join(lines) + ("\n" if lines else ""),
    )
