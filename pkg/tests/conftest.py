"""Shared synthetic-data builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from convsim.annotations import (
    ConversationAnnotation,
    SegmentAnnotation,
    UtteranceEntry,
    UtterancePool,
)
from convsim.density import FitParams, ModelKind, fit_stats_model


def make_conversation(conversation_id, rows):
    """rows: (speaker, start, end) or (speaker, start, end, text)."""
    segments = tuple(
        SegmentAnnotation(conversation_id, *row[:3], row[3] if len(row) > 3 else None)
        for row in rows
    )
    return ConversationAnnotation(conversation_id, segments)


def synthetic_corpus(
    n_conversations=20,
    segments_per_conversation=60,
    seed=1234,
    mu_same=0.35,
    mu_diff=0.25,
    mu_spread=0.08,
    residual_sigma=0.3,
    p_change=0.6,
    duration_slope=0.0,
):
    """Conversations with per-speaker pause baselines plus Gaussian residuals.

    Speakers are distinct across conversations so the fitted mean-pause KDEs
    see many per-speaker means. With a nonzero duration_slope the gap before
    an utterance grows with that utterance's duration (centered at 4 s).
    """
    rng = np.random.default_rng(seed)
    conversations = []
    for c in range(n_conversations):
        speakers = (f"spk{2 * c:03d}", f"spk{2 * c + 1:03d}")
        base = {
            s: {
                "same": mu_same + mu_spread * rng.standard_normal(),
                "diff": mu_diff + mu_spread * rng.standard_normal(),
            }
            for s in speakers
        }
        rows = []
        current = int(rng.integers(0, 2))
        t = 0.0
        duration = float(rng.uniform(2.0, 6.0))
        rows.append((speakers[current], t, t + duration))
        end = t + duration
        for _ in range(segments_per_conversation - 1):
            change = rng.random() < p_change
            if change:
                current = 1 - current
            speaker = speakers[current]
            mu = base[speaker]["diff" if change else "same"]
            duration = float(rng.uniform(2.0, 6.0))
            delta = (
                mu
                + duration_slope * (duration - 4.0)
                + residual_sigma * rng.standard_normal()
            )
            start = max(end + delta, 0.0)
            rows.append((speaker, start, start + duration))
            end = start + duration
        conversations.append(make_conversation(f"conv{c:03d}", rows))
    return conversations


def synthetic_pool(n_speakers=4, utterances_per_speaker=20, seed=7,
                   d_lo=2.0, d_hi=9.5, prefix="gen"):
    rng = np.random.default_rng(seed)
    groups = {}
    for s in range(n_speakers):
        speaker = f"{prefix}{s:03d}"
        entries = tuple(
            UtteranceEntry(
                speaker=speaker,
                utterance_id=f"{speaker}_u{i:03d}",
                audio_path=f"{speaker}/u{i:03d}.wav",
                duration=float(rng.uniform(d_lo, d_hi)),
                chrono_index=i,
                text=f"text {speaker} {i}",
            )
            for i in range(utterances_per_speaker)
        )
        groups[speaker] = entries
    return UtterancePool(groups)


def tone(duration, sample_rate=16000, freq=440.0, amplitude=0.4, phase=0.0):
    """A sine-tone AudioBuffer, quantized to exactly representable samples."""
    from convsim.render import AudioBuffer

    n = round(duration * sample_rate)
    t = np.arange(n) / sample_rate
    samples = amplitude * np.sin(2 * np.pi * freq * t + phase)
    quantized = np.round(samples * 32768.0) / 32768.0
    return AudioBuffer(quantized, sample_rate)


@pytest.fixture(scope="session")
def sasc_model():
    return fit_stats_model(synthetic_corpus(), ModelKind.SASC, FitParams(source="test"))


@pytest.fixture(scope="session")
def csasc_model():
    return fit_stats_model(synthetic_corpus(), ModelKind.CSASC, FitParams(source="test"))
