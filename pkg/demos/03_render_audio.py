"""Render a dialogue plan to audio with ground-truth annotations.

Synthesizes tone "utterances" for two speakers, mixes a short plan with an
overlap, applies a room impulse response pair, cuts 30-second training
chunks with speaker-change tokens, and writes everything to
demos/output/03/.
"""

import pathlib

import numpy as np

from convsim import (
    AudioBuffer,
    RirAssignment,
    assign_rirs,
    chunk_dialogue,
    convolve,
    emit_ground_truth,
    render_plan,
    write_wav,
)
from convsim.render import RoomSet
from convsim.simulate import DialoguePlan, PlanEvent, SimMode

OUT = pathlib.Path(__file__).parent / "output" / "03"
OUT.mkdir(parents=True, exist_ok=True)

SR = 16000


def tone(duration, freq, amplitude=0.35):
    t = np.arange(round(duration * SR)) / SR
    return AudioBuffer(amplitude * np.sin(2 * np.pi * freq * t), SR)


# ---------------------------------------------------------------------------
# A hand-written plan: B answers twice, once slightly overlapping A.

events = [
    PlanEvent(1, "alice", "a1", gap_before=0.0, start=0.0, duration=3.0),
    PlanEvent(2, "bob", "b1", gap_before=0.4, start=3.4, duration=2.5),
    PlanEvent(3, "alice", "a2", gap_before=-0.6, start=5.3, duration=3.0),
    PlanEvent(4, "bob", "b2", gap_before=0.2, start=8.5, duration=2.0),
]
plan = DialoguePlan("demo_dialogue", ("alice", "bob"), tuple(events), seed=7,
                    mode=SimMode.SASC)

audio = {
    "a1": tone(3.0, 220), "a2": tone(3.0, 262),
    "b1": tone(2.5, 392), "b2": tone(2.0, 440),
}
texts = {
    "a1": "hello how are you", "a2": "glad to hear that",
    "b1": "doing well thanks", "b2": "see you soon",
}

dry = render_plan(plan, audio, texts)
print(f"dry mix: {dry.audio.duration:.2f} s, peak {np.max(np.abs(dry.audio.samples)):.3f}")

# The -0.6 s gap really overlapped the signals: energy adds up there.
overlap_region = dry.audio.samples[round(5.3 * SR) : round(5.9 * SR)]
print(f"overlap region rms: {np.sqrt(np.mean(overlap_region ** 2)):.3f}")

# ---------------------------------------------------------------------------
# Reverberate: one room, a distinct impulse response per speaker.

rng = np.random.default_rng(2)


def impulse_response(delay_samples):
    ir = np.zeros(800)
    ir[0] = 1.0
    ir[delay_samples] = 0.5
    ir[delay_samples * 2] = 0.2
    return AudioBuffer(ir, SR)


roomset = RoomSet({"studio": (impulse_response(113), impulse_response(211))})
assignment = assign_rirs(plan, roomset, rng, rir_fraction=1.0)
assert isinstance(assignment, RirAssignment)
wet = render_plan(plan, audio, texts, assignment)
print(f"wet mix uses room {wet.room_id!r}; annotated times unchanged: "
      f"{wet.annotation == dry.annotation}")

# Convolution itself is exact full linear convolution, peak-matched.
echoed = convolve(audio["a1"], roomset.rooms["studio"][0])
print(f"convolution length {echoed.samples.size} = {audio['a1'].samples.size} + 800 - 1")

# ---------------------------------------------------------------------------
# Ground truth and training chunks.

chunks = chunk_dialogue(wet, window=5.0)  # small window so the demo shows cuts
ground = emit_ground_truth(wet, chunks)

(OUT / "audio.wav").write_bytes(write_wav(wet.audio))
(OUT / "ref.rttm").write_text(ground.rttm)
(OUT / "segments.json").write_text(ground.segments_json)
(OUT / "transcripts.tsv").write_text(ground.transcripts_tsv)
chunk_dir = OUT / "chunks"
chunk_dir.mkdir(exist_ok=True)
for chunk in chunks:
    (chunk_dir / f"chunk_{chunk.chunk_index}.wav").write_bytes(write_wav(chunk.audio))

print("\nchunk transcripts (speaker changes marked with <sc>):")
for line in ground.transcripts_tsv.strip().splitlines():
    print(f"  {line}")
print(f"\nwrote audio, RTTM, segments and {len(chunks)} chunks to {OUT}")
