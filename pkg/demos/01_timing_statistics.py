"""Extract conversational timing statistics and fit the pause models.

Builds a small synthetic two-speaker corpus with known timing behavior,
walks through gap extraction, per-speaker means, residuals, and the overlap
ratio, then fits both the unconditional and the duration-conditioned model
and writes plot-ready density curves to demos/output/01/.
"""

import pathlib

import numpy as np

from convsim import (
    ConversationAnnotation,
    FitParams,
    ModelKind,
    SegmentAnnotation,
    TransitionType,
    extract_gaps,
    fit_stats_model,
    overlap_ratio,
    residuals,
    speaker_means,
)
from convsim.stats import extract_corpus_gaps

OUT = pathlib.Path(__file__).parent / "output" / "01"
OUT.mkdir(parents=True, exist_ok=True)

# ---------------------------------------------------------------------------
# A synthetic corpus: each speaker keeps a personal response latency, and
# every gap is that baseline plus zero-mean noise. Negative gaps = overlap.

rng = np.random.default_rng(0)
conversations = []
for c in range(25):
    speakers = (f"spk{2 * c}", f"spk{2 * c + 1}")
    baseline = {
        s: {"same": rng.normal(0.35, 0.1), "diff": rng.normal(0.25, 0.1)}
        for s in speakers
    }
    current = 0
    t, segments = 0.0, []
    duration = rng.uniform(2, 6)
    segments.append(SegmentAnnotation(f"conv{c}", speakers[0], 0.0, duration))
    end = duration
    for _ in range(60):
        change = rng.random() < 0.6
        current = 1 - current if change else current
        speaker = speakers[current]
        gap = baseline[speaker]["diff" if change else "same"] + rng.normal(0, 0.3)
        start = max(end + gap, 0.0)
        duration = rng.uniform(2, 6)
        segments.append(SegmentAnnotation(f"conv{c}", speaker, start, start + duration))
        end = start + duration
    conversations.append(ConversationAnnotation(f"conv{c}", tuple(segments)))

# ---------------------------------------------------------------------------
# Step 1: raw gap observations. delta < 0 means the next utterance started
# before the previous one ended.

gaps = extract_corpus_gaps(conversations)
print(f"extracted {len(gaps)} gaps from {len(conversations)} conversations")
print(f"overlap ratio: {overlap_ratio(gaps):.3f}")

first = extract_gaps(conversations[0])[:3]
for g in first:
    print(f"  delta={g.delta:+.3f}s  {g.transition.value:4s}  -> {g.incoming_speaker}")

# Step 2: per-speaker means and the residuals around them.
summaries = speaker_means(gaps)
qualified = [s for s in summaries if s.mean_same is not None or s.mean_diff is not None]
print(f"{len(qualified)} of {len(summaries)} speakers have enough observations")

residual_samples = residuals(gaps, summaries)
same = [r.residual for r in residual_samples if r.transition is TransitionType.SAME]
print(f"residuals: {len(residual_samples)} total, same-speaker std={np.std(same):.3f}")

# ---------------------------------------------------------------------------
# Step 3: fit both model flavors. The unconditional model uses a fixed
# residual bandwidth; the conditioned one ties residuals to the duration of
# the upcoming utterance through a Nadaraya-Watson conditional KDE.

unconditional = fit_stats_model(conversations, ModelKind.SASC, FitParams(source="demo"))
conditioned = fit_stats_model(conversations, ModelKind.CSASC, FitParams(source="demo"))

print("\ntransition matrix (estimated from the corpus):")
for state, row in zip(unconditional.transition.states, unconditional.transition.probs):
    print(f"  {state} -> {np.round(row, 3).tolist()}")

(OUT / "model_sasc.json").write_text(unconditional.to_json())
(OUT / "model_csasc.json").write_text(conditioned.to_json())

# Density curves for plotting: x,density rows per component.
xs = np.linspace(-1.0, 1.5, 400)
for name, kde in (
    ("mean_same", unconditional.mean_same),
    ("mean_diff", unconditional.mean_diff),
    ("residual_same", unconditional.residual_same),
    ("residual_diff", unconditional.residual_diff),
):
    rows = "\n".join(f"{x},{y}" for x, y in zip(xs, kde.density(xs)))
    (OUT / f"{name}.csv").write_text("x,density\n" + rows + "\n")

# The conditioned residual density shifts with the upcoming duration.
for d_star in (2.0, 8.0):
    density = conditioned.residual_same.density(xs, d_star)
    rows = "\n".join(f"{x},{y}" for x, y in zip(xs, density))
    (OUT / f"residual_same_d{d_star:g}.csv").write_text("x,density\n" + rows + "\n")

print(f"\nwrote models and density curves to {OUT}")
