"""Score conversational transcripts with permutation-aware metrics.

Shows why plain WER punishes legitimate orderings of overlapping speech,
how the concatenated minimum-permutation variants fix that, and how the
paired bootstrap decides whether two systems differ significantly.
"""

from convsim import (
    ScoredPair,
    bootstrap_compare,
    cer,
    cp_error,
    evaluate_pairs,
    sc_accuracy,
    wer,
)

# ---------------------------------------------------------------------------
# Overlapping speech has no single correct ordering. When A's "Okay." and
# B's "Great." overlap, both segment orders are legitimate transcripts.

swap = [ScoredPair("chunk-1", "okay <sc> great", "great <sc> okay")]
print("reference :  okay <sc> great")
print("hypothesis:  great <sc> okay")
print(f"  WER   = {wer(swap):6.2f}%   (single reference order enforced)")
print(f"  cpWER = {cp_error(swap, 'word'):6.2f}%   (best over segment orderings)")

# ---------------------------------------------------------------------------
# A small evaluation set with assorted error types.

pairs = [
    ScoredPair("c1", "okay <sc> great", "great <sc> okay"),
    ScoredPair("c2", "so what happened next", "so what happened next"),
    ScoredPair("c3", "i think <sc> you are right", "i think <sc> you were right"),
    ScoredPair("c4", "hello there <sc> hi", "hello there hi"),
]
report = evaluate_pairs(pairs)
print("\nfull report over 4 chunks:")
print(f"  WER={report.wer:.2f}%  CER={report.cer:.2f}%  "
      f"cpWER={report.cpwer:.2f}%  cpCER={report.cpcer:.2f}%  "
      f"scAcc={report.sc_acc:.1f}%")
assert report.cpwer <= report.wer  # identity ordering is always a candidate

print(f"\nspeaker-change accuracy alone: {sc_accuracy(pairs):.1f}%")
print(f"character error rate alone:    {cer(pairs):.2f}%")

# ---------------------------------------------------------------------------
# Paired bootstrap: is system A significantly better than system B?

reference = [ScoredPair(f"u{i}", f"sentence number {i} spoken here",
                        f"sentence number {i} spoken here") for i in range(40)]
system_a = reference  # perfect
system_b = [
    ScoredPair(p.id, p.reference, p.reference.replace("spoken", "broken"))
    for p in reference
]

result = bootstrap_compare(system_a, system_b, metric="wer", resamples=1000, seed=0)
print("\nbootstrap comparison (A perfect vs B with one substitution each):")
print(f"  WER difference A-B = {result.diff:+.2f}%")
print(f"  95% CI = [{result.ci_low:+.2f}, {result.ci_high:+.2f}]")
print(f"  significant at alpha={result.alpha}: {result.significant}")

tie = bootstrap_compare(system_a, system_a, metric="wer", resamples=1000, seed=0)
print(f"  identical systems significant: {tie.significant}")
