"""Transcript scoring with permutation-aware error metrics.

Plain WER/CER, their concatenated minimum-permutation variants computed
over speaker-change-delimited segments, speaker-change-count accuracy, and
paired-bootstrap significance testing.
"""

from __future__ import annotations

import itertools
import json
import logging
import string
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError

log = logging.getLogger(__name__)

SC_TOKEN = "<sc>"

# Hypothesis transcripts with more segments than this are scored with the
# greedy insertion ordering and flagged approximate.
EXHAUSTIVE_SEGMENT_LIMIT = 8

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)

ERROR_METRICS = ("wer", "cer", "cpwer", "cpcer")
ALL_METRICS = ERROR_METRICS + ("sc_acc",)


@dataclass(frozen=True)
class ScoredPair:
    """One reference/hypothesis pair, identified for paired resampling."""

    id: str
    reference: str
    hypothesis: str


def normalize(text: str) -> list[str]:
    """Lowercase, strip punctuation, collapse whitespace.

    Speaker-change tokens survive verbatim; every other token loses its
    punctuation characters (tokens reduced to nothing are dropped).
    """
    tokens = []
    for raw in text.lower().split():
        if raw == SC_TOKEN:
            tokens.append(SC_TOKEN)
            continue
        cleaned = raw.translate(_PUNCT_TABLE)
        if cleaned:
            tokens.append(cleaned)
    return tokens


def _words(tokens: list[str]) -> list[str]:
    return [t for t in tokens if t != SC_TOKEN]


def _chars(tokens: list[str]) -> list[str]:
    return list(" ".join(_words(tokens)))


@dataclass(frozen=True)
class EditCounts:
    substitutions: int
    insertions: int
    deletions: int

    @property
    def total(self) -> int:
        return self.substitutions + self.insertions + self.deletions


def edit_distance(reference: list[str], hypothesis: list[str]) -> EditCounts:
    """Minimal-cost alignment with unit costs.

    Ties are broken deterministically: substitution beats deletion beats
    insertion, so a two-token swap counts as two substitutions rather than
    an insertion/deletion pair.
    """
    n, m = len(reference), len(hypothesis)
    # Row-wise DP over (cost, substitutions, insertions, deletions).
    cost = list(range(m + 1))
    subs = [0] * (m + 1)
    ins = list(range(m + 1))
    dels = [0] * (m + 1)
    for i in range(1, n + 1):
        ref_token = reference[i - 1]
        prev_cost, prev_subs, prev_ins, prev_dels = cost, subs, ins, dels
        cost = [prev_cost[0] + 1]
        subs = [0]
        ins = [0]
        dels = [prev_dels[0] + 1]
        for j in range(1, m + 1):
            hit = ref_token == hypothesis[j - 1]
            # Substitution / match from the diagonal.
            best = prev_cost[j - 1] + (0 if hit else 1)
            s, a, d = prev_subs[j - 1] + (0 if hit else 1), prev_ins[j - 1], prev_dels[j - 1]
            # Deletion: reference token unmatched.
            alt = prev_cost[j] + 1
            if alt < best:
                best, s, a, d = alt, prev_subs[j], prev_ins[j], prev_dels[j] + 1
            # Insertion: hypothesis token unmatched.
            alt = cost[j - 1] + 1
            if alt < best:
                best, s, a, d = alt, subs[j - 1], ins[j - 1] + 1, dels[j - 1]
            cost.append(best)
            subs.append(s)
            ins.append(a)
            dels.append(d)
    return EditCounts(subs[m], ins[m], dels[m])


def _pooled(per_pair: list[tuple[int, int]], what: str) -> float:
    errors = sum(e for e, _ in per_pair)
    length = sum(n for _, n in per_pair)
    if length == 0:
        raise ValidationError(f"total reference length is zero; cannot compute {what}")
    return 100.0 * errors / length


def _plain_counts(pair: ScoredPair, unit: str) -> tuple[int, int]:
    pick = _words if unit == "word" else _chars
    ref = pick(normalize(pair.reference))
    hyp = pick(normalize(pair.hypothesis))
    return edit_distance(ref, hyp).total, len(ref)


def wer(pairs: list[ScoredPair]) -> float:
    """Pooled word error rate (percent), speaker-change tokens excluded."""
    return _pooled([_plain_counts(p, "word") for p in pairs], "WER")


def cer(pairs: list[ScoredPair]) -> float:
    """Pooled character error rate (percent) over space-joined words."""
    return _pooled([_plain_counts(p, "char") for p in pairs], "CER")


def _split_segments(tokens: list[str]) -> list[list[str]]:
    segments: list[list[str]] = [[]]
    for token in tokens:
        if token == SC_TOKEN:
            segments.append([])
        else:
            segments[-1].append(token)
    return segments


def _concat(segments: list[list[str]], unit: str) -> list[str]:
    words = [w for seg in segments for w in seg]
    return words if unit == "word" else list(" ".join(words))


def _cp_counts(pair: ScoredPair, unit: str) -> tuple[int, int, bool]:
    """Minimum error over hypothesis segment orderings; returns
    (errors, reference length, approximate flag)."""
    ref_units = _concat(_split_segments(normalize(pair.reference)), unit)
    hyp_segments = _split_segments(normalize(pair.hypothesis))
    m = len(hyp_segments)
    if m <= EXHAUSTIVE_SEGMENT_LIMIT:
        best = None
        for order in itertools.permutations(range(m)):
            candidate = _concat([hyp_segments[k] for k in order], unit)
            total = edit_distance(ref_units, candidate).total
            if best is None or total < best:
                best = total
                if best == 0:
                    break
        return best, len(ref_units), False
    # Greedy best-insertion ordering for unwieldy segment counts.
    order: list[int] = []
    for k in range(m):
        best_pos, best_total = 0, None
        for pos in range(len(order) + 1):
            candidate_order = order[:pos] + [k] + order[pos:]
            candidate = _concat([hyp_segments[q] for q in candidate_order], unit)
            total = edit_distance(ref_units, candidate).total
            if best_total is None or total < best_total:
                best_pos, best_total = pos, total
        order.insert(best_pos, k)
    final = _concat([hyp_segments[q] for q in order], unit)
    return edit_distance(ref_units, final).total, len(ref_units), True


def cp_error(pairs: list[ScoredPair], unit: str = "word") -> float:
    """Concatenated minimum-permutation error rate (percent)."""
    if unit not in ("word", "char"):
        raise ValidationError(f"unit must be 'word' or 'char', got {unit!r}")
    counted = [_cp_counts(p, unit) for p in pairs]
    approximate = sum(1 for _, _, approx in counted if approx)
    if approximate:
        log.warning(
            "%d pair(s) exceeded %d segments; their ordering is greedy "
            "(approximate)", approximate, EXHAUSTIVE_SEGMENT_LIMIT,
        )
    name = "cpWER" if unit == "word" else "cpCER"
    return _pooled([(e, n) for e, n, _ in counted], name)


def cpwer(pairs: list[ScoredPair]) -> float:
    return cp_error(pairs, "word")


def cpcer(pairs: list[ScoredPair]) -> float:
    return cp_error(pairs, "char")


def _sc_count(text: str) -> int:
    return sum(1 for t in normalize(text) if t == SC_TOKEN)


def sc_accuracy(pairs: list[ScoredPair]) -> float:
    """Percentage of pairs whose speaker-change counts agree."""
    if not pairs:
        raise ValidationError("sc_accuracy needs at least one pair")
    correct = sum(
        1 for p in pairs if _sc_count(p.reference) == _sc_count(p.hypothesis)
    )
    return 100.0 * correct / len(pairs)


# ---------------------------------------------------------------------------
# Reports

@dataclass
class MetricReport:
    wer: float | None = None
    cer: float | None = None
    cpwer: float | None = None
    cpcer: float | None = None
    sc_acc: float | None = None
    per_pair: list[dict] = field(default_factory=list)
    approximate_pairs: int = 0

    def to_dict(self) -> dict:
        return {
            "wer": self.wer,
            "cer": self.cer,
            "cpwer": self.cpwer,
            "cpcer": self.cpcer,
            "sc_acc": self.sc_acc,
            "approximate_pairs": self.approximate_pairs,
            "per_pair": self.per_pair,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def pair_statistics(pair: ScoredPair, metric: str) -> tuple[int, int]:
    """Per-pair (numerator, denominator) for pooled metric aggregation."""
    if metric == "wer":
        return _plain_counts(pair, "word")
    if metric == "cer":
        return _plain_counts(pair, "char")
    if metric == "cpwer":
        e, n, _ = _cp_counts(pair, "word")
        return e, n
    if metric == "cpcer":
        e, n, _ = _cp_counts(pair, "char")
        return e, n
    if metric == "sc_acc":
        return (
            int(_sc_count(pair.reference) == _sc_count(pair.hypothesis)),
            1,
        )
    raise ValidationError(f"unknown metric {metric!r}")


def evaluate_pairs(
    pairs: list[ScoredPair], metrics: tuple[str, ...] = ALL_METRICS
) -> MetricReport:
    """Score all requested metrics and build the per-pair breakdown."""
    if not pairs:
        raise ValidationError("evaluate_pairs needs at least one pair")
    report = MetricReport()
    breakdown: dict[str, dict] = {p.id: {"id": p.id} for p in pairs}
    approximate_ids = set()
    for metric in metrics:
        stats = []
        for pair in pairs:
            if metric in ("cpwer", "cpcer"):
                e, n, approx = _cp_counts(pair, "word" if metric == "cpwer" else "char")
                if approx:
                    approximate_ids.add(pair.id)
            else:
                e, n = pair_statistics(pair, metric)
            stats.append((e, n))
            breakdown[pair.id][f"{metric}_errors"] = e
            breakdown[pair.id][f"{metric}_length"] = n
        value = _pooled(stats, metric) if metric != "sc_acc" else (
            100.0 * sum(e for e, _ in stats) / len(stats)
        )
        setattr(report, metric, value)
    report.per_pair = [breakdown[p.id] for p in pairs]
    report.approximate_pairs = len(approximate_ids)
    return report


@dataclass(frozen=True)
class BootstrapResult:
    metric: str
    diff: float
    ci_low: float
    ci_high: float
    significant: bool
    resamples: int
    alpha: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "diff": self.diff,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "significant": self.significant,
            "resamples": self.resamples,
            "alpha": self.alpha,
            "seed": self.seed,
        }


def bootstrap_compare(
    pairs_a: list[ScoredPair],
    pairs_b: list[ScoredPair],
    metric: str = "wer",
    resamples: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
) -> BootstrapResult:
    """Paired bootstrap of the pooled metric difference (A minus B).

    Pair ids are resampled with replacement jointly for both systems; the
    percentile interval at the requested level decides significance.
    """
    ids_a = [p.id for p in pairs_a]
    ids_b = [p.id for p in pairs_b]
    if len(set(ids_a)) != len(ids_a):
        raise ValidationError("duplicate pair ids in system A")
    if ids_a != ids_b:
        if sorted(ids_a) == sorted(ids_b):
            order = {pid: k for k, pid in enumerate(ids_a)}
            pairs_b = sorted(pairs_b, key=lambda p: order[p.id])
        else:
            raise ValidationError("system A and B pair ids do not match")
    stats_a = np.array([pair_statistics(p, metric) for p in pairs_a], dtype=np.float64)
    stats_b = np.array([pair_statistics(p, metric) for p in pairs_b], dtype=np.float64)

    def pooled(stats: np.ndarray, index: np.ndarray) -> np.ndarray:
        numerator = stats[:, 0][index].sum(axis=-1)
        denominator = stats[:, 1][index].sum(axis=-1)
        return np.where(denominator > 0, 100.0 * numerator / np.maximum(denominator, 1e-12), 0.0)

    n = len(pairs_a)
    full = np.arange(n)
    diff = float(pooled(stats_a, full) - pooled(stats_b, full))
    rng = np.random.default_rng(seed)
    index = rng.integers(0, n, size=(resamples, n))
    diffs = pooled(stats_a, index) - pooled(stats_b, index)
    ci_low, ci_high = np.percentile(diffs, [100.0 * alpha / 2, 100.0 * (1 - alpha / 2)])
    return BootstrapResult(
        metric=metric,
        diff=diff,
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        significant=not (ci_low <= 0.0 <= ci_high),
        resamples=resamples,
        alpha=alpha,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Transcript file formats

def read_transcript_file(text: str) -> dict[str, str]:
    """Parse an id -> transcript mapping from TSV or JSON.

    TSV lines are ``id<TAB>text``; JSON is either an object mapping ids to
    texts or a list of {"id", "text"} objects.
    """
    stripped = text.lstrip()
    if stripped.startswith("{") or stripped.startswith("["):
        doc = json.loads(text)
        if isinstance(doc, dict):
            return {str(k): str(v) for k, v in doc.items()}
        out = {}
        for i, item in enumerate(doc):
            if not isinstance(item, dict) or "id" not in item or "text" not in item:
                raise ParseError("expected {'id', 'text'} objects", path=f"$[{i}]")
            out[str(item["id"])] = str(item["text"])
        return out
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if "\t" not in line:
            raise ParseError("expected id<TAB>text", line=lineno)
        pair_id, transcript = line.split("\t", 1)
        out[pair_id] = transcript
    return out


def align_transcripts(
    reference: dict[str, str], hypothesis: dict[str, str]
) -> list[ScoredPair]:
    """Join reference and hypothesis maps on identical id sets."""
    if set(reference) != set(hypothesis):
        missing = sorted(set(reference) ^ set(hypothesis))
        raise ValidationError(
            f"reference/hypothesis ids do not match; differing ids: {missing[:5]}"
        )
    return [
        ScoredPair(pid, reference[pid], hypothesis[pid]) for pid in sorted(reference)
    ]
