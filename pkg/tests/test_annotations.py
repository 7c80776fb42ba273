import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convsim.annotations import (
    ConversationAnnotation,
    SegmentAnnotation,
    UtterancePool,
    filter_pool,
    load_manifest,
    parse_rttm,
    parse_segment_json,
    write_manifest,
    write_rttm,
    write_segment_json,
)
from convsim.errors import ParseError, ValidationError

from conftest import make_conversation, synthetic_pool


class TestParseRttm:
    def test_single_line(self):
        convs = parse_rttm("SPEAKER conv1 1 0.00 2.00 <NA> <NA> A <NA> <NA>")
        assert len(convs) == 1
        (seg,) = convs[0].segments
        assert (seg.speaker, seg.start, seg.end) == ("A", 0.0, 2.0)
        assert convs[0].conversation_id == "conv1"

    def test_two_speakers_sorted(self):
        text = (
            "SPEAKER conv1 1 1.80 2.20 <NA> <NA> B <NA> <NA>\n"
            "SPEAKER conv1 1 0.00 2.00 <NA> <NA> A <NA> <NA>\n"
        )
        (conv,) = parse_rttm(text)
        assert [s.speaker for s in conv.segments] == ["A", "B"]

    def test_negative_duration_rejected(self):
        with pytest.raises(ValidationError):
            parse_rttm("SPEAKER conv1 1 0.00 -1.0 <NA> <NA> A <NA> <NA>")

    def test_malformed_line_carries_line_number(self):
        text = "SPEAKER conv1 1 0.00 2.00 <NA> <NA> A <NA> <NA>\nSPEAKER conv1 1\n"
        with pytest.raises(ParseError, match="line 2"):
            parse_rttm(text)

    def test_unknown_record_type(self):
        with pytest.raises(ParseError):
            parse_rttm("SPKR-INFO conv1 1 0.0 1.0 <NA> <NA> A <NA> <NA>")

    def test_comments_and_blanks_skipped(self):
        text = ";; a comment\n\nSPEAKER c 1 0.0 1.0 <NA> <NA> A <NA> <NA>\n"
        assert len(parse_rttm(text)) == 1

    def test_multiple_conversations_sorted_by_id(self):
        text = (
            "SPEAKER z 1 0.0 1.0 <NA> <NA> A <NA> <NA>\n"
            "SPEAKER a 1 0.0 1.0 <NA> <NA> A <NA> <NA>\n"
        )
        assert [c.conversation_id for c in parse_rttm(text)] == ["a", "z"]


class TestWriteRttm:
    def test_format(self):
        conv = make_conversation("conv1", [("A", 0.0, 2.0)])
        assert write_rttm(conv) == "SPEAKER conv1 1 0.000 2.000 <NA> <NA> A <NA> <NA>\n"

    def test_millisecond_rounding(self):
        conv = make_conversation("c", [("A", 1.23456, 3.0)])
        assert "1.235" in write_rttm(conv)

    def test_round_trip_two_segments(self):
        conv = make_conversation("c", [("A", 0.0, 2.0), ("B", 1.8, 4.0)])
        (back,) = parse_rttm(write_rttm(conv))
        for orig, parsed in zip(conv.segments, back.segments):
            assert parsed.speaker == orig.speaker
            assert abs(parsed.start - orig.start) <= 1e-3
            assert abs(parsed.end - orig.end) <= 1e-3


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.sampled_from(["A", "B", "C"]),
            st.floats(min_value=0.0, max_value=500.0),
            st.floats(min_value=0.02, max_value=20.0),
        ),
        min_size=1,
        max_size=12,
    )
)
def test_rttm_round_trip_property(rows):
    conv = make_conversation("conv", [(s, t, t + d) for s, t, d in rows])
    (back,) = parse_rttm(write_rttm(conv))
    assert len(back.segments) == len(conv.segments)
    # Segments under 1 ms apart may legally swap canonical order after
    # quantization, so compare against the quantized original.
    quantized = make_conversation(
        "conv",
        [
            (
                s.speaker,
                float(format(s.start, ".3f")),
                float(format(s.start, ".3f")) + float(format(s.duration, ".3f")),
            )
            for s in conv.segments
        ],
    )
    for orig, parsed in zip(quantized.segments, back.segments):
        assert parsed.speaker == orig.speaker
        assert abs(parsed.start - orig.start) <= 1e-9
        assert abs(parsed.end - orig.end) <= 1e-9


class TestSegmentJson:
    def test_parse_single(self):
        text = json.dumps(
            [{"conversation_id": "c", "segments": [{"speaker": "A", "start": 0, "end": 2}]}]
        )
        (conv,) = parse_segment_json(text)
        assert conv.segments[0].end == 2.0
        assert conv.segments[0].text is None

    def test_round_trip_preserves_structure(self):
        conv = make_conversation(
            "c", [("A", 0.0, 2.0, "hello"), ("B", 1.8, 4.0, "there")]
        )
        (back,) = parse_segment_json(write_segment_json([conv]))
        assert back == conv

    def test_zero_length_segment_rejected(self):
        text = json.dumps(
            [{"conversation_id": "c", "segments": [{"speaker": "A", "start": 2, "end": 2}]}]
        )
        with pytest.raises(ValidationError):
            parse_segment_json(text)

    def test_missing_field_names_path(self):
        text = json.dumps([{"conversation_id": "c", "segments": [{"speaker": "A", "start": 0}]}])
        with pytest.raises(ParseError, match=r"\$\[0\].segments\[0\]"):
            parse_segment_json(text)

    def test_non_numeric_time_is_a_parse_error(self):
        text = json.dumps(
            [{"conversation_id": "c",
              "segments": [{"speaker": "A", "start": "soon", "end": 2}]}]
        )
        with pytest.raises(ParseError, match="start"):
            parse_segment_json(text)


class TestCanonicalOrder:
    def test_loading_order_does_not_matter(self):
        rows = [("B", 1.0, 2.0), ("A", 0.0, 2.5), ("A", 1.0, 1.5)]
        forward = make_conversation("c", rows)
        backward = make_conversation("c", rows[::-1])
        assert forward == backward

    def test_tie_broken_by_speaker_then_end(self):
        conv = make_conversation("c", [("B", 0.0, 1.0), ("A", 0.0, 2.0), ("A", 0.0, 1.0)])
        assert [(s.speaker, s.end) for s in conv.segments] == [
            ("A", 1.0), ("A", 2.0), ("B", 1.0),
        ]

    def test_invariants_enforced(self):
        with pytest.raises(ValidationError):
            SegmentAnnotation("c", "A", -0.5, 1.0)
        with pytest.raises(ValidationError):
            SegmentAnnotation("c", "A", 1.0, 0.5)


class TestManifest:
    def _entry(self, speaker, idx, duration=3.0):
        return {
            "speaker": speaker,
            "utterance_id": f"{speaker}-{idx}",
            "audio_path": f"{speaker}/{idx}.wav",
            "duration": duration,
            "chrono_index": idx,
            "text": "hi",
        }

    def test_groups_sorted_by_chrono_index(self):
        doc = [self._entry("A", 2), self._entry("A", 0), self._entry("A", 1)]
        pool = load_manifest(json.dumps(doc))
        assert [e.chrono_index for e in pool.group("A")] == [0, 1, 2]

    def test_two_speakers_two_groups(self):
        doc = [self._entry("A", 0), self._entry("B", 0)]
        pool = load_manifest(json.dumps(doc))
        assert pool.speakers == ("A", "B")

    def test_duplicate_chrono_index_rejected(self):
        doc = [self._entry("A", 0), self._entry("A", 0)]
        with pytest.raises(ValidationError, match="chrono_index"):
            load_manifest(json.dumps(doc))

    def test_non_positive_duration_rejected(self):
        with pytest.raises(ValidationError):
            load_manifest(json.dumps([self._entry("A", 0, duration=0.0)]))

    def test_round_trip(self):
        pool = synthetic_pool(n_speakers=3, utterances_per_speaker=4)
        assert load_manifest(write_manifest(pool)) == pool


class TestFilterPool:
    def test_inclusive_bounds(self):
        pool = load_manifest(
            json.dumps(
                [
                    {
                        "speaker": "A",
                        "utterance_id": f"u{i}",
                        "audio_path": "x.wav",
                        "duration": d,
                        "chrono_index": i,
                        "text": "",
                    }
                    for i, d in enumerate([1.5, 2.0, 9.9, 10.0, 12.0])
                ]
            )
        )
        kept = filter_pool(pool, 2.0, 10.0)
        assert [e.duration for e in kept.group("A")] == [2.0, 9.9, 10.0]

    def test_identity_when_all_inside(self):
        pool = synthetic_pool(n_speakers=2, d_lo=3.0, d_hi=8.0)
        assert filter_pool(pool, 2.0, 10.0) == pool

    def test_empty_pool(self):
        assert filter_pool(UtterancePool({}), 2.0, 10.0) == UtterancePool({})

    def test_idempotent(self):
        pool = synthetic_pool(n_speakers=3, d_lo=1.0, d_hi=12.0)
        once = filter_pool(pool, 2.0, 10.0)
        assert filter_pool(once, 2.0, 10.0) == once

    def test_emptied_group_retained(self):
        pool = synthetic_pool(n_speakers=1, d_lo=11.0, d_hi=12.0)
        filtered = filter_pool(pool, 2.0, 10.0)
        assert filtered.speakers == pool.speakers
        assert filtered.group(pool.speakers[0]) == ()

    def test_bad_bounds_rejected(self):
        with pytest.raises(ValidationError):
            filter_pool(UtterancePool({}), 10.0, 2.0)
