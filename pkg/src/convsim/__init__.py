"""Speaker-aware simulated conversation toolkit.

Extracts conversational timing statistics from annotated dialogue corpora,
fits KDE-based pause models (unconditional and duration-conditioned),
simulates two-speaker dialogues from single-speaker utterance pools,
renders them to audio with ground-truth annotations, and scores
transcripts with permutation-aware error metrics.
"""

__version__ = "0.1.0"

from .annotations import (
    ConversationAnnotation,
    SegmentAnnotation,
    UtteranceEntry,
    UtterancePool,
    filter_pool,
    load_manifest,
    parse_rttm,
    parse_segment_json,
    write_manifest,
    write_rttm,
    write_segment_json,
)
from .density import (
    ConditionalKde,
    ConditionalResidualModel,
    FitParams,
    Kde1D,
    ModelKind,
    StatsModel,
    YeoJohnson,
    fit_stats_model,
    scott_bandwidths,
    silverman_bandwidth,
    yj_fit_lambda,
    yj_forward,
    yj_inverse,
)
from .errors import (
    ConvSimError,
    ExtractionError,
    ParseError,
    UnsupportedFormatError,
    ValidationError,
)
from .metrics import (
    BootstrapResult,
    MetricReport,
    ScoredPair,
    bootstrap_compare,
    cer,
    cp_error,
    edit_distance,
    evaluate_pairs,
    normalize,
    sc_accuracy,
    wer,
)
from .render import (
    AudioBuffer,
    RenderedDialogue,
    RirAssignment,
    RoomSet,
    TrainingChunk,
    assign_rirs,
    chunk_dialogue,
    convolve,
    emit_ground_truth,
    read_wav,
    render_plan,
    write_wav,
)
from .simulate import (
    DialoguePlan,
    PlanEvent,
    SimMode,
    SimulationConfig,
    derive_seed,
    grow_turn_sequence,
    make_pairs,
    plan_dialogue,
    plan_no_concat,
    plan_to_annotation,
    simulate_corpus,
)
from .stats import (
    GapObservation,
    ResidualSample,
    SpeakerGapSummary,
    TransitionType,
    extract_gaps,
    overlap_ratio,
    residuals,
    speaker_means,
    turn_sequences,
)
from .turns import TransitionMatrix, estimate_transitions, next_speaker, sample_turn_sequence
