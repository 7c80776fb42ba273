"""Command-line pipeline: extract-stats, simulate, render, chunk, evaluate,
inspect-stats.

All parameters can also come from a JSON config file (``--config``); explicit
command-line flags win. Every command writes a ``run.json`` with the resolved
parameters so runs can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .annotations import filter_pool, load_manifest, parse_rttm, parse_segment_json
from .density import (
    FitParams,
    Kde1D,
    ModelKind,
    StatsModel,
    fit_stats_model,
    yj_range,
)
from .errors import ConvSimError
from .metrics import (
    ALL_METRICS,
    align_transcripts,
    bootstrap_compare,
    evaluate_pairs,
    read_transcript_file,
)
from .render import (
    DEFAULT_CHUNK_WINDOW,
    DEFAULT_RIR_FRACTION,
    AudioBuffer,
    RenderedDialogue,
    RoomSet,
    assign_rirs,
    chunk_dialogue,
    emit_ground_truth,
    read_wav,
    render_plan,
    write_wav,
)
from .simulate import (
    DialoguePlan,
    SimMode,
    SimulationConfig,
    derive_seed,
    simulate_corpus,
)
from .stats import extract_corpus_gaps, observations_to_csv

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3


def _write_run_json(out_dir: Path, command: str, params: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, "version": __version__, "params": params}
    (out_dir / "run.json").write_text(json.dumps(payload, indent=2, sort_keys=True))


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge per-key: explicit CLI flag > config file entry > default."""
    config = {}
    if getattr(args, "config", None):
        config = json.loads(Path(args.config).read_text())
        if not isinstance(config, dict):
            raise ConvSimError("config file must hold a JSON object")
        # A previously written run.json works directly as a config file.
        if isinstance(config.get("params"), dict) and "command" in config:
            config = config["params"]
    resolved = {}
    for key, default in defaults.items():
        cli_value = getattr(args, key, None)
        resolved[key] = cli_value if cli_value is not None else config.get(key, default)
    return resolved


def _load_annotations(paths: list[str], fmt: str):
    annotations = []
    for path in paths:
        text = Path(path).read_text()
        file_format = fmt
        if fmt == "auto":
            file_format = "rttm" if path.endswith(".rttm") else "json"
        parsed = parse_rttm(text) if file_format == "rttm" else parse_segment_json(text)
        annotations.extend(parsed)
    return annotations


# ---------------------------------------------------------------------------
# extract-stats

_EXTRACT_DEFAULTS = {
    "format": "auto",
    "mode": "sasc",
    "alpha": 0.1,
    "min_obs": 3,
    "eps_mu": 0.01,
    "eps_r": 0.01,
    "eps_d": 0.05,
    "source": "",
    "dump_observations": None,
}


def cmd_extract_stats(args: argparse.Namespace) -> int:
    params = _resolve(args, _EXTRACT_DEFAULTS)
    annotations = _load_annotations(args.annotations, params["format"])
    model = fit_stats_model(
        annotations,
        ModelKind(params["mode"]),
        FitParams(
            alpha=params["alpha"],
            min_obs=params["min_obs"],
            eps_mu=params["eps_mu"],
            eps_r=params["eps_r"],
            eps_d=params["eps_d"],
            source=params["source"],
        ),
    )
    output = Path(args.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(model.to_json())
    if params["dump_observations"]:
        Path(params["dump_observations"]).write_text(
            observations_to_csv(extract_corpus_gaps(annotations))
        )
    _write_run_json(
        output.parent, "extract-stats",
        {**params, "annotations": list(args.annotations), "output": str(output)},
    )
    counts = model.meta["counts"]
    print(f"mode: {model.mode.value}")
    print(f"conversations: {counts['conversations']}  speakers: {counts['speakers']}")
    print(f"observations: {counts['observations']}")
    print(f"overlap ratio: {model.meta['overlap_ratio']:.4f}")
    print(f"transition states: {list(model.transition.states)}")
    for state, row in zip(model.transition.states, model.transition.probs):
        print(f"  P({state} -> .) = {np.round(row, 4).tolist()}")
    print(f"wrote {output}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate

_SIMULATE_DEFAULTS = {
    "mode": "sasc",
    "pairs": 1,
    "seed": 0,
    "d_min": 2.0,
    "d_max": 10.0,
    "fixed_gap": 0.25,
    "clamp_min_start_delta": 0.01,
}


def cmd_simulate(args: argparse.Namespace) -> int:
    params = _resolve(args, _SIMULATE_DEFAULTS)
    pool = load_manifest(Path(args.manifest).read_text())
    mode = SimMode(params["mode"])
    stats_model = None
    if mode is not SimMode.NO_CONCAT:
        if not args.stats:
            raise ConvSimError(f"--stats is required for mode {mode.value!r}")
        stats_model = StatsModel.from_json(Path(args.stats).read_text())
    config = SimulationConfig(
        mode=mode,
        pairs_limit=params["pairs"],
        seed=params["seed"],
        d_min=params["d_min"],
        d_max=params["d_max"],
        fixed_gap=params["fixed_gap"],
        clamp_min_start_delta=params["clamp_min_start_delta"],
    )
    plans, summary = simulate_corpus(pool, stats_model, config)
    out = Path(args.out)
    plans_dir = out / "plans"
    plans_dir.mkdir(parents=True, exist_ok=True)
    for plan in plans:
        (plans_dir / f"{plan.dialogue_id}.json").write_text(plan.to_json())
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    _write_run_json(
        out, "simulate",
        {**params, "manifest": str(args.manifest), "stats": args.stats, "out": str(out)},
    )
    print(f"dialogues: {summary['dialogues']}")
    print(f"mean utterances per dialogue: {summary['mean_utterances_per_dialogue']:.2f}")
    print(f"mean utterance duration: {summary['mean_utterance_duration']:.2f} s")
    print(f"mean dialogue length: {summary['mean_dialogue_length']:.2f} s")
    print(f"wrote {len(plans)} plan(s) to {plans_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# render

_RENDER_DEFAULTS = {
    "audio_root": ".",
    "rir_dir": None,
    "rir_fraction": DEFAULT_RIR_FRACTION,
    "sample_rate": 16000,
    "window": DEFAULT_CHUNK_WINDOW,
}


def _collect_plan_files(plan_args: list[str]) -> list[Path]:
    files = []
    for raw in plan_args:
        path = Path(raw)
        if path.is_dir():
            files.extend(sorted(path.glob("*.json")))
        else:
            files.append(path)
    return files


def _write_rendered(
    out: Path, rendered: RenderedDialogue, chunks, ground_truth
) -> dict:
    dialogue_id = rendered.annotation.conversation_id
    dialogue_dir = out / dialogue_id
    chunk_dir = dialogue_dir / "chunks"
    chunk_dir.mkdir(parents=True, exist_ok=True)
    (dialogue_dir / "audio.wav").write_bytes(write_wav(rendered.audio))
    (dialogue_dir / "ref.rttm").write_text(ground_truth.rttm)
    (dialogue_dir / "segments.json").write_text(ground_truth.segments_json)
    (dialogue_dir / "transcripts.tsv").write_text(ground_truth.transcripts_tsv)
    for chunk in chunks:
        (chunk_dir / f"chunk_{chunk.chunk_index}.wav").write_bytes(
            write_wav(chunk.audio)
        )
    return {
        "dialogue_id": dialogue_id,
        "audio": str(dialogue_dir / "audio.wav"),
        "rttm": str(dialogue_dir / "ref.rttm"),
        "segments": str(dialogue_dir / "segments.json"),
        "transcripts": str(dialogue_dir / "transcripts.tsv"),
        "chunks": len(chunks),
        "rir_applied": rendered.rir_applied,
        "room_id": rendered.room_id,
    }


def cmd_render(args: argparse.Namespace) -> int:
    params = _resolve(args, _RENDER_DEFAULTS)
    pool = load_manifest(Path(args.manifest).read_text())
    audio_root = Path(params["audio_root"])
    entries = {e.utterance_id: e for g in pool.groups.values() for e in g}
    texts = {uid: e.text for uid, e in entries.items()}

    cache: dict[str, AudioBuffer] = {}

    def lookup(utterance_id: str) -> AudioBuffer:
        entry = entries.get(utterance_id)
        if entry is None:
            raise KeyError(utterance_id)
        if entry.audio_path not in cache:
            buffer = read_wav((audio_root / entry.audio_path).read_bytes())
            if buffer.sample_rate != params["sample_rate"]:
                raise ConvSimError(
                    f"{entry.audio_path}: sample rate {buffer.sample_rate} != "
                    f"{params['sample_rate']} (resampling unsupported)"
                )
            cache[entry.audio_path] = buffer
        return cache[entry.audio_path]

    roomset = RoomSet({})
    if params["rir_dir"]:
        roomset = RoomSet.from_dir(params["rir_dir"])

    out = Path(args.out)
    produced = []
    for plan_file in _collect_plan_files(args.plans):
        plan = DialoguePlan.from_json(plan_file.read_text())
        render_rng = np.random.default_rng(derive_seed(plan.seed, "render"))
        assignment = assign_rirs(plan, roomset, render_rng, params["rir_fraction"])
        rendered = render_plan(plan, lookup, texts, assignment)
        chunks = chunk_dialogue(rendered, params["window"])
        ground_truth = emit_ground_truth(rendered, chunks)
        produced.append(_write_rendered(out, rendered, chunks, ground_truth))
    (out / "rendered.json").write_text(json.dumps(produced, indent=2, sort_keys=True))
    _write_run_json(
        out, "render",
        {**params, "plans": list(args.plans), "manifest": str(args.manifest), "out": str(out)},
    )
    with_rir = sum(1 for item in produced if item["rir_applied"])
    print(f"rendered {len(produced)} dialogue(s) ({with_rir} with RIR) to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# chunk

_CHUNK_DEFAULTS = {"window": DEFAULT_CHUNK_WINDOW}


def cmd_chunk(args: argparse.Namespace) -> int:
    params = _resolve(args, _CHUNK_DEFAULTS)
    rendered_root = Path(args.rendered)
    out = Path(args.out) if args.out else rendered_root
    dialogue_dirs = sorted(
        p for p in rendered_root.iterdir() if (p / "segments.json").is_file()
    )
    if not dialogue_dirs:
        raise ConvSimError(f"no rendered dialogues under {rendered_root}")
    total = 0
    for dialogue_dir in dialogue_dirs:
        annotation = parse_segment_json((dialogue_dir / "segments.json").read_text())[0]
        audio = read_wav((dialogue_dir / "audio.wav").read_bytes())
        rendered = RenderedDialogue(
            audio=audio,
            annotation=annotation,
            transcript_events=tuple(s.text or "" for s in annotation.segments),
            rir_applied=False,
        )
        chunks = chunk_dialogue(rendered, params["window"])
        ground_truth = emit_ground_truth(rendered, chunks)
        target = out / dialogue_dir.name
        chunk_dir = target / "chunks"
        chunk_dir.mkdir(parents=True, exist_ok=True)
        (target / "transcripts.tsv").write_text(ground_truth.transcripts_tsv)
        for chunk in chunks:
            (chunk_dir / f"chunk_{chunk.chunk_index}.wav").write_bytes(
                write_wav(chunk.audio)
            )
        total += len(chunks)
    _write_run_json(
        out, "chunk",
        {**params, "rendered": str(rendered_root), "out": str(out)},
    )
    print(f"wrote {total} chunk(s) for {len(dialogue_dirs)} dialogue(s)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate

_EVALUATE_DEFAULTS = {
    "metrics": ",".join(ALL_METRICS),
    "bootstrap": 0,
    "alpha": 0.05,
    "seed": 0,
    "per_pair_csv": None,
    "hyp2": None,
    "output": None,
}


def cmd_evaluate(args: argparse.Namespace) -> int:
    params = _resolve(args, _EVALUATE_DEFAULTS)
    metric_names = tuple(m.strip() for m in params["metrics"].split(",") if m.strip())
    unknown = [m for m in metric_names if m not in ALL_METRICS]
    if unknown:
        raise ConvSimError(f"unknown metric(s): {unknown}; choose from {ALL_METRICS}")
    reference = read_transcript_file(Path(args.ref).read_text())
    hypothesis = read_transcript_file(Path(args.hyp).read_text())
    pairs = align_transcripts(reference, hypothesis)
    report = evaluate_pairs(pairs, metric_names)
    payload = {"system": report.to_dict()}

    if params["hyp2"]:
        hypothesis_b = read_transcript_file(Path(params["hyp2"]).read_text())
        pairs_b = align_transcripts(reference, hypothesis_b)
        payload["system_b"] = evaluate_pairs(pairs_b, metric_names).to_dict()
        if params["bootstrap"]:
            payload["bootstrap"] = {
                metric: bootstrap_compare(
                    pairs, pairs_b, metric,
                    resamples=params["bootstrap"],
                    alpha=params["alpha"],
                    seed=params["seed"],
                ).to_dict()
                for metric in metric_names
            }

    text = json.dumps(payload, indent=2)
    if params["output"]:
        output = Path(params["output"])
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(text)
        _write_run_json(
            output.parent, "evaluate",
            {**params, "ref": str(args.ref), "hyp": str(args.hyp)},
        )
    print(text)
    if params["per_pair_csv"]:
        lines = ["id," + ",".join(
            f"{m}_errors,{m}_length" for m in metric_names
        )]
        for row in report.per_pair:
            values = [row["id"]]
            for m in metric_names:
                values.append(str(row.get(f"{m}_errors", "")))
                values.append(str(row.get(f"{m}_length", "")))
            lines.append(",".join(values))
        Path(params["per_pair_csv"]).write_text("\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# inspect-stats

_INSPECT_DEFAULTS = {
    "grid": None,
    "points": 512,
    "d_star": "2,8",
    "manifest": None,
    "histogram_bins": 50,
}


def _density_curve_csv(xs: np.ndarray, density: np.ndarray) -> str:
    lines = ["x,density"]
    lines.extend(f"{x!r},{d!r}" for x, d in zip(xs.tolist(), density.tolist()))
    return "\n".join(lines) + "\n"


def _kde_grid(kde: Kde1D, points: int) -> np.ndarray:
    pad = 4.0 * kde.bandwidth
    lo = float(kde.samples.min()) - pad
    hi = float(kde.samples.max()) + pad
    return np.linspace(lo, hi, points)


def cmd_inspect_stats(args: argparse.Namespace) -> int:
    params = _resolve(args, _INSPECT_DEFAULTS)
    model = StatsModel.from_json(Path(args.stats).read_text())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    explicit_grid = None
    if params["grid"]:
        lo, hi, n = params["grid"].split(":")
        explicit_grid = np.linspace(float(lo), float(hi), int(n))

    def write_curve(name: str, xs: np.ndarray, density: np.ndarray):
        (out / f"{name}.csv").write_text(_density_curve_csv(xs, density))

    for name, kde in (("mean_same", model.mean_same), ("mean_diff", model.mean_diff)):
        xs = explicit_grid if explicit_grid is not None else _kde_grid(kde, params["points"])
        write_curve(name, xs, kde.density(xs))

    d_values = [float(v) for v in str(params["d_star"]).split(",") if str(v).strip()]
    for name, residual in (
        ("residual_same", model.residual_same),
        ("residual_diff", model.residual_diff),
    ):
        if isinstance(residual, Kde1D):
            xs = explicit_grid if explicit_grid is not None else _kde_grid(residual, params["points"])
            write_curve(name, xs, residual.density(xs))
        else:
            for d_star in d_values:
                if explicit_grid is not None:
                    xs = explicit_grid
                else:
                    kde = residual.kde
                    pad = 4.0 * kde.h_r
                    # Grid in raw residual space around the back-transformed atoms.
                    atoms = residual.transform.inverse(
                        np.clip(
                            kde.residuals,
                            *_safe_range(residual.transform.lam, kde.residuals),
                        )
                    )
                    xs = np.linspace(float(np.min(atoms)) - pad, float(np.max(atoms)) + pad,
                                     params["points"])
                write_curve(f"{name}_d{d_star:g}", xs, residual.density(xs, d_star))

    (out / "transition.json").write_text(
        json.dumps(model.transition.to_dict(), indent=2)
    )

    if params["manifest"]:
        pool = load_manifest(Path(params["manifest"]).read_text())
        durations = np.array(
            [e.duration for g in pool.groups.values() for e in g], dtype=np.float64
        )
        counts, edges = np.histogram(durations, bins=params["histogram_bins"], density=True)
        centers = (edges[:-1] + edges[1:]) / 2
        (out / "durations.csv").write_text(_density_curve_csv(centers, counts))

    _write_run_json(out, "inspect-stats", {**params, "stats": str(args.stats), "out": str(out)})
    print(f"wrote density curves to {out}")
    return EXIT_OK


def _safe_range(lam: float, values: np.ndarray) -> tuple[float, float]:
    # Keep transformed atoms strictly inside the invertible range.
    lo, hi = yj_range(lam)
    margin = 1e-9 * (1.0 + np.abs(values).max())
    return (lo + margin if np.isfinite(lo) else -np.inf,
            hi - margin if np.isfinite(hi) else np.inf)


# ---------------------------------------------------------------------------
# Parser and entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convsim",
        description="Simulate two-speaker conversations with learned timing "
        "statistics, render them to audio, and score transcripts.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command")

    def add_common(p):
        p.add_argument("--config", help="JSON config file; CLI flags override it")

    p = sub.add_parser("extract-stats", help="fit a timing model from annotations")
    add_common(p)
    p.add_argument("--annotations", nargs="+", required=True, help="RTTM or JSON files")
    p.add_argument("--format", choices=["auto", "rttm", "json"])
    p.add_argument("--mode", choices=["sasc", "csasc"])
    p.add_argument("--output", required=True, help="stats model JSON path")
    p.add_argument("--alpha", type=float, help="residual bandwidth (unconditional mode)")
    p.add_argument("--min-obs", dest="min_obs", type=int)
    p.add_argument("--eps-mu", dest="eps_mu", type=float)
    p.add_argument("--eps-r", dest="eps_r", type=float)
    p.add_argument("--eps-d", dest="eps_d", type=float)
    p.add_argument("--source", help="label stored in model metadata")
    p.add_argument("--dump-observations", dest="dump_observations",
                   help="also write the gap observations as CSV")
    p.set_defaults(handler=cmd_extract_stats)

    p = sub.add_parser("simulate", help="plan dialogues from an utterance manifest")
    add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--stats", help="stats model JSON (not needed for no_concat)")
    p.add_argument("--mode", choices=[m.value for m in SimMode])
    p.add_argument("--pairs", type=int, help="pairs per speaker (1-5)")
    p.add_argument("--seed", type=int)
    p.add_argument("--d-min", dest="d_min", type=float)
    p.add_argument("--d-max", dest="d_max", type=float)
    p.add_argument("--fixed-gap", dest="fixed_gap", type=float)
    p.add_argument("--clamp-min-start-delta", dest="clamp_min_start_delta", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("render", help="mix plans into audio with ground truth")
    add_common(p)
    p.add_argument("--plans", nargs="+", required=True, help="plan files or directories")
    p.add_argument("--manifest", required=True)
    p.add_argument("--audio-root", dest="audio_root", help="base dir for manifest audio paths")
    p.add_argument("--rir-dir", dest="rir_dir", help="rirs/{room}/{position}.wav directory")
    p.add_argument("--rir-fraction", dest="rir_fraction", type=float)
    p.add_argument("--sample-rate", dest="sample_rate", type=int)
    p.add_argument("--window", type=float, help="chunk window seconds")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_render)

    p = sub.add_parser("chunk", help="re-chunk rendered dialogues")
    add_common(p)
    p.add_argument("--rendered", required=True, help="directory of rendered dialogues")
    p.add_argument("--window", type=float)
    p.add_argument("--out", help="output root (defaults to the rendered dir)")
    p.set_defaults(handler=cmd_chunk)

    p = sub.add_parser("evaluate", help="score hypothesis transcripts")
    add_common(p)
    p.add_argument("--ref", required=True, help="reference transcripts (TSV or JSON)")
    p.add_argument("--hyp", required=True, help="hypothesis transcripts")
    p.add_argument("--hyp2", help="second system for bootstrap comparison")
    p.add_argument("--metrics", help=f"comma list from {ALL_METRICS}")
    p.add_argument("--bootstrap", type=int, help="bootstrap resamples (0 = off)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", help="write the report JSON here")
    p.add_argument("--per-pair-csv", dest="per_pair_csv")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("inspect-stats", help="dump density curves as CSV")
    add_common(p)
    p.add_argument("--stats", required=True)
    p.add_argument("--grid", help="lo:hi:n evaluation grid")
    p.add_argument("--points", type=int)
    p.add_argument("--d-star", dest="d_star", help="comma list of durations for conditional curves")
    p.add_argument("--manifest", help="also dump an utterance-duration histogram")
    p.add_argument("--histogram-bins", dest="histogram_bins", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_inspect_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not getattr(args, "handler", None):
        build_parser().print_help()
        return EXIT_INPUT
    try:
        return args.handler(args)
    except (ConvSimError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
