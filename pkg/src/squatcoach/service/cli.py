"""Command-line entry point.

Subcommands: simulate, extract, train, evaluate, shap, grade, serve.
Failures exit nonzero after printing a one-line JSON error record to
stderr. Defaults honor the SQUATCOACH_PORT / SQUATCOACH_DATA_DIR /
SQUATCOACH_MODEL_DIR / SQUATCOACH_SEED / SQUATCOACH_FPS environment
variables.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .. import model_io
from ..attribution import channel_scores, select_channels, shapley_attribute
from ..diagnosis import DiagnosisPipeline
from ..errors import SquatCoachError
from ..labels import SquatLabel
from ..preprocess import RawClip, split_dataset
from ..session import run_session
from ..synthgen import GenConfig, generate_corpus, joint_synthesis
from ..training import MODEL_IDS, build_training_view, evaluate
from ..workflow import DEFAULT_CHOICES, corpus_to_tensors, train_all_models
from .formats import ClipArchive, read_joint_stream
from .storage import Storage

ENV_PORT = "SQUATCOACH_PORT"
ENV_DATA = "SQUATCOACH_DATA_DIR"
ENV_MODELS = "SQUATCOACH_MODEL_DIR"
ENV_SEED = "SQUATCOACH_SEED"
ENV_FPS = "SQUATCOACH_FPS"


def _env(name, default, cast=str):
    raw = os.environ.get(name)
    return cast(raw) if raw is not None else default


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="squatcoach",
                                     description="barbell squat diagnosis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a labeled synthetic clip archive")
    p.add_argument("--per-label", type=int, default=100)
    p.add_argument("--labels", type=int, nargs="*", default=list(range(1, 8)))
    p.add_argument("--seed", type=int, default=_env(ENV_SEED, 0, int))
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.add_argument("--joints", action="store_true",
                   help="also store joint sub-streams for replay")
    p.add_argument("--out", required=True)

    p = sub.add_parser("extract", help="segment a joint stream into rep clips")
    p.add_argument("--stream", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--session-id", default="extracted")

    p = sub.add_parser("train", help="train the four diagnosis models")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", default=_env(ENV_MODELS, "models"))
    p.add_argument("--seed", type=int, default=_env(ENV_SEED, 0, int))
    p.add_argument("--arch", choices=["cnn1d", "lstm", "forest"],
                   help="one architecture for all four models (default: per-model choices)")
    p.add_argument("--select", choices=["all", "intersected", "positive"],
                   help="one selection strategy for all four (default: per-model choices)")
    p.add_argument("--permutations", type=int, default=4,
                   help="permutation budget per attribution pass")

    p = sub.add_parser("evaluate", help="per-class F1 and latency on held-out data")
    p.add_argument("--corpus", required=True)
    p.add_argument("--models", default=_env(ENV_MODELS, "models"))
    p.add_argument("--seed", type=int, default=_env(ENV_SEED, 0, int),
                   help="split seed; use the training seed to reproduce its test split")
    p.add_argument("--out", help="write the JSON report here instead of stdout")

    p = sub.add_parser("shap", help="attribution maps and channel selections")
    p.add_argument("--corpus", required=True)
    p.add_argument("--models", default=_env(ENV_MODELS, "models"))
    p.add_argument("--seed", type=int, default=_env(ENV_SEED, 0, int))
    p.add_argument("--permutations", type=int, default=4)
    p.add_argument("--out", default="attribution")

    p = sub.add_parser("grade", help="grade one clip")
    p.add_argument("--models", default=_env(ENV_MODELS, "models"))
    p.add_argument("--archive", help="clip archive directory")
    p.add_argument("--clip-id", help="clip id inside --archive")
    p.add_argument("--features-csv", help="stand-alone feature table to grade")

    p = sub.add_parser("serve", help="live/replay service")
    p.add_argument("--models", default=_env(ENV_MODELS, "models"))
    p.add_argument("--data-dir", default=_env(ENV_DATA, "data"))
    p.add_argument("--port", type=int, default=_env(ENV_PORT, 8000, int))
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--stream", help="joint-stream file used as the live source")
    p.add_argument("--fps", type=float, default=_env(ENV_FPS, 0.0, float),
                   help="playback rate override (0: use the stream header)")
    p.add_argument("--max-speed", action="store_true", help="no playback pacing")
    p.add_argument("--static", default="frontend/dist",
                   help="directory with the built browser UI")
    return parser


def load_models(models_dir) -> dict:
    models = {}
    for model_id in MODEL_IDS:
        models[model_id] = model_io.load_model(Path(models_dir) / f"model_{model_id}.json")
    return models


def cmd_simulate(args) -> dict:
    counts = {SquatLabel(l): args.per_label for l in args.labels}
    config = GenConfig(seed=args.seed, margin=args.margin, noise_scale=args.noise_scale)
    clips = generate_corpus(counts, config)
    archive = ClipArchive(args.out).create()
    for i, syn in enumerate(clips):
        joints = joint_synthesis(syn.clip.frames) if args.joints else None
        archive.add_clip(syn.clip, session_id="simulated", rep_index=i + 1, joints=joints)
    doc = {"status": "ok", "clips": len(clips), "archive": str(args.out)}
    print(json.dumps(doc))
    return doc


def cmd_extract(args) -> dict:
    frames, header = read_joint_stream(args.stream)
    archive = ClipArchive(args.out).create()
    completed = errors = 0
    for event, _ in run_session(frames, session_id=args.session_id):
        if event.kind == "rep_completed":
            completed += 1
            archive.add_clip(event.clip, session_id=args.session_id,
                             rep_index=completed + errors, joints=event.joints,
                             frame_rate=header.get("frame_rate", 30.0))
        elif event.kind == "data_error":
            errors += 1
    doc = {"status": "ok", "reps": completed, "data_errors": errors,
           "archive": str(args.out)}
    print(json.dumps(doc))
    return doc


def _load_corpus_tensors(corpus_dir):
    archive = ClipArchive(corpus_dir)
    clips = archive.load_labeled_clips()
    tensors, excluded = corpus_to_tensors(clips)
    return tensors, excluded


def cmd_train(args) -> dict:
    t0 = time.perf_counter()
    tensors, excluded = _load_corpus_tensors(args.corpus)
    choices = dict(DEFAULT_CHOICES)
    if args.arch or args.select:
        choices = {m: (args.arch or choices[m][0], args.select or choices[m][1])
                   for m in MODEL_IDS}
    bundles = train_all_models(tensors, seed=args.seed, choices=choices,
                               n_permutations=args.permutations)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"status": "ok", "seed": args.seed, "excluded_clips": len(excluded),
               "models": {}}
    for model_id, bundle in bundles.items():
        model_io.save_model(bundle.model, out / f"model_{model_id}.json")
        if bundle.attribution is not None:
            _write_attribution(out / f"attribution_{model_id}.json", bundle)
        summary["models"][model_id] = {
            "arch": bundle.arch,
            "strategy": bundle.strategy,
            "channels": list(bundle.model.channels),
            "fallback_selection": bool(bundle.selection.fallback) if bundle.selection else False,
            "val_macro_f1": bundle.model.val_macro_f1,
            "test_macro_f1": bundle.report.macro_f1,
            "test_per_class_f1": [float(v) for v in bundle.report.per_class_f1],
            "mean_latency_ms": bundle.report.mean_latency_ms,
        }
    summary["wall_seconds"] = time.perf_counter() - t0
    (out / "train_report.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))
    return summary


def _write_attribution(path, bundle):
    att = bundle.attribution
    doc = {
        "format": "squatcoach-attribution",
        "version": 1,
        "model_id": att.model_id,
        "output_names": att.output_names,
        "channels": list(att.channels),
        "n_permutations": att.n_permutations,
        "n_samples": att.n_samples,
        "seed": att.seed,
        "values": att.values.tolist(),
        "stderr": att.stderr.tolist(),
        "channel_scores": bundle.scores.scores.tolist(),
        "selected": {bundle.selection.strategy: bundle.selection.channels},
        "fallback": bundle.selection.fallback,
    }
    Path(path).write_text(json.dumps(doc))


def cmd_evaluate(args) -> dict:
    tensors, _ = _load_corpus_tensors(args.corpus)
    models = load_models(args.models)
    report = {"status": "ok", "models": {}}
    pipeline = DiagnosisPipeline(models)
    rep_times = []
    for model_id, model in models.items():
        view = build_training_view(model_id, tensors)
        splits = split_dataset(view, seed=args.seed, key=lambda pair: pair[1])
        result = evaluate(model, splits["test"])
        report["models"][model_id] = result.as_dict()
    # pipeline latency: full diagnose+grade per rep, unbatched, like live mode
    sample = tensors[:: max(1, len(tensors) // 100)][:100]
    for tensor in sample:
        t0 = time.perf_counter()
        pipeline.grade_tensor(tensor)
        rep_times.append((time.perf_counter() - t0) * 1000.0)
    report["pipeline_ms_mean"] = float(np.mean(rep_times))
    report["pipeline_ms_p95"] = float(np.percentile(rep_times, 95))
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return report


def cmd_shap(args) -> dict:
    from ..workflow import stratified_sample, training_mean_baseline, EXPLAIN_SAMPLES
    from ..training import pairs_to_arrays
    tensors, _ = _load_corpus_tensors(args.corpus)
    models = load_models(args.models)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"status": "ok", "models": {}}
    for model_id, model in models.items():
        view = build_training_view(model_id, tensors)
        splits = split_dataset(view, seed=args.seed, key=lambda pair: pair[1])
        baseline = training_mean_baseline(splits["train"], model.channels)
        explain = stratified_sample(splits["train"], EXPLAIN_SAMPLES, seed=args.seed + 17)
        X, _ = pairs_to_arrays(explain, model.channels)
        att = shapley_attribute(model, X, baseline,
                                n_permutations=args.permutations, seed=args.seed + 29)
        scores = channel_scores(att)
        selections = {s: select_channels(scores, s) for s in ("intersected", "positive")}
        doc = {
            "format": "squatcoach-attribution", "version": 1,
            "model_id": model_id, "output_names": att.output_names,
            "channels": list(att.channels),
            "n_permutations": att.n_permutations, "n_samples": att.n_samples,
            "seed": att.seed, "values": att.values.tolist(),
            "stderr": att.stderr.tolist(),
            "channel_scores": scores.scores.tolist(),
            "selected": {s: r.channels for s, r in selections.items()},
            "fallback": {s: r.fallback for s, r in selections.items()},
        }
        (out / f"attribution_{model_id}.json").write_text(json.dumps(doc))
        summary["models"][model_id] = {s: r.channels for s, r in selections.items()}
    print(json.dumps(summary, indent=2))
    return summary


def cmd_grade(args) -> dict:
    from .formats import parse_feature_table, graded_to_dict
    models = load_models(args.models)
    pipeline = DiagnosisPipeline(models)
    if args.features_csv:
        frames = parse_feature_table(Path(args.features_csv).read_text())
        clip = RawClip(Path(args.features_csv).stem, frames)
    elif args.archive and args.clip_id:
        _, clip, _ = ClipArchive(args.archive).load_clip(args.clip_id)
    else:
        raise SquatCoachError("grade needs --features-csv or --archive with --clip-id")
    graded = pipeline.grade_clip(clip)
    if graded is None:
        doc = {"status": "data_error", "clip_id": clip.clip_id,
               "reason": "multiple outliers"}
    else:
        doc = {"status": "ok", **graded_to_dict(graded)}
    print(json.dumps(doc, indent=2))
    return doc


def cmd_serve(args) -> dict:
    import uvicorn
    from .app import create_app
    storage = Storage(args.data_dir)
    models = load_models(args.models) if Path(args.models).is_dir() else None
    fps = args.fps if args.fps > 0 else 30.0
    app = create_app(storage, models=models, stream_path=args.stream,
                     frame_rate=fps, max_speed=args.max_speed,
                     static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return {"status": "ok"}


COMMANDS = {
    "simulate": cmd_simulate,
    "extract": cmd_extract,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "shap": cmd_shap,
    "grade": cmd_grade,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except SquatCoachError as err:
        print(json.dumps({"error": type(err).__name__, "message": str(err)}),
              file=sys.stderr)
        return 1
    except OSError as err:
        print(json.dumps({"error": "io_error", "message": str(err)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
