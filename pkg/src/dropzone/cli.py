"""Command-line entry points: run, eval, sweep, record-fixtures, synth."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline, semantic, synth, vlm
from .config import RunConfig

STUB_AGENT1_REPLY = json.dumps({
    "landing_pad_safe": True,
    "reasoning": "pad clear across all frames",
    "future_prediction": "expected to stay clear",
    "updated_prompt_list": ["person", "car"],
})
STUB_AGENT2_REPLY = json.dumps({
    "ranked": [{"index": 0, "reason": "largest fully safe zone near center"}],
})


def build_backends(config: RunConfig):
    """Construct the detection and VLM backends named by the config."""
    if config.backend == "stub":
        det = semantic.StubDetectionBackend(
            shapes={k: tuple(v) for k, v in config.stub_hazards.items()},
            hpad=tuple(config.stub_hpad) if config.stub_hpad else None)
        agent = vlm.ScriptedVlmBackend([STUB_AGENT1_REPLY, STUB_AGENT2_REPLY])
        return det, agent
    if config.backend == "replay":
        return (semantic.ReplayDetectionBackend(config.detection_fixtures),
                vlm.ReplayVlmBackend(config.vlm_fixtures))
    det = semantic.LiveDetectionBackend(config.detection_endpoint)
    agent = vlm.LiveVlmBackend(config.vlm_endpoint, config.vlm_model)
    return det, agent


def _load_config(args) -> RunConfig:
    config = (RunConfig.from_yaml(args.config) if args.config
              else RunConfig())
    if getattr(args, "backend", None):
        config.backend = args.backend
    if getattr(args, "runs", None):
        config.runs_per_frame = args.runs
    if getattr(args, "stride", None):
        config.stride = args.stride
    if getattr(args, "single_frame", False):
        config.agent1_mode = "single-frame"
    if getattr(args, "pref_json", None):
        prefs = json.loads(Path(args.pref_json).read_text(encoding="utf-8"))
        config.preferences = dict(prefs)
    return config


def cmd_run(args) -> int:
    config = _load_config(args)
    batches = pipeline.ingest_dataset(args.data, config.stride,
                                      list(config.frame_ids) if config.frame_ids else None)
    if not batches:
        print("no full batches found", file=sys.stderr)
        return 1
    det, agent = build_backends(config)
    results = pipeline.run_dataset(batches, config, det, agent, args.out)
    n_nocand = sum(1 for r in results if not r.candidates)
    print(f"processed {len(batches)} batch(es) x {config.runs_per_frame} "
          f"run(s); {n_nocand} run(s) had no feasible candidate")
    return 0


def _pad_labels(args):
    path = None
    if getattr(args, "pad_labels", None):
        path = Path(args.pad_labels)
    else:
        default = Path(args.data) / "pad_labels.json"
        if default.exists():
            path = default
    if path is None:
        return None
    return {k: bool(v) for k, v in
            json.loads(path.read_text(encoding="utf-8")).items()}


def cmd_eval(args) -> int:
    config = _load_config(args)
    report = pipeline.evaluate(args.results, args.data, config,
                               pad_labels=_pad_labels(args))
    out = Path(args.out or (Path(args.results) / "eval"))
    pipeline.write_report(report, out)
    print((out / "report.txt").read_text(encoding="utf-8"))
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args)
    report = pipeline.evaluate(args.results, args.data, config,
                               pad_labels=_pad_labels(args))
    for eta, rep in report.get("zones", {}).items():
        parts = ", ".join(
            f"{name}={entry['mean']:.4f}+/-{entry['std']:.4f}"
            for name, entry in rep.items())
        print(f"eta={eta}: {parts}")
    if args.out:
        pipeline.write_report(report, args.out)
    return 0


def cmd_record_fixtures(args) -> int:
    """Capture live detection responses for decision frames into replay files."""
    config = _load_config(args)
    config.backend = "live"
    det, _ = build_backends(config)
    batches = pipeline.ingest_dataset(args.data, config.stride)
    vocab = config.initial_vocabulary()
    out = Path(args.out)
    for batch in batches:
        frame = batch.decision
        payload = det.detect_raw(frame, vocab)
        semantic.write_fixture(
            semantic.fixture_path(out, frame.frame_id, vocab),
            payload["width"], payload["height"], payload["classes"],
            hpad=payload.get("hpad"))
    print(f"recorded {len(batches)} fixture(s) into {out}")
    return 0


def cmd_synth(args) -> int:
    synth.make_synthetic_dataset(args.out, n_frames=args.frames,
                                 all_unsafe=args.all_unsafe)
    print(f"synthetic dataset written to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dropzone",
        description="Geometric-semantic safe drop zone detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, results=False):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--data", required=True, help="dataset root")
        if results:
            p.add_argument("--results", required=True, help="pipeline output tree")
            p.add_argument("--out", help="report output directory")
            p.add_argument("--pad-labels", help="JSON {batch_id: bool}")
        else:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--backend", choices=["live", "replay", "stub"])
        p.add_argument("--runs", type=int, help="stochastic runs per frame")
        p.add_argument("--stride", type=int, help="frame sampling stride")

    p_run = sub.add_parser("run", help="run the full pipeline")
    common(p_run)
    p_run.add_argument("--single-frame", action="store_true",
                       help="agent-1 single-frame ablation mode")
    p_run.add_argument("--pref-json", help="JSON {batch_id: preference}")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="metric reports from results + GT")
    common(p_eval, results=True)
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="eta sweep over zone metrics")
    common(p_sweep, results=True)
    p_sweep.set_defaults(func=cmd_sweep)

    p_rec = sub.add_parser("record-fixtures",
                           help="record live detection responses for replay")
    common(p_rec)
    p_rec.set_defaults(func=cmd_record_fixtures)

    p_synth = sub.add_parser("synth", help="generate the synthetic dataset")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--frames", type=int, default=10)
    p_synth.add_argument("--all-unsafe", action="store_true")
    p_synth.set_defaults(func=cmd_synth)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
