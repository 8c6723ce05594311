"""Dataset ingestion, batch orchestration, and evaluation."""
from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import agents, flatness, fusion, metrics, semantic, zones
from .config import RunConfig
from .errors import AgentParseError, BackendError, IngestError

BATCH_SIZE = 5
DECISION_INDEX = 4


@dataclass
class Frame:
    frame_id: str
    rgb_path: Path
    depth_path: Path
    gt_path: Path | None = None
    _rgb: np.ndarray | None = field(default=None, repr=False)
    _depth: np.ndarray | None = field(default=None, repr=False)

    @property
    def rgb(self) -> np.ndarray:
        if self._rgb is None:
            self._rgb = np.asarray(Image.open(self.rgb_path).convert("RGB"))
        return self._rgb

    @property
    def depth(self) -> np.ndarray:
        if self._depth is None:
            self._depth = load_depth(self.depth_path)
        return self._depth

    @property
    def gt_mask(self) -> np.ndarray | None:
        if self.gt_path is None or not Path(self.gt_path).exists():
            return None
        return fusion.load_mask_png(self.gt_path)


@dataclass
class FrameBatch:
    batch_id: str
    frames: list[Frame]

    def __post_init__(self):
        if len(self.frames) != BATCH_SIZE:
            raise ValueError(f"a batch needs exactly {BATCH_SIZE} frames")
        ids = [f.frame_id for f in self.frames]
        if ids != sorted(ids) or len(set(ids)) != BATCH_SIZE:
            raise ValueError("frame ids must be strictly increasing")

    @property
    def decision(self) -> Frame:
        return self.frames[DECISION_INDEX]


def load_depth(path) -> np.ndarray:
    """Depth grids arrive as .npy float sidecars or 16-bit grayscale PNGs."""
    path = Path(path)
    if path.suffix == ".npy":
        return np.asarray(np.load(path), dtype=np.float64)
    img = Image.open(path)
    return np.asarray(img, dtype=np.float64)


def ingest_dataset(root, stride: int = 29,
                   frame_ids: list[str] | None = None) -> list[FrameBatch]:
    """Subsample frames by stride (or take an explicit id list), then group
    into non-overlapping windows of five; the trailing remainder is dropped.

    Expected layout: root/rgb/<id>.png, root/depth/<id>.{npy,png},
    optional root/gt/<id>.png (255 = unsafe).
    """
    root = Path(root)
    rgb_dir = root / "rgb"
    if not rgb_dir.is_dir():
        raise IngestError(f"no rgb directory under {root}")
    all_ids = sorted(p.stem for p in rgb_dir.glob("*.png"))
    if frame_ids is not None:
        missing = [i for i in frame_ids if i not in set(all_ids)]
        if missing:
            raise IngestError(f"explicit frame ids not found: {missing}")
        selected = list(frame_ids)
    else:
        # Every stride-th frame, starting with the stride-th one, so that
        # N frames yield floor(N / stride) samples.
        selected = all_ids[stride - 1::stride]

    frames = []
    for fid in selected:
        depth = None
        for suffix in (".npy", ".png"):
            cand = root / "depth" / f"{fid}{suffix}"
            if cand.exists():
                depth = cand
                break
        if depth is None:
            raise IngestError(f"missing depth for frame {fid}")
        gt = root / "gt" / f"{fid}.png"
        frames.append(Frame(fid, rgb_dir / f"{fid}.png", depth,
                            gt if gt.exists() else None))

    n_batches = len(frames) // BATCH_SIZE
    dropped = len(frames) - n_batches * BATCH_SIZE
    if dropped:
        warnings.warn(f"dropping {dropped} trailing frame(s) that do not "
                      f"fill a batch of {BATCH_SIZE}")
    batches = []
    for b in range(n_batches):
        window = frames[b * BATCH_SIZE:(b + 1) * BATCH_SIZE]
        batches.append(FrameBatch(f"batch_{b:03d}", window))
    return batches


@dataclass
class BatchResult:
    batch_id: str
    run_id: int
    pad_safe: str
    verdict: agents.AgentVerdict | None
    vocabulary: semantic.PromptVocabulary
    final_map: fusion.SafetyMap
    flat_mask: np.ndarray
    semantic_mask: np.ndarray
    candidates: list[zones.CandidateZone]
    ranking: agents.RankingResult | None
    out_dir: Path


def draw_candidates(overlay: np.ndarray, candidates: list[zones.CandidateZone],
                    ranked: list[int] | None = None) -> np.ndarray:
    """Draw indexed candidate circles; ranked indices get a thicker outline."""
    img = Image.fromarray(overlay.copy())
    draw = ImageDraw.Draw(img)
    ranked = ranked or []
    for zone in candidates:
        box = [zone.cx - zone.radius, zone.cy - zone.radius,
               zone.cx + zone.radius, zone.cy + zone.radius]
        width = 3 if zone.index in ranked else 1
        color = (0, 0, 255) if zone.index in ranked else (255, 255, 0)
        draw.ellipse(box, outline=color, width=width)
        draw.text((zone.cx, zone.cy), str(zone.index), fill=(0, 0, 0))
    return np.asarray(img)


def run_batch(batch: FrameBatch, config: RunConfig, det_backend,
              vlm_backend, out_root, run_id: int = 0) -> BatchResult:
    """Full per-batch pipeline; writes all artifacts under its own directory."""
    out_dir = Path(out_root) / batch.batch_id
    if config.runs_per_frame > 1:
        out_dir = out_dir / f"run{run_id}"
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    errors: list[str] = []

    rgbs = [f.rgb for f in batch.frames]
    norm_depths = [flatness.normalize_depth(f.depth, config.flatness.epsilon)
                   for f in batch.frames]
    flat_masks = [flatness.flatness_mask(d, config.flatness)
                  for d in norm_depths]
    flat = flat_masks[DECISION_INDEX]
    u_grad = flatness.gradient_unsafe(flat)
    decision = batch.decision

    vocab = config.initial_vocabulary()
    b_init = semantic.detect_and_binarize(det_backend, decision, vocab,
                                          config.theta_d)
    map_init = fusion.fuse(b_init, u_grad, "initial")
    overlay_init = fusion.render_overlay(decision.rgb, map_init)
    fusion.save_png(out_dir / "overlay_initial.png", overlay_init)

    # Agent 1: verdict + vocabulary refinement (once per batch by default).
    verdict = None
    if hasattr(vlm_backend, "set_context"):
        vlm_backend.set_context(batch.batch_id, "agent1", run_id)
    for _ in range(config.refine_iterations):
        request = agents.build_agent1_request(
            rgbs, norm_depths, overlay_init, vocab, config.agent1_mode)
        try:
            verdict = agents.parse_agent1_response(vlm_backend.complete(request))
        except (BackendError, AgentParseError) as exc:
            errors.append(f"agent1: {exc}")
            verdict = None
        vocab = agents.refine_vocabulary(vocab, verdict)

    b_ref = semantic.detect_and_binarize(det_backend, decision, vocab,
                                         config.theta_d)
    map_final = fusion.fuse(b_ref, u_grad, "refined")
    overlay_final = fusion.render_overlay(decision.rgb, map_final)
    fusion.save_png(out_dir / "overlay_final.png", overlay_final)
    fusion.save_png(out_dir / "flat_mask.png", flat)
    fusion.save_png(out_dir / "semantic_mask.png", b_ref)

    pad_safe = verdict.pad_safe if verdict is not None else "unknown"
    verdict_payload = {
        "landing_pad_safe": pad_safe,
        "reasoning": verdict.reasoning if verdict else "",
        "future_prediction": verdict.future_prediction if verdict else "",
        "updated_prompt_list": list(vocab.classes),
    }
    (out_dir / "verdict.json").write_text(
        json.dumps(verdict_payload, indent=2, sort_keys=True), encoding="utf-8")

    hpad = det_backend.locate_hpad(decision)
    hpad_size = (hpad[2], hpad[3]) if hpad is not None else None
    candidates = zones.generate_candidates(map_final, config.zones, hpad_size)

    h, w = map_final.unsafe.shape
    ranking = None
    if not candidates:
        zones.no_candidate_artifact(map_final, decision.rgb, out_dir)
        ranked_payload: list[dict] = []
    else:
        annotated = draw_candidates(overlay_final, candidates)
        if hasattr(vlm_backend, "set_context"):
            vlm_backend.set_context(batch.batch_id, "agent2", run_id)
        ranking = agents.rank_zones(
            vlm_backend, candidates, config.preference_for(batch.batch_id),
            rgbs, annotated, config.zones.top_n, w, h)
        ranked_img = draw_candidates(overlay_final, candidates,
                                     [e.index for e in ranking.entries])
        fusion.save_png(out_dir / "ranked_on_overlay.png", ranked_img)
        ranked_payload = [{"index": e.index, "reason": e.reason}
                          for e in ranking.entries]

    zones.write_candidates_file(
        out_dir / f"candidates_{decision.frame_id}.json",
        candidates, w, h, ranked_payload)

    manifest = {
        "batch_id": batch.batch_id,
        "run_id": run_id,
        "decision_frame_id": decision.frame_id,
        "frame_ids": [f.frame_id for f in batch.frames],
        "provenance": map_final.provenance,
        "ranking_source": ranking.source if ranking else "none",
        "hpad_bbox": list(hpad) if hpad is not None else None,
        "errors": errors,
        "timings": {"wall_seconds": time.monotonic() - t0,
                    "finished_at": time.time()},
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")

    return BatchResult(batch.batch_id, run_id, pad_safe, verdict, vocab,
                       map_final, flat, b_ref, candidates, ranking, out_dir)


def run_dataset(batches: list[FrameBatch], config: RunConfig, det_backend,
                vlm_backend, out_root) -> list[BatchResult]:
    results = []
    for batch in batches:
        for run_id in range(config.runs_per_frame):
            results.append(run_batch(batch, config, det_backend, vlm_backend,
                                     out_root, run_id))
    return results


# ---------------------------------------------------------------------------
# Evaluation from artifacts on disk

def _run_dirs(batch_dir: Path) -> list[Path]:
    runs = sorted(d for d in batch_dir.iterdir()
                  if d.is_dir() and d.name.startswith("run"))
    return runs if runs else [batch_dir]


def _load_run_artifacts(run_dir: Path) -> dict | None:
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        return None
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    flat = fusion.load_mask_png(run_dir / "flat_mask.png")
    sem = fusion.load_mask_png(run_dir / "semantic_mask.png")
    final_unsafe = np.maximum(1 - flat, sem).astype(np.uint8)
    verdict = json.loads((run_dir / "verdict.json").read_text(encoding="utf-8"))
    cand_path = run_dir / f"candidates_{manifest['decision_frame_id']}.json"
    cands = json.loads(cand_path.read_text(encoding="utf-8"))
    return {"manifest": manifest, "final_unsafe": final_unsafe,
            "verdict": verdict, "candidates": cands}


def evaluate(results_root, dataset_root, config: RunConfig,
             pad_labels: dict[str, bool] | None = None,
             etas=metrics.SWEEP_ETAS) -> dict:
    """Metric reports from a results tree plus ground-truth masks.

    Frames without ground truth are skipped with a warning.  Returns a
    report dict with pixel metrics, the eta sweep, pooled curves, and the
    pad-safety success rate (when labels are supplied).
    """
    results_root = Path(results_root)
    dataset_root = Path(dataset_root)
    pixel_by_frame: dict[str, list[dict]] = {}
    samples: list[metrics.ZoneSample] = []
    success_by_frame: dict[str, list[int]] = {}
    skipped: list[str] = []

    for batch_dir in sorted(d for d in results_root.iterdir() if d.is_dir()):
        for run_id, run_dir in enumerate(_run_dirs(batch_dir)):
            loaded = _load_run_artifacts(run_dir)
            if loaded is None:
                continue
            frame_id = loaded["manifest"]["decision_frame_id"]
            batch_id = loaded["manifest"]["batch_id"]
            gt_path = dataset_root / "gt" / f"{frame_id}.png"
            if not gt_path.exists():
                skipped.append(frame_id)
                continue
            gt = fusion.load_mask_png(gt_path)
            pred = loaded["final_unsafe"]
            pixel_by_frame.setdefault(frame_id, []).append(
                metrics.pixel_metrics(metrics.confusion(pred, gt)))
            for cand in loaded["candidates"]["candidates_px"]:
                center = (cand["cx"], cand["cy"])
                samples.append(metrics.ZoneSample(
                    predicted_ratio=zones.safe_ratio(center, cand["r"], pred),
                    truth_ratio=zones.safe_ratio(center, cand["r"], gt),
                    frame_id=frame_id, run_id=run_id))
            if pad_labels is not None and batch_id in pad_labels:
                expected = "safe" if pad_labels[batch_id] else "unsafe"
                got = loaded["verdict"]["landing_pad_safe"]
                success_by_frame.setdefault(frame_id, []).append(
                    int(got == expected))

    if skipped:
        warnings.warn(f"no ground truth for frames: {sorted(set(skipped))}")

    report: dict = {"skipped_frames": sorted(set(skipped))}

    metric_names = ["iou", "dice", "precision", "recall", "specificity",
                    "accuracy", "balanced_accuracy"]
    pixel_report = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name in metric_names:
            per_frame = [[run[name] for run in runs]
                         for _, runs in sorted(pixel_by_frame.items())]
            mean, std = (metrics.aggregate_stochastic(per_frame)
                         if per_frame else (math.nan, math.nan))
            pixel_report[name] = {"mean": mean, "std": std}
    report["pixel"] = pixel_report

    if samples:
        report["zones"] = {
            str(eta): rep for eta, rep in
            metrics.threshold_sweep(samples, etas).items()}
        report["pooled"] = {}
        for eta in etas:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                curves = metrics.pooled_curves(samples, eta)
            report["pooled"][str(eta)] = {
                "roc_auc": metrics.curve_auc(curves["roc"]),
                "n_roc_points": len(curves["roc"]),
                "n_pr_points": len(curves["pr"]),
            }
            report.setdefault("_curves", {})[str(eta)] = curves
        report["mae"] = metrics.mae(samples)
    else:
        report["zones"] = {}
        report["pooled"] = {}

    if success_by_frame:
        report["pad_safety_success_rate"] = agents.pad_safety_success_rate(
            [[v for v in runs] for _, runs in sorted(success_by_frame.items())])
    return report


def _fmt(value: float) -> str:
    return "undef" if (isinstance(value, float) and math.isnan(value)) else f"{value:.4f}"


def write_report(report: dict, out_dir) -> None:
    """Emit report.json, an aligned-text summary, and pooled-curve CSVs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    curves = report.pop("_curves", {})
    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")

    lines = ["pixel metrics (mean +/- std over frames)"]
    for name, entry in report.get("pixel", {}).items():
        lines.append(f"  {name:<18} {_fmt(entry['mean'])} +/- {_fmt(entry['std'])}")
    for eta, rep in report.get("zones", {}).items():
        lines.append(f"zone metrics at eta={eta}")
        for name, entry in rep.items():
            lines.append(f"  {name:<18} {_fmt(entry['mean'])} +/- {_fmt(entry['std'])}")
    if "pad_safety_success_rate" in report:
        lines.append(f"pad safety success rate: "
                     f"{_fmt(report['pad_safety_success_rate'])}")
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    for eta, data in curves.items():
        roc_lines = ["threshold,fpr,tpr"]
        roc_lines += [f"{t},{fpr},{tpr}" for t, fpr, tpr in data["roc"]]
        (out_dir / f"roc_eta{eta}.csv").write_text(
            "\n".join(roc_lines) + "\n", encoding="utf-8")
        pr_lines = ["threshold,recall,precision"]
        pr_lines += [f"{t},{rec},{prec}" for t, rec, prec in data["pr"]]
        (out_dir / f"pr_eta{eta}.csv").write_text(
            "\n".join(pr_lines) + "\n", encoding="utf-8")
