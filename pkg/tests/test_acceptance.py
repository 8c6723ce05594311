"""Acceptance suite: ten end-to-end criteria, one printed line each.

Each test asserts its criterion at the stated tolerance and prints a
single PASS line on success (pytest reports the FAIL case).  Run with
``pytest tests/test_acceptance.py -v -s`` to see the lines inline.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from dropzone import (agents, cli, flatness, fusion, metrics, pipeline,
                      synth, zones)
from dropzone.config import RunConfig
from dropzone.flatness import FlatnessParams
from dropzone.metrics import ZoneSample
from dropzone.semantic import StubDetectionBackend
from dropzone.vlm import ScriptedVlmBackend
from dropzone.zones import CandidateZone, ZoneParams

import oracles
from test_agents import GOLDEN_DIR, golden_agent1, golden_agent2


def ok(n, message):
    print(f"PASS criterion {n}: {message}")


def test_criterion_01_flatness_matches_oracle():
    """Full geometric pipeline agrees bit-exact with a loop oracle, fast."""
    rng = np.random.default_rng(101)
    params = FlatnessParams(grad_threshold=0.08, min_component_area=4)
    start = time.monotonic()
    for _ in range(50):
        h = int(rng.integers(8, 36))
        w = int(rng.integers(8, 36))
        depth = rng.normal(scale=rng.uniform(0.5, 20.0), size=(h, w))
        depth += np.linspace(0, rng.uniform(0, 30), w)[None, :]
        norm = flatness.normalize_depth(depth)
        got = flatness.flatness_mask(norm, params)
        ref = oracles.flat_pipeline(norm, params.sigma, params.grad_threshold,
                                    params.window, params.flat_ratio,
                                    params.morph_size, 4)
        assert np.array_equal(got, ref)
    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    ok(1, f"50 random flatness pipelines bit-exact vs oracle in {elapsed:.2f}s")


def test_criterion_02_hex_lattice_and_pad_radius():
    """Lattice geometry and the pad-diagonal radius are exact."""
    assert zones.radius_from_hpad(60.0, 80.0) == 50.0
    assert abs(zones.radius_from_hpad(100.0, 100.0)
               - 50.0 * math.sqrt(2.0)) < 1e-12
    rng = np.random.default_rng(102)
    for _ in range(20):
        w = int(rng.integers(20, 400))
        h = int(rng.integers(20, 400))
        r = float(rng.uniform(3.0, 30.0))
        centers = zones.hex_centers(w, h, r)
        if w < 2 * r and h < 2 * r:
            assert centers == [(w / 2.0, h / 2.0)]
            continue
        dy = math.sqrt(3.0) * r
        assert centers[0] == (r, r)
        for cx, cy in centers:
            j = round((cy - r) / dy)
            assert abs(cy - (r + j * dy)) < 1e-9      # exact row lines
            x0 = r + (r if j % 2 else 0.0)
            residue = (cx - x0) % (2.0 * r)
            assert min(residue, 2.0 * r - residue) < 1e-9  # exact column pitch
            assert cx - r < w and cy - r < h          # disk intersects image
        # maximality: one more column or row would leave the image
        xs_last = max(c[0] for c in centers if c[1] == r)
        assert xs_last + 2 * r - r >= w
    ok(2, "hex lattice anchors, pitch and pad radius exact over 20 cases")


def test_criterion_03_safe_ratio_brute_force():
    """Disk safe ratios match an independent per-pixel count to 1e-12."""
    rng = np.random.default_rng(103)
    checked = 0
    while checked < 100:
        w = int(rng.integers(8, 50))
        h = int(rng.integers(8, 50))
        unsafe = (rng.random((h, w)) < rng.uniform(0.1, 0.9)).astype(np.uint8)
        cx, cy = float(rng.uniform(0, w)), float(rng.uniform(0, h))
        r = float(rng.uniform(1.5, 18.0))
        disk = oracles.disk_mask(cx, cy, r, w, h)
        if disk.sum() == 0:
            continue
        want = 1.0 - (unsafe & disk).sum() / disk.sum()
        assert abs(zones.safe_ratio((cx, cy), r, unsafe) - want) < 1e-12
        checked += 1
    ok(3, "100 random clipped-disk safe ratios exact to 1e-12")


def test_criterion_04_metric_algebra():
    """Confusion-derived metrics satisfy their algebraic identities."""
    rng = np.random.default_rng(104)
    for _ in range(1000):
        tp, fp, tn, fn = (int(x) for x in rng.integers(0, 40, size=4))
        if tp + fp + tn + fn == 0:
            continue
        m = metrics.pixel_metrics(metrics.ConfusionCounts(tp, fp, tn, fn))
        if not math.isnan(m["iou"]):
            assert abs(m["dice"] - 2 * m["iou"] / (1 + m["iou"])) < 1e-12
        if not (math.isnan(m["precision"]) or math.isnan(m["recall"])):
            p, r = m["precision"], m["recall"]
            if p + r > 0:
                assert abs(m["dice"] - 2 * p * r / (p + r)) < 1e-12
    # AP against exhaustive precision-at-positive enumeration
    assert abs(metrics.average_precision([0.9, 0.8, 0.7], [1, 0, 1])
               - 5.0 / 6.0) < 1e-12
    for _ in range(200):
        n = int(rng.integers(1, 16))
        scores = rng.random(n)
        labels = (rng.random(n) < 0.5).astype(int)
        got = metrics.average_precision(scores, labels)
        order = sorted(range(n), key=lambda i: (-scores[i], i))
        hits, acc = 0, 0.0
        for rank, i in enumerate(order, 1):
            if labels[i]:
                hits += 1
                acc += hits / rank
        if labels.sum():
            assert abs(got - acc / labels.sum()) < 1e-12
        else:
            assert math.isnan(got)
    ok(4, "1000 confusion identities and 200 AP enumerations agree")


def test_criterion_05_aggregation_and_pooled_auc():
    """Frame-then-dataset aggregation and pooled-curve AUC behave as stated."""
    mean, std = metrics.aggregate_stochastic([[0.8, 0.8], [0.8]])
    assert (mean, std) == (0.8, 0.0)
    mean, std = metrics.aggregate_stochastic([[1.0, 1.0], [0.6]])
    assert abs(mean - 0.8) < 1e-15 and abs(std - 0.2) < 1e-15
    rng = np.random.default_rng(105)
    done = 0
    while done < 25:
        n = int(rng.integers(4, 40))
        samples = [ZoneSample(float(np.round(rng.random(), 1)),
                              float(rng.random()), "f") for _ in range(n)]
        labels = [t for _, t in metrics.zone_labels(samples, 0.5)]
        if sum(labels) in (0, len(labels)):
            continue
        area = metrics.curve_auc(metrics.pooled_curves(samples, 0.5)["roc"])
        rank = metrics.roc_auc([s.predicted_ratio for s in samples], labels)
        assert abs(area - rank) < 1e-12
        done += 1
    ok(5, "aggregation examples exact; pooled ROC area equals rank AUC x25")


def test_criterion_06_ranking_fallback():
    """Ranker degrades to the deterministic heuristic on any backend/parse
    failure, yielding identical output across repeats."""
    rng = np.random.default_rng(106)
    for _ in range(50):
        n = int(rng.integers(1, 15))
        cands = [CandidateZone(i, float(rng.uniform(0, 200)),
                               float(rng.uniform(0, 150)), 12.0,
                               float(np.round(rng.uniform(0.95, 1.0), 3)),
                               int(rng.integers(100, 500)))
                 for i in range(n)]
        rgbs = [np.zeros((150, 200, 3), dtype=np.uint8)] * 5
        overlay = np.zeros((150, 200, 3), dtype=np.uint8)
        backend = (ScriptedVlmBackend(fail=True) if rng.random() < 0.5
                   else ScriptedVlmBackend(["not json"]))
        a = agents.rank_zones(backend, cands, "p", rgbs, overlay, 3, 200, 150)
        b = agents.rank_zones(backend, cands, "p", rgbs, overlay, 3, 200, 150)
        assert a.source == "heuristic"
        assert [e.index for e in a.entries] == [e.index for e in b.entries]
        assert [e.index for e in a.entries] == \
            agents.heuristic_rank(cands, 200, 150)[:min(3, n)]
    ok(6, "50 failure scenarios all fall back to the stable heuristic order")


def test_criterion_07_end_to_end_perfect(tmp_path):
    """Synthetic dataset: byte-identical reruns and a perfect evaluation."""
    data = tmp_path / "data"
    synth.make_synthetic_dataset(data, n_frames=10)
    config = RunConfig.from_yaml(data / "config.yaml")
    batches = pipeline.ingest_dataset(data, stride=1)
    assert len(batches) == 2
    trees = []
    for sub in ("r1", "r2"):
        det = StubDetectionBackend(shapes={})
        agent = ScriptedVlmBackend([cli.STUB_AGENT1_REPLY,
                                    cli.STUB_AGENT2_REPLY])
        pipeline.run_dataset(batches, config, det, agent, tmp_path / sub)
        trees.append(tmp_path / sub)
    for path_a in sorted(trees[0].rglob("*")):
        if path_a.is_dir() or path_a.name == "manifest.json":
            continue
        path_b = trees[1] / path_a.relative_to(trees[0])
        assert path_a.read_bytes() == path_b.read_bytes(), path_a.name
    labels = json.loads((data / "pad_labels.json").read_text())
    report = pipeline.evaluate(trees[0], data, config, pad_labels=labels)
    assert report["pixel"]["iou"]["mean"] == 1.0
    assert report["mae"] == 0.0
    for rep in report["zones"].values():
        assert rep["mae"]["mean"] == 0.0
        assert rep["ap"]["mean"] == 1.0 or math.isnan(rep["ap"]["mean"])
    assert report["pad_safety_success_rate"] == 1.0
    ok(7, "reruns byte-identical; IoU 1.0, MAE 0.0, AP 1.0, success 1.0")


def test_criterion_08_no_candidate_path(tmp_path):
    """A fully unsafe scene emits the no-candidate artifact and exits 0."""
    data = tmp_path / "data"
    out = tmp_path / "out"
    assert cli.main(["synth", "--out", str(data), "--frames", "5",
                     "--all-unsafe"]) == 0
    rc = cli.main(["run", "--config", str(data / "config.yaml"),
                   "--data", str(data), "--out", str(out)])
    assert rc == 0
    batch_dir = out / "batch_000"
    assert (batch_dir / zones.NO_CANDIDATE_FILENAME).exists()
    cands = json.loads((batch_dir / "candidates_000004.json").read_text())
    assert cands["candidates"] == [] and cands["ranked"] == []
    ok(8, "all-unsafe run exits 0 with no_candidate_overlay.png and no zones")


def test_criterion_09_cohens_kappa():
    """Kappa matches the closed-form for random multi-category raters."""
    assert metrics.cohens_kappa([0, 1, 0, 1], [0, 1, 0, 1]) == 1.0
    a = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0]
    b = [1, 1, 1, 1, 0, 1, 0, 0, 0, 1]
    assert abs(metrics.cohens_kappa(a, b) - 0.4) < 1e-12
    rng = np.random.default_rng(109)
    for _ in range(100):
        n = int(rng.integers(2, 50))
        x = [int(v) for v in rng.integers(0, 4, size=n)]
        y = [int(v) for v in rng.integers(0, 4, size=n)]
        got = metrics.cohens_kappa(x, y)
        p_o = sum(p == q for p, q in zip(x, y)) / n
        p_e = sum((x.count(c) / n) * (y.count(c) / n) for c in range(4))
        if p_e >= 1.0:
            assert math.isnan(got)
        else:
            assert abs(got - (p_o - p_e) / (1 - p_e)) < 1e-12
    ok(9, "kappa exact on hand example and 100 random rater pairs")


def test_criterion_10_prompt_goldens():
    """Agent request fingerprints are byte-exact against the frozen files."""
    cases = {"agent1_multi": golden_agent1("multi-frame"),
             "agent1_single": golden_agent1("single-frame"),
             "agent2": golden_agent2()}
    expected_counts = {"agent1_multi": 11, "agent1_single": 3, "agent2": 6}
    for name, request in cases.items():
        fp = request.fingerprint()
        assert len(fp["attachments"]) == expected_counts[name]
        rendered = json.dumps(fp, indent=2, sort_keys=True) + "\n"
        golden = (GOLDEN_DIR / f"{name}.json").read_text(encoding="utf-8")
        assert rendered == golden, f"{name} fingerprint drifted"
    ok(10, "three prompt fingerprints byte-exact vs golden files")
