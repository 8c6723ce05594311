"""Open-vocabulary hazard detection behind a pluggable backend interface.

A detection backend maps (frame, prompt vocabulary) to per-class confidence
grids in [0, 1].  Three implementations are provided: a live HTTP client, a
replay backend serving recorded fixtures, and a deterministic synthetic stub
for tests.  Aggregation (pixelwise max) and binarization turn the class
grids into the semantic unsafe mask.
"""
from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from . import imgcore
from .errors import BackendError, FixtureMissingError

# VisDrone-10 category list used as the default initial vocabulary.
VISDRONE10 = (
    "person", "pedestrian", "people", "bicycle", "car",
    "van", "truck", "awning-tricycle", "bus", "motor",
)


@dataclass(frozen=True)
class PromptVocabulary:
    """Ordered, case-insensitively deduplicated list of text prompts."""
    classes: tuple[str, ...]

    @staticmethod
    def of(items) -> "PromptVocabulary":
        seen = set()
        out = []
        for item in items:
            text = str(item).strip()
            if not text:
                continue
            key = text.casefold()
            if key in seen:
                continue
            seen.add(key)
            out.append(text)
        return PromptVocabulary(tuple(out))

    @staticmethod
    def default() -> "PromptVocabulary":
        return PromptVocabulary.of(VISDRONE10)

    def __len__(self) -> int:
        return len(self.classes)

    def __iter__(self):
        return iter(self.classes)

    def content_hash(self) -> str:
        """Order-independent hash, stable under agent reorderings."""
        joined = "\n".join(sorted(c.casefold() for c in self.classes))
        return hashlib.sha256(joined.encode("utf-8")).hexdigest()[:16]


@dataclass
class ClassMaskSet:
    """Per-class confidence grids in [0, 1], all sharing the image dims."""
    width: int
    height: int
    masks: dict[str, np.ndarray] = field(default_factory=dict)

    def add(self, name: str, grid: np.ndarray) -> None:
        g = imgcore.as_grid(grid)
        if g.shape != (self.height, self.width):
            raise ValueError(
                f"mask for {name!r} has shape {g.shape}, "
                f"expected {(self.height, self.width)}")
        if g.min() < 0 or g.max() > 1:
            raise ValueError(f"mask for {name!r} has values outside [0, 1]")
        self.masks[name] = g


def aggregate_unsafe(masks: ClassMaskSet) -> np.ndarray:
    """Pixelwise maximum over class grids; empty set yields all zeros."""
    if not masks.masks:
        return np.zeros((masks.height, masks.width), dtype=np.float64)
    grids = list(masks.masks.values())
    out = grids[0]
    for g in grids[1:]:
        if g.shape != out.shape:
            raise ValueError("class masks have mismatched dimensions")
        out = np.maximum(out, g)
    return out.copy()


def binarize(unsafe: np.ndarray, theta_d: float) -> np.ndarray:
    """Threshold the unsafe map: bit 1 iff value >= theta_d."""
    if not 0.0 <= theta_d <= 1.0:
        raise ValueError(f"theta_d must lie in [0, 1], got {theta_d}")
    return (imgcore.as_grid(unsafe) >= theta_d).astype(np.uint8)


@runtime_checkable
class DetectionBackend(Protocol):
    def detect(self, frame, vocab: PromptVocabulary) -> ClassMaskSet: ...

    def locate_hpad(self, frame) -> tuple[float, float, float, float] | None: ...


def detect_and_binarize(backend: DetectionBackend, frame,
                        vocab: PromptVocabulary, theta_d: float) -> np.ndarray:
    """detect -> aggregate -> binarize; the semantic unsafe mask for a frame."""
    return binarize(aggregate_unsafe(backend.detect(frame, vocab)), theta_d)


# ---------------------------------------------------------------------------
# RLE fixture format (bit-exact round trip)

def rle_encode(mask: np.ndarray) -> list[int]:
    """Run lengths of a flattened binary mask, starting with a run of zeros."""
    flat = imgcore.as_mask(mask).ravel()
    runs = []
    current = 0
    length = 0
    for v in flat:
        if v == current:
            length += 1
        else:
            runs.append(length)
            current = v
            length = 1
    runs.append(length)
    return runs


def rle_decode(runs: list[int], width: int, height: int) -> np.ndarray:
    total = sum(runs)
    if total != width * height:
        raise ValueError(f"RLE length {total} != {width}x{height}")
    flat = np.zeros(total, dtype=np.uint8)
    pos = 0
    value = 0
    for run in runs:
        if value:
            flat[pos:pos + run] = 1
        pos += run
        value ^= 1
    return flat.reshape(height, width)


def fixture_path(root: Path, frame_id: str, vocab: PromptVocabulary) -> Path:
    return Path(root) / f"{frame_id}__{vocab.content_hash()}.json"


def write_fixture(path: Path, width: int, height: int,
                  entries: list[dict], hpad=None) -> None:
    """Write a detection fixture: per-class confidence + RLE binary mask.

    Each entry is {"name": str, "confidence": float, "rle": [int, ...]}.
    """
    payload = {"width": width, "height": height, "classes": entries}
    if hpad is not None:
        payload["hpad"] = list(hpad)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def read_fixture(path: Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FixtureMissingError(f"detection fixture not found: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def fixture_to_masks(payload: dict, vocab: PromptVocabulary) -> ClassMaskSet:
    w, h = payload["width"], payload["height"]
    out = ClassMaskSet(w, h)
    recorded = {e["name"]: e for e in payload["classes"]}
    for name in vocab:
        entry = recorded.get(name)
        if entry is None:
            out.add(name, np.zeros((h, w)))
        else:
            mask = rle_decode(entry["rle"], w, h)
            out.add(name, mask.astype(np.float64) * float(entry["confidence"]))
    return out


# ---------------------------------------------------------------------------
# Backend implementations

class StubDetectionBackend:
    """Deterministic synthetic detector for tests and the stub pipeline.

    ``shapes`` maps class name to an (x, y, w, h) rectangle that the class
    "detects" at the given confidence.  Classes without a shape yield
    all-zero masks.  With ``shapes=None`` a rectangle is derived from a
    stable hash of the class name.
    """

    def __init__(self, shapes: dict | None = None, confidence: float = 1.0,
                 hpad: tuple | None = None):
        self.shapes = shapes
        self.confidence = confidence
        self.hpad = hpad

    def _derived_rect(self, name: str, width: int, height: int):
        digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
        x = digest[0] % max(1, width // 2)
        y = digest[1] % max(1, height // 2)
        w = 1 + digest[2] % max(1, width // 4)
        h = 1 + digest[3] % max(1, height // 4)
        return x, y, w, h

    def detect(self, frame, vocab: PromptVocabulary) -> ClassMaskSet:
        height, width = frame_shape(frame)
        out = ClassMaskSet(width, height)
        for name in vocab:
            if self.shapes is None:
                rect = self._derived_rect(name, width, height)
            else:
                rect = self.shapes.get(name)
            grid = np.zeros((height, width))
            if rect is not None:
                x, y, w, h = rect
                grid[int(y):int(y + h), int(x):int(x + w)] = self.confidence
            out.add(name, grid)
        return out

    def locate_hpad(self, frame):
        return self.hpad


class ReplayDetectionBackend:
    """Serves recorded detections from content-addressed fixture files."""

    def __init__(self, fixture_dir):
        self.fixture_dir = Path(fixture_dir)

    def detect(self, frame, vocab: PromptVocabulary) -> ClassMaskSet:
        payload = read_fixture(
            fixture_path(self.fixture_dir, frame_id_of(frame), vocab))
        return fixture_to_masks(payload, vocab)

    def locate_hpad(self, frame):
        # The hpad box is recorded alongside any fixture for the frame.
        frame_id = frame_id_of(frame)
        for path in sorted(self.fixture_dir.glob(f"{frame_id}__*.json")):
            payload = read_fixture(path)
            if "hpad" in payload:
                return tuple(payload["hpad"])
        return None


class LiveDetectionBackend:
    """JSON-over-HTTP client for an open-vocabulary detection service.

    Request: {"image": <base64 PNG>, "prompts": [str, ...]}
    Response: {"width": int, "height": int,
               "classes": [{"name", "confidence", "rle"}, ...],
               "hpad": [x, y, w, h]?}
    """

    def __init__(self, endpoint: str, api_key_env: str = "DETECTION_API_KEY",
                 retries: int = 2, backoff: float = 0.5, session=None,
                 hpad_prompt: str = "landing pad with H"):
        self.endpoint = endpoint
        self.api_key = os.environ.get(api_key_env, "")
        self.retries = retries
        self.backoff = backoff
        self.hpad_prompt = hpad_prompt
        if session is None:
            import requests
            session = requests.Session()
        self.session = session

    def _post(self, payload: dict) -> dict:
        last = None
        for attempt in range(self.retries + 1):
            try:
                resp = self.session.post(
                    self.endpoint, json=payload,
                    headers={"Authorization": f"Bearer {self.api_key}"},
                    timeout=120)
                resp.raise_for_status()
                return resp.json()
            except Exception as exc:  # noqa: BLE001 - transport errors retried
                last = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (2 ** attempt))
        raise BackendError(
            f"detection request failed after {self.retries + 1} attempts: {last}",
            attempts=self.retries + 1)

    def detect_raw(self, frame, vocab: PromptVocabulary) -> dict:
        payload = {
            "image": encode_png_base64(rgb_of(frame)),
            "prompts": list(vocab),
        }
        return self._post(payload)

    def detect(self, frame, vocab: PromptVocabulary) -> ClassMaskSet:
        return fixture_to_masks(self.detect_raw(frame, vocab), vocab)

    def locate_hpad(self, frame):
        payload = self.detect_raw(frame, PromptVocabulary.of([self.hpad_prompt]))
        if "hpad" in payload:
            return tuple(payload["hpad"])
        masks = fixture_to_masks(payload, PromptVocabulary.of([self.hpad_prompt]))
        grid = aggregate_unsafe(masks)
        ys, xs = np.nonzero(grid >= 0.5)
        if len(xs) == 0:
            return None
        x0, x1 = xs.min(), xs.max()
        y0, y1 = ys.min(), ys.max()
        return (float(x0), float(y0), float(x1 - x0 + 1), float(y1 - y0 + 1))


# ---------------------------------------------------------------------------
# Frame adapters: backends accept anything exposing .rgb and .frame_id, or a
# bare HxWx3 array (stub only needs the shape).

def frame_shape(frame) -> tuple[int, int]:
    rgb = rgb_of(frame)
    return rgb.shape[0], rgb.shape[1]


def rgb_of(frame) -> np.ndarray:
    if hasattr(frame, "rgb"):
        return np.asarray(frame.rgb)
    return np.asarray(frame)


def frame_id_of(frame) -> str:
    if hasattr(frame, "frame_id"):
        return str(frame.frame_id)
    raise ValueError("replay/live backends need a frame with a frame_id")


def encode_png_base64(rgb: np.ndarray) -> str:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")
