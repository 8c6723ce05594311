"""The two VLM agents: pad-safety verdict + vocabulary refinement (agent 1)
and preference-guided candidate ranking (agent 2).

Request payloads are deterministic for fixed inputs so they can be checked
against golden files.  Replies are parsed as strict JSON with one layer of
markdown-fence/prose leniency; anything worse is a parse error and routes to
the documented fallbacks (prior vocabulary, heuristic ranking).
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import AgentParseError, BackendError
from .semantic import PromptVocabulary
from .zones import CandidateZone, candidates_agent_json

AGENT1_MULTI_TEMPLATE = """\
You are analyzing a package delivery drone drop safety using 5 consecutive \
RGB frames, their depth maps, and a gradient-based safety overlay \
(green = safe, red = unsafe) for the last frame.

Current DINO-X prompt list: {prompt_list}

Tasks:
1. Determine if the landing pad is safe for the current frame (true/false). \
Decide based on the final frame and the previous 5 frames: if there are \
objects on the landing pad, or there will be objects on the landing pad, \
declare unsafe, otherwise declare safe.
2. Provide reasoning using temporal cues and depth information.
3. Predict future safety (will conditions remain safe/unsafe?).
4. Provide a single updated prompt list: include ALL unsafe objects/surfaces; \
remove safe ones (e.g. landing pad if confirmed safe, bushes, ...). The list \
must reflect the most recent scene. Unsafe objects include any moving or \
static objects that are not flat, or are moving and not safe for a package \
drop. If the drop zone with H sign is unsafe, also add it to the updated \
list. Provide the most complete prompt list for the unsafe zones. Avoid \
ambiguous prompts. Rule: streets and rooftops are always unsafe; bushes and \
grass are safe as long as they are free of objects and flat. Each entity \
must be specific and detectable, e.g. person, black asphalt road, white \
soccer ball, tree, white stairs, brown rooftop, ... For people, avoid \
additional details. For roads, stairs, decks, and ambiguous objects, \
specify the object. Include your reasoning for each hazardous prompt in the \
reasoning field.

Output strictly in JSON with keys: landing_pad_safe, reasoning (includes \
reasoning for choosing unsafe objects), future_prediction, \
updated_prompt_list (only text prompts such as rooftop, street road, \
person, landing pad with H).
"""

AGENT1_SINGLE_TEMPLATE = """\
You are evaluating package drop safety for a drone.

Inputs:
- ONE RGB frame (the final frame)
- Its depth map
- A safety overlay for the same frame (green = safe, red = unsafe)

Current DINO-X prompt list: {prompt_list}

Task (STRICT RULES):
1. Determine whether the primary landing pad with an 'H' marking is safe \
for a drop. Set landing_pad_safe = false only if you can see any object(s) \
inside the landing pad area. Otherwise, set landing_pad_safe = true. If you \
cannot locate the landing pad, set it to null and explain.
2. reasoning: 1-3 short sentences describing what you see on the pad.
3. future_prediction: one sentence (may be empty).
4. updated_prompt_list: if safe, return only clearly unsafe objects in this \
frame; if unsafe, also include landing pad with H. Keep prompts concrete \
and detectable.

Output STRICT JSON with keys: landing_pad_safe, reasoning, \
future_prediction, updated_prompt_list.
"""

AGENT2_SYSTEM_PROMPT = """\
You are selecting circular landing zones for a drone from indexed candidates.
PRIORITIZE user's preference over safe ratio where they conflict.

Return STRICT JSON ONLY:
{
  "ranked": [
    {
      "index": <int>,
      "reason": "<1-2 sentences>"
    }
  ]
}
"""

AGENT2_USER_TEMPLATE = """\
User preference: {user_pref_text}

Select top {top_n} indices by preference (ties broken by higher safe_ratio). \
Return STRICT JSON ONLY.

Candidates (normalized coordinates and safe ratios):
{candidates_json}
"""

HEURISTIC_REASON = "heuristic fallback: safe ratio, area, center proximity"


@dataclass
class Attachment:
    role: str
    image: np.ndarray


@dataclass
class AgentRequest:
    system: str | None
    user: str
    attachments: list[Attachment] = field(default_factory=list)

    def fingerprint(self) -> dict:
        """Stable, image-free view of the request for golden-file tests."""
        return {
            "system": self.system,
            "user": self.user,
            "attachments": [a.role for a in self.attachments],
        }


@dataclass
class AgentVerdict:
    pad_safe: str  # "safe" | "unsafe" | "unknown"
    reasoning: str
    future_prediction: str
    updated_vocabulary: PromptVocabulary


@dataclass
class RankedZone:
    index: int
    reason: str


@dataclass
class RankingResult:
    entries: list[RankedZone]
    source: str  # "vlm" | "vlm+heuristic" | "heuristic"


def _prompt_list_text(vocab: PromptVocabulary) -> str:
    return json.dumps(list(vocab.classes))


def depth_to_image(norm_depth: np.ndarray) -> np.ndarray:
    """Render a normalized depth grid as an 8-bit grayscale image."""
    return np.clip(np.rint(np.asarray(norm_depth) * 255.0), 0, 255).astype(np.uint8)


def build_agent1_request(rgb_frames, depth_grids, overlay,
                         vocab: PromptVocabulary,
                         mode: str = "multi-frame") -> AgentRequest:
    """Agent-1 request: 5x(RGB, depth) + overlay, or RGB/depth/overlay in
    single-frame mode.  Image order is fixed and part of the contract."""
    if len(rgb_frames) != 5 or len(depth_grids) != 5:
        raise ValueError("agent 1 needs exactly 5 RGB frames and 5 depth grids")
    if mode == "multi-frame":
        user = AGENT1_MULTI_TEMPLATE.format(prompt_list=_prompt_list_text(vocab))
        attachments = []
        for i in range(5):
            attachments.append(Attachment(f"rgb_{i}", np.asarray(rgb_frames[i])))
            attachments.append(Attachment(f"depth_{i}", depth_to_image(depth_grids[i])))
        attachments.append(Attachment("overlay", np.asarray(overlay)))
    elif mode == "single-frame":
        user = AGENT1_SINGLE_TEMPLATE.format(prompt_list=_prompt_list_text(vocab))
        attachments = [
            Attachment("rgb", np.asarray(rgb_frames[-1])),
            Attachment("depth", depth_to_image(depth_grids[-1])),
            Attachment("overlay", np.asarray(overlay)),
        ]
    else:
        raise ValueError(f"unknown agent-1 mode {mode!r}")
    return AgentRequest(system=None, user=user, attachments=attachments)


def _extract_json(text: str) -> dict:
    """Strip one markdown fence and surrounding prose, then parse JSON."""
    if not isinstance(text, str) or not text.strip():
        raise AgentParseError("empty reply", raw=str(text))
    body = text
    fence = re.search(r"```(?:json)?\s*(.*?)```", text, flags=re.DOTALL)
    if fence:
        body = fence.group(1)
    start = body.find("{")
    end = body.rfind("}")
    if start < 0 or end <= start:
        raise AgentParseError("no JSON object in reply", raw=text)
    try:
        parsed = json.loads(body[start:end + 1])
    except json.JSONDecodeError as exc:
        raise AgentParseError(f"malformed JSON: {exc}", raw=text) from exc
    if not isinstance(parsed, dict):
        raise AgentParseError("reply JSON is not an object", raw=text)
    return parsed


def parse_agent1_response(text: str) -> AgentVerdict:
    data = _extract_json(text)
    required = ("landing_pad_safe", "reasoning", "future_prediction",
                "updated_prompt_list")
    missing = [k for k in required if k not in data]
    if missing:
        raise AgentParseError(f"missing keys: {missing}", raw=text)
    flag = data["landing_pad_safe"]
    if flag is None:
        pad_safe = "unknown"
    elif isinstance(flag, bool):
        pad_safe = "safe" if flag else "unsafe"
    else:
        raise AgentParseError(
            f"landing_pad_safe must be boolean or null, got {flag!r}", raw=text)
    prompts = data["updated_prompt_list"]
    if not isinstance(prompts, list):
        raise AgentParseError("updated_prompt_list must be a list", raw=text)
    return AgentVerdict(
        pad_safe=pad_safe,
        reasoning=str(data["reasoning"]),
        future_prediction=str(data["future_prediction"] or ""),
        updated_vocabulary=PromptVocabulary.of(prompts),
    )


def refine_vocabulary(prior: PromptVocabulary,
                      verdict: AgentVerdict | None) -> PromptVocabulary:
    """Adopt the agent's updated list; keep the prior one on failure/empty."""
    if verdict is None or len(verdict.updated_vocabulary) == 0:
        return prior
    return verdict.updated_vocabulary


def build_agent2_request(candidates: list[CandidateZone], preference: str,
                         rgb_frames, annotated_overlay,
                         top_n: int, width: int, height: int) -> AgentRequest:
    """Agent-2 request: 5 RGB frames + annotated overlay, candidates as
    normalized JSON."""
    if not candidates:
        raise ValueError("agent 2 must not be invoked with no candidates")
    if len(rgb_frames) != 5:
        raise ValueError("agent 2 needs exactly 5 RGB frames")
    cand_json = json.dumps(candidates_agent_json(candidates, width, height),
                           indent=2)
    user = AGENT2_USER_TEMPLATE.format(
        user_pref_text=preference, top_n=top_n, candidates_json=cand_json)
    attachments = [Attachment(f"rgb_{i}", np.asarray(rgb_frames[i]))
                   for i in range(5)]
    attachments.append(Attachment("overlay", np.asarray(annotated_overlay)))
    return AgentRequest(system=AGENT2_SYSTEM_PROMPT, user=user,
                        attachments=attachments)


def parse_agent2_response(text: str, n_candidates: int,
                          top_n: int) -> list[RankedZone]:
    """Validated ranking; unparseable replies yield an empty list."""
    try:
        data = _extract_json(text)
    except AgentParseError:
        return []
    ranked = data.get("ranked")
    if not isinstance(ranked, list):
        return []
    out: list[RankedZone] = []
    seen = set()
    for entry in ranked:
        if len(out) >= top_n:
            break
        if not isinstance(entry, dict):
            continue
        idx = entry.get("index")
        if not isinstance(idx, int) or isinstance(idx, bool):
            continue
        if idx < 0 or idx >= n_candidates or idx in seen:
            continue
        seen.add(idx)
        out.append(RankedZone(idx, str(entry.get("reason", ""))))
    return out


def heuristic_rank(candidates: list[CandidateZone],
                   width: int, height: int) -> list[int]:
    """Deterministic total order: safe ratio desc, area desc, distance from
    the image center asc, candidate index as the final tiebreak."""
    cx0, cy0 = width / 2.0, height / 2.0

    def key(zone: CandidateZone):
        return (-zone.safe_ratio, -zone.area,
                math.hypot(zone.cx - cx0, zone.cy - cy0), zone.index)

    return [z.index for z in sorted(candidates, key=key)]


def rank_zones(backend, candidates: list[CandidateZone], preference: str,
               rgb_frames, annotated_overlay, top_n: int,
               width: int, height: int) -> RankingResult:
    """VLM ranking with heuristic fill; pure heuristic on backend failure."""
    if not candidates:
        raise ValueError("rank_zones requires a non-empty candidate list")
    want = min(top_n, len(candidates))
    fallback = heuristic_rank(candidates, width, height)
    try:
        request = build_agent2_request(candidates, preference, rgb_frames,
                                       annotated_overlay, top_n, width, height)
        reply = backend.complete(request)
        entries = parse_agent2_response(reply, len(candidates), top_n)
    except BackendError:
        entries = None
    if entries is None:
        picked = [RankedZone(i, HEURISTIC_REASON) for i in fallback[:want]]
        return RankingResult(picked, "heuristic")
    chosen = {e.index for e in entries}
    filled = False
    for idx in fallback:
        if len(entries) >= want:
            break
        if idx in chosen:
            continue
        entries.append(RankedZone(idx, HEURISTIC_REASON))
        chosen.add(idx)
        filled = True
    source = "vlm" if not filled else ("vlm+heuristic" if len(entries) > 0 else "heuristic")
    if filled and all(e.reason == HEURISTIC_REASON for e in entries):
        source = "heuristic"
    return RankingResult(entries[:want], source)


def pad_safety_success_rate(runs_per_frame: list[list[int]]) -> float:
    """Mean over frames of per-frame run means (the 5-run protocol)."""
    if not runs_per_frame:
        raise ValueError("no frames supplied")
    frame_means = []
    for runs in runs_per_frame:
        if not runs:
            raise ValueError("every frame needs at least one run")
        frame_means.append(sum(runs) / len(runs))
    return sum(frame_means) / len(frame_means)
