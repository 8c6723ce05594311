"""VLM backends: live OpenAI-compatible client, replay fixtures, scripted."""
from __future__ import annotations

import base64
import io
import os
import time
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .agents import AgentRequest
from .errors import BackendError, FixtureMissingError


@runtime_checkable
class VlmBackend(Protocol):
    def complete(self, request: AgentRequest) -> str: ...


class ScriptedVlmBackend:
    """Canned responses for tests; cycles through the supplied list.

    ``fail=True`` raises BackendError on every call, exercising the pure
    heuristic fallback path.
    """

    def __init__(self, responses: list[str] | None = None, fail: bool = False):
        self.responses = list(responses or [])
        self.fail = fail
        self.calls = 0

    def complete(self, request: AgentRequest) -> str:
        self.calls += 1
        if self.fail:
            raise BackendError("scripted failure", attempts=1)
        if not self.responses:
            raise BackendError("no scripted responses left", attempts=1)
        return self.responses[(self.calls - 1) % len(self.responses)]


class ReplayVlmBackend:
    """Serves raw recorded replies, one text file per (batch, agent, run)."""

    def __init__(self, fixture_dir):
        self.fixture_dir = Path(fixture_dir)
        self.batch_id = ""
        self.agent = ""
        self.run = 0

    def set_context(self, batch_id: str, agent: str, run: int) -> None:
        self.batch_id = str(batch_id)
        self.agent = agent
        self.run = run

    def fixture_path(self) -> Path:
        name = f"{self.batch_id}__{self.agent}__run{self.run}.txt"
        return self.fixture_dir / name

    def complete(self, request: AgentRequest) -> str:
        path = self.fixture_path()
        if not path.exists():
            raise FixtureMissingError(f"VLM fixture not found: {path}")
        return path.read_text(encoding="utf-8")

    def record(self, text: str) -> Path:
        path = self.fixture_path()
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return path


class LiveVlmBackend:
    """OpenAI-compatible chat-completions client with bounded retries."""

    def __init__(self, endpoint: str, model: str,
                 api_key_env: str = "VLM_API_KEY",
                 retries: int = 2, backoff: float = 0.5, session=None):
        self.endpoint = endpoint
        self.model = model
        self.api_key = os.environ.get(api_key_env, "")
        self.retries = retries
        self.backoff = backoff
        if session is None:
            import requests
            session = requests.Session()
        self.session = session

    @staticmethod
    def _image_part(image: np.ndarray) -> dict:
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buf, format="PNG")
        data = base64.b64encode(buf.getvalue()).decode("ascii")
        return {"type": "image_url",
                "image_url": {"url": f"data:image/png;base64,{data}"}}

    def _payload(self, request: AgentRequest) -> dict:
        content = [{"type": "text", "text": request.user}]
        content.extend(self._image_part(a.image) for a in request.attachments)
        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        messages.append({"role": "user", "content": content})
        return {"model": self.model, "messages": messages}

    def complete(self, request: AgentRequest) -> str:
        payload = self._payload(request)
        last = None
        for attempt in range(self.retries + 1):
            try:
                resp = self.session.post(
                    self.endpoint, json=payload,
                    headers={"Authorization": f"Bearer {self.api_key}"},
                    timeout=300)
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except Exception as exc:  # noqa: BLE001 - transport errors retried
                last = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (2 ** attempt))
        raise BackendError(
            f"VLM request failed after {self.retries + 1} attempts: {last}",
            attempts=self.retries + 1)
