import base64

import numpy as np
import pytest

from dropzone.agents import AgentRequest, Attachment
from dropzone.errors import BackendError, FixtureMissingError
from dropzone.vlm import (LiveVlmBackend, ReplayVlmBackend, ScriptedVlmBackend,
                          VlmBackend)


def simple_request():
    return AgentRequest(system="sys", user="hello",
                        attachments=[Attachment(
                            "rgb", np.zeros((2, 2, 3), dtype=np.uint8))])


class TestScripted:
    def test_cycles(self):
        b = ScriptedVlmBackend(["a", "b"])
        got = [b.complete(simple_request()) for _ in range(5)]
        assert got == ["a", "b", "a", "b", "a"]

    def test_fail_mode(self):
        b = ScriptedVlmBackend(fail=True)
        with pytest.raises(BackendError):
            b.complete(simple_request())

    def test_protocol(self):
        assert isinstance(ScriptedVlmBackend(), VlmBackend)


class TestReplay:
    def test_record_and_replay(self, tmp_path):
        b = ReplayVlmBackend(tmp_path)
        b.set_context("batch_000", "agent1", 2)
        b.record('{"ok": true}')
        assert (tmp_path / "batch_000__agent1__run2.txt").exists()
        assert b.complete(simple_request()) == '{"ok": true}'
        b.set_context("batch_000", "agent1", 3)
        with pytest.raises(FixtureMissingError):
            b.complete(simple_request())


class _Response:
    def __init__(self, payload, fail=False):
        self.payload = payload
        self.fail = fail

    def raise_for_status(self):
        if self.fail:
            raise RuntimeError("http 500")

    def json(self):
        return self.payload


class _Session:
    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append((url, json, headers))
        return self.responses[min(len(self.requests), len(self.responses)) - 1]


class TestLive:
    def _ok(self, text="reply"):
        return _Response({"choices": [{"message": {"content": text}}]})

    def test_payload_shape(self):
        session = _Session([self._ok()])
        b = LiveVlmBackend("http://x/v1/chat", "model-z", session=session,
                           backoff=0.0)
        assert b.complete(simple_request()) == "reply"
        _, payload, _ = session.requests[0]
        assert payload["model"] == "model-z"
        system, user = payload["messages"]
        assert system == {"role": "system", "content": "sys"}
        assert user["role"] == "user"
        text_part, image_part = user["content"]
        assert text_part == {"type": "text", "text": "hello"}
        url = image_part["image_url"]["url"]
        prefix = "data:image/png;base64,"
        assert url.startswith(prefix)
        png = base64.b64decode(url[len(prefix):])
        assert png[:8] == b"\x89PNG\r\n\x1a\n"

    def test_no_system_message(self):
        session = _Session([self._ok()])
        b = LiveVlmBackend("http://x", "m", session=session, backoff=0.0)
        b.complete(AgentRequest(system=None, user="u"))
        assert [m["role"] for m in session.requests[0][1]["messages"]] == ["user"]

    def test_retries_then_gives_up(self):
        session = _Session([_Response({}, fail=True)])
        b = LiveVlmBackend("http://x", "m", session=session, backoff=0.0,
                           retries=2)
        with pytest.raises(BackendError) as err:
            b.complete(simple_request())
        assert err.value.attempts == 3
        assert len(session.requests) == 3
