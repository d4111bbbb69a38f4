import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

_REL_LINE = re.compile(r"^\[REL_(\d+)\]: (.*)$")


def canned_explanation(text: str) -> str:
    head = text.split()[0].lower()
    return (f"This indicates an interaction described as '{text}', i.e. an "
            f"act of {head} between two parties.")


class MockChatHandler(BaseHTTPRequestHandler):
    """OpenAI-style chat completions endpoint with scripted failures."""

    def do_POST(self):
        server = self.server
        server.request_count += 1
        if server.fail_next > 0:
            server.fail_next -= 1
            self.send_response(503)
            self.end_headers()
            self.wfile.write(b"overloaded")
            return
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        prompt = payload["messages"][0]["content"]
        lines = []
        for raw in prompt.splitlines():
            match = _REL_LINE.match(raw)
            if match:
                idx, text = int(match.group(1)), match.group(2)
                if server.drop_index == idx:
                    continue
                if server.garble:
                    lines.append(f"EXP {idx} -> {canned_explanation(text)}")
                else:
                    lines.append(f"[EXP_{idx}]: {canned_explanation(text)}")
        body = json.dumps({
            "model": payload["model"],
            "choices": [{"message": {"role": "assistant",
                                     "content": "\n".join(lines)}}],
        }).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


class MockChatServer:
    def __init__(self):
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), MockChatHandler)
        self.httpd.request_count = 0
        self.httpd.fail_next = 0
        self.httpd.drop_index = None
        self.httpd.garble = False
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def endpoint(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    @property
    def request_count(self) -> int:
        return self.httpd.request_count

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def chat_server():
    server = MockChatServer()
    yield server
    server.stop()
