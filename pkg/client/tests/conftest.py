"""Test servers: the real service as a subprocess, plus a scriptable stub."""

from __future__ import annotations

import json
import os
import socket
import subprocess
import sys
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from plsearch_client import Client, ClientConfig


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture(scope="session")
def live_server():
    """The installed plsearch service, spawned through its CLI."""
    port = free_port()
    env = dict(os.environ, PLSEARCH_MAX_BATCH="16")
    proc = subprocess.Popen(
        [sys.executable, "-m", "plsearch.cli", "serve", "--addr", f"127.0.0.1:{port}"],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        env=env,
    )
    base_url = f"http://127.0.0.1:{port}"
    probe = Client(ClientConfig(base_url=base_url, timeout_seconds=2, max_retries=0))
    deadline = time.time() + 20
    ready = False
    while time.time() < deadline:
        try:
            if probe.healthz()["status"] == "ok":
                ready = True
                break
        except Exception:
            time.sleep(0.2)
    if not ready:
        proc.kill()
        raise RuntimeError("service did not come up")
    yield base_url
    proc.terminate()
    proc.wait(timeout=10)


class _ScriptedHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("content-length", 0))
        body = self.rfile.read(length)
        self.server.requests.append(json.loads(body) if body else None)
        script = self.server.script
        status, payload = script[min(len(self.server.requests) - 1, len(script) - 1)]
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("content-type", "application/json")
        self.send_header("content-length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    """HTTP stub that replays a scripted list of (status, json_body) answers."""
    servers = []

    def start(script):
        server = HTTPServer(("127.0.0.1", 0), _ScriptedHandler)
        server.script = script
        server.requests = []
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        servers.append((server, thread))
        return server, f"http://127.0.0.1:{server.server_port}"

    yield start
    for server, thread in servers:
        server.shutdown()
        thread.join(timeout=5)
        server.server_close()
