"""Spins up a real scoring service once per session.

The service is driven purely through its external surface: a `perceptrl
serve` subprocess and plain HTTP. Nothing here imports the engine.
"""

from __future__ import annotations

import json
import signal
import subprocess
import sys
import time
import urllib.request

import pytest


@pytest.fixture(scope="session")
def service_endpoint():
    proc = subprocess.Popen(
        [sys.executable, "-m", "perceptrl", "serve", "--listen", "127.0.0.1:0"],
        stderr=subprocess.PIPE,
        text=True,
    )
    try:
        banner = proc.stderr.readline()
        if "http://" not in banner:
            proc.kill()
            raise RuntimeError(
                f"scoring service failed to start (is perceptrl installed?): {banner!r}"
            )
        port = int(banner.split("http://", 1)[1].split()[0].rsplit(":", 1)[1])
        endpoint = f"http://127.0.0.1:{port}"
        deadline = time.monotonic() + 10
        while True:
            try:
                with urllib.request.urlopen(f"{endpoint}/health", timeout=1) as resp:
                    assert json.loads(resp.read())["status"] == "ok"
                break
            except OSError:
                if time.monotonic() > deadline:
                    raise RuntimeError("service never became healthy")
                time.sleep(0.05)
        yield endpoint
    finally:
        if proc.poll() is None:
            proc.send_signal(signal.SIGTERM)
            try:
                proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
