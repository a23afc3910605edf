"""Client behavior against a real scoring service and scripted fakes.

The equivalence tests are the point of this package: whatever the client
returns must be byte-for-byte the service's own answer, whether the same
items went through the CLI or through one oversized wire request.
"""

from __future__ import annotations

import json
import socket
import subprocess
import sys
import threading
import urllib.request
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import pytest

from trainer_client import (
    ClientConfig,
    CompatibilityError,
    RewardClient,
    ServiceError,
    TransportError,
    __version__,
)

FIXTURE = Path(__file__).parent / "fixtures" / "rollouts.jsonl"


def load_fixture_items() -> list[dict]:
    return [json.loads(line) for line in FIXTURE.read_text().splitlines()]


def free_port() -> int:
    """A port that was just free; nothing listens on it afterwards."""
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    return port


class _FakeService:
    """Scripted HTTP server for failure paths the real service won't produce."""

    def __init__(self, version: str = "0.1.0", post_status: int = 200,
                 post_body: dict | None = None):
        self.post_hits = 0
        fake = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _reply(self, status: int, body: dict):
                data = json.dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self):
                self._reply(200, {"status": "ok", "engine_version": version,
                                  "requests_served": 0})

            def do_POST(self):
                fake.post_hits += 1
                self.rfile.read(int(self.headers.get("Content-Length", 0)))
                self._reply(post_status, post_body or {"results": []})

        self._httpd = HTTPServer(("127.0.0.1", 0), Handler)
        self.endpoint = f"http://127.0.0.1:{self._httpd.server_address[1]}"

    def __enter__(self):
        threading.Thread(target=self._httpd.serve_forever, daemon=True).start()
        return self

    def __exit__(self, *exc):
        self._httpd.shutdown()
        self._httpd.server_close()


# -- configuration -------------------------------------------------------


def test_config_defaults_are_valid():
    cfg = ClientConfig()
    assert cfg.endpoint.startswith("http://")
    assert cfg.retries == 2
    assert cfg.max_batch == 64


@pytest.mark.parametrize(
    "kwargs",
    [
        {"endpoint": "ftp://somewhere"},
        {"endpoint": "127.0.0.1:8731"},
        {"timeout": 0},
        {"timeout": -1.5},
        {"retries": -1},
        {"max_batch": 0},
    ],
)
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        ClientConfig(**kwargs)


def test_version_exported():
    assert __version__.count(".") == 2


# -- health and compatibility ---------------------------------------------


def test_ping_returns_health_body(service_endpoint):
    client = RewardClient(ClientConfig(endpoint=service_endpoint))
    info = client.ping()
    assert info["status"] == "ok"
    assert isinstance(info["engine_version"], str)
    assert isinstance(info["requests_served"], int)
    assert client.server_info is None  # ping alone does not bind the client


def test_connect_accepts_current_engine(service_endpoint):
    client = RewardClient(ClientConfig(endpoint=service_endpoint))
    info = client.connect()
    assert client.server_info is info
    assert int(info["engine_version"].split(".")[0]) == 0


@pytest.mark.parametrize("version", ["9.0.0", "1.0.0", "banana", ""])
def test_connect_rejects_unknown_majors(version):
    with _FakeService(version=version) as fake:
        client = RewardClient(ClientConfig(endpoint=fake.endpoint))
        with pytest.raises(CompatibilityError):
            client.connect()
        assert client.server_info is None


# -- equivalence with the CLI ----------------------------------------------


def test_submit_batch_matches_cli_score(service_endpoint, tmp_path):
    """Same items, two front doors, identical results.

    The fixture covers a full-score rollout, a scheduled one, a wrong
    answer, a numeric-policy answer, and a field error that must surface
    per item rather than fail the batch.
    """
    out_path = tmp_path / "scored.jsonl"
    proc = subprocess.run(
        [sys.executable, "-m", "perceptrl", "score",
         "--input", str(FIXTURE), "--output", str(out_path)],
        capture_output=True, text=True, check=True,
    )
    cli_results = [json.loads(line) for line in out_path.read_text().splitlines()]
    cli_summary = json.loads(proc.stdout)

    client = RewardClient(ClientConfig(endpoint=service_endpoint))
    items = load_fixture_items()
    wire_results = client.submit_batch(items)

    assert wire_results == cli_results
    assert cli_summary["items"] == len(items)
    assert cli_summary["errors"] == 1
    assert cli_summary["config_hash"] == client.server_info["config_hash"]

    # spot-check the scenarios the fixture encodes
    assert wire_results[0]["breakdown"]["total"] == pytest.approx(5.0)
    scheduled = wire_results[1]["breakdown"]["total"]
    assert scheduled < wire_results[0]["breakdown"]["total"]
    assert wire_results[2]["breakdown"]["r_acc"] == 0.0
    assert wire_results[3]["breakdown"]["r_acc"] == 1.0
    assert wire_results[4]["error"] == "gold_answer must be a non-empty string"
    assert wire_results[4]["breakdown"] is None


# -- chunking ---------------------------------------------------------------


def make_large_batch(n: int) -> list[dict]:
    items = []
    for i in range(n):
        items.append({
            "rollout_text": (f"<description>panel {i} shows {i % 7} dots"
                             f"</description><think>count gives {i}</think>"
                             f"<answer>{i}</answer>"),
            "gold_answer": str(i if i % 3 else i + 1),  # every third one wrong
            "visual_keys": ["panel", "dots"],
            "textual_keys": [str(i % 7)],
        })
    return items


def test_chunked_submission_preserves_order(service_endpoint):
    items = make_large_batch(200)
    client = RewardClient(ClientConfig(endpoint=service_endpoint, max_batch=64))
    client.connect()

    before = client.ping()["requests_served"]
    chunked = client.submit_batch(items)
    after = client.ping()["requests_served"]

    assert [r["index"] for r in chunked] == list(range(200))
    assert after - before == 4  # ceil(200 / 64) wire requests, health exempt

    # one direct oversized request is the reference answer
    req = urllib.request.Request(
        service_endpoint + "/score",
        data=json.dumps({"items": items}).encode("utf-8"),
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(req, timeout=30) as resp:
        direct = json.loads(resp.read())["results"]
    assert chunked == direct


def test_single_item_chunks(service_endpoint):
    items = load_fixture_items()[:3]
    client = RewardClient(ClientConfig(endpoint=service_endpoint, max_batch=1))
    one_by_one = client.submit_batch(items)
    together = RewardClient(
        ClientConfig(endpoint=service_endpoint)).submit_batch(items)
    assert one_by_one == together


# -- error handling ---------------------------------------------------------


def test_item_errors_do_not_fail_the_batch(service_endpoint):
    client = RewardClient(ClientConfig(endpoint=service_endpoint))
    results = client.submit_batch([
        {"rollout_text": "<answer>3</answer>", "gold_answer": "3"},
        {"rollout_text": 42, "gold_answer": "3"},
    ])
    assert results[0]["error"] is None
    assert results[1]["error"] == "rollout_text must be a string"
    assert results[1]["diagnostics"] is None


def test_dead_endpoint_raises_transport_error():
    cfg = ClientConfig(endpoint=f"http://127.0.0.1:{free_port()}",
                       timeout=2.0, retries=2)
    with pytest.raises(TransportError) as excinfo:
        RewardClient(cfg).ping()
    assert "3 attempts" in str(excinfo.value)
    assert isinstance(excinfo.value.last_failure, OSError)


def test_protocol_errors_are_not_retried():
    body = {"error": "boom"}
    with _FakeService(post_status=500, post_body=body) as fake:
        cfg = ClientConfig(endpoint=fake.endpoint, retries=3)
        client = RewardClient(cfg)
        with pytest.raises(ServiceError) as excinfo:
            client.submit_batch([{"rollout_text": "x", "gold_answer": "y"}])
        assert fake.post_hits == 1  # a served error burns no retries
        assert excinfo.value.status == 500
        assert excinfo.value.body == body


def test_short_result_list_is_an_error():
    with _FakeService(post_body={"results": []}) as fake:
        client = RewardClient(ClientConfig(endpoint=fake.endpoint))
        with pytest.raises(ServiceError):
            client.submit_batch([{"rollout_text": "x", "gold_answer": "y"}])


def test_empty_batch_never_touches_the_wire():
    cfg = ClientConfig(endpoint=f"http://127.0.0.1:{free_port()}", timeout=1.0)
    assert RewardClient(cfg).submit_batch([]) == []


def test_submit_batch_rejects_non_list(service_endpoint):
    client = RewardClient(ClientConfig(endpoint=service_endpoint))
    with pytest.raises(TypeError):
        client.submit_batch({"rollout_text": "x"})


# -- independence ------------------------------------------------------------


def test_package_owns_no_scoring_code():
    """Every score must cross the wire; the engine is never imported here."""
    package_dir = Path(__file__).resolve().parents[1] / "src" / "trainer_client"
    for source in package_dir.rglob("*.py"):
        for line in source.read_text().splitlines():
            head = line.strip()
            assert not head.startswith(("import perceptrl", "from perceptrl")), \
                f"{source}: {head}"
