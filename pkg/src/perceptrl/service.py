"""Stateless HTTP scoring service.

POST /score takes a batch of rollouts with their gold answers and key sets
and returns one reward breakdown per item. GET /health reports version,
uptime, and the number of batches served. Responses are canonical JSON
(sorted keys, tight separators) so identical requests under an identical
config produce byte-identical bodies; the golden fixtures in tests pin the
wire format. Training state never lives here: the optimizer step that
selects the schedule weights arrives with each item.

One malformed item fails that item alone; the rest of the batch scores
normally. Whole-request failures (bad JSON, oversized batch, wrong route)
return a structured JSON error.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Optional

from . import __version__
from .config import EngineConfig, canonical_dumps
from .rewards import ACCURACY_POLICIES, ConfigError, schedule_weights, score_rollout

__all__ = ["RewardService", "score_batch", "score_item", "validate_item"]

_MAX_BODY_BYTES = 64 * 1024 * 1024


class _Server(ThreadingHTTPServer):
    # default accept backlog (5) drops bursts of concurrent trainers
    request_queue_size = 128


def validate_item(item: Any) -> dict:
    """Normalize one request item; raises ValueError with a reason."""
    if not isinstance(item, dict):
        raise ValueError(f"item must be an object, got {type(item).__name__}")
    out: dict[str, Any] = {}
    rollout = item.get("rollout_text")
    if not isinstance(rollout, str):
        raise ValueError("rollout_text must be a string")
    out["rollout_text"] = rollout
    gold = item.get("gold_answer", item.get("answer"))
    if not isinstance(gold, str) or not gold:
        raise ValueError("gold_answer must be a non-empty string")
    out["gold_answer"] = gold
    policy = item.get("match_policy", "normalized-exact")
    if policy not in ACCURACY_POLICIES:
        raise ValueError(f"match_policy must be one of {list(ACCURACY_POLICIES)}")
    out["match_policy"] = policy
    for key in ("visual_keys", "textual_keys"):
        values = item.get(key, [])
        if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
            raise ValueError(f"{key} must be a list of strings")
        out[key] = values
    question = item.get("question", "")
    if not isinstance(question, str):
        raise ValueError("question must be a string")
    out["question"] = question
    step = item.get("step")
    total_steps = item.get("total_steps")
    if (step is None) != (total_steps is None):
        raise ValueError("step and total_steps must be provided together")
    if step is not None:
        if not isinstance(step, int) or not isinstance(total_steps, int):
            raise ValueError("step and total_steps must be integers")
        if total_steps < 1 or not (0 <= step <= total_steps):
            raise ValueError("need 0 <= step <= total_steps and total_steps >= 1")
    out["step"] = step
    out["total_steps"] = total_steps
    return out


def score_item(item: dict, config: EngineConfig) -> dict:
    """Breakdown + diagnostics for one already-validated item."""
    reward_cfg = config.reward
    if item["step"] is not None:
        weights = schedule_weights(item["step"], item["total_steps"], reward_cfg.schedule)
    else:
        weights = reward_cfg.weights
    score = score_rollout(
        item["rollout_text"],
        item["gold_answer"],
        match_policy=item["match_policy"],
        visual_keys=item["visual_keys"],
        textual_keys=item["textual_keys"],
        question=item["question"],
        weights=weights,
        config=reward_cfg,
    )
    return {
        "breakdown": score.breakdown.to_dict(),
        "diagnostics": score.diagnostics.to_dict(),
    }


def score_batch(items: Any, config: EngineConfig) -> list[dict]:
    """Score a batch with per-item error isolation.

    Returns one result object per input item, each carrying either a
    breakdown or an error message, never both.
    """
    if not isinstance(items, list):
        raise ValueError("items must be a list")
    results = []
    for index, item in enumerate(items):
        try:
            scored = score_item(validate_item(item), config)
            results.append(
                {
                    "index": index,
                    "breakdown": scored["breakdown"],
                    "diagnostics": scored["diagnostics"],
                    "error": None,
                }
            )
        except (ValueError, ConfigError) as exc:
            results.append(
                {
                    "index": index,
                    "breakdown": None,
                    "diagnostics": None,
                    "error": str(exc),
                }
            )
    return results


@dataclass
class _Counters:
    batches: int = 0
    items: int = 0
    errors: int = 0


class RewardService:
    """Threaded HTTP server wrapping score_batch over one fixed config."""

    def __init__(self, config: EngineConfig, host: str = "127.0.0.1", port: int = 8731):
        self.config = config
        self.config_hash = config.config_hash()
        self._counters = _Counters()
        self._lock = threading.Lock()
        self._started = time.monotonic()
        handler = self._make_handler()
        self._httpd = _Server((host, port), handler)
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._httpd.server_address[:2]
        return str(host), int(port)

    @property
    def counters(self) -> dict:
        with self._lock:
            return {
                "batches": self._counters.batches,
                "items": self._counters.items,
                "errors": self._counters.errors,
            }

    def handle_score(self, payload: Any) -> tuple[int, dict]:
        if not isinstance(payload, dict):
            return 400, {"error": "request body must be a JSON object"}
        items = payload.get("items")
        if not isinstance(items, list) or not items:
            return 400, {"error": "items must be a non-empty list"}
        if len(items) > self.config.max_batch:
            return 413, {
                "error": f"batch of {len(items)} exceeds max_batch {self.config.max_batch}",
                "max_batch": self.config.max_batch,
            }
        results = score_batch(items, self.config)
        errors = sum(1 for r in results if r["error"] is not None)
        with self._lock:
            self._counters.batches += 1
            self._counters.items += len(items)
            self._counters.errors += errors
        return 200, {
            "engine_version": __version__,
            "config_hash": self.config_hash,
            "results": results,
        }

    def handle_health(self) -> tuple[int, dict]:
        with self._lock:
            served = self._counters.batches
            items = self._counters.items
        return 200, {
            "status": "ok",
            "engine_version": __version__,
            "config_hash": self.config_hash,
            "uptime_seconds": round(time.monotonic() - self._started, 3),
            "requests_served": served,
            "items_scored": items,
        }

    def _make_handler(self):
        service = self

        class Handler(BaseHTTPRequestHandler):
            server_version = f"perceptrl/{__version__}"
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):  # quiet by default
                pass

            def _send(self, status: int, body: dict) -> None:
                data = canonical_dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json; charset=utf-8")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self):
                if self.path == "/health":
                    self._send(*service.handle_health())
                else:
                    self._send(404, {"error": f"unknown path {self.path}"})

            def do_POST(self):
                if self.path != "/score":
                    self._send(404, {"error": f"unknown path {self.path}"})
                    return
                length = int(self.headers.get("Content-Length", 0))
                if length > _MAX_BODY_BYTES:
                    self._send(413, {"error": "request body too large"})
                    return
                raw = self.rfile.read(length)
                try:
                    payload = json.loads(raw)
                except ValueError as exc:
                    self._send(400, {"error": f"invalid JSON body: {exc}"})
                    return
                try:
                    self._send(*service.handle_score(payload))
                except Exception as exc:  # defensive: never kill the worker
                    self._send(500, {"error": f"internal error: {exc}"})

        return Handler

    def start(self) -> None:
        """Serve in a daemon thread (tests and embedded use)."""
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
