"""Synchronous wire client for the reward-scoring service.

The client owns no scoring logic: every number in a result came over the
wire, so client output is item-for-item identical to hitting the service
directly (or to the `perceptrl score` CLI under the same config). Batches
larger than `max_batch` are split into consecutive chunks and the results
spliced back together with global indices; callers never see the seams.

A single client instance serializes its requests. Use one instance per
thread if you want parallel submission.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Any, Optional

# Engine major version this client speaks. Checked against /health on
# connect; the wire format is allowed to change between majors.
SUPPORTED_ENGINE_MAJOR = 0

__all__ = [
    "ClientConfig",
    "CompatibilityError",
    "RewardClient",
    "ServiceError",
    "SUPPORTED_ENGINE_MAJOR",
    "TransportError",
]


class TransportError(RuntimeError):
    """Could not reach the service; carries the last underlying failure."""

    def __init__(self, message: str, last_failure: Optional[BaseException] = None):
        super().__init__(message)
        self.last_failure = last_failure


class ServiceError(RuntimeError):
    """The service answered with a whole-request error (4xx/5xx)."""

    def __init__(self, status: int, body: Any):
        super().__init__(f"service returned {status}: {body}")
        self.status = status
        self.body = body


class CompatibilityError(RuntimeError):
    """The service speaks an engine version this client does not."""


@dataclass(frozen=True)
class ClientConfig:
    endpoint: str = "http://127.0.0.1:8731"
    timeout: float = 10.0
    retries: int = 2  # retries after the first attempt, transport errors only
    max_batch: int = 64

    def __post_init__(self):
        if not self.endpoint.startswith(("http://", "https://")):
            raise ValueError(f"endpoint must be an http(s) URL, got {self.endpoint!r}")
        if not self.timeout > 0:
            raise ValueError(f"timeout must be > 0, got {self.timeout}")
        if self.retries < 0:
            raise ValueError(f"retries must be >= 0, got {self.retries}")
        if self.max_batch < 1:
            raise ValueError(f"max_batch must be >= 1, got {self.max_batch}")


class RewardClient:
    """Submit rollout batches for scoring; see module docstring."""

    def __init__(self, config: Optional[ClientConfig] = None):
        self.config = config or ClientConfig()
        self.server_info: Optional[dict] = None  # /health body from connect()

    # -- wire plumbing ---------------------------------------------------

    def _request(self, path: str, payload: Optional[dict] = None) -> dict:
        """One logical request with bounded transport retries."""
        url = self.config.endpoint.rstrip("/") + path
        data = None if payload is None else json.dumps(payload).encode("utf-8")
        last: Optional[BaseException] = None
        for _ in range(self.config.retries + 1):
            req = urllib.request.Request(
                url, data=data, headers={"Content-Type": "application/json"}
            )
            try:
                with urllib.request.urlopen(req, timeout=self.config.timeout) as resp:
                    return json.loads(resp.read())
            except urllib.error.HTTPError as err:
                # the service answered: a protocol error, not a transport one
                try:
                    body = json.loads(err.read())
                except ValueError:
                    body = None
                raise ServiceError(err.code, body) from err
            except (urllib.error.URLError, OSError, TimeoutError) as err:
                last = err
        raise TransportError(
            f"{url} unreachable after {self.config.retries + 1} attempts: {last}",
            last_failure=last,
        )

    # -- public API ------------------------------------------------------

    def ping(self) -> dict:
        """The service's /health body, verbatim."""
        return self._request("/health")

    def connect(self) -> dict:
        """Ping and verify the engine version; caches the health body."""
        info = self.ping()
        version = str(info.get("engine_version", ""))
        major = version.split(".", 1)[0]
        if not major.isdigit() or int(major) != SUPPORTED_ENGINE_MAJOR:
            raise CompatibilityError(
                f"service engine {version!r} is not compatible with this client "
                f"(supported major: {SUPPORTED_ENGINE_MAJOR})"
            )
        self.server_info = info
        return info

    def submit_batch(self, items: list[dict]) -> list[dict]:
        """Score items in order; transparently chunks oversized batches.

        Returns one result per item ({index, breakdown, diagnostics, error})
        with indices renumbered to the caller's order. Per-item errors come
        back in the error field; whole-request failures raise.
        """
        if not isinstance(items, list):
            raise TypeError("items must be a list")
        if not items:
            return []
        if self.server_info is None:
            self.connect()

        results: list[dict] = []
        for start in range(0, len(items), self.config.max_batch):
            chunk = items[start:start + self.config.max_batch]
            body = self._request("/score", {"items": chunk})
            chunk_results = body["results"]
            if len(chunk_results) != len(chunk):
                raise ServiceError(200, f"expected {len(chunk)} results, "
                                        f"got {len(chunk_results)}")
            for offset, result in enumerate(chunk_results):
                merged = dict(result)
                merged["index"] = start + offset
                results.append(merged)
        return results
