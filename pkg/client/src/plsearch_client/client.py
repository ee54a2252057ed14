"""HTTP client for the plsearch scoring and curation service.

Retries apply only to 503 responses and transport failures, with exponential
backoff; 4xx responses map to typed errors immediately.  Request payloads are
never mutated, so the serialized body matches the service schema exactly.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import requests

DEFAULT_TIMEOUT_SECONDS = 30.0
DEFAULT_MAX_RETRIES = 3
DEFAULT_BACKOFF_SECONDS = 0.5


class ClientError(Exception):
    """Base error for all client failures."""

    status: int | None = None


class BadRequestError(ClientError):
    """The service rejected the request body (HTTP 400); never retried."""

    status = 400


class BatchTooLargeError(ClientError):
    """The batch exceeds the service limit (HTTP 413); never retried."""

    status = 413


class RetryExhaustedError(ClientError):
    """Retries ran out on 503s or transport failures; carries the last status."""

    def __init__(self, message: str, last_status: int | None):
        super().__init__(message)
        self.last_status = last_status


def _default_base_url() -> str:
    addr = os.environ.get("PLSEARCH_ADDR", "127.0.0.1:8080")
    if addr.startswith(("http://", "https://")):
        return addr.rstrip("/")
    return f"http://{addr}"


@dataclass(frozen=True)
class ClientConfig:
    base_url: str = ""
    timeout_seconds: float = DEFAULT_TIMEOUT_SECONDS
    max_retries: int = DEFAULT_MAX_RETRIES
    backoff_seconds: float = DEFAULT_BACKOFF_SECONDS

    def __post_init__(self):
        if not self.base_url:
            object.__setattr__(self, "base_url", _default_base_url())
        if self.timeout_seconds <= 0:
            raise ValueError("timeout_seconds must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.backoff_seconds < 0:
            raise ValueError("backoff_seconds must be >= 0")


class Client:
    """Thread-safe synchronous client; each call is independent."""

    def __init__(self, config: ClientConfig | None = None, session: requests.Session | None = None):
        self.config = config or ClientConfig()
        self._session = session or requests.Session()

    def healthz(self) -> dict:
        return self._request("GET", "/healthz", None)

    def score_batch(self, rollouts: list[dict], config: dict | None = None) -> list[dict]:
        """Score a rollout batch; returns one breakdown record per input."""
        if not rollouts:
            raise ValueError("rollouts must be non-empty")
        body: dict = {"rollouts": rollouts}
        if config is not None:
            body["config"] = config
        return self._request("POST", "/v1/score", body)["results"]

    def filter_remote(
        self,
        rollouts: list[dict],
        weights: dict | None = None,
        sampler: dict | None = None,
    ) -> tuple[list[str], dict]:
        """Run the remote curation pipeline; returns (selected_ids, report)."""
        if not rollouts:
            raise ValueError("rollouts must be non-empty")
        body = {"rollouts": rollouts, "weights": weights, "sampler": sampler}
        data = self._request("POST", "/v1/filter", body)
        return data["selected_ids"], data["report"]

    def _request(self, method: str, path: str, body: dict | None) -> dict:
        url = f"{self.config.base_url}{path}"
        last_status: int | None = None
        last_error = "no attempt made"
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.config.backoff_seconds * (2 ** (attempt - 1)))
            try:
                response = self._session.request(
                    method, url, json=body, timeout=self.config.timeout_seconds
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_status = None
                last_error = str(exc)
                continue
            if response.status_code == 200:
                return response.json()
            detail = _error_detail(response)
            if response.status_code == 400:
                raise BadRequestError(detail)
            if response.status_code == 413:
                raise BatchTooLargeError(detail)
            if response.status_code == 503:
                last_status = 503
                last_error = detail
                continue
            error = ClientError(f"unexpected status {response.status_code}: {detail}")
            error.status = response.status_code
            raise error
        raise RetryExhaustedError(
            f"request to {url} failed after {self.config.max_retries + 1} attempts: {last_error}",
            last_status,
        )


def _error_detail(response: requests.Response) -> str:
    try:
        payload = response.json()
        return str(payload.get("error") or payload)
    except ValueError:
        return response.text[:200]
