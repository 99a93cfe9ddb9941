"""Small JSON-over-HTTP helper with bounded retries."""

import time

import requests

from .errors import ProtocolError, RemoteError


def post_json(url: str, payload: dict, *, timeout: float = 10.0,
              max_retries: int = 3, backoff: float = 0.05) -> dict:
    """POST a JSON payload and return the decoded JSON response.

    Connection errors, timeouts and 5xx statuses are retried up to
    ``max_retries`` attempts with linear backoff; any other non-200
    status fails immediately.
    """
    last: Exception | None = None
    for attempt in range(max_retries):
        try:
            resp = requests.post(url, json=payload, timeout=timeout)
        except requests.RequestException as exc:
            last = exc
            time.sleep(backoff * (attempt + 1))
            continue
        if resp.status_code >= 500:
            last = RemoteError(f"{url} answered {resp.status_code}")
            time.sleep(backoff * (attempt + 1))
            continue
        if resp.status_code != 200:
            raise RemoteError(f"{url} answered {resp.status_code}")
        try:
            body = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"non-JSON response from {url}") from exc
        if not isinstance(body, dict):
            raise ProtocolError(f"expected a JSON object from {url}")
        return body
    raise RemoteError(f"{url} unreachable after {max_retries} attempts: {last}")
