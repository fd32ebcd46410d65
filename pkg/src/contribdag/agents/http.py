"""Chat-completion backend over HTTP (OpenAI-compatible request/response shapes).

Request body::

    {"model": ..., "messages": [{"role": "system", ...}, {"role": "user", ...}],
     "max_tokens": 2048, "temperature": 0.5}

Response body: ``choices[0].message.content`` is the reply,
``choices[0].finish_reason == "length"`` marks truncation, and
``usage.prompt_tokens`` / ``usage.completion_tokens`` feed token accounting.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass

import requests

from ..embedding import HashEmbedder, HttpEmbedder
from ..errors import MalformedResponseError, StatusError, TransportError
from .base import ResponseRecord
from .roles import PromptBundle, RoleProfile, count_tokens

logger = logging.getLogger(__name__)

API_KEY_ENV = "CONTRIBDAG_API_KEY"


@dataclass(frozen=True)
class HttpEndpoint:
    url: str
    model: str
    api_key_env: str = API_KEY_ENV
    max_tokens: int = 2048
    temperature: float = 0.5
    timeout: float = 120.0
    max_retries: int = 3
    backoff: float = 1.0

    def to_dict(self) -> dict:
        return {
            "url": self.url,
            "model": self.model,
            "api_key_env": self.api_key_env,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
            "timeout": self.timeout,
            "max_retries": self.max_retries,
            "backoff": self.backoff,
        }


def build_request(endpoint: HttpEndpoint, bundle: PromptBundle) -> dict:
    return {
        "model": endpoint.model,
        "messages": [
            {"role": "system", "content": bundle.system},
            {"role": "user", "content": bundle.user_message()},
        ],
        "max_tokens": endpoint.max_tokens,
        "temperature": endpoint.temperature,
    }


def _parse(body: dict) -> tuple[str, int | None, int | None, bool]:
    try:
        choice = body["choices"][0]
        text = choice["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponseError(f"response lacks choices[0].message.content: {exc!r}") from exc
    if not isinstance(text, str):
        raise MalformedResponseError("message content is not a string")
    usage = body.get("usage") or {}
    truncated = choice.get("finish_reason") == "length"
    return text, usage.get("prompt_tokens"), usage.get("completion_tokens"), truncated


def http_respond(endpoint: HttpEndpoint, bundle: PromptBundle, embedder: HashEmbedder | HttpEmbedder,
                 agent_id: int = 0, round: int = 0, session: requests.Session | None = None) -> ResponseRecord:
    """Call the endpoint with retries (exponential backoff) and embed the reply."""
    session = session or requests.Session()
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(endpoint.api_key_env)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    payload = build_request(endpoint, bundle)

    last: Exception | None = None
    for attempt in range(endpoint.max_retries + 1):
        if attempt:
            time.sleep(endpoint.backoff * 2 ** (attempt - 1))
        try:
            resp = session.post(endpoint.url, json=payload, headers=headers, timeout=endpoint.timeout)
        except requests.RequestException as exc:
            last = TransportError(f"request to {endpoint.url} failed: {exc}", agent_id=agent_id, round=round)
            logger.warning("agent %d round %d: transport error (attempt %d): %s", agent_id, round, attempt + 1, exc)
            continue
        if resp.status_code == 429 or resp.status_code >= 500:
            last = StatusError(f"endpoint returned HTTP {resp.status_code}", resp.status_code,
                               agent_id=agent_id, round=round)
            logger.warning("agent %d round %d: HTTP %d (attempt %d)", agent_id, round, resp.status_code, attempt + 1)
            continue
        if resp.status_code >= 400:
            raise StatusError(f"endpoint returned HTTP {resp.status_code}: {resp.text[:200]}", resp.status_code,
                              agent_id=agent_id, round=round)
        try:
            body = resp.json()
        except ValueError as exc:
            raise MalformedResponseError(f"response is not JSON: {exc}", agent_id=agent_id, round=round) from exc
        try:
            text, p_tok, c_tok, truncated = _parse(body)
        except MalformedResponseError as exc:
            raise MalformedResponseError(str(exc), agent_id=agent_id, round=round) from exc
        if truncated:
            logger.warning("agent %d round %d: completion hit the token limit", agent_id, round)
        prompt_tokens = int(p_tok) if p_tok is not None else count_tokens(bundle.render())
        completion_tokens = int(c_tok) if c_tok is not None else count_tokens(text)
        embed_text = text if text.strip() else "(empty response)"
        return ResponseRecord(
            agent_id=agent_id,
            round=round,
            text=text,
            embedding=embedder.embed(embed_text),
            token_counts=(prompt_tokens, completion_tokens),
            truncated=truncated,
        )
    assert last is not None
    raise last


class HttpAgent:
    def __init__(self, role: RoleProfile, endpoint: HttpEndpoint, embedder: HashEmbedder | HttpEmbedder,
                 session: requests.Session | None = None):
        self.role = role
        self.endpoint = endpoint
        self.embedder = embedder
        self.session = session or requests.Session()

    def respond(self, bundle: PromptBundle, agent_id: int, round: int) -> ResponseRecord:
        return http_respond(self.endpoint, bundle, self.embedder, agent_id=agent_id, round=round,
                            session=self.session)
