"""Response embeddings and the cosine geometry used everywhere downstream.

Every embedding that enters the pipeline is L2-normalised, so all agent
vectors share the same norm (1.0).  Mean embeddings are deliberately *not*
renormalised: the norm of the average carries information (it shrinks when
responses disagree) and may be exactly zero when responses cancel.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import requests

from .errors import (
    DimensionMismatchError,
    EmptyTextError,
    ServiceUnavailableError,
    ZeroVectorError,
)

logger = logging.getLogger(__name__)

DEFAULT_DIM = 384
NORM_TOL = 1e-9
_ZERO_TOL = 1e-12

_KINDS = ("deterministic-test", "http-service")


@dataclass(frozen=True)
class EmbedderSpec:
    kind: str = "deterministic-test"
    dim: int = DEFAULT_DIM
    endpoint: str | None = None
    model_name: str | None = None
    seed: int = 0
    timeout: float = 30.0
    retries: int = 3
    api_key_env: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown embedder kind {self.kind!r}; expected one of {_KINDS}")
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.kind == "http-service" and not self.endpoint:
            raise ValueError("http-service embedder requires an endpoint")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "endpoint": self.endpoint,
            "model_name": self.model_name,
            "seed": self.seed,
            "timeout": self.timeout,
            "retries": self.retries,
            "api_key_env": self.api_key_env,
        }


def as_vector(a: Sequence[float] | np.ndarray) -> np.ndarray:
    v = np.asarray(a, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatchError(f"expected a 1-d vector, got shape {v.shape}")
    return v


def normalize(v: Sequence[float] | np.ndarray) -> np.ndarray:
    v = as_vector(v)
    norm = float(np.linalg.norm(v))
    if norm <= _ZERO_TOL:
        raise ZeroVectorError("cannot normalise the zero vector")
    return v / norm


def cosine(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity, clipped to [-1, 1] to absorb rounding."""
    a = as_vector(a)
    b = as_vector(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na <= _ZERO_TOL or nb <= _ZERO_TOL:
        raise ZeroVectorError("cosine is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def stack(rs: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    """Stack embeddings into an (N, dim) array, checking that dims agree."""
    if isinstance(rs, np.ndarray):
        if rs.ndim != 2:
            raise DimensionMismatchError(f"expected (N, dim) array, got shape {rs.shape}")
        return rs.astype(float, copy=False)
    rows = [as_vector(r) for r in rs]
    if not rows:
        raise ValueError("empty list of embeddings")
    dims = {r.shape[0] for r in rows}
    if len(dims) != 1:
        raise DimensionMismatchError(f"embeddings have mixed dimensions {sorted(dims)}")
    return np.vstack(rows)


def mean_embedding(rs: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    """Componentwise mean. Not renormalised; may be the zero vector."""
    if len(rs) == 0:
        raise ValueError("mean of an empty list of embeddings")
    return stack(rs).mean(axis=0)


# ---------------------------------------------------------------------------
# embedders

_WORD = re.compile(r"\w+", re.UNICODE)


def _features(text: str) -> list[str]:
    words = _WORD.findall(text.lower())
    feats = [f"w:{w}" for w in words]
    feats += [f"b:{a} {b}" for a, b in zip(words, words[1:])]
    padded = f"  {text.lower()}  "
    feats += [f"c:{padded[i:i + 3]}" for i in range(len(padded) - 2)]
    return feats


class HashEmbedder:
    """Seeded feature-hashing embedder for tests and offline runs.

    Words, word bigrams and character trigrams are each hashed (with the seed
    mixed in) into a handful of signed buckets.  Identical text gives
    identical vectors on any machine; texts sharing vocabulary land close.
    """

    n_probes = 4

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def _vector(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        salt = str(self.seed).encode()
        for feat in _features(text):
            digest = hashlib.blake2b(feat.encode("utf-8"), digest_size=8 * self.n_probes, key=salt[:64]).digest()
            for p in range(self.n_probes):
                chunk = int.from_bytes(digest[8 * p:8 * p + 8], "little")
                idx = chunk % self.dim
                sign = 1.0 if (chunk >> 63) & 1 else -1.0
                vec[idx] += sign
        return vec

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EmptyTextError("cannot embed empty text")
        return normalize(self._vector(text))


class HttpEmbedder:
    """Embedding service client.

    Sends ``{"model": ..., "input": [text]}`` and accepts either an
    OpenAI-style ``{"data": [{"embedding": [...]}]}`` body, an
    ``{"embeddings": [[...]]}`` body, or a bare list of vectors.
    """

    def __init__(self, spec: EmbedderSpec, session: requests.Session | None = None):
        self.spec = spec
        self.dim = spec.dim
        self._session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.spec.api_key_env and os.environ.get(self.spec.api_key_env):
            headers["Authorization"] = f"Bearer {os.environ[self.spec.api_key_env]}"
        return headers

    @staticmethod
    def _extract(body) -> list:
        if isinstance(body, dict):
            if "data" in body:
                return [item["embedding"] for item in body["data"]]
            if "embeddings" in body:
                return body["embeddings"]
        if isinstance(body, list):
            if body and isinstance(body[0], (int, float)):
                return [body]
            return body
        raise ServiceUnavailableError(f"unrecognised embedding response: {str(body)[:200]}")

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EmptyTextError("cannot embed empty text")
        payload = {"model": self.spec.model_name, "input": [text]}
        last: Exception | None = None
        for attempt in range(self.spec.retries + 1):
            if attempt:
                time.sleep(min(0.1 * 2 ** (attempt - 1), 2.0))
            try:
                resp = self._session.post(
                    self.spec.endpoint, json=payload, headers=self._headers(), timeout=self.spec.timeout
                )
            except requests.RequestException as exc:
                last = exc
                logger.warning("embedding request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last = ServiceUnavailableError(f"embedding service returned {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise ServiceUnavailableError(f"embedding service returned {resp.status_code}: {resp.text[:200]}")
            try:
                vectors = self._extract(resp.json())
            except (ValueError, KeyError, TypeError) as exc:
                raise ServiceUnavailableError(f"malformed embedding response: {exc}") from exc
            vec = as_vector(vectors[0])
            if vec.shape[0] != self.dim:
                raise DimensionMismatchError(f"service returned dim {vec.shape[0]}, expected {self.dim}")
            return normalize(vec)
        raise ServiceUnavailableError(f"embedding service unreachable at {self.spec.endpoint}: {last}")


def make_embedder(spec: EmbedderSpec) -> HashEmbedder | HttpEmbedder:
    if spec.kind == "deterministic-test":
        return HashEmbedder(dim=spec.dim, seed=spec.seed)
    return HttpEmbedder(spec)


def embed(text: str, spec: EmbedderSpec) -> np.ndarray:
    """Embed one text under ``spec``; always returns a unit vector of ``spec.dim``."""
    return make_embedder(spec).embed(text)
