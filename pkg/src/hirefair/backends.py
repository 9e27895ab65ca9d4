"""Embedding and completion backends with a persistent response cache.

HTTP backends speak openai-, cohere-, or mistral-compatible wire schemas
through thin adapters; credentials come only from environment variables named
in the backend config. Responses are cached in a content-addressed on-disk
store keyed by a digest of the canonicalized request, so byte-identical
requests replay without network access and audits can be re-run offline.

Two deterministic mocks support offline runs and metric validation:

* mock embedding: bag-of-words hashed projection. Whitespace tokens are
  hashed (sha256, first 8 bytes, big-endian) into one of 256 buckets,
  counted, and L2-normalized; empty text maps to the zero vector.
* biased mock: adds a configurable scalar bias along a fixed direction
  whenever a tagged token is present, for validating that the retrieval
  metrics detect injected group preference.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import requests

logger = logging.getLogger(__name__)

MOCK_DIM = 256
HTTP_PROTOCOLS = ("openai-compatible", "cohere-compatible", "mistral-compatible")
MOCK_PROTOCOLS = ("mock", "mock-biased", "echo")


class BackendError(Exception):
    """Raised for backend configuration or transport failures."""


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay_ms: int = 250


@dataclass(frozen=True)
class BackendConfig:
    id: str
    kind: str       # "embedding" | "completion"
    protocol: str   # see HTTP_PROTOCOLS / MOCK_PROTOCOLS
    model_name: str
    endpoint: str = ""
    credential_env: str = ""
    parallelism: int = 8
    retry: RetryPolicy = RetryPolicy()
    max_chars: int | None = None  # refuse (never truncate) longer inputs
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("embedding", "completion"):
            raise BackendError(f"backend {self.id}: invalid kind {self.kind!r}")
        if self.protocol not in HTTP_PROTOCOLS + MOCK_PROTOCOLS:
            raise BackendError(f"backend {self.id}: unknown protocol {self.protocol!r}")
        if self.parallelism < 1:
            raise BackendError(f"backend {self.id}: parallelism must be >= 1")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "BackendConfig":
        retry = raw.get("retry", {})
        return cls(
            id=raw["id"], kind=raw["kind"], protocol=raw["protocol"],
            model_name=raw.get("model_name", ""),
            endpoint=raw.get("endpoint", ""),
            credential_env=raw.get("credential_env", ""),
            parallelism=int(raw.get("parallelism", 8)),
            retry=RetryPolicy(max_attempts=int(retry.get("max", 3)),
                              base_delay_ms=int(retry.get("base_delay_ms", 250))),
            max_chars=raw.get("max_chars"),
            params=dict(raw.get("params", {})),
        )


@dataclass(frozen=True)
class EmbeddingRequest:
    backend_id: str
    model_name: str
    text: str


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not all(np.isfinite(vals)):
            raise BackendError("embedding vector contains non-finite values")
        object.__setattr__(self, "values", vals)

    @property
    def dimension(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class CompletionRequest:
    backend_id: str
    model_name: str
    prompt: str
    temperature: float = 0.0
    max_words_hint: int = 0
    run_index: int = 1

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 1.0:
            raise BackendError(f"temperature must be in [0, 1], got {self.temperature}")
        if not 1 <= self.run_index <= 5:
            raise BackendError(f"run_index must be in [1, 5], got {self.run_index}")


# ---------------------------------------------------------------------------
# response cache
# ---------------------------------------------------------------------------

def cache_key(backend_id: str, model_name: str, payload) -> str:
    """Digest of the canonicalized request; any byte difference changes it."""
    canonical = json.dumps(
        {"backend_id": backend_id, "model_name": model_name, "payload": payload},
        sort_keys=True, separators=(",", ":"), ensure_ascii=False,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ResponseCache:
    """Content-addressed on-disk store; eviction is manual (audits are archival)."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str):
        path = self._path(key)
        try:
            raw = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            with self._lock:
                self.misses += 1
            return None
        with self._lock:
            self.hits += 1
        return json.loads(raw)["response"]

    def put(self, key: str, response) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".tmp.{os.getpid()}.{threading.get_ident()}")
        tmp.write_text(
            json.dumps({"key": key, "response": response}, sort_keys=True,
                       ensure_ascii=False),
            encoding="utf-8",
        )
        os.replace(tmp, path)


# ---------------------------------------------------------------------------
# mock embeddings
# ---------------------------------------------------------------------------

def token_bucket(token: str, dim: int = MOCK_DIM) -> int:
    """Stable hash bucket: first 8 bytes of sha256(token), big-endian, mod dim."""
    return int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "big") % dim


def mock_embedding(text: str, dim: int = MOCK_DIM) -> EmbeddingVector:
    """Deterministic bag-of-words hashed projection, L2-normalized.

    Word order never matters; empty text maps to the zero vector (the only
    non-unit output).
    """
    counts = np.zeros(dim, dtype=np.float64)
    for token in text.split():
        counts[token_bucket(token, dim)] += 1.0
    norm = float(np.linalg.norm(counts))
    if norm > 0.0:
        counts /= norm
    return EmbeddingVector(values=tuple(counts))


#: Token whose hash bucket serves as the bias axis; queries that contain it
#: reward biased documents. Configurable per backend.
DEFAULT_ANCHOR_TOKEN = "the"


def mock_biased_embedding(text: str, tag_bias: Mapping[str, float],
                          dim: int = MOCK_DIM,
                          anchor_token: str = DEFAULT_ANCHOR_TOKEN) -> EmbeddingVector:
    """Bag-of-words embedding plus a scalar bias along a fixed direction.

    When any key of ``tag_bias`` appears as a whitespace token, the summed
    bias of the present tags pushes the vector along the anchor token's
    bucket axis. Any query containing the anchor token then scores tagged
    documents higher, monotonically in the bias. Zero bias reproduces
    mock_embedding exactly.
    """
    base = np.asarray(mock_embedding(text, dim).values)
    present = set(text.split()) & set(tag_bias)
    bias = sum(tag_bias[t] for t in present)
    if bias == 0.0 or not present:
        return EmbeddingVector(values=tuple(base))
    vec = base.copy()
    vec[token_bucket(anchor_token, dim)] += bias
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return EmbeddingVector(values=tuple(vec))


# ---------------------------------------------------------------------------
# backend implementations
# ---------------------------------------------------------------------------

def _check_length(config: BackendConfig, text: str) -> None:
    if config.max_chars is not None and len(text) > config.max_chars:
        raise BackendError(
            f"backend {config.id}: input of {len(text)} chars exceeds "
            f"max_chars={config.max_chars}; refusing to truncate"
        )


class EmbeddingBackend:
    """Shared embed_batch plumbing: cache, ordering, dimension checks."""

    def __init__(self, config: BackendConfig, cache: ResponseCache | None = None):
        self.config = config
        self.cache = cache
        self._dimension: int | None = None
        self._dim_lock = threading.Lock()

    @property
    def cache_hits(self) -> int:
        return self.cache.hits if self.cache else 0

    def _embed_uncached(self, text: str) -> list[float]:
        raise NotImplementedError

    def _request_payload(self, text: str):
        return {"op": "embed", "text": text}

    def _check_dimension(self, values: Sequence[float]) -> None:
        with self._dim_lock:
            if self._dimension is None:
                self._dimension = len(values)
            elif len(values) != self._dimension:
                raise BackendError(
                    f"backend {self.config.id}: dimension {len(values)} != "
                    f"established {self._dimension}"
                )

    def _embed_one(self, text: str) -> EmbeddingVector:
        _check_length(self.config, text)
        key = None
        if self.cache is not None:
            key = cache_key(self.config.id, self.config.model_name,
                            self._request_payload(text))
            cached = self.cache.get(key)
            if cached is not None:
                vec = EmbeddingVector(values=tuple(cached))
                self._check_dimension(vec.values)
                return vec
        values = self._embed_uncached(text)
        vec = EmbeddingVector(values=tuple(values))
        self._check_dimension(vec.values)
        if self.cache is not None:
            self.cache.put(key, list(vec.values))
        return vec

    def embed_batch(self, requests_: Sequence[EmbeddingRequest | str]) -> list[EmbeddingVector]:
        """Embed in order; cached entries are served without touching the network."""
        texts = [r.text if isinstance(r, EmbeddingRequest) else r for r in requests_]
        if not texts:
            return []
        if self.config.parallelism == 1 or len(texts) == 1:
            return [self._embed_one(t) for t in texts]
        with ThreadPoolExecutor(max_workers=self.config.parallelism) as pool:
            return list(pool.map(self._embed_one, texts))


class MockEmbeddingBackend(EmbeddingBackend):
    def __init__(self, config: BackendConfig, cache: ResponseCache | None = None):
        super().__init__(config, cache)
        self.dim = int(config.params.get("dim", MOCK_DIM))
        self.tag_bias = {str(k): float(v)
                         for k, v in config.params.get("tag_bias", {}).items()}
        self.anchor_token = str(config.params.get("anchor_token", DEFAULT_ANCHOR_TOKEN))
        self.biased = config.protocol == "mock-biased"

    def _embed_uncached(self, text: str) -> list[float]:
        if self.biased:
            return list(mock_biased_embedding(text, self.tag_bias, self.dim,
                                              self.anchor_token).values)
        return list(mock_embedding(text, self.dim).values)


def _retrying(config: BackendConfig, send):
    policy = config.retry
    delay = policy.base_delay_ms / 1000.0
    last_error = None
    for attempt in range(policy.max_attempts):
        try:
            return send()
        except (requests.RequestException, BackendError) as exc:
            last_error = exc
            if attempt + 1 < policy.max_attempts:
                logger.warning("backend %s attempt %d failed: %s",
                               config.id, attempt + 1, exc)
                time.sleep(delay)
                delay *= 2
    raise BackendError(
        f"backend {config.id}: request failed after {policy.max_attempts} attempts: "
        f"{last_error}"
    ) from last_error


def _http_post(config: BackendConfig, session: requests.Session, payload: dict):
    def send():
        headers = {"Content-Type": "application/json"}
        if config.credential_env:
            headers["Authorization"] = f"Bearer {os.environ[config.credential_env]}"
        resp = session.post(config.endpoint, json=payload, headers=headers, timeout=60)
        if resp.status_code >= 500 or resp.status_code == 429:
            raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        resp.raise_for_status()
        return resp.json()

    return _retrying(config, send)


class HttpEmbeddingBackend(EmbeddingBackend):
    def __init__(self, config: BackendConfig, cache: ResponseCache | None = None):
        super().__init__(config, cache)
        self.session = requests.Session()

    def _embed_uncached(self, text: str) -> list[float]:
        if self.config.protocol == "cohere-compatible":
            payload = {
                "model": self.config.model_name,
                "texts": [text],
                "input_type": self.config.params.get("input_type", "search_document"),
            }
            body = _http_post(self.config, self.session, payload)
            return body["embeddings"][0]
        # openai-compatible and mistral-compatible share the /embeddings schema
        payload = {"model": self.config.model_name, "input": [text]}
        body = _http_post(self.config, self.session, payload)
        return body["data"][0]["embedding"]


class CompletionBackend:
    def __init__(self, config: BackendConfig, cache: ResponseCache | None = None):
        self.config = config
        self.cache = cache

    @property
    def cache_hits(self) -> int:
        return self.cache.hits if self.cache else 0

    def _complete_uncached(self, request: CompletionRequest) -> str:
        raise NotImplementedError

    def complete(self, request: CompletionRequest) -> str:
        """Run one completion; responses are cached per (prompt, run_index,
        temperature) so reruns stay stable despite provider nondeterminism."""
        _check_length(self.config, request.prompt)
        key = None
        if self.cache is not None:
            payload = {
                "op": "complete", "prompt": request.prompt,
                "temperature": request.temperature, "run_index": request.run_index,
                "max_words_hint": request.max_words_hint,
            }
            key = cache_key(self.config.id, self.config.model_name, payload)
            cached = self.cache.get(key)
            if cached is not None:
                return cached
        text = self._complete_uncached(request)
        if self.cache is not None:
            self.cache.put(key, text)
        return text

    def complete_text(self, prompt: str, temperature: float = 0.0,
                      run_index: int = 1, max_words_hint: int = 0) -> str:
        return self.complete(CompletionRequest(
            backend_id=self.config.id, model_name=self.config.model_name,
            prompt=prompt, temperature=temperature, run_index=run_index,
            max_words_hint=max_words_hint,
        ))


class HttpCompletionBackend(CompletionBackend):
    def __init__(self, config: BackendConfig, cache: ResponseCache | None = None):
        super().__init__(config, cache)
        self.session = requests.Session()

    def _complete_uncached(self, request: CompletionRequest) -> str:
        if self.config.protocol == "cohere-compatible":
            payload = {
                "model": self.config.model_name,
                "message": request.prompt,
                "temperature": request.temperature,
            }
            body = _http_post(self.config, self.session, payload)
            text = body.get("text", "")
        else:
            payload = {
                "model": self.config.model_name,
                "messages": [{"role": "user", "content": request.prompt}],
                "temperature": request.temperature,
            }
            body = _http_post(self.config, self.session, payload)
            text = body["choices"][0]["message"]["content"]
        if not text:
            raise BackendError(f"backend {self.config.id}: empty completion")
        return text


#: Word stock for the deterministic mock summarizer; includes evaluative
#: vocabulary so the sentiment measures see non-trivial inputs.
_MOCK_VOCAB = (
    "the candidate demonstrates strong experience in data analysis and team "
    "leadership with excellent communication skills a proven record of "
    "reliable delivery and good judgment they bring solid technical depth "
    "careful planning and creative problem solving work history shows steady "
    "growth impressive results and clear impact across projects colleagues "
    "describe them as dependable thoughtful and effective overall a capable "
    "professional suited for demanding roles"
).split()


class MockCompletionBackend(CompletionBackend):
    """Deterministic pseudo-summaries seeded by the prompt digest."""

    def _complete_uncached(self, request: CompletionRequest) -> str:
        digest = hashlib.sha256(request.prompt.encode("utf-8")).hexdigest()
        rng = random.Random(
            f"{self.config.model_name}:{digest}:{request.run_index}:{request.temperature}"
        )
        n_words = request.max_words_hint or 60
        words = [rng.choice(_MOCK_VOCAB) for _ in range(n_words)]
        sentences = []
        i = 0
        while i < len(words):
            n = min(rng.randint(8, 14), len(words) - i)
            chunk = words[i:i + n]
            sentences.append(chunk[0].capitalize() + " " + " ".join(chunk[1:]) + ".")
            i += n
        return " ".join(sentences)


class EchoCompletionBackend(CompletionBackend):
    """Returns the prompt's trailing line; handy as a test double."""

    def _complete_uncached(self, request: CompletionRequest) -> str:
        return request.prompt.rstrip("\n").rsplit("\n", 1)[-1]


def build_backend(config: BackendConfig, cache: ResponseCache | None = None):
    """Construct a backend from config, failing fast on missing credentials."""
    if config.protocol in HTTP_PROTOCOLS:
        if not config.endpoint:
            raise BackendError(f"backend {config.id}: endpoint required for HTTP protocols")
        if config.credential_env and config.credential_env not in os.environ:
            raise BackendError(
                f"backend {config.id}: credential env var {config.credential_env!r} "
                f"is not set"
            )
        if config.kind == "embedding":
            return HttpEmbeddingBackend(config, cache)
        return HttpCompletionBackend(config, cache)
    if config.protocol in ("mock", "mock-biased"):
        if config.kind == "embedding":
            return MockEmbeddingBackend(config, cache)
        return MockCompletionBackend(config, cache)
    if config.protocol == "echo":
        return EchoCompletionBackend(config, cache)
    raise BackendError(f"backend {config.id}: unknown protocol {config.protocol!r}")
