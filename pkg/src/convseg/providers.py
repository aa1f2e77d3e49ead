"""Embedding providers: file-backed lookup stores and a remote HTTP service.

Both providers return unit-normalized float64 vectors, one per input text and
in input order.  Normalization happens here, at the provider boundary, so the
rest of the pipeline can treat cosine similarity as a plain dot product.

Service wire format: ``POST {endpoint}/embed`` with body ``{"texts": [...]}``,
response ``{"dim": int, "vectors": [[float], ...]}``.  Auth is a bearer token
taken from ``CONVSEG_EMBED_TOKEN``; the endpoint comes from ``CONVSEG_EMBED_URL``
or an explicit CLI flag.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import requests

from .model import ValidationError, as_embedding, unit_normalize

ENV_EMBED_URL = "CONVSEG_EMBED_URL"
ENV_EMBED_TOKEN = "CONVSEG_EMBED_TOKEN"


class ServiceError(RuntimeError):
    """The embedding service failed after retries or returned garbage."""


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


def embed_texts(texts: Sequence[str], provider: EmbeddingProvider) -> list[np.ndarray]:
    """Embed ``texts`` through ``provider``; output order matches input order."""
    if not texts:
        raise ValidationError("embed_texts requires a non-empty text list")
    out = provider.embed(texts)
    if len(out) != len(texts):
        raise ServiceError(f"provider returned {len(out)} vectors for {len(texts)} texts")
    return out


# --- file-backed store ------------------------------------------------------

@dataclass(frozen=True)
class EmbeddingFile:
    """An on-disk text -> vector store; vectors are kept exactly as loaded."""

    dim: int
    entries: tuple[tuple[str, tuple[float, ...]], ...]

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError(f"embedding dim must be >= 1, got {self.dim}")
        keys = set()
        for text, vec in self.entries:
            key = text.rstrip()
            if key in keys:
                raise ValidationError(f"duplicate key in embedding file: {key!r}")
            keys.add(key)
            if len(vec) != self.dim:
                raise ValidationError(
                    f"inconsistent dimension for {key!r}: {len(vec)} vs declared {self.dim}"
                )


def load_embedding_file(path) -> EmbeddingFile:
    raw = json.loads(Path(path).read_text())
    try:
        entries = tuple(
            (str(e["text"]), tuple(float(x) for x in e["vector"])) for e in raw["entries"]
        )
        return EmbeddingFile(dim=int(raw["dim"]), entries=entries)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed embedding file {path}: {exc}") from exc


def save_embedding_file(store: EmbeddingFile, path) -> None:
    payload = {
        "dim": store.dim,
        "entries": [{"text": t, "vector": list(v)} for t, v in store.entries],
    }
    Path(path).write_text(json.dumps(payload) + "\n")


class FileEmbeddingProvider:
    """Pure lookup over an :class:`EmbeddingFile`.

    Keys are matched on the exact text after trimming trailing whitespace; no
    fuzzy matching.
    """

    def __init__(self, store: EmbeddingFile):
        self.store = store
        self._index = {text.rstrip(): np.asarray(vec, dtype=np.float64)
                       for text, vec in store.entries}

    @classmethod
    def from_path(cls, path) -> "FileEmbeddingProvider":
        return cls(load_embedding_file(path))

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            key = text.rstrip()
            if key not in self._index:
                raise ValidationError(f"text not found in embedding file: {key!r}")
            out.append(unit_normalize(self._index[key], dim=self.store.dim))
        return out


# --- remote service ---------------------------------------------------------

@dataclass(frozen=True)
class ServiceConfig:
    endpoint: str
    token: str | None = None
    batch_size: int = 32
    timeout: float = 10.0
    retries: int = 3
    backoff: float = 0.5
    dim: int | None = None

    def __post_init__(self):
        if not self.endpoint:
            raise ValidationError("service endpoint must be set")
        if self.batch_size < 1:
            raise ValidationError(f"batch size must be >= 1, got {self.batch_size}")
        if self.timeout <= 0:
            raise ValidationError(f"timeout must be > 0, got {self.timeout}")
        if self.retries < 0:
            raise ValidationError(f"retry count must be >= 0, got {self.retries}")


def service_config_from_env(endpoint: str | None = None, **kwargs) -> ServiceConfig:
    url = endpoint or os.environ.get(ENV_EMBED_URL)
    if not url:
        raise ValidationError(
            f"no embedding service endpoint: pass --embed-url or set {ENV_EMBED_URL}"
        )
    token = kwargs.pop("token", None) or os.environ.get(ENV_EMBED_TOKEN)
    return ServiceConfig(endpoint=url, token=token, **kwargs)


class ServiceEmbeddingProvider:
    """HTTP client that batches requests and retries transient failures.

    Retried: connection errors, timeouts, and 5xx responses.  4xx responses and
    malformed bodies fail immediately.  Safe for concurrent use; retries are
    per-request and the only shared state is the connection pool.
    """

    def __init__(self, config: ServiceConfig, session: requests.Session | None = None):
        self.config = config
        self._session = session or requests.Session()

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for start in range(0, len(texts), self.config.batch_size):
            batch = list(texts[start:start + self.config.batch_size])
            out.extend(self._embed_batch(batch))
        return out

    def _embed_batch(self, batch: list[str]) -> list[np.ndarray]:
        url = self.config.endpoint.rstrip("/") + "/embed"
        headers = {}
        if self.config.token:
            headers["Authorization"] = f"Bearer {self.config.token}"
        last_error: Exception | None = None
        for attempt in range(self.config.retries + 1):
            if attempt and self.config.backoff:
                time.sleep(self.config.backoff * attempt)
            try:
                resp = self._session.post(
                    url, json={"texts": batch}, headers=headers, timeout=self.config.timeout
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
                continue
            if resp.status_code >= 500:
                last_error = ServiceError(f"server error {resp.status_code} from {url}")
                continue
            if resp.status_code != 200:
                raise ServiceError(f"embedding service returned {resp.status_code} for {url}")
            return self._parse_response(resp, len(batch))
        raise ServiceError(
            f"embedding service unreachable after {self.config.retries + 1} attempts: {last_error}"
        )

    def _parse_response(self, resp, n_expected: int) -> list[np.ndarray]:
        try:
            body = resp.json()
            dim = int(body["dim"])
            vectors = body["vectors"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ServiceError(f"malformed embedding service response: {exc}") from exc
        if len(vectors) != n_expected:
            raise ServiceError(f"service returned {len(vectors)} vectors for {n_expected} texts")
        if self.config.dim is not None and dim != self.config.dim:
            raise ServiceError(f"service dim {dim} does not match configured dim {self.config.dim}")
        try:
            return [unit_normalize(as_embedding(v, dim=dim)) for v in vectors]
        except ValidationError as exc:
            raise ServiceError(f"bad vector in service response: {exc}") from exc


# --- per-call embedding sidecar ---------------------------------------------

def save_call_embeddings(call_id: str, vectors: np.ndarray | Sequence[np.ndarray], path) -> None:
    """Write the per-call sidecar: ``vectors[i]`` belongs to utterance ``i``."""
    mat = np.asarray(vectors, dtype=np.float64)
    if mat.ndim != 2:
        raise ValidationError(f"expected an (N, dim) embedding matrix, got shape {mat.shape}")
    payload = {"call_id": call_id, "dim": int(mat.shape[1]), "vectors": mat.tolist()}
    Path(path).write_text(json.dumps(payload) + "\n")


def load_call_embeddings(path) -> tuple[str, np.ndarray]:
    raw = json.loads(Path(path).read_text())
    try:
        call_id = str(raw["call_id"])
        dim = int(raw["dim"])
        mat = np.asarray(raw["vectors"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed embedding sidecar {path}: {exc}") from exc
    if mat.ndim != 2 or mat.shape[1] != dim:
        raise ValidationError(
            f"embedding sidecar {path}: vectors shape {mat.shape} does not match dim {dim}"
        )
    if not np.all(np.isfinite(mat)):
        raise ValidationError(f"embedding sidecar {path} contains non-finite values")
    return call_id, mat
