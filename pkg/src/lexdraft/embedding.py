"""Embedding backends behind one interface: a remote client and an offline mock.

Vectors are always 1536-dimensional and stored unit-normalized, so cosine
similarity downstream is a plain dot product. The mock hashes lowercase
character 3-grams into signed buckets, which keeps similarity structure
(a text is most similar to itself, small edits move few buckets) while
being fully deterministic and dependency-free.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from pathlib import Path
from typing import Sequence

import httpx
import numpy as np

from .errors import BackendUnavailable, DimensionMismatch, EmptyInput, InputTooLong
from .textutil import count_tokens, sha256_hex

DIM = 1536
NORM_TOL = 1e-6
REMOTE_INPUT_BUDGET_TOKENS = 8000


def check_unit_norm(vec: np.ndarray, tol: float = NORM_TOL) -> None:
    if vec.shape != (DIM,):
        raise DimensionMismatch(f"expected shape ({DIM},), got {vec.shape}")
    norm = float(np.linalg.norm(vec.astype(np.float64)))
    if abs(norm - 1.0) > tol:
        raise DimensionMismatch(f"vector norm {norm} outside unit tolerance")


class MockHashEmbedder:
    """Deterministic offline embedder over hashed character 3-grams."""

    kind = "mock-hash"

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._gram_cache: dict[str, tuple[int, float]] = {}

    @property
    def backend_id(self) -> str:
        return f"mock-hash:{self.seed}"

    def _bucket(self, gram: str) -> tuple[int, float]:
        cached = self._gram_cache.get(gram)
        if cached is not None:
            return cached
        digest = hashlib.blake2b(
            f"{self.seed}:{gram}".encode("utf-8"), digest_size=8
        ).digest()
        value = int.from_bytes(digest, "little")
        entry = (value % DIM, 1.0 if value & (1 << 62) else -1.0)
        self._gram_cache[gram] = entry
        return entry

    def embed_one(self, text: str) -> np.ndarray:
        stripped = text.strip()
        if not stripped:
            raise EmptyInput("cannot embed empty text")
        lowered = stripped.casefold()
        grams = (
            [lowered[i : i + 3] for i in range(len(lowered) - 2)]
            if len(lowered) >= 3
            else [lowered]
        )
        acc = np.zeros(DIM, dtype=np.float64)
        for gram in grams:
            bucket, sign = self._bucket(gram)
            acc[bucket] += sign
        norm = float(np.linalg.norm(acc))
        if norm == 0.0:
            # Signed counts cancelled (only possible for tiny inputs); fall
            # back to a single deterministic bucket.
            bucket, _ = self._bucket(lowered)
            acc[bucket] = 1.0
            norm = 1.0
        vec = (acc / norm).astype(np.float32)
        vec /= np.float32(np.linalg.norm(vec))
        return vec


class RemoteEmbedder:
    """OpenAI-compatible embeddings client; credential comes from the environment.

    Results are cached by content digest, and concurrent requests are
    bounded by a semaphore so bulk ingest cannot flood the provider.
    """

    kind = "remote"

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "LEXDRAFT_API_KEY",
        timeout: float = 30.0,
        max_in_flight: int = 4,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._cache: dict[str, np.ndarray] = {}

    @property
    def backend_id(self) -> str:
        return f"remote:{self.model}"

    def _headers(self) -> dict:
        key = os.environ.get(self.api_key_env, "")
        return {"Authorization": f"Bearer {key}"} if key else {}

    def embed_one(self, text: str) -> np.ndarray:
        stripped = text.strip()
        if not stripped:
            raise EmptyInput("cannot embed empty text")
        if count_tokens(stripped) > REMOTE_INPUT_BUDGET_TOKENS:
            raise InputTooLong(
                f"input exceeds {REMOTE_INPUT_BUDGET_TOKENS} tokens; summarize upstream"
            )
        digest = sha256_hex(stripped)
        cached = self._cache.get(digest)
        if cached is not None:
            return cached
        payload = {"model": self.model, "input": [stripped]}
        last_error: Exception | None = None
        for backoff in (1.0, 2.0, 4.0):
            try:
                with self._slots:
                    resp = self._client.post(
                        f"{self.endpoint}/embeddings", json=payload, headers=self._headers()
                    )
            except httpx.TransportError as exc:
                last_error = exc
                self._sleep(backoff)
                continue
            if resp.status_code >= 500:
                last_error = BackendUnavailable(f"server error {resp.status_code}")
                self._sleep(backoff)
                continue
            if resp.status_code >= 400:
                raise BackendUnavailable(f"embedding request rejected: {resp.status_code}")
            values = resp.json()["data"][0]["embedding"]
            vec = np.asarray(values, dtype=np.float64)
            if vec.shape != (DIM,):
                raise DimensionMismatch(f"backend returned {vec.shape[0]} dimensions")
            vec = (vec / np.linalg.norm(vec)).astype(np.float32)
            self._cache[digest] = vec
            return vec
        raise BackendUnavailable(f"embedding backend unreachable: {last_error}")


Embedder = MockHashEmbedder | RemoteEmbedder


def make_embedder(spec: dict, transport: httpx.BaseTransport | None = None) -> Embedder:
    """Build a backend from a config mapping ({"kind": ..., ...})."""
    kind = spec.get("kind", "mock-hash")
    if kind == "mock-hash":
        return MockHashEmbedder(seed=spec.get("seed", 0))
    if kind == "remote":
        return RemoteEmbedder(
            endpoint=spec["endpoint"],
            model=spec.get("model", "text-embedding-ada-002"),
            api_key_env=spec.get("api_key_env", "LEXDRAFT_API_KEY"),
            max_in_flight=spec.get("max_in_flight", 4),
            transport=transport,
        )
    raise ValueError(f"unknown embedder kind {kind!r}")


def embed_text(text: str, backend: Embedder) -> np.ndarray:
    """Unit-normalized 1536-dim vector for one text."""
    vec = backend.embed_one(text)
    check_unit_norm(vec)
    return vec


def embed_batch(texts: Sequence[str], backend: Embedder) -> list[np.ndarray]:
    """Order-preserving batch embedding; fails atomically on the first bad text."""
    for i, text in enumerate(texts):
        if not text.strip():
            raise EmptyInput(f"empty text at index {i}", index=i)
        if isinstance(backend, RemoteEmbedder) and count_tokens(text) > REMOTE_INPUT_BUDGET_TOKENS:
            raise InputTooLong(f"text at index {i} exceeds input budget", index=i)
    return [embed_text(t, backend) for t in texts]


# --- vector store -------------------------------------------------------------
#
# Binary little-endian float32, row-major, plus a JSON sidecar that maps
# rows to chunks and records which backend produced the vectors.

VEC_SUFFIX = ".f32"
SIDECAR_SUFFIX = ".json"


def save_vector_store(
    base_path: str | Path,
    matrix: np.ndarray,
    rows: list[dict],
    backend_id: str,
    domain_id: str,
) -> None:
    base = Path(base_path)
    base.parent.mkdir(parents=True, exist_ok=True)
    mat = np.ascontiguousarray(matrix, dtype="<f4")
    if mat.ndim != 2 or mat.shape[1] != DIM:
        raise DimensionMismatch(f"matrix shape {mat.shape} is not (n, {DIM})")
    if mat.shape[0] != len(rows):
        raise DimensionMismatch("row metadata count does not match matrix rows")
    base.with_suffix(VEC_SUFFIX).write_bytes(mat.tobytes())
    sidecar = {
        "dim": DIM,
        "dtype": "<f4",
        "backend_id": backend_id,
        "domain_id": domain_id,
        "rows": rows,
    }
    base.with_suffix(SIDECAR_SUFFIX).write_text(
        json.dumps(sidecar, ensure_ascii=False, indent=0), encoding="utf-8"
    )


def load_vector_store(base_path: str | Path) -> tuple[np.ndarray, dict]:
    """Load matrix + sidecar, re-verifying dimension and unit norms."""
    base = Path(base_path)
    sidecar = json.loads(base.with_suffix(SIDECAR_SUFFIX).read_text(encoding="utf-8"))
    raw = base.with_suffix(VEC_SUFFIX).read_bytes()
    mat = np.frombuffer(raw, dtype="<f4").reshape(-1, sidecar["dim"])
    if sidecar["dim"] != DIM:
        raise DimensionMismatch(f"stored dim {sidecar['dim']} != {DIM}")
    if mat.shape[0] != len(sidecar["rows"]):
        raise DimensionMismatch("vector rows and sidecar rows disagree")
    norms = np.linalg.norm(mat.astype(np.float64), axis=1)
    if norms.size and float(np.max(np.abs(norms - 1.0))) > NORM_TOL:
        raise DimensionMismatch("stored vectors are not unit-normalized")
    return mat, sidecar
