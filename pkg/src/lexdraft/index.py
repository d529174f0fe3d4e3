"""In-memory exact top-K cosine retrieval over chunk vectors.

A brute-force scan is exact, trivially auditable against an oracle, and
fast enough at the corpus sizes this system targets (scores stay
millisecond-level into the tens of thousands of rows). Indices are
immutable after build; rebuild on corpus change.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Chunk, SectionKind
from .embedding import DIM, load_vector_store, save_vector_store
from .errors import DimensionMismatch, MixedBackend

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RowMeta:
    chunk_id: str
    case_id: str
    section_kind: SectionKind


@dataclass(frozen=True)
class RetrievalHit:
    chunk_id: str
    case_id: str
    section_kind: SectionKind
    score: float
    rank: int


@dataclass(frozen=True)
class VectorIndex:
    domain_id: str
    matrix: np.ndarray  # float64, unit rows, read-only
    meta: tuple[RowMeta, ...]
    backend_id: str

    def __len__(self) -> int:
        return len(self.meta)

    def rows_of_kind(self, kind: SectionKind) -> np.ndarray:
        cache = getattr(self, "_kind_rows", None)
        if cache is None:
            cache = {}
            object.__setattr__(self, "_kind_rows", cache)
        if kind not in cache:
            cache[kind] = np.asarray(
                [i for i, m in enumerate(self.meta) if m.section_kind is kind],
                dtype=np.int64,
            )
        return cache[kind]

    def explanation_row_for_case(self, case_id: str) -> int | None:
        return _explanation_lookup(self).get(case_id)


def _explanation_lookup(index: VectorIndex) -> dict[str, int]:
    cache = getattr(index, "_explanation_rows", None)
    if cache is None:
        cache = {
            m.case_id: i
            for i, m in enumerate(index.meta)
            if m.section_kind is SectionKind.EXPLANATION
        }
        object.__setattr__(index, "_explanation_rows", cache)
    return cache


def build_index(
    chunks: Sequence[Chunk],
    vectors: np.ndarray,
    domain_id: str,
    backend_ids: str | Sequence[str],
) -> VectorIndex:
    """Assemble an immutable index; rejects mixed backends and bad shapes."""
    if isinstance(backend_ids, str):
        backend_id = backend_ids
    else:
        backend_set = set(backend_ids)
        if len(backend_set) > 1:
            raise MixedBackend(f"index would mix backends: {sorted(backend_set)}")
        backend_id = next(iter(backend_set)) if backend_set else "unknown"
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.size == 0:
        vectors = vectors.reshape(0, DIM)
    if vectors.ndim != 2 or vectors.shape[1] != DIM:
        raise DimensionMismatch(f"vectors shape {vectors.shape} is not (n, {DIM})")
    if vectors.shape[0] != len(chunks):
        raise DimensionMismatch("chunk count does not match vector rows")
    if len(chunks):
        norms = np.linalg.norm(vectors, axis=1)
        if float(np.max(np.abs(norms - 1.0))) > 1e-5:
            raise DimensionMismatch("index rows must be unit-normalized")
    matrix = np.ascontiguousarray(vectors)
    matrix.setflags(write=False)
    meta = tuple(RowMeta(c.chunk_id, c.case_id, c.section_kind) for c in chunks)
    return VectorIndex(domain_id=domain_id, matrix=matrix, meta=meta, backend_id=backend_id)


def top_k(
    index: VectorIndex,
    query: np.ndarray,
    k: int,
    kind_filter: SectionKind | None = None,
    min_score: float | None = None,
) -> list[RetrievalHit]:
    """Exact top-k by dot product with deterministic tie-breaking.

    Ties break by case_id ascending, then chunk_id ascending; ranks are
    consecutive from 1. k larger than the corpus returns everything.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    if q.shape != (DIM,):
        raise DimensionMismatch(f"query shape {q.shape} is not ({DIM},)")
    norm = float(np.linalg.norm(q))
    if abs(norm - 1.0) > 1e-4:
        raise ValueError(f"query must be unit-norm, got {norm}")
    if len(index) == 0:
        return []

    # One matmul over the full matrix (no row copies), then cheap gathers.
    full_scores = index.matrix @ q
    if kind_filter is None:
        candidate_rows = np.arange(len(index), dtype=np.int64)
        scores = full_scores
    else:
        candidate_rows = index.rows_of_kind(kind_filter)
        scores = full_scores[candidate_rows]
    if candidate_rows.size == 0:
        return []

    if min_score is not None:
        keep = scores >= min_score
        candidate_rows = candidate_rows[keep]
        scores = scores[keep]
        if candidate_rows.size == 0:
            return []

    n = candidate_rows.size
    if k < n:
        # Partition on score, then widen to every row tied with the k-th
        # score so the tie rule decides membership deterministically.
        part = np.argpartition(-scores, k - 1)[:k]
        threshold = float(np.min(scores[part]))
        shortlist = np.flatnonzero(scores >= threshold)
    else:
        shortlist = np.arange(n)

    ranked = sorted(
        (
            (-float(scores[j]), index.meta[candidate_rows[j]].case_id,
             index.meta[candidate_rows[j]].chunk_id, j)
            for j in shortlist
        )
    )[: min(k, n)]
    return [
        RetrievalHit(
            chunk_id=chunk_id,
            case_id=case_id,
            section_kind=index.meta[candidate_rows[j]].section_kind,
            score=-neg_score,
            rank=rank,
        )
        for rank, (neg_score, case_id, chunk_id, j) in enumerate(ranked, start=1)
    ]


def paired_explanations(index: VectorIndex, objection_hits: Sequence[RetrievalHit]) -> list[RowMeta]:
    """Explanation chunks of the hit cases, deduplicated, in hit-rank order.

    Cases lacking an Explanation chunk are skipped with a logged note.
    """
    seen: set[str] = set()
    out: list[RowMeta] = []
    for hit in objection_hits:
        if hit.case_id in seen:
            continue
        seen.add(hit.case_id)
        row = index.explanation_row_for_case(hit.case_id)
        if row is None:
            logger.info("case %s has no explanation chunk; skipped", hit.case_id)
            continue
        out.append(index.meta[row])
    return out


def save_index(index: VectorIndex, base_path: str | Path) -> None:
    rows = [
        {"chunk_id": m.chunk_id, "case_id": m.case_id, "section_kind": m.section_kind.value}
        for m in index.meta
    ]
    save_vector_store(
        base_path,
        index.matrix.astype("<f4"),
        rows,
        backend_id=index.backend_id,
        domain_id=index.domain_id,
    )


def load_index(base_path: str | Path) -> VectorIndex:
    mat, sidecar = load_vector_store(base_path)
    meta = tuple(
        RowMeta(r["chunk_id"], r["case_id"], SectionKind(r["section_kind"]))
        for r in sidecar["rows"]
    )
    matrix = np.ascontiguousarray(mat, dtype=np.float64)
    matrix.setflags(write=False)
    return VectorIndex(
        domain_id=sidecar["domain_id"],
        matrix=matrix,
        meta=meta,
        backend_id=sidecar["backend_id"],
    )
