"""Euclidean nearest-neighbor retrieval and bidirectional Recall@K.

Retrieval is deliberately exhaustive: a naive definitional path (per-row
squared distances, full sort) serves as the oracle, and a fast path using
d^2 = ||q||^2 + ||x||^2 - 2 q.x with a bounded top-k selection must return
the identical id sequence. Ties break by ascending item id in both paths.
"""

from __future__ import annotations

import heapq
import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .rng import substream

_BLOCK = 2048


@dataclass
class EmbeddingIndex:
    """N embeddings with ids, modality tags, and pairing group ids."""

    vectors: np.ndarray  # (N, D) float64
    ids: tuple[str, ...]
    modality: tuple[str, ...]
    group: np.ndarray  # (N,) int64
    _sq_norms: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.ids = tuple(self.ids)
        self.modality = tuple(self.modality)
        self.group = np.asarray(self.group, dtype=np.int64)
        n = self.vectors.shape[0]
        if self.vectors.ndim != 2 or n < 1:
            raise DataError(f"index vectors must be (N>=1, D), got {self.vectors.shape}")
        if len(self.ids) != n or len(self.modality) != n or self.group.shape[0] != n:
            raise DataError("ids, modality, and group must all have N entries")
        if len(set(self.ids)) != n:
            raise DataError("item ids must be unique")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def sq_norms(self) -> np.ndarray:
        if self._sq_norms is None:
            self._sq_norms = np.einsum("nd,nd->n", self.vectors, self.vectors)
        return self._sq_norms

    def candidate_indices(self, modality: str | None, exclude_id: str | None) -> np.ndarray:
        keep = np.ones(len(self), dtype=bool)
        if modality is not None:
            keep &= np.array([m == modality for m in self.modality])
        if exclude_id is not None and exclude_id in set(self.ids):
            keep[self.ids.index(exclude_id)] = False
        idx = np.nonzero(keep)[0]
        if idx.size == 0:
            raise DataError(f"no candidates left after filtering (modality={modality!r})")
        return idx


@dataclass(frozen=True)
class RankedList:
    ids: tuple[str, ...]
    distances: np.ndarray

    def __post_init__(self):
        if len(self.ids) != len(set(self.ids)):
            raise DataError("ranked list contains duplicate ids")
        d = np.asarray(self.distances, dtype=np.float64)
        if d.size > 1 and np.any(np.diff(d) < 0):
            raise DataError("ranked list distances must be nondecreasing")


@dataclass(frozen=True)
class RecallTable:
    """Recall percentages per cutoff for one retrieval direction."""

    direction: str  # "image-to-sentence" | "sentence-to-image"
    recalls: dict[int, float]

    def __post_init__(self):
        ks = sorted(self.recalls)
        vals = [self.recalls[k] for k in ks]
        if any(not 0 <= v <= 100 for v in vals):
            raise DataError("recall values must lie in [0, 100]")
        if any(a > b + 1e-9 for a, b in zip(vals, vals[1:])):
            raise DataError("recall must be nondecreasing in K")


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b||_2 with float64 accumulation."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DataError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.sqrt(np.dot(diff, diff)))


def _check_query(index: EmbeddingIndex, query: np.ndarray) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.shape[0] != index.dim:
        raise DataError(f"query dim {q.shape[0]} != index dim {index.dim}")
    return q


def knn_naive(
    index: EmbeddingIndex,
    query: np.ndarray,
    k: int,
    modality: str | None = None,
    exclude_id: str | None = None,
) -> RankedList:
    """Definitional top-k: direct squared distances, full sort, truncate."""
    q = _check_query(index, query)
    cand = index.candidate_indices(modality, exclude_id)
    if not 1 <= k <= cand.size:
        raise DataError(f"k={k} outside [1, {cand.size}]")
    diff = index.vectors[cand] - q
    d2 = np.einsum("nd,nd->n", diff, diff)
    order = sorted(range(cand.size), key=lambda i: (d2[i], index.ids[cand[i]]))[:k]
    return RankedList(
        ids=tuple(index.ids[cand[i]] for i in order),
        distances=np.sqrt(d2[order]),
    )


def knn_fast(
    index: EmbeddingIndex,
    query: np.ndarray,
    k: int,
    modality: str | None = None,
    exclude_id: str | None = None,
) -> RankedList:
    """Blocked traversal with precomputed row norms and a bounded top-k heap.

    Returns the same ids in the same order as knn_naive.
    """
    q = _check_query(index, query)
    cand = index.candidate_indices(modality, exclude_id)
    if not 1 <= k <= cand.size:
        raise DataError(f"k={k} outside [1, {cand.size}]")
    qq = float(np.dot(q, q))
    sq = index.sq_norms()
    top: list[tuple[float, str]] = []
    for start in range(0, cand.size, _BLOCK):
        block = cand[start : start + _BLOCK]
        d2 = np.maximum(sq[block] - 2.0 * (index.vectors[block] @ q) + qq, 0.0)
        block_items = ((float(d), index.ids[i]) for d, i in zip(d2, block))
        top = heapq.nsmallest(k, itertools.chain(top, block_items))
    return RankedList(
        ids=tuple(item_id for _, item_id in top),
        distances=np.sqrt(np.array([d for d, _ in top])),
    )


@dataclass(frozen=True)
class Query:
    vector: np.ndarray
    group: int
    exclude_id: str | None = None


def recall_at_k(
    queries,
    index: EmbeddingIndex,
    k: int,
    modality: str | None = None,
) -> float:
    """Percentage of queries whose group appears in the top-k retrieved items.

    A query's own index entry (matching exclude_id) never counts as a
    candidate.
    """
    queries = list(queries)
    if not queries:
        raise DataError("recall_at_k needs at least one query")
    if k < 1:
        raise DataError(f"K must be >= 1, got {k}")
    hits = 0
    group_by_id = dict(zip(index.ids, index.group.tolist()))
    for qu in queries:
        cand = index.candidate_indices(modality, qu.exclude_id)
        ranked = knn_fast(index, qu.vector, min(k, cand.size), modality, qu.exclude_id)
        if any(group_by_id[item] == qu.group for item in ranked.ids):
            hits += 1
    return 100.0 * hits / len(queries)


def _index_queries(src: EmbeddingIndex):
    return [
        Query(vector=src.vectors[i], group=int(src.group[i]), exclude_id=src.ids[i])
        for i in range(len(src))
    ]


def evaluate_bidirectional(
    image_index: EmbeddingIndex,
    text_index: EmbeddingIndex,
    ks: tuple[int, ...] = (1, 5, 10),
) -> tuple[RecallTable, RecallTable]:
    """Image queries against the caption index and vice versa.

    A query succeeds at K if any of the top-K retrieved items shares its
    group id (an image and its captions form one group).
    """
    if image_index.dim != text_index.dim:
        raise DataError("image and text indexes disagree on embedding dim")
    ks = tuple(sorted(set(int(k) for k in ks)))
    if not ks or ks[0] < 1:
        raise DataError("Ks must be positive")
    tables = []
    for direction, sources, targets in (
        ("image-to-sentence", image_index, text_index),
        ("sentence-to-image", text_index, image_index),
    ):
        kmax = min(max(ks), len(targets))
        group_by_id = dict(zip(targets.ids, targets.group.tolist()))
        hits = {k: 0 for k in ks}
        queries = _index_queries(sources)
        for qu in queries:
            ranked = knn_fast(targets, qu.vector, kmax, None, qu.exclude_id)
            groups = [group_by_id[item] for item in ranked.ids]
            for k in ks:
                if qu.group in groups[: min(k, kmax)]:
                    hits[k] += 1
        tables.append(
            RecallTable(
                direction=direction,
                recalls={k: 100.0 * hits[k] / len(queries) for k in ks},
            )
        )
    return tables[0], tables[1]


@dataclass(frozen=True)
class ProjectionResult:
    coords: np.ndarray  # (N, 2)
    eigenvalues: np.ndarray  # (2,)
    components: np.ndarray  # (2, D)


def _orthogonalize(v: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    for b in basis:
        v = v - b * (b @ v)
    return v


def _power_iteration(
    a: np.ndarray,
    rng: np.random.Generator,
    tol: float,
    max_iter: int,
    prev: list[np.ndarray],
):
    """Dominant eigenpair of `a` restricted to the complement of `prev`.

    Re-orthogonalizing every iteration keeps deflation residue from leaking
    earlier components back in (matters when trailing eigenvalues are ~0).
    """
    v = _orthogonalize(rng.normal(size=a.shape[0]), prev)
    norm = np.linalg.norm(v)
    if norm < 1e-30:
        return np.zeros(a.shape[0]), 0.0
    v /= norm
    for _ in range(max_iter):
        av = _orthogonalize(a @ v, prev)
        norm = np.linalg.norm(av)
        if norm < 1e-30:
            return v, 0.0
        v_new = av / norm
        if min(np.linalg.norm(v_new - v), np.linalg.norm(v_new + v)) < tol:
            v = v_new
            break
        v = v_new
    return v, float(v @ a @ v)


def project_2d(
    index, seed: int = 0, tol: float = 1e-9, max_iter: int = 1000
) -> ProjectionResult:
    """Project embeddings onto their top-2 principal components.

    Power iteration with deflation on the D x D sample covariance of the
    mean-centered data; deterministic given the seed of the starting vector.
    Zero-variance data yields all-zero coordinates with a warning.
    """
    x = np.asarray(getattr(index, "vectors", index), dtype=np.float64)
    n, d = x.shape
    if n < 3:
        raise DataError(f"projection needs N >= 3 rows, got {n}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    if float(np.trace(cov)) <= 0.0:
        warnings.warn("zero-variance data; projecting to all-zero coordinates")
        return ProjectionResult(
            coords=np.zeros((n, 2)),
            eigenvalues=np.zeros(2),
            components=np.zeros((2, d)),
        )
    rng = substream(seed, "project")
    components: list[np.ndarray] = []
    eigenvalues = []
    deflated = cov.copy()
    for _ in range(2):
        v, lam = _power_iteration(deflated, rng, tol, max_iter, components)
        components.append(v)
        eigenvalues.append(lam)
        deflated = deflated - lam * np.outer(v, v)
    comp = np.vstack(components)
    return ProjectionResult(
        coords=centered @ comp.T,
        eigenvalues=np.array(eigenvalues),
        components=comp,
    )


def write_embeddings(path, index: EmbeddingIndex) -> None:
    """Plain-text interchange: header "N D", then "id modality group v1 .. vD"."""
    for item_id in index.ids:
        if any(ch.isspace() for ch in item_id):
            raise DataError(f"item id {item_id!r} contains whitespace")
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(index)} {index.dim}\n")
        for i in range(len(index)):
            vals = " ".join(repr(float(v)) for v in index.vectors[i])
            f.write(f"{index.ids[i]} {index.modality[i]} {index.group[i]} {vals}\n")


def load_embeddings(path) -> EmbeddingIndex:
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty embedding file")
    head = lines[0].split()
    if len(head) != 2:
        raise DataError(f"{path}: header must be 'N D'")
    try:
        n, d = int(head[0]), int(head[1])
    except ValueError as exc:
        raise DataError(f"{path}: non-integer header") from exc
    if len(lines) - 1 != n:
        raise DataError(f"{path}: header declares {n} rows, file has {len(lines) - 1}")
    ids, modality, group = [], [], []
    vectors = np.empty((n, d), dtype=np.float64)
    for row, line in enumerate(lines[1:]):
        parts = line.split()
        if len(parts) != 3 + d:
            raise DataError(f"{path}: row {row + 1} has {len(parts)} fields, expected {3 + d}")
        ids.append(parts[0])
        modality.append(parts[1])
        try:
            group.append(int(parts[2]))
            vectors[row] = [float(p) for p in parts[3:]]
        except ValueError as exc:
            raise DataError(f"{path}: row {row + 1}: non-numeric field") from exc
    return EmbeddingIndex(vectors=vectors, ids=ids, modality=modality, group=np.array(group))


def split_by_modality(index: EmbeddingIndex) -> tuple[EmbeddingIndex, EmbeddingIndex]:
    """Split one combined index into (image index, text index)."""
    out = []
    for tag in ("image", "text"):
        keep = [i for i, m in enumerate(index.modality) if m == tag]
        if not keep:
            raise DataError(f"embedding file has no '{tag}' rows")
        out.append(
            EmbeddingIndex(
                vectors=index.vectors[keep],
                ids=[index.ids[i] for i in keep],
                modality=[tag] * len(keep),
                group=index.group[keep],
            )
        )
    return out[0], out[1]


def write_recall_csv(path, tables: tuple[RecallTable, ...]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("direction,K,recall\n")
        for table in tables:
            for k in sorted(table.recalls):
                f.write(f"{table.direction},{k},{table.recalls[k]:.4f}\n")


def format_recall_tables(tables: tuple[RecallTable, ...]) -> str:
    ks = sorted(tables[0].recalls)
    header = "direction".ljust(20) + "".join(f"R@{k}".rjust(9) for k in ks)
    lines = [header, "-" * len(header)]
    for table in tables:
        lines.append(
            table.direction.ljust(20)
            + "".join(f"{table.recalls[k]:9.2f}" for k in ks)
        )
    return "\n".join(lines)


def write_projection_csv(path, index: EmbeddingIndex, result: ProjectionResult) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("id,modality,group,x,y\n")
        for i in range(len(index)):
            f.write(
                f"{index.ids[i]},{index.modality[i]},{index.group[i]},"
                f"{float(result.coords[i, 0])!r},{float(result.coords[i, 1])!r}\n"
            )
