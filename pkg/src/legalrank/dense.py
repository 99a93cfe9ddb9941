"""Dense first-stage retrieval: pluggable embedding sources and exact
cosine top-k search over the corpus.

The neural encoder itself is out of scope; it enters either as a file
of precomputed vectors, as a remote endpoint, or as the deterministic
HashedBow stand-in that keeps every pipeline path testable offline.
"""

import numpy as np

from ._http import post_json
from .errors import (
    DataFormatError,
    EmbeddingError,
    IndexBuildError,
    IngestionError,
    ParameterError,
    ProtocolError,
    RemoteError,
)
from .segment import DefaultSegmenter, Segmenter

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash; fixed algorithm so vectors are portable."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _U64
    return h


def cosine(u, v) -> float:
    """Cosine similarity; 0.0 whenever either vector has zero norm."""
    ua = np.asarray(u, dtype=np.float64)
    va = np.asarray(v, dtype=np.float64)
    if ua.shape != va.shape:
        raise ParameterError(f"dimension mismatch: {ua.shape} vs {va.shape}")
    nu = float(np.linalg.norm(ua))
    nv = float(np.linalg.norm(va))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(ua, va) / (nu * nv))


def l2_normalize_rows(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize a matrix; zero rows stay zero and are flagged."""
    mat = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    return mat / safe[:, None], zero


class Embedder:
    """Maps texts to fixed-dimension float vectors."""

    dim: int

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        raise NotImplementedError

    def embed_for_keys(self, keys: list[str], texts: list[str]) -> np.ndarray:
        """Embed items known by id; text-based sources ignore the keys."""
        return self.embed_batch(texts)

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def describe(self) -> str:
        raise NotImplementedError


class HashedBow(Embedder):
    """Deterministic bag-of-tokens embedder for offline testing.

    Each token is hashed with FNV-1a over its UTF-8 bytes; the low bits
    pick a coordinate, the top bit picks a sign, and the signed counts
    are L2-normalized.  Token order therefore never matters.
    """

    def __init__(self, dim: int = 256, segmenter: Segmenter | None = None):
        if dim < 1:
            raise ParameterError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self._segmenter = segmenter or DefaultSegmenter()

    def embed_batch(self, texts):
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, tokens in enumerate(self._segmenter.segment_batch(list(texts))):
            for tok in tokens:
                h = fnv1a64(tok.encode("utf-8"))
                sign = 1.0 if h < (1 << 63) else -1.0
                out[i, h % self.dim] += sign
        normed, _ = l2_normalize_rows(out)
        return normed

    def describe(self):
        return f"hashedbow:dim={self.dim}"


class FileEmbeddings(Embedder):
    """Precomputed vectors keyed by id (cid or qid).

    File layout: first line ``dim<TAB>d``, then one line per item,
    ``id<TAB>f1 f2 ... fd`` with decimal or scientific-notation floats.
    """

    def __init__(self, path):
        self.path = str(path)
        self._vectors: dict[str, np.ndarray] = {}
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            parts = header.split("\t")
            if len(parts) != 2 or parts[0] != "dim":
                raise DataFormatError(f"{path}:1: expected 'dim<TAB>d' header")
            try:
                self.dim = int(parts[1])
            except ValueError as exc:
                raise DataFormatError(f"{path}:1: bad dimension {parts[1]!r}") from exc
            if self.dim < 1:
                raise DataFormatError(f"{path}:1: dimension must be >= 1")
            for lineno, line in enumerate(fh, start=2):
                line = line.rstrip("\n")
                if not line:
                    continue
                key, sep, rest = line.partition("\t")
                if not sep:
                    raise DataFormatError(f"{path}:{lineno}: missing tab separator")
                if key in self._vectors:
                    raise IngestionError(f"{path}:{lineno}: duplicate id {key!r}")
                try:
                    vec = np.array([float(x) for x in rest.split()], dtype=np.float64)
                except ValueError as exc:
                    raise DataFormatError(f"{path}:{lineno}: bad float") from exc
                if vec.size != self.dim:
                    raise DataFormatError(
                        f"{path}:{lineno}: expected {self.dim} floats, got {vec.size}"
                    )
                self._vectors[key] = vec

    def __contains__(self, key: str) -> bool:
        return key in self._vectors

    def embed_for_keys(self, keys, texts):
        missing = [k for k in keys if k not in self._vectors]
        if missing:
            raise EmbeddingError(
                "no stored vector for id(s): " + ", ".join(repr(k) for k in missing)
            )
        return np.stack([self._vectors[k] for k in keys])

    def embed_batch(self, texts):
        raise EmbeddingError(
            "file-backed embeddings are keyed by id and cannot embed free text"
        )

    def describe(self):
        return f"file:{self.path}"


class RemoteEmbedder(Embedder):
    """Embedding endpoint speaking JSON: {"texts": [...]} -> {"vectors": [[...], ...]}."""

    def __init__(self, url: str, *, timeout: float = 10.0, batch_size: int = 64,
                 max_retries: int = 3):
        if batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        self.url = url
        self.timeout = timeout
        self.batch_size = batch_size
        self.max_retries = max_retries
        self.dim = 0  # set after the first successful call

    def embed_batch(self, texts):
        texts = list(texts)
        rows: list[np.ndarray] = []
        for start in range(0, len(texts), self.batch_size):
            chunk = texts[start:start + self.batch_size]
            body = post_json(self.url, {"texts": chunk},
                             timeout=self.timeout, max_retries=self.max_retries)
            vectors = body.get("vectors")
            if not isinstance(vectors, list) or len(vectors) != len(chunk):
                raise ProtocolError(
                    f"{self.url}: expected {len(chunk)} vectors, "
                    f"got {len(vectors) if isinstance(vectors, list) else type(vectors)}"
                )
            for vec in vectors:
                arr = np.asarray(vec, dtype=np.float64)
                if arr.ndim != 1:
                    raise ProtocolError(f"{self.url}: vector is not flat")
                if self.dim == 0:
                    self.dim = arr.size
                elif arr.size != self.dim:
                    raise ProtocolError(
                        f"{self.url}: inconsistent dimensions {arr.size} vs {self.dim}"
                    )
                rows.append(arr)
        if not rows:
            return np.zeros((0, max(self.dim, 1)), dtype=np.float64)
        return np.stack(rows)

    def describe(self):
        return f"remote:{self.url}"


class EmbeddingIndex:
    """L2-normalized document vectors, one row per corpus document."""

    FORMAT = "legalrank.dense.v1"

    def __init__(self, cids, matrix, embedder_desc: str = ""):
        self.cids = list(cids)
        mat = np.asarray(matrix, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != len(self.cids):
            raise ParameterError("matrix must be 2-D with one row per cid")
        self.matrix, zero = l2_normalize_rows(mat)
        self.zero_cids = [c for c, z in zip(self.cids, zero) if z]
        self.embedder_desc = embedder_desc
        self.n = len(self.cids)
        self.dim = int(mat.shape[1])
        self.row = {c: i for i, c in enumerate(self.cids)}
        if self.n:
            order = np.argsort(np.array(self.cids, dtype=object), kind="stable")
            self.tie_rank = np.empty(self.n, dtype=np.int64)
            self.tie_rank[order.astype(np.int64)] = np.arange(self.n, dtype=np.int64)
        else:
            self.tie_rank = np.empty(0, dtype=np.int64)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            np.savez(
                fh,
                format=np.array(self.FORMAT),
                cids=np.array(self.cids, dtype=np.str_),
                matrix=self.matrix,
                embedder=np.array(self.embedder_desc),
            )

    @classmethod
    def load(cls, path) -> "EmbeddingIndex":
        with np.load(path, allow_pickle=False) as data:
            if "format" not in data or str(data["format"]) != cls.FORMAT:
                raise DataFormatError(f"{path}: not a {cls.FORMAT} file")
            return cls(
                cids=[str(c) for c in data["cids"]],
                matrix=data["matrix"],
                embedder_desc=str(data["embedder"]),
            )


def build_dense_index(corpus, embedder: Embedder, batch_size: int = 256) -> EmbeddingIndex:
    """Embed every corpus document (in corpus order) into an index.

    Failed batches are collected and reported together; no partial
    index is returned.  Zero-norm embeddings are kept (as zero rows)
    and flagged on the index.
    """
    cids = [d.cid for d in corpus]
    texts = [d.text for d in corpus]
    rows: list[np.ndarray] = []
    failed: list[str] = []
    for start in range(0, len(cids), batch_size):
        keys = cids[start:start + batch_size]
        try:
            chunk = embedder.embed_for_keys(keys, texts[start:start + batch_size])
        except (EmbeddingError, RemoteError, ProtocolError) as exc:
            failed.extend(keys)
            last_error = exc
            continue
        rows.append(np.asarray(chunk, dtype=np.float64))
    if failed:
        shown = ", ".join(repr(c) for c in failed[:20])
        more = f" (+{len(failed) - 20} more)" if len(failed) > 20 else ""
        raise IndexBuildError(
            f"embedding failed for {len(failed)} cid(s): {shown}{more}; "
            f"last error: {last_error}"
        )
    if rows:
        matrix = np.vstack(rows)
    else:
        matrix = np.zeros((0, getattr(embedder, "dim", 1) or 1), dtype=np.float64)
    return EmbeddingIndex(cids, matrix, embedder_desc=embedder.describe())


def dense_topk(index: EmbeddingIndex, query_vector, k: int) -> list[tuple[str, float]]:
    """Exact scan: cosine scores descending, ties by cid ascending."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    q = np.asarray(query_vector, dtype=np.float64)
    if q.shape != (index.dim,):
        raise ParameterError(f"query has shape {q.shape}, index dimension is {index.dim}")
    if index.n == 0:
        return []
    norm = float(np.linalg.norm(q))
    if norm > 0.0:
        q = q / norm
    scores = index.matrix @ q
    order = np.lexsort((index.tie_rank, -scores))
    top = order[: min(k, index.n)]
    return [(index.cids[i], float(scores[i])) for i in top]


def embed_queries(questions, embedder: Embedder, batch_size: int = 256) -> dict[str, np.ndarray]:
    """Embed (qid, question) pairs into a dict keyed by qid.

    Batches that fail are collected; if any failed, an EmbeddingError
    listing every affected qid is raised and nothing is returned.
    """
    items = list(questions)
    out: dict[str, np.ndarray] = {}
    failed: list[str] = []
    for start in range(0, len(items), batch_size):
        chunk = items[start:start + batch_size]
        keys = [qid for qid, _ in chunk]
        try:
            vecs = embedder.embed_for_keys(keys, [q for _, q in chunk])
        except (EmbeddingError, RemoteError, ProtocolError) as exc:
            failed.extend(keys)
            last_error = exc
            continue
        for key, vec in zip(keys, vecs):
            out[key] = np.asarray(vec, dtype=np.float64)
    if failed:
        shown = ", ".join(repr(q) for q in failed[:20])
        more = f" (+{len(failed) - 20} more)" if len(failed) > 20 else ""
        raise EmbeddingError(
            f"embedding failed for {len(failed)} qid(s): {shown}{more}; "
            f"last error: {last_error}"
        )
    return out


def make_embedder(spec: str, *, dim: int = 256, segmenter: Segmenter | None = None,
                  timeout: float = 10.0, batch_size: int = 64) -> Embedder:
    """Resolve an embedder descriptor.

    Accepted forms: ``hashedbow``, ``hashedbow:dim=D``, ``file:PATH``,
    ``remote:URL``.
    """
    if spec == "hashedbow":
        return HashedBow(dim=dim, segmenter=segmenter)
    if spec.startswith("hashedbow:dim="):
        try:
            parsed = int(spec.split("=", 1)[1])
        except ValueError as exc:
            raise ParameterError(f"bad embedder spec {spec!r}") from exc
        return HashedBow(dim=parsed, segmenter=segmenter)
    if spec.startswith("file:"):
        return FileEmbeddings(spec[len("file:"):])
    if spec.startswith("remote:"):
        return RemoteEmbedder(spec[len("remote:"):], timeout=timeout,
                              batch_size=batch_size)
    raise ParameterError(f"unknown embedder spec {spec!r}")
