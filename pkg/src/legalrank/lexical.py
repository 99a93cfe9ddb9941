"""BM25 retrieval over an in-memory inverted index.

Two scoring variants are supported, following the conventions of the
widely used ``rank_bm25``-style reference implementations:

    okapi: idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
           contrib = idf * tf*(k1+1) / (tf + k1*(1 - b + b*dl/avgdl))
    plus:  idf+(t) = ln((N + 1) / df)
           contrib = idf+ * (delta + tf*(k1+1) / (tf + k1*(1 - b + b*dl/avgdl)))
           counted only for terms present in the document (tf > 0)

Both idfs are nonnegative for every df in [1, N].  Query tokens
contribute once per occurrence; tokens unknown to the index contribute
nothing.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DataFormatError, ParameterError, UnknownIdError
from .segment import DefaultSegmenter, Segmenter

_SEGMENT_BATCH = 1024


@dataclass(frozen=True)
class Bm25Params:
    variant: str = "okapi"
    k1: float = 1.5
    b: float = 0.75
    delta: float = 1.0

    def __post_init__(self):
        if self.variant not in ("okapi", "plus"):
            raise ParameterError(f"unknown BM25 variant {self.variant!r}")
        if self.k1 < 0:
            raise ParameterError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ParameterError(f"b must be in [0, 1], got {self.b}")
        if self.delta < 0:
            raise ParameterError(f"delta must be >= 0, got {self.delta}")

    @classmethod
    def default(cls, variant: str = "okapi") -> "Bm25Params":
        """Stock parameters: k1=1.5, b=0.75 (delta=1 for the plus variant)."""
        return cls(variant=variant)


class InvertedIndex:
    """Posting lists plus the document statistics BM25 needs.

    Postings are stored CSR-style: ``post_start[t] : post_start[t+1]``
    delimits term t's slice of ``post_doc``/``post_tf``, with document
    rows ascending within each slice.
    """

    FORMAT = "legalrank.lexical.v1"

    def __init__(self, cids, terms, post_start, post_doc, post_tf, doc_len,
                 segmenter_desc: str = "default",
                 default_params: "Bm25Params | None" = None):
        self.cids = list(cids)
        self.terms = list(terms)
        self.post_start = np.asarray(post_start, dtype=np.int64)
        self.post_doc = np.asarray(post_doc, dtype=np.int64)
        self.post_tf = np.asarray(post_tf, dtype=np.float64)
        self.doc_len = np.asarray(doc_len, dtype=np.int64)
        self.segmenter_desc = segmenter_desc
        self.default_params = default_params or Bm25Params()
        self.n = len(self.cids)
        self.avgdl = float(self.doc_len.sum() / self.n) if self.n else 0.0
        self.df = np.diff(self.post_start)
        self.term_id = {t: i for i, t in enumerate(self.terms)}
        self.row = {c: i for i, c in enumerate(self.cids)}
        # Rank of each row under ascending cid order; used to break score ties.
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
                terms=np.array(self.terms, dtype=np.str_),
                post_start=self.post_start,
                post_doc=self.post_doc,
                post_tf=self.post_tf,
                doc_len=self.doc_len,
                segmenter=np.array(self.segmenter_desc),
                params=np.array(params_to_json(self.default_params)),
            )

    @classmethod
    def load(cls, path) -> "InvertedIndex":
        with np.load(path, allow_pickle=False) as data:
            if "format" not in data or str(data["format"]) != cls.FORMAT:
                raise DataFormatError(f"{path}: not a {cls.FORMAT} file")
            return cls(
                cids=[str(c) for c in data["cids"]],
                terms=[str(t) for t in data["terms"]],
                post_start=data["post_start"],
                post_doc=data["post_doc"],
                post_tf=data["post_tf"],
                doc_len=data["doc_len"],
                segmenter_desc=str(data["segmenter"]),
                default_params=params_from_json(str(data["params"])),
            )


def build_lexical_index(corpus, segmenter: Segmenter | None = None) -> InvertedIndex:
    """Tokenize every document and assemble the inverted index.

    An empty corpus yields a valid empty index; empty documents
    contribute length 0 and no postings.
    """
    seg = segmenter or DefaultSegmenter()
    cids = [d.cid for d in corpus]
    doc_len = np.zeros(len(cids), dtype=np.int64)
    terms: list[str] = []
    term_id: dict[str, int] = {}
    term_rows: list[list[int]] = []
    term_tfs: list[list[float]] = []

    texts = [d.text for d in corpus]
    row = 0
    for start in range(0, len(texts), _SEGMENT_BATCH):
        batch = seg.segment_batch(texts[start:start + _SEGMENT_BATCH])
        for tokens in batch:
            doc_len[row] = len(tokens)
            counts: dict[str, int] = {}
            for tok in tokens:
                counts[tok] = counts.get(tok, 0) + 1
            for tok, tf in counts.items():
                tid = term_id.get(tok)
                if tid is None:
                    tid = len(terms)
                    term_id[tok] = tid
                    terms.append(tok)
                    term_rows.append([])
                    term_tfs.append([])
                term_rows[tid].append(row)
                term_tfs[tid].append(float(tf))
            row += 1

    post_start = np.zeros(len(terms) + 1, dtype=np.int64)
    for tid, rows in enumerate(term_rows):
        post_start[tid + 1] = post_start[tid] + len(rows)
    total = int(post_start[-1])
    post_doc = np.zeros(total, dtype=np.int64)
    post_tf = np.zeros(total, dtype=np.float64)
    for tid, rows in enumerate(term_rows):
        s = post_start[tid]
        post_doc[s:s + len(rows)] = rows
        post_tf[s:s + len(rows)] = term_tfs[tid]

    return InvertedIndex(cids, terms, post_start, post_doc, post_tf, doc_len,
                         segmenter_desc=seg.describe())


def _idf(index: InvertedIndex, params: Bm25Params, tid: int) -> float:
    df = float(index.df[tid])
    if params.variant == "okapi":
        return math.log(1.0 + (index.n - df + 0.5) / (df + 0.5))
    return math.log((index.n + 1.0) / df)


def _tf_in_doc(index: InvertedIndex, tid: int, row: int) -> float:
    s, e = index.post_start[tid], index.post_start[tid + 1]
    pos = int(np.searchsorted(index.post_doc[s:e], row))
    if pos < e - s and index.post_doc[s + pos] == row:
        return float(index.post_tf[s + pos])
    return 0.0


def bm25_score(index: InvertedIndex, params: Bm25Params, query_tokens, cid: str) -> float:
    """Score one document against a token list.

    Produces exactly the same arithmetic as the top-k kernels, so the
    two routes agree bit for bit.
    """
    row = index.row.get(cid)
    if row is None:
        raise UnknownIdError(f"unknown cid {cid!r}")
    dl = float(index.doc_len[row])
    score = 0.0
    for tok in query_tokens:
        tid = index.term_id.get(tok)
        if tid is None:
            continue
        tf = _tf_in_doc(index, tid, row)
        if tf == 0.0:
            continue
        idf = _idf(index, params, tid)
        denom = tf + params.k1 * (1.0 - params.b + params.b * dl / index.avgdl)
        if params.variant == "okapi":
            score += idf * (tf * (params.k1 + 1.0)) / denom
        else:
            score += idf * (params.delta + (tf * (params.k1 + 1.0)) / denom)
    return score


def _query_plan(index: InvertedIndex, params: Bm25Params, tokens):
    starts = np.zeros(len(tokens), dtype=np.int64)
    ends = np.zeros(len(tokens), dtype=np.int64)
    idfs = np.zeros(len(tokens), dtype=np.float64)
    for i, tok in enumerate(tokens):
        tid = index.term_id.get(tok)
        if tid is None:
            continue
        starts[i] = index.post_start[tid]
        ends[i] = index.post_start[tid + 1]
        idfs[i] = _idf(index, params, tid)
    return starts, ends, idfs


def score_all(index: InvertedIndex, params: Bm25Params, query_tokens) -> np.ndarray:
    """Dense score array over all documents for one tokenized query."""
    if index.n == 0:
        return np.zeros(0, dtype=np.float64)
    starts, ends, idfs = _query_plan(index, params, query_tokens)
    if params.variant == "okapi":
        return _kernels.okapi_scores(
            starts, ends, idfs, index.post_doc, index.post_tf, index.doc_len,
            index.avgdl, params.k1, params.b, index.n,
        )
    return _kernels.plus_scores(
        starts, ends, idfs, index.post_doc, index.post_tf, index.doc_len,
        index.avgdl, params.k1, params.b, params.delta, index.n,
    )


def lexical_topk(index: InvertedIndex, params: Bm25Params, query: str, k: int,
                 segmenter: Segmenter | None = None) -> list[tuple[str, float]]:
    """Top-k documents for a query: score descending, ties by cid ascending."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if index.n == 0:
        return []
    tokens = (segmenter or DefaultSegmenter()).segment(query)
    scores = score_all(index, params, tokens)
    order = np.lexsort((index.tie_rank, -scores))
    top = order[: min(k, index.n)]
    return [(index.cids[i], float(scores[i])) for i in top]


def bm25_score_text(index: InvertedIndex, params: Bm25Params, query_tokens,
                    doc_tokens) -> float:
    """Score an arbitrary token list against the index statistics.

    For a document that is in the corpus this reproduces
    :func:`bm25_score`; it also lets re-rankers score candidate text
    without a posting lookup.
    """
    if index.avgdl == 0.0:
        return 0.0
    counts: dict[str, int] = {}
    for tok in doc_tokens:
        counts[tok] = counts.get(tok, 0) + 1
    dl = float(len(doc_tokens))
    score = 0.0
    for tok in query_tokens:
        tid = index.term_id.get(tok)
        if tid is None:
            continue
        tf = float(counts.get(tok, 0))
        if tf == 0.0:
            continue
        idf = _idf(index, params, tid)
        denom = tf + params.k1 * (1.0 - params.b + params.b * dl / index.avgdl)
        if params.variant == "okapi":
            score += idf * (tf * (params.k1 + 1.0)) / denom
        else:
            score += idf * (params.delta + (tf * (params.k1 + 1.0)) / denom)
    return score


def params_to_json(params: Bm25Params) -> str:
    return json.dumps(
        {"variant": params.variant, "k1": params.k1, "b": params.b, "delta": params.delta}
    )


def params_from_json(text: str) -> Bm25Params:
    try:
        raw = json.loads(text)
        return Bm25Params(**raw)
    except (json.JSONDecodeError, TypeError) as exc:
        raise DataFormatError(f"bad BM25 parameter payload: {text[:80]!r}") from exc
