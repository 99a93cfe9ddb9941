"""Two-stage retrieve-and-rerank orchestration.

Stage 1 pulls ``k_retrieve`` candidates (default 90) from a lexical or
dense index; stage 2 rescores exactly those candidates with a pluggable
scorer and keeps the top ``k_final`` (default 10).  A re-ranker can
never resurface a document the retriever dropped, which is why
evaluation reports Exist@k_retrieve on stage 1 next to MRR@k_final on
stage 2.
"""

from dataclasses import dataclass, field

from ._http import post_json
from .dense import Embedder, EmbeddingIndex, cosine, dense_topk
from .errors import (
    LegalRankError,
    ParameterError,
    PipelineError,
    ProtocolError,
    ScoringError,
)
from .lexical import Bm25Params, InvertedIndex, bm25_score_text, lexical_topk
from .metrics import Qrels, exist_at_m, metric_report, mrr_at_k
from .segment import DefaultSegmenter, Segmenter


class Scorer:
    """Relevance of a (question, document) text pair; higher is better."""

    def score(self, question: str, document: str) -> float:
        raise NotImplementedError

    def score_batch(self, question: str, documents: list[str]) -> list[float]:
        return [self.score(question, d) for d in documents]


class CosineScorer(Scorer):
    """Embed both texts and compare by cosine."""

    def __init__(self, embedder: Embedder):
        self.embedder = embedder

    def score_batch(self, question, documents):
        qv = self.embedder.embed(question)
        dvs = self.embedder.embed_batch(list(documents))
        return [cosine(qv, dv) for dv in dvs]

    def score(self, question, document):
        return self.score_batch(question, [document])[0]


class Bm25Scorer(Scorer):
    """BM25 against the index statistics, computed from the document text."""

    def __init__(self, index: InvertedIndex, params: Bm25Params | None = None,
                 segmenter: Segmenter | None = None):
        self.index = index
        self.params = params or index.default_params
        self.segmenter = segmenter or DefaultSegmenter()

    def score(self, question, document):
        return bm25_score_text(
            self.index, self.params,
            self.segmenter.segment(question), self.segmenter.segment(document),
        )

    def score_batch(self, question, documents):
        q_tokens = self.segmenter.segment(question)
        return [
            bm25_score_text(self.index, self.params, q_tokens, d_tokens)
            for d_tokens in self.segmenter.segment_batch(list(documents))
        ]


class BlendScorer(Scorer):
    """w1 * min-max-normalized BM25 + w2 * cosine.

    BM25 scores are normalized within the scored batch (the candidate
    set); when the batch's scores are all equal the normalized value is
    0 and the cosine side decides alone.
    """

    def __init__(self, bm25_scorer: Bm25Scorer, cosine_scorer: CosineScorer,
                 w_bm25: float = 0.5, w_cosine: float = 0.5):
        self.bm25_scorer = bm25_scorer
        self.cosine_scorer = cosine_scorer
        self.w_bm25 = w_bm25
        self.w_cosine = w_cosine

    def score_batch(self, question, documents):
        bm25 = self.bm25_scorer.score_batch(question, documents)
        cos = self.cosine_scorer.score_batch(question, documents)
        lo, hi = min(bm25, default=0.0), max(bm25, default=0.0)
        span = hi - lo
        if span > 0.0:
            normed = [(s - lo) / span for s in bm25]
        else:
            normed = [0.0] * len(bm25)
        return [self.w_bm25 * nb + self.w_cosine * c for nb, c in zip(normed, cos)]

    def score(self, question, document):
        return self.score_batch(question, [document])[0]


class RemoteScorer(Scorer):
    """Cross-encoder endpoint speaking JSON:
    {"query": ..., "documents": [...]} -> {"scores": [...]}."""

    def __init__(self, url: str, *, timeout: float = 10.0, batch_size: int = 64,
                 max_retries: int = 3):
        self.url = url
        self.timeout = timeout
        self.batch_size = batch_size
        self.max_retries = max_retries

    def score_batch(self, question, documents):
        return remote_score(
            self.url, question, list(documents),
            batch_size=self.batch_size, timeout=self.timeout,
            max_retries=self.max_retries,
        )

    def score(self, question, document):
        return self.score_batch(question, [document])[0]


class OracleScorer(Scorer):
    """Test-only scorer: 1.0 for a gold document, 0.0 otherwise.

    Questions and documents are recognized by their text, so texts must
    be unique within the evaluation fixture.
    """

    def __init__(self, corpus, qrels: Qrels, questions: dict[str, str]):
        self._gold_texts: dict[str, set[str]] = {}
        for qid, golds in qrels.items():
            question = questions.get(qid)
            if question is None:
                continue
            texts = {corpus.lookup(cid).text for cid in golds if cid in corpus}
            self._gold_texts.setdefault(question, set()).update(texts)

    def score(self, question, document):
        return 1.0 if document in self._gold_texts.get(question, ()) else 0.0


def remote_score(url: str, question: str, documents: list[str], *,
                 batch_size: int = 64, timeout: float = 10.0,
                 max_retries: int = 3) -> list[float]:
    """Score documents against a question via a remote endpoint.

    Requests are batched transparently and answers concatenated in
    order; a response whose score count disagrees with its request is a
    protocol error.
    """
    if batch_size < 1:
        raise ParameterError("batch_size must be >= 1")
    scores: list[float] = []
    for start in range(0, len(documents), batch_size):
        chunk = documents[start:start + batch_size]
        try:
            body = post_json(url, {"query": question, "documents": chunk},
                             timeout=timeout, max_retries=max_retries)
        except LegalRankError as exc:
            if isinstance(exc, ProtocolError):
                raise
            raise ScoringError(f"remote scorer failed: {exc}") from exc
        got = body.get("scores")
        if not isinstance(got, list) or len(got) != len(chunk):
            raise ProtocolError(
                f"{url}: sent {len(chunk)} documents, received "
                f"{len(got) if isinstance(got, list) else type(got)} scores"
            )
        scores.extend(float(s) for s in got)
    return scores


@dataclass(frozen=True)
class PipelineConfig:
    retriever: str = "dense"
    k_retrieve: int = 90
    k_final: int = 10

    def __post_init__(self):
        if self.retriever not in ("dense", "lexical"):
            raise ParameterError(f"retriever must be dense or lexical, got {self.retriever!r}")
        if self.k_retrieve < 1 or self.k_final < 1:
            raise ParameterError("k_retrieve and k_final must be >= 1")
        if self.k_final > self.k_retrieve:
            raise ParameterError(
                f"k_final ({self.k_final}) must not exceed k_retrieve ({self.k_retrieve})"
            )


@dataclass
class IndexBundle:
    """The first-stage indexes a pipeline may draw candidates from."""

    lexical: InvertedIndex | None = None
    bm25: Bm25Params | None = None
    dense: EmbeddingIndex | None = None
    embedder: Embedder | None = None
    segmenter: Segmenter | None = None

    def first_stage(self, question: str, k: int, retriever: str) -> list[tuple[str, float]]:
        if retriever == "lexical":
            if self.lexical is None:
                raise PipelineError("stage1 (retrieve): lexical index not loaded")
            params = self.bm25 or self.lexical.default_params
            return lexical_topk(self.lexical, params, question, k, self.segmenter)
        if self.dense is None:
            raise PipelineError("stage1 (retrieve): dense index not loaded")
        if self.embedder is None:
            raise PipelineError("stage1 (retrieve): no embedder for dense retrieval")
        try:
            qv = self.embedder.embed(question)
        except LegalRankError as exc:
            raise PipelineError(f"stage1 (retrieve): {exc}") from exc
        return dense_topk(self.dense, qv, k)


def _rerank(question: str, candidates: list[tuple[str, float]], k_final: int,
            scorer: Scorer, corpus) -> list[tuple[str, float]]:
    cids = [cid for cid, _ in candidates]
    texts = [corpus.lookup(cid).text for cid in cids]
    try:
        scores = scorer.score_batch(question, texts)
    except LegalRankError as exc:
        raise PipelineError(f"stage2 (rerank): {exc}") from exc
    if len(scores) != len(cids):
        raise PipelineError(
            f"stage2 (rerank): scorer returned {len(scores)} scores for {len(cids)} candidates"
        )
    ranked = sorted(zip(cids, scores), key=lambda t: (-t[1], t[0]))
    return [(cid, float(s)) for cid, s in ranked[:k_final]]


def retrieve_rerank(question: str, cfg: PipelineConfig, indexes: IndexBundle,
                    scorer: Scorer, corpus) -> list[tuple[str, float]]:
    """Run both stages for one question and return the final ranking.

    The output is always a subset of the stage-1 candidates, ordered by
    scorer score descending with ties broken by cid ascending.
    """
    stage1 = indexes.first_stage(question, cfg.k_retrieve, cfg.retriever)
    return _rerank(question, stage1, cfg.k_final, scorer, corpus)


@dataclass(frozen=True)
class EvalSet:
    """Evaluation questions plus their gold documents."""

    questions: dict[str, str]
    qrels: Qrels

    @classmethod
    def from_pairs(cls, pairs) -> "EvalSet":
        questions: dict[str, str] = {}
        qrels: Qrels = {}
        for p in pairs:
            questions[p.qid] = p.question
            qrels.setdefault(p.qid, set()).add(p.cid)
        return cls(questions=questions, qrels=qrels)


@dataclass
class PipelineEvalResult:
    report: dict
    stage1_run: dict = field(default_factory=dict)
    stage2_run: dict = field(default_factory=dict)


def evaluate_pipeline(evalset: EvalSet, cfg: PipelineConfig, indexes: IndexBundle,
                      scorer: Scorer, corpus) -> PipelineEvalResult:
    """Evaluate the two-stage pipeline over an evaluation set.

    Reports Exist@k_retrieve over the stage-1 candidates and
    MRR@k_final over the re-ranked output, along with both per-query
    runs.  Queries are processed in sorted qid order so output is
    stable.
    """
    if not evalset.qrels:
        raise ParameterError("evaluation set must not be empty")
    missing = [qid for qid in evalset.qrels if qid not in evalset.questions]
    if missing:
        raise ParameterError(f"qrels qid(s) without question text: {missing[:10]}")
    stage1_run: dict = {}
    stage2_run: dict = {}
    for qid in sorted(evalset.qrels):
        question = evalset.questions[qid]
        try:
            stage1 = indexes.first_stage(question, cfg.k_retrieve, cfg.retriever)
            stage2 = _rerank(question, stage1, cfg.k_final, scorer, corpus)
        except PipelineError as exc:
            raise PipelineError(f"qid {qid!r}: {exc}") from exc
        stage1_run[qid] = stage1
        stage2_run[qid] = stage2
    exist = exist_at_m(stage1_run, evalset.qrels, cfg.k_retrieve)
    mrr = mrr_at_k(stage2_run, evalset.qrels, cfg.k_final)
    report = metric_report(exist, mrr, len(evalset.qrels), cfg.k_retrieve, cfg.k_final)
    return PipelineEvalResult(report=report, stage1_run=stage1_run, stage2_run=stage2_run)
