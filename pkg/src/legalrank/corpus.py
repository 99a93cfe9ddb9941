"""Corpus/QA ingestion, normalization and train/eval splitting.

Input files are UTF-8 CSV with a header row (RFC 4180 quoting).  The
corpus carries ``text`` and ``cid`` columns; the QA file carries
``question``, ``context``, ``cid`` and ``qid``.  The ``context`` and
``cid`` cells hold JSON-style string arrays ("[\"a\", \"b\"]"); a bare
unbracketed value is accepted as a singleton list, and Python-repr
arrays with single quotes are tolerated because spreadsheet exports
commonly produce them.
"""

import ast
import csv
import json
import math
import sys
from dataclasses import dataclass

from .errors import DataFormatError, IngestionError, ParameterError, UnknownIdError
from .rng import SplitMix64

# Legal documents exceed csv's default 128 KiB cell cap.
csv.field_size_limit(sys.maxsize)


@dataclass(frozen=True)
class Document:
    """One corpus entry: a stable identifier plus its (possibly empty) text."""

    cid: str
    text: str


@dataclass(frozen=True)
class QaRecord:
    """One raw QA row: a question with one or more answer contexts."""

    qid: str
    question: str
    contexts: tuple[str, ...]
    cids: tuple[str, ...]


@dataclass(frozen=True)
class QaPair:
    """A normalized (question, gold document) supervision pair."""

    qid: str
    question: str
    cid: str


class Corpus:
    """Immutable ordered document collection with O(1) cid lookup."""

    def __init__(self, documents):
        self._documents = list(documents)
        self._by_cid: dict[str, Document] = {}
        for doc in self._documents:
            if doc.cid in self._by_cid:
                raise IngestionError(f"duplicate cid {doc.cid!r}")
            self._by_cid[doc.cid] = doc
        self._sorted_cids: list[str] | None = None

    def __len__(self) -> int:
        return len(self._documents)

    def __iter__(self):
        return iter(self._documents)

    def __contains__(self, cid: str) -> bool:
        return cid in self._by_cid

    @property
    def documents(self) -> list[Document]:
        return self._documents

    @property
    def cids(self) -> list[str]:
        """Document ids in corpus order."""
        return [d.cid for d in self._documents]

    def sorted_cids(self) -> list[str]:
        """Document ids in ascending order, computed once and cached."""
        if self._sorted_cids is None:
            self._sorted_cids = sorted(self._by_cid)
        return self._sorted_cids

    def lookup(self, cid: str) -> Document:
        try:
            return self._by_cid[cid]
        except KeyError:
            raise UnknownIdError(f"unknown cid {cid!r}") from None


def _open_reader(path):
    fh = open(path, "r", encoding="utf-8", newline="")
    reader = csv.DictReader(fh)
    if reader.fieldnames is None:
        fh.close()
        raise DataFormatError(f"{path}: empty file, expected a CSV header row")
    return fh, reader


def _require_columns(path, fieldnames, required):
    missing = [c for c in required if c not in fieldnames]
    if missing:
        raise DataFormatError(f"{path}: missing column(s) {', '.join(missing)}")


def load_corpus(path) -> Corpus:
    """Read a corpus CSV (columns ``text``, ``cid`` in any order).

    Row order is preserved.  Empty text cells are retained as empty
    documents.  Raises DataFormatError for a missing column and
    IngestionError for a duplicate cid.
    """
    fh, reader = _open_reader(path)
    with fh:
        _require_columns(path, reader.fieldnames, ("text", "cid"))
        documents = []
        seen = set()
        for row in reader:
            cid = row.get("cid") or ""
            if cid in seen:
                raise IngestionError(f"{path}: duplicate cid {cid!r}")
            seen.add(cid)
            documents.append(Document(cid=cid, text=row.get("text") or ""))
    return Corpus(documents)


def _parse_list_cell(cell, qid: str, column: str) -> tuple[str, ...]:
    raw = (cell or "").strip()
    if not raw.startswith("["):
        return (raw,)
    try:
        values = json.loads(raw)
    except json.JSONDecodeError:
        try:
            values = ast.literal_eval(raw)
        except (ValueError, SyntaxError) as exc:
            raise DataFormatError(
                f"qid {qid!r}: cannot parse {column} cell {raw[:80]!r}"
            ) from exc
    if not isinstance(values, list):
        raise DataFormatError(f"qid {qid!r}: {column} cell is not a list")
    out = []
    for v in values:
        if isinstance(v, str):
            out.append(v)
        elif isinstance(v, int):
            out.append(str(v))
        else:
            raise DataFormatError(
                f"qid {qid!r}: {column} list holds a non-string element {v!r}"
            )
    return tuple(out)


def load_qa(path) -> list[QaRecord]:
    """Read a QA CSV (columns ``question``, ``context``, ``cid``, ``qid``).

    ``context``/``cid`` cells are parsed as string lists; their lengths
    must match and be at least 1.  qids must be unique within the file.
    """
    fh, reader = _open_reader(path)
    with fh:
        _require_columns(path, reader.fieldnames, ("question", "context", "cid", "qid"))
        records = []
        seen = set()
        for row in reader:
            qid = row.get("qid") or ""
            if qid in seen:
                raise IngestionError(f"{path}: duplicate qid {qid!r}")
            seen.add(qid)
            contexts = _parse_list_cell(row.get("context"), qid, "context")
            cids = _parse_list_cell(row.get("cid"), qid, "cid")
            if len(contexts) != len(cids):
                raise DataFormatError(
                    f"qid {qid!r}: {len(contexts)} context(s) but {len(cids)} cid(s)"
                )
            if not cids:
                raise DataFormatError(f"qid {qid!r}: empty context/cid lists")
            records.append(
                QaRecord(qid=qid, question=row.get("question") or "",
                         contexts=contexts, cids=cids)
            )
    return records


def normalize_qa(records, corpus: Corpus) -> list[QaPair]:
    """Split multi-answer records into one pair per (qid, cid).

    The answer snippets are dropped; the full document is resolved later
    through the corpus, so only ids are kept.  Output order follows the
    records, then each record's cid order.  A cid listed twice in one
    record or absent from the corpus is an error.
    """
    pairs = []
    for rec in records:
        seen = set()
        for cid in rec.cids:
            if cid in seen:
                raise IngestionError(f"qid {rec.qid!r}: cid {cid!r} listed twice")
            seen.add(cid)
            if cid not in corpus:
                raise UnknownIdError(f"qid {rec.qid!r}: unknown cid {cid!r}")
            pairs.append(QaPair(qid=rec.qid, question=rec.question, cid=cid))
    return pairs


def split_train_eval(pairs, ratio: float, seed: int):
    """Partition pairs into (train, eval) by distinct qid.

    All pairs of one question land on the same side, preventing
    evaluation leakage.  The split is deterministic for a given seed:
    floor(ratio * #qids) questions go to train.
    """
    if not 0.0 < ratio < 1.0:
        raise ParameterError(f"split ratio must be in (0, 1), got {ratio}")
    qids = list(dict.fromkeys(p.qid for p in pairs))
    order = list(qids)
    SplitMix64(seed).shuffle(order)
    n_train = math.floor(ratio * len(qids))
    train_qids = set(order[:n_train])
    train = [p for p in pairs if p.qid in train_qids]
    eval_ = [p for p in pairs if p.qid not in train_qids]
    return train, eval_


def answers_per_question(records, edges=(1, 2, 3, 4)):
    """Bucketed counts of how many gold documents each question lists."""
    from .segment import bucket_counts

    return bucket_counts([len(r.cids) for r in records], edges)
