"""Retrieval evaluation: Exist@m and MRR@k over multi-gold queries.

A run maps qid -> ordered (cid, score) list; qrels map qid -> non-empty
set of gold cids.  Queries present in qrels but absent from the run
score 0 rather than being skipped, so missing output can never inflate
a result.
"""

import json

from .errors import DataFormatError, ParameterError

Qrels = dict[str, set[str]]
Run = dict[str, list[tuple[str, float]]]


def exist_at_m(run: Run, qrels: Qrels, m: int) -> float:
    """Fraction of queries with at least one gold cid in the top m."""
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    if not qrels:
        raise ParameterError("qrels must not be empty")
    hits = 0
    for qid in sorted(qrels):
        gold = qrels[qid]
        ranked = run.get(qid, [])
        if any(cid in gold for cid, _ in ranked[:m]):
            hits += 1
    return hits / len(qrels)


def mrr_at_k(run: Run, qrels: Qrels, k: int) -> float:
    """Mean reciprocal rank of the first gold cid within the top k."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if not qrels:
        raise ParameterError("qrels must not be empty")
    total = 0.0
    for qid in sorted(qrels):
        gold = qrels[qid]
        ranked = run.get(qid, [])
        for rank, (cid, _) in enumerate(ranked[:k], start=1):
            if cid in gold:
                total += 1.0 / rank
                break
    return total / len(qrels)


def metric_report(exist: float, mrr: float, n: int, m: int, k: int) -> dict:
    """The JSON-ready report shape shared by the CLI and the pipeline."""
    return {"exist@m": exist, "mrr@k": mrr, "N": n, "m": m, "k": k}


def load_qrels(path) -> Qrels:
    """Read gold labels: TSV ``qid<TAB>cid`` lines, or JSONL pair objects."""
    qrels: Qrels = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.lstrip().startswith("{"):
                try:
                    obj = json.loads(line)
                    qid, cid = obj["qid"], obj["cid"]
                except (json.JSONDecodeError, KeyError) as exc:
                    raise DataFormatError(f"{path}:{lineno}: bad qrels object") from exc
            else:
                parts = line.split("\t")
                if len(parts) != 2:
                    raise DataFormatError(
                        f"{path}:{lineno}: expected 'qid<TAB>cid', got {line[:80]!r}"
                    )
                qid, cid = parts
            qrels.setdefault(qid, set()).add(cid)
    return qrels


def load_run(path) -> Run:
    """Read a run file: TSV ``qid<TAB>rank<TAB>cid<TAB>score``, rank from 1."""
    rows: dict[str, list[tuple[int, str, float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 4 tab-separated fields"
                )
            qid, rank_s, cid, score_s = parts
            try:
                rank = int(rank_s)
                score = float(score_s)
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: bad rank or score") from exc
            rows.setdefault(qid, []).append((rank, cid, score))
    run: Run = {}
    for qid, entries in rows.items():
        entries.sort(key=lambda e: e[0])
        seen = set()
        ranked = []
        for _, cid, score in entries:
            if cid in seen:
                raise DataFormatError(f"{path}: duplicate cid {cid!r} for qid {qid!r}")
            seen.add(cid)
            ranked.append((cid, score))
        run[qid] = ranked
    return run


def save_run(run: Run, path) -> None:
    """Write a run file with qids sorted and ranks renumbered from 1."""
    with open(path, "w", encoding="utf-8") as fh:
        for qid in sorted(run):
            for rank, (cid, score) in enumerate(run[qid], start=1):
                fh.write(f"{qid}\t{rank}\t{cid}\t{score!r}\n")


def save_qrels(qrels: Qrels, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid in sorted(qrels):
            for cid in sorted(qrels[qid]):
                fh.write(f"{qid}\t{cid}\n")
