"""Negative-example mining from first-stage candidates.

Three strategies over a question's candidate pool (the retriever's top
``pool_size``, gold documents removed):

    hard       the highest-ranked remaining candidates, in rank order
    semi_hard  a uniform sample (without replacement) of the remainder
    easy       a uniform sample from the whole corpus minus the golds

Random choices are drawn from a per-question SplitMix64 stream derived
from (seed, qid), so mining is reproducible regardless of question
order or thread count.  Sampling runs a seeded partial Fisher-Yates
over the cid-ascending candidate list.
"""

import bisect
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, ParameterError
from .rng import SplitMix64, derive_stream_seed, sample_without_replacement

log = logging.getLogger(__name__)

_STRATEGIES = ("hard", "semi_hard", "easy")


@dataclass(frozen=True)
class MiningConfig:
    strategy: str
    n: int
    seed: int
    pool_size: int = 90

    def __post_init__(self):
        if self.strategy not in _STRATEGIES:
            raise ParameterError(
                f"strategy must be one of {', '.join(_STRATEGIES)}, got {self.strategy!r}"
            )
        if self.n < 1:
            raise ParameterError(f"n must be >= 1, got {self.n}")
        if self.pool_size < 1:
            raise ParameterError(f"pool_size must be >= 1, got {self.pool_size}")


@dataclass(frozen=True)
class LabeledPair:
    """One training example; rank is provenance only and ignored by ==."""

    qid: str
    question: str
    cid: str
    label: int
    strategy: str
    rank: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ParameterError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class BandReport:
    """Score-distribution summary over the bands <0.5, 0.5-0.8, 0.8-0.9, >=0.9."""

    fractions: tuple[float, float, float, float] | None
    mean: float | None
    count: int

    def to_json_dict(self) -> dict:
        f = self.fractions
        return {
            "lt_0_5": None if f is None else f[0],
            "b_0_5_0_8": None if f is None else f[1],
            "b_0_8_0_9": None if f is None else f[2],
            "ge_0_9": None if f is None else f[3],
            "mean": self.mean,
            "count": self.count,
        }


class _SortedExcluding:
    """Indexed view of a sorted list with some positions skipped."""

    def __init__(self, items: list, excluded_positions: list[int]):
        self._items = items
        self._excluded = sorted(excluded_positions)

    def __len__(self):
        return len(self._items) - len(self._excluded)

    def __getitem__(self, i: int):
        v = i
        for pos in self._excluded:
            if pos <= v:
                v += 1
            else:
                break
        return self._items[v]


def _question_rng(cfg: MiningConfig, qid: str) -> SplitMix64:
    return SplitMix64(derive_stream_seed(cfg.seed, qid))


def mine_negatives(qid: str, candidates, gold: set[str], corpus, cfg: MiningConfig) -> list[str]:
    """Pick negative cids for one question.

    ``candidates`` is the retriever's ranked (cid, score) list; only its
    first ``cfg.pool_size`` entries form the pool for the pool-based
    strategies.  The result is disjoint from ``gold`` and free of
    duplicates; an exhausted pool yields an empty list.
    """
    if not gold:
        raise ParameterError(f"qid {qid!r}: gold set must not be empty")
    if cfg.strategy == "hard":
        remaining = [cid for cid, _ in candidates[:cfg.pool_size] if cid not in gold]
        result = remaining[:cfg.n]
    elif cfg.strategy == "semi_hard":
        remaining = sorted({cid for cid, _ in candidates[:cfg.pool_size]} - gold)
        result = sample_without_replacement(remaining, cfg.n, _question_rng(cfg, qid))
    else:
        sorted_cids = corpus.sorted_cids()
        positions = []
        for g in gold:
            pos = bisect.bisect_left(sorted_cids, g)
            if pos < len(sorted_cids) and sorted_cids[pos] == g:
                positions.append(pos)
        view = _SortedExcluding(sorted_cids, positions)
        result = sample_without_replacement(view, cfg.n, _question_rng(cfg, qid))
    if not result:
        log.debug("qid %s: no negatives available (strategy=%s)", qid, cfg.strategy)
    return result


def label_negatives(qid: str, question: str, neg_cids, strategy: str,
                    candidates=None) -> list[LabeledPair]:
    """Wrap mined cids as label-0 pairs, attaching pool ranks when known."""
    ranks: dict[str, int] = {}
    if candidates is not None:
        ranks = {cid: i for i, (cid, _) in enumerate(candidates, start=1)}
    return [
        LabeledPair(qid=qid, question=question, cid=cid, label=0,
                    strategy=strategy, rank=ranks.get(cid))
        for cid in neg_cids
    ]


def band_stats(scores) -> BandReport:
    """Distribute scores over the four similarity bands.

    Band edges 0.5, 0.8 and 0.9 are closed on the upper band, i.e. the
    bands are (-inf, 0.5), [0.5, 0.8), [0.8, 0.9), [0.9, +inf).
    """
    arr = np.asarray(list(scores), dtype=np.float64)
    count = int(arr.size)
    if count == 0:
        return BandReport(fractions=None, mean=None, count=0)
    c0 = int(np.count_nonzero(arr < 0.5))
    c1 = int(np.count_nonzero((arr >= 0.5) & (arr < 0.8)))
    c2 = int(np.count_nonzero((arr >= 0.8) & (arr < 0.9)))
    c3 = int(np.count_nonzero(arr >= 0.9))
    return BandReport(
        fractions=(c0 / count, c1 / count, c2 / count, c3 / count),
        mean=float(arr.mean()),
        count=count,
    )


def export_pairs(positives, negatives, path) -> None:
    """Write training pairs as JSON lines.

    One object per line with keys qid, question, cid, label, strategy;
    for each qid its positives come first, then its negatives.  qids
    appear in order of first appearance (positives scanned first).
    """
    pos_by_qid: dict[str, list] = {}
    for p in positives:
        pos_by_qid.setdefault(p.qid, []).append(p)
    neg_by_qid: dict[str, list] = {}
    for n in negatives:
        neg_by_qid.setdefault(n.qid, []).append(n)
    order = list(dict.fromkeys(list(pos_by_qid) + list(neg_by_qid)))
    with open(path, "w", encoding="utf-8") as fh:
        for qid in order:
            for p in pos_by_qid.get(qid, []):
                fh.write(json.dumps(
                    {"qid": p.qid, "question": p.question, "cid": p.cid,
                     "label": 1, "strategy": "positive"},
                    ensure_ascii=False) + "\n")
            for n in neg_by_qid.get(qid, []):
                fh.write(json.dumps(
                    {"qid": n.qid, "question": n.question, "cid": n.cid,
                     "label": n.label, "strategy": n.strategy},
                    ensure_ascii=False) + "\n")


def load_pairs(path) -> list[LabeledPair]:
    """Parse a file written by :func:`export_pairs` back into pairs."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(LabeledPair(
                    qid=obj["qid"], question=obj["question"], cid=obj["cid"],
                    label=int(obj["label"]), strategy=obj["strategy"],
                ))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataFormatError(f"{path}:{lineno}: bad pair object") from exc
    return out
