"""Score-accumulation kernels for the inverted index.

This is the hot loop of lexical retrieval: for every query term, walk
its posting slice and add the term's contribution to a dense score
array over all documents.  A numba-compiled version is used when numba
is importable; set ``LEGALRANK_NO_NUMBA=1`` to force the pure-numpy
fallback (``benchmarks/bench_lexical.py`` compares the two).

Only +, -, *, / appear inside the kernels and idf values are
precomputed by the caller, so both paths produce bit-identical scores.
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an install-time extra
    HAVE_NUMBA = False

_env = os.environ.get("LEGALRANK_NO_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _env not in ("1", "true", "yes")


def _okapi_loops(starts, ends, idfs, post_doc, post_tf, doc_len, avgdl, k1, b, n_docs):
    scores = np.zeros(n_docs, dtype=np.float64)
    for qi in range(starts.shape[0]):
        idf = idfs[qi]
        for j in range(starts[qi], ends[qi]):
            d = post_doc[j]
            tf = post_tf[j]
            denom = tf + k1 * (1.0 - b + b * doc_len[d] / avgdl)
            scores[d] += idf * (tf * (k1 + 1.0)) / denom
    return scores


def _plus_loops(starts, ends, idfs, post_doc, post_tf, doc_len, avgdl, k1, b, delta, n_docs):
    scores = np.zeros(n_docs, dtype=np.float64)
    for qi in range(starts.shape[0]):
        idf = idfs[qi]
        for j in range(starts[qi], ends[qi]):
            d = post_doc[j]
            tf = post_tf[j]
            denom = tf + k1 * (1.0 - b + b * doc_len[d] / avgdl)
            scores[d] += idf * (delta + (tf * (k1 + 1.0)) / denom)
    return scores


def okapi_numpy(starts, ends, idfs, post_doc, post_tf, doc_len, avgdl, k1, b, n_docs):
    scores = np.zeros(n_docs, dtype=np.float64)
    for qi in range(starts.shape[0]):
        s, e = starts[qi], ends[qi]
        if s == e:
            continue
        docs = post_doc[s:e]
        tf = post_tf[s:e]
        denom = tf + k1 * (1.0 - b + b * doc_len[docs] / avgdl)
        scores[docs] += idfs[qi] * (tf * (k1 + 1.0)) / denom
    return scores


def plus_numpy(starts, ends, idfs, post_doc, post_tf, doc_len, avgdl, k1, b, delta, n_docs):
    scores = np.zeros(n_docs, dtype=np.float64)
    for qi in range(starts.shape[0]):
        s, e = starts[qi], ends[qi]
        if s == e:
            continue
        docs = post_doc[s:e]
        tf = post_tf[s:e]
        denom = tf + k1 * (1.0 - b + b * doc_len[docs] / avgdl)
        scores[docs] += idfs[qi] * (delta + (tf * (k1 + 1.0)) / denom)
    return scores


if HAVE_NUMBA:
    okapi_numba = njit(cache=True)(_okapi_loops)
    plus_numba = njit(cache=True)(_plus_loops)
else:  # pragma: no cover
    okapi_numba = None
    plus_numba = None

if USE_NUMBA:
    okapi_scores = okapi_numba
    plus_scores = plus_numba
else:
    okapi_scores = okapi_numpy
    plus_scores = plus_numpy
