"""Tokenization: a default lowercase/whitespace segmenter plus a hook
for external word segmenters (Vietnamese segmentation is delegated to
such a command rather than implemented here)."""

import shlex
import subprocess

import numpy as np

from .errors import ParameterError, SegmenterError


class Segmenter:
    """Turns raw text into a token list."""

    def segment(self, text: str) -> list[str]:
        return self.segment_batch([text])[0]

    def segment_batch(self, texts: list[str]) -> list[list[str]]:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError


class DefaultSegmenter(Segmenter):
    """Lowercase, then split on Unicode whitespace."""

    def segment_batch(self, texts):
        return [t.lower().split() for t in texts]

    def describe(self):
        return "default"


class CommandSegmenter(Segmenter):
    """Run an external command once per batch.

    The command receives one line per input text on stdin (newlines
    inside a text are flattened to spaces first) and must answer with
    exactly one line of space-separated tokens per input line.
    """

    def __init__(self, argv):
        if not argv:
            raise ParameterError("segmenter command must not be empty")
        self.argv = list(argv)

    def segment_batch(self, texts):
        if not texts:
            return []
        lines = [" ".join(t.splitlines()) for t in texts]
        payload = "".join(line + "\n" for line in lines)
        try:
            proc = subprocess.run(
                self.argv, input=payload, capture_output=True, text=True, check=False
            )
        except OSError as exc:
            raise SegmenterError(f"cannot run segmenter {self.argv!r}: {exc}") from exc
        if proc.returncode != 0:
            raise SegmenterError(
                f"segmenter {self.argv[0]!r} exited with code {proc.returncode}: "
                f"{proc.stderr.strip()[:500]}"
            )
        out_lines = proc.stdout.splitlines()
        if len(out_lines) != len(texts):
            raise SegmenterError(
                f"segmenter returned {len(out_lines)} lines for {len(texts)} inputs"
            )
        return [line.split() for line in out_lines]

    def describe(self):
        return shlex.join(self.argv)


_DEFAULT = DefaultSegmenter()


def get_segmenter(spec: str) -> Segmenter:
    """Resolve a segmenter descriptor: "default" or a shell command line."""
    if spec == "default":
        return _DEFAULT
    return CommandSegmenter(shlex.split(spec))


def tokenize(text: str, segmenter: Segmenter | None = None) -> list[str]:
    """Tokenize one text with the given segmenter (default if omitted)."""
    return (segmenter or _DEFAULT).segment(text)


def bucket_counts(values, edges) -> np.ndarray:
    """Count values into half-open buckets [e0,e1), ..., [e_last, inf).

    Edges must be strictly ascending; values below the first edge are
    counted in the first bucket so totals always match the input size.
    """
    edge_arr = np.asarray(list(edges), dtype=np.float64)
    if edge_arr.size == 0 or np.any(np.diff(edge_arr) <= 0):
        raise ParameterError("bucket edges must be strictly ascending and non-empty")
    vals = np.asarray(list(values), dtype=np.float64)
    idx = np.searchsorted(edge_arr, vals, side="right") - 1
    idx = np.clip(idx, 0, edge_arr.size - 1)
    return np.bincount(idx.astype(np.int64), minlength=edge_arr.size)


def length_histogram(texts, bucket_edges, segmenter: Segmenter | None = None) -> np.ndarray:
    """Token-length histogram of texts over the given bucket edges."""
    seg = segmenter or _DEFAULT
    lengths = [len(tokens) for tokens in seg.segment_batch(list(texts))]
    return bucket_counts(lengths, bucket_edges)


def format_histogram(edges, counts) -> list[str]:
    """Render one "low<TAB>high<TAB>count" line per bucket (last high is inf)."""
    edges = list(edges)
    lines = []
    for i, count in enumerate(counts):
        high = edges[i + 1] if i + 1 < len(edges) else "inf"
        lines.append(f"{edges[i]}\t{high}\t{int(count)}")
    return lines
