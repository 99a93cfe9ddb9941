"""Numerical loss laboratory.

Implements the three losses the retrieval training story hinges on
(in-batch softmax ranking, BCE-with-logits, cosine MSE) with analytic
gradients, a central-difference checker, and a miniature linear
bag-of-tokens trainer for observing how the loss choice shapes the
query/document similarity matrix: softmax ranking separates matched
pairs from in-batch negatives, while positives-only cosine regression
drags every similarity upward.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, TrainingError

_EPS_NORM = 1e-12


@dataclass
class LossReport:
    loss: float
    gradient: np.ndarray


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def mnrl_loss(sim, scale: float = 20.0) -> LossReport:
    """In-batch multiple-negatives ranking loss over a square similarity
    matrix whose diagonal holds the matched pairs.

    loss = -(1/B) sum_i log softmax(scale * sim[i, :])[i], with the
    analytic gradient taken with respect to ``sim`` itself.
    """
    mat = np.asarray(sim, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ParameterError(f"similarity matrix must be square, got {mat.shape}")
    if mat.shape[0] < 1:
        raise ParameterError("similarity matrix must be at least 1x1")
    if scale <= 0:
        raise ParameterError(f"scale must be positive, got {scale}")
    b = mat.shape[0]
    z = scale * mat
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    loss = float((lse - np.diag(z)).sum() / b)
    softmax = np.exp(z - lse[:, None])
    grad = (scale / b) * (softmax - np.eye(b))
    return LossReport(loss=loss, gradient=grad)


def bce_with_logits(logits, labels) -> LossReport:
    """Numerically stable binary cross-entropy on raw scores.

    Per element: max(x, 0) - x*y + ln(1 + e^-|x|), averaged; the
    gradient per logit is (sigmoid(x) - y) / len.
    """
    x = np.atleast_1d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_1d(np.asarray(labels, dtype=np.float64))
    if x.shape != y.shape:
        raise ParameterError(f"shape mismatch: {x.shape} vs {y.shape}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ParameterError("labels must be 0 or 1")
    per = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    grad = (_sigmoid(x) - y) / x.size
    return LossReport(loss=float(per.mean()), gradient=grad)


def cosine_mse_loss(sims, targets) -> LossReport:
    """Mean squared error between similarities and target values."""
    s = np.atleast_1d(np.asarray(sims, dtype=np.float64))
    t = np.atleast_1d(np.asarray(targets, dtype=np.float64))
    if s.shape != t.shape:
        raise ParameterError(f"shape mismatch: {s.shape} vs {t.shape}")
    diff = s - t
    return LossReport(
        loss=float((diff * diff).mean()),
        gradient=2.0 * diff / s.size,
    )


def finite_diff(f, x, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function."""
    base = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(base)
    it = np.nditer(base, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        hi = base.copy()
        hi[idx] += eps
        lo = base.copy()
        lo[idx] -= eps
        grad[idx] = (f(hi) - f(lo)) / (2.0 * eps)
        it.iternext()
    return grad


@dataclass
class TrainConfig:
    learning_rate: float = 4e-5
    epochs: int = 10
    batch_size: int = 64
    dim: int = 16
    seed: int = 42
    scale: float = 20.0


class ToyEmbedder:
    """Linear bag-of-tokens encoder: one weight row per vocabulary token.

    Unknown tokens are ignored at encode time, so an out-of-vocabulary
    text embeds to the zero vector.
    """

    def __init__(self, vocab: dict[str, int], weights: np.ndarray):
        self.vocab = vocab
        self.weights = weights

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def encode(self, tokens) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for tok in tokens:
            tid = self.vocab.get(tok)
            if tid is not None:
                vec += self.weights[tid]
        return vec

    def encode_batch(self, token_lists) -> np.ndarray:
        return np.stack([self.encode(toks) for toks in token_lists])


@dataclass
class TrainResult:
    embedder: ToyEmbedder
    trace: list[dict] = field(default_factory=list)


def _bag_matrix(token_lists, vocab: dict[str, int]) -> np.ndarray:
    mat = np.zeros((len(token_lists), len(vocab)), dtype=np.float64)
    for i, tokens in enumerate(token_lists):
        for tok in tokens:
            mat[i, vocab[tok]] += 1.0
    return mat


def _cosine_matrix(u: np.ndarray, v: np.ndarray):
    un = np.maximum(np.linalg.norm(u, axis=1), _EPS_NORM)
    vn = np.maximum(np.linalg.norm(v, axis=1), _EPS_NORM)
    uh = u / un[:, None]
    vh = v / vn[:, None]
    return uh @ vh.T, un, vn, uh, vh


def _cosine_backward(g, s, un, vn, uh, vh):
    # dL/dU and dL/dV from dL/dS for S = cos(U rows, V rows).
    du = (g @ vh) / un[:, None] - (g * s).sum(axis=1)[:, None] * uh / un[:, None]
    dv = (g.T @ uh) / vn[:, None] - (g * s).sum(axis=0)[:, None] * vh / vn[:, None]
    return du, dv


def _sim_stats(s: np.ndarray) -> tuple[float, float]:
    b = s.shape[0]
    diag = float(np.trace(s) / b)
    if b < 2:
        return diag, float("nan")
    off = float((s.sum() - np.trace(s)) / (b * (b - 1)))
    return diag, off


def toy_train(pairs, loss_kind: str, config: TrainConfig | None = None) -> TrainResult:
    """Train the linear encoder with plain gradient descent.

    ``pairs`` holds (query tokens, document tokens) tuples.  ``mnrl``
    needs at least two pairs (in-batch negatives); batches that shrink
    to a single pair are skipped for it.  ``cosine_mse`` regresses each
    matched pair's cosine toward 1.

    The trace records, per epoch, the mean loss plus the diagonal and
    off-diagonal mean of the full-dataset similarity matrix; entry 0 is
    the pre-training snapshot.
    """
    cfg = config or TrainConfig()
    pairs = list(pairs)
    if loss_kind not in ("mnrl", "cosine_mse"):
        raise ParameterError(f"unknown loss kind {loss_kind!r}")
    if not pairs:
        raise ParameterError("at least one pair is required")
    if loss_kind == "mnrl" and len(pairs) < 2:
        raise ParameterError("mnrl needs at least 2 pairs for in-batch negatives")
    if cfg.epochs < 1:
        raise ParameterError("epochs must be >= 1")
    if cfg.batch_size < 1:
        raise ParameterError("batch_size must be >= 1")

    vocab: dict[str, int] = {}
    for q_tokens, d_tokens in pairs:
        for tok in list(q_tokens) + list(d_tokens):
            if tok not in vocab:
                vocab[tok] = len(vocab)
    xq = _bag_matrix([q for q, _ in pairs], vocab)
    xd = _bag_matrix([d for _, d in pairs], vocab)

    rng = np.random.default_rng(cfg.seed)
    weights = rng.normal(0.0, 0.1, size=(len(vocab), cfg.dim))

    targets_one = np.ones(len(pairs), dtype=np.float64)

    def full_stats():
        s, *_ = _cosine_matrix(xq @ weights, xd @ weights)
        if loss_kind == "mnrl":
            loss = mnrl_loss(s, cfg.scale).loss
        else:
            loss = cosine_mse_loss(np.diag(s), targets_one).loss
        diag, off = _sim_stats(s)
        return {"epoch": 0, "loss": loss, "diag_mean": diag, "offdiag_mean": off}

    trace = [full_stats()]
    batches = [
        list(range(start, min(start + cfg.batch_size, len(pairs))))
        for start in range(0, len(pairs), cfg.batch_size)
    ]

    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for batch in batches:
            if loss_kind == "mnrl" and len(batch) < 2:
                continue
            u = xq[batch] @ weights
            v = xd[batch] @ weights
            s, un, vn, uh, vh = _cosine_matrix(u, v)
            if loss_kind == "mnrl":
                report = mnrl_loss(s, cfg.scale)
                g = report.gradient
            else:
                report = cosine_mse_loss(np.diag(s), targets_one[: len(batch)])
                g = np.zeros_like(s)
                np.fill_diagonal(g, report.gradient)
            if not math.isfinite(report.loss):
                raise TrainingError(f"loss diverged at epoch {epoch}")
            losses.append(report.loss)
            du, dv = _cosine_backward(g, s, un, vn, uh, vh)
            grad_w = xq[batch].T @ du + xd[batch].T @ dv
            weights -= cfg.learning_rate * grad_w
        s, *_ = _cosine_matrix(xq @ weights, xd @ weights)
        diag, off = _sim_stats(s)
        trace.append({
            "epoch": epoch,
            "loss": float(np.mean(losses)) if losses else float("nan"),
            "diag_mean": diag,
            "offdiag_mean": off,
        })

    return TrainResult(embedder=ToyEmbedder(vocab, weights), trace=trace)


def demo_pairs() -> list[tuple[list[str], list[str]]]:
    """Eight synthetic QA pairs sharing one function token per side.

    The shared tokens give the encoder the parameter sharing that makes
    positives-only cosine regression inflate every similarity, while
    the per-pair topic tokens let the ranking loss separate matches.
    """
    return [
        (["what", f"topic{i}"], ["rule", f"statute{i}"])
        for i in range(8)
    ]


def demo_config(loss_kind: str = "mnrl") -> TrainConfig:
    """Fixed, seeded configuration for the bias demonstration."""
    del loss_kind  # same settings for both losses, kept for CLI symmetry
    return TrainConfig(learning_rate=0.2, epochs=300, batch_size=64, dim=16, seed=42)
