"""Training: in-batch softmax loss, structured max-margin loss, the hybrid
alternating objective, and the optimization loop.

The local loss is the negative log softmax of the diagonal of an in-batch
score matrix. The global loss is a structured hinge whose margin counts
misassigned rows; the violating assignment is found by cost-augmented
decoding (solve the assignment problem on the scores plus a unit margin on
every off-diagonal cell).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import assignment
from .corpus import Corpus
from .encoders import (
    Gradients,
    ModelState,
    apply_gradients,
    backward,
    forward,
    score_matrix,
    score_matrix_backward,
)


class TrainingError(Exception):
    pass


class DegenerateBatch(TrainingError):
    pass


class NonFiniteLoss(TrainingError):
    def __init__(self, batch_ids: list[str]):
        super().__init__(f"non-finite loss on batch {batch_ids}")
        self.batch_ids = batch_ids


class Objective(enum.Enum):
    LOCAL = "local"
    HYBRID = "hybrid"


class Optimizer(enum.Enum):
    SGD = "sgd"
    AVERAGED_SGD = "asgd"


@dataclass
class TrainConfig:
    objective: Objective = Objective.LOCAL
    batch_size: int = 60
    epochs: int = 400
    lr: float = 5e-3
    optimizer: Optimizer = Optimizer.AVERAGED_SGD
    lr_decay: float = 0.996
    eval_every: int = 20
    seed: int = 0
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (in-batch negatives)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")


@dataclass
class LossReport:
    epoch: int
    step: int
    objective: str
    loss: float
    lr: float
    grad_norm: float
    batch_ids: list[str]


@dataclass
class TrainHistory:
    steps: list[LossReport] = field(default_factory=list)
    dev_accuracy: list[tuple[int, float]] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Losses on an in-batch score matrix


def local_loss(m_b: np.ndarray) -> tuple[float, np.ndarray]:
    """Sum over the batch of -log softmax at the diagonal.
    Gradient is softmax(rows) minus the identity."""
    b = m_b.shape[0]
    if b < 2:
        raise DegenerateBatch("local loss needs at least two in-batch pairs")
    lse = logsumexp(m_b, axis=1)
    loss = float(np.sum(lse - np.diag(m_b)))
    probs = np.exp(m_b - lse[:, None])
    grad = probs - np.eye(b)
    return loss, grad


def structured_cost(a_hat: np.ndarray) -> int:
    """Number of misassigned rows; equals the sum of positive cells of the
    assignment-matrix difference with the identity."""
    return int(np.count_nonzero(a_hat != np.arange(len(a_hat))))


def global_loss(m_b: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Structured hinge with cost-augmented decoding.

    The violating assignment maximizes score plus a unit margin on every
    off-diagonal cell, so the hinge argument is always >= its value at the
    identity (zero) and the loss is non-negative by construction.
    """
    b = m_b.shape[0]
    augmented = m_b + 1.0 - np.eye(b)
    a_hat, _ = assignment.solve_dense(augmented)
    rows = np.arange(b)
    margin = structured_cost(a_hat)
    value = margin + float(m_b[rows, a_hat].sum()) - float(np.trace(m_b))
    loss = max(0.0, value)
    grad = np.zeros_like(m_b)
    if loss > 0.0:
        grad[rows, a_hat] += 1.0
        grad -= np.eye(b)
    return loss, grad, a_hat


# ---------------------------------------------------------------------------
# Batch forward/backward through encoder + head


def batch_loss_and_grads(state: ModelState, batch_pairs,
                         loss_fn) -> tuple[float, Gradients]:
    """Encode a batch, apply loss_fn to the in-batch score matrix, and
    backpropagate to all parameters."""
    s_out = [forward(state, p.statement) for p in batch_pairs]
    p_out = [forward(state, p.proof) for p in batch_pairs]
    s_vecs = np.stack([v for v, _ in s_out])
    p_vecs = np.stack([v for v, _ in p_out])
    m_b = score_matrix(state, s_vecs, p_vecs)
    loss, d_m = loss_fn(m_b)
    grads = Gradients(state)
    d_s, d_p = score_matrix_backward(state, s_vecs, p_vecs, d_m, grads)
    for (_, cache), g in zip(s_out, d_s):
        backward(state, cache, g, grads)
    for (_, cache), g in zip(p_out, d_p):
        backward(state, cache, g, grads)
    return loss, grads


def _local(m):
    return local_loss(m)


def _global(m):
    loss, grad, _ = global_loss(m)
    return loss, grad


# ---------------------------------------------------------------------------
# Averaged SGD (Polyak tail averaging)


class _TailAverage:
    def __init__(self):
        self.count = 0
        self.state: ModelState | None = None

    def update(self, state: ModelState) -> None:
        self.count += 1
        if self.state is None:
            self.state = state.copy()
            return
        w = 1.0 / self.count
        avg = self.state
        avg.embeddings += w * (state.embeddings - avg.embeddings)
        for al, sl in zip(avg.layers, state.layers):
            al.wq += w * (sl.wq - al.wq)
            al.wk += w * (sl.wk - al.wk)
            al.wv += w * (sl.wv - al.wv)
            al.wo += w * (sl.wo - al.wo)
        avg.head.w += w * (state.head.w - avg.head.w)
        avg.head.b += w * (state.head.b - avg.head.b)


def _dev_accuracy(state: ModelState, dev_corpus: Corpus) -> float:
    from .decoding import build_score_matrix, decode_local

    m = build_score_matrix(state,
                           [p.statement for p in dev_corpus.pairs],
                           [p.proof for p in dev_corpus.pairs])
    result = decode_local(m)
    return float(np.mean(result.gold_rank == 1))


def train(corpus: Corpus, dev_corpus: Corpus, state: ModelState,
          config: TrainConfig) -> tuple[ModelState, TrainHistory]:
    """SGD/ASGD loop with per-epoch exponential learning-rate decay.

    An epoch draws batches uniformly without replacement (reshuffled each
    epoch). The hybrid objective alternates one local and one global step
    on fresh batches. The returned state is the checkpoint with the best
    dev accuracy under local decoding; with averaged SGD, evaluation and
    the returned state use the tail average of the parameters.
    """
    if not corpus.pairs or not dev_corpus.pairs:
        raise ValueError("train and dev corpora must be non-empty")
    rng = np.random.default_rng(config.seed)
    n = len(corpus.pairs)
    b = config.batch_size
    lr = config.lr
    history = TrainHistory()
    tail = _TailAverage()
    tail_start = config.epochs // 2  # averaging over the second half
    best_acc = -1.0
    best_state = state.copy()
    step_count = 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        hybrid_parity = 0
        for start in range(0, n, b):
            chunk = order[start:start + b]
            if len(chunk) < 2:
                continue  # in-batch losses need negatives
            batch = [corpus.pairs[i] for i in chunk]
            if config.objective is Objective.LOCAL:
                tag, loss_fn = "local", _local
            else:
                tag, loss_fn = (("local", _local) if hybrid_parity == 0
                                else ("global", _global))
                hybrid_parity ^= 1
            loss, grads = batch_loss_and_grads(state, batch, loss_fn)
            if not math.isfinite(loss):
                raise NonFiniteLoss([p.pair_id for p in batch])
            norm = grads.global_norm()
            if config.clip_norm and norm > config.clip_norm:
                grads.scale(config.clip_norm / norm)
            apply_gradients(state, grads, lr)
            step_count += 1
            history.steps.append(LossReport(
                epoch, step_count, tag, loss, lr, norm,
                [p.pair_id for p in batch]))
        if config.optimizer is Optimizer.AVERAGED_SGD and epoch > tail_start:
            tail.update(state)
        lr *= config.lr_decay
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            eval_state = state
            if config.optimizer is Optimizer.AVERAGED_SGD and tail.state is not None:
                eval_state = tail.state
            acc = _dev_accuracy(eval_state, dev_corpus)
            history.dev_accuracy.append((epoch, acc))
            if acc > best_acc:
                best_acc = acc
                best_state = eval_state.copy()
    return best_state, history


def write_history(history: TrainHistory, path) -> None:
    """Line-delimited log: epoch<TAB>step<TAB>objective<TAB>loss<TAB>lr."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in history.steps:
            fh.write(f"{rec.epoch}\t{rec.step}\t{rec.objective}\t"
                     f"{rec.loss:.10g}\t{rec.lr:.10g}\n")
