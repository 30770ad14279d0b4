"""Local (per-statement ranking) and global (bipartite matching) decoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import assignment
from .corpus import Token
from .encoders import ModelState, forward, score_matrix


class DecodingError(Exception):
    pass


class SizeMismatch(DecodingError):
    pass


class EmptyCollection(DecodingError):
    pass


@dataclass
class RankingResult:
    """Per-statement rankings of all proofs, plus the 1-based rank of the
    gold (same-index) proof."""

    rankings: list[list[tuple[int, float]]]
    gold_rank: np.ndarray


@dataclass
class MatchResult:
    assignment: np.ndarray
    objective: float
    padded_flag: bool
    k_used: int | None  # None = no pruning ("All")


DEFAULT_BLOCK_SIZE = 1024


def encode_collection(state: ModelState, docs: list[list[Token]]) -> np.ndarray:
    return np.stack([forward(state, doc)[0] for doc in docs])


def build_score_matrix(state: ModelState,
                       statements: list[list[Token]],
                       proofs: list[list[Token]],
                       block_size: int = DEFAULT_BLOCK_SIZE) -> np.ndarray:
    """m[i][j] = score(encode(statement i), encode(proof j)).

    Each text is encoded exactly once; statements are processed in row
    blocks so large matrices never hold all statement activations at once.
    """
    if not statements or not proofs:
        raise EmptyCollection("empty statement or proof collection")
    if len(statements) != len(proofs):
        raise SizeMismatch(
            f"{len(statements)} statements vs {len(proofs)} proofs")
    p_vecs = encode_collection(state, proofs)
    n = len(statements)
    m = np.empty((n, n))
    for start in range(0, n, block_size):
        block = statements[start:start + block_size]
        s_vecs = encode_collection(state, block)
        m[start:start + len(block)] = score_matrix(state, s_vecs, p_vecs)
    return m


def decode_local(m: np.ndarray) -> RankingResult:
    """Rank every proof for every statement by (score desc, index asc);
    gold is the same-index proof."""
    n = m.shape[0]
    rankings = []
    gold_rank = np.empty(n, dtype=np.int64)
    for i in range(n):
        order = np.argsort(-m[i], kind="stable")
        rankings.append([(int(j), float(m[i, j])) for j in order])
        gold = m[i, i]
        gold_rank[i] = 1 + int(np.sum(m[i] > gold)) \
            + int(np.sum(m[i, :i] == gold))
    return RankingResult(rankings, gold_rank)


def decode_global(m: np.ndarray, k: int | None = None) -> MatchResult:
    """One-to-one matching maximizing the total score; k prunes each row to
    its k best proofs before the sparse solve, None solves densely."""
    if k is None:
        proof_of, objective = assignment.solve_dense(m)
        return MatchResult(proof_of, objective, False, None)
    sparse = assignment.prune_topk(m, k)
    proof_of, objective, padded = assignment.solve_sparse(sparse)
    return MatchResult(proof_of, objective, padded, k)
