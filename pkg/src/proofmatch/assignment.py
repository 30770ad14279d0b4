"""Maximization linear assignment: brute-force oracle, exact dense solver,
and a sparse solver over top-k-pruned score matrices.

The public contract is maximization of the summed scores of a perfect
matching; negation to a minimization problem is an internal detail of the
library solvers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import min_weight_full_bipartite_matching


class AssignmentError(Exception):
    pass


class TooLarge(AssignmentError):
    pass


class BadK(AssignmentError):
    pass


# Gap below the smallest retained score used for cells removed by pruning.
SENTINEL_GAP = 1e6

_BRUTE_LIMIT = 9


@dataclass
class SparseScores:
    """Top-k-pruned score matrix: per row, retained columns sorted by
    descending score (ties by lower column index)."""

    n: int
    k: int
    cols: list[np.ndarray]
    vals: list[np.ndarray]


def solve_brute(m: np.ndarray) -> tuple[np.ndarray, float]:
    """Exhaustive maximum over all permutations; ties break to the
    lexicographically smallest permutation. Only for n <= 9."""
    n = m.shape[0]
    if n > _BRUTE_LIMIT:
        raise TooLarge(f"brute-force enumeration limited to n <= {_BRUTE_LIMIT}")
    best_perm = None
    best = -np.inf
    rows = np.arange(n)
    for perm in itertools.permutations(range(n)):
        total = float(m[rows, perm].sum())
        if total > best:
            best = total
            best_perm = perm
    return np.array(best_perm, dtype=np.int64), best


def solve_dense(m: np.ndarray) -> tuple[np.ndarray, float]:
    """Optimal maximization assignment of a dense score matrix."""
    rows, cols = linear_sum_assignment(m, maximize=True)
    return cols.astype(np.int64), float(m[rows, cols].sum())


def prune_topk(m: np.ndarray, k: int) -> SparseScores:
    """Retain each row's k highest-scoring columns (ties by lower index)."""
    n = m.shape[0]
    if not 1 <= k <= n:
        raise BadK(f"k={k} outside [1, {n}]")
    cols_out, vals_out = [], []
    for i in range(n):
        order = np.argsort(-m[i], kind="stable")[:k]
        cols_out.append(order.astype(np.int64))
        vals_out.append(m[i, order].astype(np.float64))
    return SparseScores(n, k, cols_out, vals_out)


def solve_sparse(sparse: SparseScores) -> tuple[np.ndarray, float, bool]:
    """Optimal assignment over the retained edges.

    When the retained edges admit no perfect matching, the missing cells are
    treated as a large negative sentinel (min retained score - 1e6) and the
    padded flag is set; the reported objective covers genuine edges only.
    """
    n = sparse.n
    row_idx = np.concatenate([np.full(len(c), i, dtype=np.int64)
                              for i, c in enumerate(sparse.cols)])
    col_idx = np.concatenate(sparse.cols)
    vals = np.concatenate(sparse.vals)
    # Shift to strictly positive minimization weights; perfect matchings all
    # have n edges, so a constant shift preserves the argmax.
    weights = (vals.max() - vals) + 1.0
    graph = csr_matrix((weights, (row_idx, col_idx)), shape=(n, n))
    try:
        rows, cols = min_weight_full_bipartite_matching(graph)
    except ValueError:
        return _solve_padded(sparse)
    proof_of = np.empty(n, dtype=np.int64)
    proof_of[rows] = cols
    retained = {(int(i), int(j)): float(v)
                for i, j, v in zip(row_idx, col_idx, vals)}
    objective = sum(retained[(i, int(proof_of[i]))] for i in range(n))
    return proof_of, objective, False


def _solve_padded(sparse: SparseScores) -> tuple[np.ndarray, float, bool]:
    n = sparse.n
    min_val = min(float(v.min()) for v in sparse.vals)
    sentinel = min_val - SENTINEL_GAP
    dense = np.full((n, n), sentinel)
    genuine = np.zeros((n, n), dtype=bool)
    for i, (cols, vals) in enumerate(zip(sparse.cols, sparse.vals)):
        dense[i, cols] = vals
        genuine[i, cols] = True
    proof_of, _ = solve_dense(dense)
    rows = np.arange(n)
    used = genuine[rows, proof_of]
    objective = float(dense[rows[used], proof_of[used]].sum())
    return proof_of, objective, True
