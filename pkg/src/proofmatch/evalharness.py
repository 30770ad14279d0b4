"""Evaluation metrics (MRR, accuracy), assignment-distribution statistics,
and the cross-replacement experiment grid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .decoding import MatchResult, RankingResult, build_score_matrix, decode_local
from .encoders import EncoderConfig, ModelState, build_vocab, init_model
from .symbols import ProtectedSet, ReplacementLevel, replace_corpus
from .training import TrainConfig, train


class EmptyInput(Exception):
    pass


@dataclass
class MetricReport:
    mrr: float | None  # None under global decoding
    accuracy: float
    n: int


def mrr(gold_ranks) -> float:
    """Mean reciprocal rank: (1/N) sum of 1/rank."""
    ranks = list(gold_ranks)
    if not ranks:
        raise EmptyInput("mrr over an empty rank list")
    if any(r < 1 for r in ranks):
        raise ValueError("ranks must be >= 1")
    return float(np.mean([1.0 / r for r in ranks]))


def accuracy_local(result: RankingResult) -> float:
    return float(np.mean(result.gold_rank == 1))


def accuracy_global(result: MatchResult) -> float:
    n = len(result.assignment)
    return float(np.mean(result.assignment == np.arange(n)))


def report_local(result: RankingResult) -> MetricReport:
    return MetricReport(mrr(result.gold_rank), accuracy_local(result),
                        len(result.gold_rank))


def report_global(result: MatchResult) -> MetricReport:
    return MetricReport(None, accuracy_global(result), len(result.assignment))


# ---------------------------------------------------------------------------
# Assignment distribution under local decoding

_CUM_THRESHOLDS = (20, 10, 5, 2)


@dataclass
class AssignHistogram:
    """Cumulative buckets of proofs by the number of statements whose top-1
    choice they are, plus the non-cumulative counts behind them."""

    ge20: int
    ge10: int
    ge5: int
    ge2: int
    eq1: int
    lt1: int
    n: int
    counts: dict[int, int] = field(default_factory=dict)

    def rows(self) -> list[tuple[str, int, float]]:
        labels = (">=20", ">=10", ">=5", ">=2", "=1", "<1")
        values = (self.ge20, self.ge10, self.ge5, self.ge2, self.eq1, self.lt1)
        return [(lab, v, 100.0 * v / self.n) for lab, v in zip(labels, values)]


def assignment_distribution(result: RankingResult) -> AssignHistogram:
    n = len(result.rankings)
    chosen = np.zeros(n, dtype=np.int64)
    for ranking in result.rankings:
        chosen[ranking[0][0]] += 1
    counts: dict[int, int] = {}
    for c in chosen:
        counts[int(c)] = counts.get(int(c), 0) + 1
    cum = [int(np.sum(chosen >= t)) for t in _CUM_THRESHOLDS]
    return AssignHistogram(*cum, int(np.sum(chosen == 1)),
                           int(np.sum(chosen == 0)), n, counts)


# ---------------------------------------------------------------------------
# Cross-replacement grid


@dataclass
class GridReport:
    levels: list[ReplacementLevel]
    cells: dict[tuple[str, str], MetricReport]

    def cell(self, source: ReplacementLevel, target: ReplacementLevel) -> MetricReport:
        return self.cells[(source.level.value, target.level.value)]

    def to_text(self) -> str:
        names = [lv.level.value for lv in self.levels]
        width = max(len(n) for n in names) + 2
        lines = ["source\\target".ljust(width)
                 + "".join(n.rjust(width) for n in names)]
        for src in names:
            row = [src.ljust(width)]
            for tgt in names:
                rep = self.cells[(src, tgt)]
                row.append(f"{100 * rep.accuracy:5.1f}".rjust(width))
            lines.append("".join(row))
        return "\n".join(lines)

    def to_records(self) -> list[str]:
        """source<TAB>target<TAB>mrr<TAB>accuracy<TAB>n lines."""
        out = []
        for (src, tgt), rep in sorted(self.cells.items()):
            mrr_s = f"{rep.mrr:.6f}" if rep.mrr is not None else "-"
            out.append(f"{src}\t{tgt}\t{mrr_s}\t{rep.accuracy:.6f}\t{rep.n}")
        return out


def _mix_seed(seed: int, salt: str) -> int:
    import hashlib
    digest = hashlib.sha256(salt.encode()).digest()
    return (seed ^ int.from_bytes(digest[:8], "little")) & 0xFFFFFFFFFFFFFFFF


def evaluate_local(state: ModelState, corpus: Corpus) -> MetricReport:
    m = build_score_matrix(state,
                           [p.statement for p in corpus.pairs],
                           [p.proof for p in corpus.pairs])
    return report_local(decode_local(m))


def run_grid(train_corpus: Corpus, dev_corpus: Corpus, test_corpus: Corpus,
             levels: list[ReplacementLevel], encoder_config: EncoderConfig,
             train_config: TrainConfig,
             protected: ProtectedSet | None = None,
             seed: int = 0, min_freq: int = 1) -> GridReport:
    """For each source level, train one model on the source-replaced train
    split and evaluate it on every target-replaced test split. Replacement
    of each split uses an independent sub-seed, so the grid is deterministic
    for a fixed seed."""
    cells: dict[tuple[str, str], MetricReport] = {}
    targets = {
        lv.level.value: replace_corpus(test_corpus, lv, protected,
                                       _mix_seed(seed, f"test:{lv.level.value}"))
        for lv in levels
    }
    for src in levels:
        src_train = replace_corpus(train_corpus, src, protected,
                                   _mix_seed(seed, f"train:{src.level.value}"))
        src_dev = replace_corpus(dev_corpus, src, protected,
                                 _mix_seed(seed, f"dev:{src.level.value}"))
        vocab = build_vocab(src_train, min_freq)
        state = init_model(vocab, encoder_config, seed)
        best, _ = train(src_train, src_dev, state, train_config)
        for tgt in levels:
            cells[(src.level.value, tgt.level.value)] = evaluate_local(
                best, targets[tgt.level.value])
    return GridReport(list(levels), cells)
