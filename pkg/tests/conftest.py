"""Shared builders for synthetic corpora and random inputs."""

from __future__ import annotations

import numpy as np
import pytest

from proofmatch.corpus import (
    Corpus,
    Font,
    PairRecord,
    Token,
    TokenKind,
    math_token,
    text_token,
)

FONTS = list(Font)
SURFACE_ALPHABET = (
    "abcxyzXYZ0123456789αβπ∑∫=+−×√"
    "%#:, \t"  # characters that must survive percent-encoding
)


def random_token(rng: np.random.Generator) -> Token:
    length = int(rng.integers(1, 6))
    chars = [SURFACE_ALPHABET[i]
             for i in rng.integers(0, len(SURFACE_ALPHABET), size=length)]
    surface = "".join(c for c in chars if not c.isspace()) or "x"
    if rng.random() < 0.5:
        return Token(TokenKind.TEXT, surface)
    font = FONTS[int(rng.integers(0, len(FONTS)))]
    return Token(TokenKind.MATH, surface, font)


def random_pair(rng: np.random.Generator, pair_id: str,
                article_id: str = "a1") -> PairRecord:
    n_s = int(rng.integers(1, 8))
    n_p = int(rng.integers(1, 8))
    return PairRecord(
        pair_id=pair_id,
        article_id=article_id,
        categories=[f"cat{int(rng.integers(0, 3))}"],
        statement=[random_token(rng) for _ in range(n_s)],
        proof=[random_token(rng) for _ in range(n_p)],
    )


def random_corpus(rng: np.random.Generator, n_pairs: int,
                  n_articles: int = 3) -> Corpus:
    return Corpus([
        random_pair(rng, f"p{i}", f"art{int(rng.integers(0, n_articles))}")
        for i in range(n_pairs)
    ])


def repeated_token_pair(i: int, n_tokens: int = 20) -> PairRecord:
    """One separable pair: statement and proof each repeat a private token."""
    return PairRecord(
        pair_id=f"pair{i}", article_id=f"art{i}", categories=[],
        statement=[math_token(f"S{i}")] * n_tokens,
        proof=[math_token(f"P{i}")] * n_tokens,
    )


def separable_corpus(n_pairs: int = 8) -> Corpus:
    """Disjoint per-pair vocabulary; the matching must be memorizable."""
    return Corpus([repeated_token_pair(i) for i in range(n_pairs)])


def symbol_dependent_pair(i: int, letter: str) -> PairRecord:
    """A pair matchable only through one shared single-letter symbol."""
    filler = [text_token(w) for w in ("let", "the", "be", "then")] * 4
    return PairRecord(
        pair_id=f"sym{i}", article_id=f"art{i}", categories=[],
        statement=[math_token(letter)] * 12 + filler,
        proof=[math_token(letter)] * 12 + filler,
    )


def symbol_dependent_corpus(n_pairs: int = 8) -> Corpus:
    letters = "abcdefgh"
    return Corpus([symbol_dependent_pair(i, letters[i]) for i in range(n_pairs)])


GRID_LETTERS = "abcdfghjklmnqrst"


def replacement_grid_corpora() -> tuple[Corpus, Corpus, Corpus]:
    """Train/dev/test triple whose only pair-identifying signals are a
    per-pair statement word and the proof's single-letter symbol.

    Every statement carries one copy of every base letter, so raw letter
    overlap is uniform across statements and only the learned word-letter
    association can match a pair. Renaming the proof symbols therefore
    wipes out a model trained on unmodified proofs, while a model trained
    on renamed proofs never had a usable symbol cue to lose. The statement
    soup also keeps fresh names disjoint from the base letters.
    """
    sfill = [text_token(w) for w in ("let", "the")] * 2
    pfill = [text_token(w) for w in ("be", "then")] * 2
    soup = [math_token(c) for c in GRID_LETTERS]

    def stmt(i):
        return list(soup) + [text_token(f"w{i}")] * 12 + sfill

    def prf(letter):
        return [math_token(letter)] * 12 + pfill

    def corpus(suffix):
        return Corpus([PairRecord(f"s{i}{suffix}", f"a{i}", [],
                                  stmt(i), prf(letter))
                       for i, letter in enumerate(GRID_LETTERS)])

    return corpus("t"), corpus("d"), corpus("")
