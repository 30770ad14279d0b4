"""Seeded symbol-replacement transforms over proofs.

Four levels: conservation (identity), partial (a fraction of the shared
symbols renamed to fresh names), full (all renamed), transposition (shared
symbols deranged among themselves). Only symbols occurring in both the
statement and the proof are touched; case variants of a letter are renamed
as a pair, fonts are preserved, and double-struck letters, standard
constants and an optional protected set are exempt.
"""

from __future__ import annotations

import enum
import hashlib
import unicodedata
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .corpus import Corpus, Font, PairRecord, Token, TokenKind


class PoolExhausted(Exception):
    pass


_LATIN = "abcdefghijklmnopqrstuvwxyz"
_GREEK = "αβγδεζηθικλμνξοπρστυφχψω"

# Standard constants never replaced: pi, and a literal math-kind "e" is
# treated the same way.
CONSTANT_BASES = {"π", "e"}


@dataclass(frozen=True)
class SymbolKey:
    """Case-folded identity of a candidate variable, per font channel."""

    base: str
    font: Font = Font.NORMAL


def _is_letter(base: str) -> bool:
    return base in _LATIN or base in _GREEK


def symbol_key(token: Token) -> SymbolKey | None:
    """Key of a candidate-variable token, or None.

    A candidate is a math token whose surface is a single Latin or Greek
    letter in any font except double-struck. Multi-letter math tokens
    (sin, dim, Hom) are never candidates.
    """
    if token.kind is not TokenKind.MATH or token.font is Font.DOUBLE_STRUCK:
        return None
    if len(token.surface) != 1:
        return None
    base = token.surface.casefold()
    if not _is_letter(base):
        return None
    return SymbolKey(base, token.font)


class Level(enum.Enum):
    CONSERVATION = "conservation"
    PARTIAL = "partial"
    FULL = "full"
    TRANSPOSITION = "transposition"


@dataclass(frozen=True)
class ReplacementLevel:
    level: Level
    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha out of [0,1]: {self.alpha}")
        if self.level is Level.FULL and self.alpha != 1.0:
            object.__setattr__(self, "alpha", 1.0)


CONSERVATION = ReplacementLevel(Level.CONSERVATION)
PARTIAL = ReplacementLevel(Level.PARTIAL, 0.5)
FULL = ReplacementLevel(Level.FULL, 1.0)
TRANSPOSITION = ReplacementLevel(Level.TRANSPOSITION)


@dataclass(frozen=True)
class ProtectedSet:
    keys: frozenset[SymbolKey]
    domain_label: str = ""

    @property
    def bases(self) -> set[str]:
        return {k.base for k in self.keys}


def probability_protected() -> ProtectedSet:
    """The probability-theory protected set: P, E, V, sigma, rho."""
    return ProtectedSet(
        frozenset(SymbolKey(b) for b in ("p", "e", "v", "σ", "ρ")),
        domain_label="probability",
    )


def read_protected_set(path, domain_label: str = "") -> ProtectedSet:
    """One symbol per line, ``surface`` or ``surface#font``; # comments."""
    from .corpus import _SIGIL_FONTS  # shared font sigils

    keys = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            font = Font.NORMAL
            if "#" in line:
                line, fname = line.rsplit("#", 1)
                font = _SIGIL_FONTS[fname]
            keys.add(SymbolKey(line.casefold(), font))
    return ProtectedSet(frozenset(keys), domain_label)


@dataclass
class ReplacementMap:
    entries: dict[SymbolKey, SymbolKey]
    seed: int = 0

    def __post_init__(self):
        targets = list(self.entries.values())
        if len(set(targets)) != len(targets):
            raise ValueError("replacement map is not injective")


# ---------------------------------------------------------------------------


def extract_shared_symbols(pair: PairRecord,
                           protected: ProtectedSet | None = None) -> set[SymbolKey]:
    """Candidate variables occurring in both the statement and the proof,
    minus constants and the protected set."""
    stmt = {k for t in pair.statement if (k := symbol_key(t)) is not None}
    proof = {k for t in pair.proof if (k := symbol_key(t)) is not None}
    shared = {k for k in stmt & proof if k.base not in CONSTANT_BASES}
    if protected is not None:
        shared = {k for k in shared
                  if k not in protected.keys and k.base not in protected.bases}
    return shared


def _round_half_away(x: float) -> int:
    import math
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def _fresh_pool(forbidden: set[str], protected: ProtectedSet | None,
                rng: np.random.Generator) -> list[str]:
    """Latin letters not used in the pair, then Greek letters minus the
    constants, each block shuffled by the seeded generator."""
    banned = set(forbidden) | CONSTANT_BASES
    if protected is not None:
        banned |= protected.bases
    latin = [c for c in _LATIN if c not in banned]
    greek = [c for c in _GREEK if c not in banned]
    latin = [latin[i] for i in rng.permutation(len(latin))]
    greek = [greek[i] for i in rng.permutation(len(greek))]
    return latin + greek


def build_replacement_map(shared: set[SymbolKey],
                          level: ReplacementLevel,
                          protected: ProtectedSet | None = None,
                          seed: int = 0,
                          forbidden: set[str] | None = None,
                          pool: list[str] | None = None) -> ReplacementMap:
    """Build the per-pair bijection for one replacement level.

    ``forbidden`` holds symbol bases occurring anywhere in the pair, so
    fresh names cannot collide with existing ones; ``pool`` overrides the
    seeded fresh-name ordering (used to pin down worked examples).
    """
    rng = np.random.default_rng(seed)
    keys = sorted(shared, key=lambda k: (k.base, k.font.value))
    entries: dict[SymbolKey, SymbolKey] = {}

    if level.level is Level.CONSERVATION or not keys:
        return ReplacementMap(entries, seed)

    if level.level is Level.TRANSPOSITION and len(keys) > 1:
        perm = _derangement(keys, rng)
        if perm is not None:
            for k, target in zip(keys, perm):
                entries[k] = SymbolKey(target.base, k.font)
            return ReplacementMap(entries, seed)
        # All shared keys carry one base (font variants only): derangement
        # cannot change any base, fall back to fresh names.

    if level.level is Level.PARTIAL:
        count = _round_half_away(level.alpha * len(keys))
        chosen_idx = sorted(rng.permutation(len(keys))[:count])
        targets_of = [keys[i] for i in chosen_idx]
    else:  # FULL, or degenerate TRANSPOSITION
        targets_of = keys

    names = pool if pool is not None else _fresh_pool(
        forbidden if forbidden is not None else {k.base for k in keys},
        protected, rng)
    names = [n for n in names if n not in {k.base for k in keys}]
    if len(names) < len(targets_of):
        raise PoolExhausted(
            f"need {len(targets_of)} fresh names, pool has {len(names)}")
    for k, name in zip(targets_of, names):
        entries[k] = SymbolKey(name, k.font)
    return ReplacementMap(entries, seed)


def _derangement(keys: list[SymbolKey],
                 rng: np.random.Generator) -> list[SymbolKey] | None:
    """Seeded derangement of keys with all bases changed, or None when the
    shared bases make one impossible."""
    bases = {k.base for k in keys}
    if len(bases) < 2:
        return None
    for _ in range(10000):
        perm = [keys[i] for i in rng.permutation(len(keys))]
        if all(p.base != k.base for p, k in zip(perm, keys)):
            return perm
    return None


def apply_replacement(proof: list[Token], rmap: ReplacementMap) -> list[Token]:
    """Rewrite mapped symbols in the proof, preserving case and font."""
    if not rmap.entries:
        return list(proof)
    out = []
    for tok in proof:
        key = symbol_key(tok)
        target = rmap.entries.get(key) if key is not None else None
        if target is None:
            out.append(tok)
            continue
        surface = target.base.upper() if tok.surface != tok.surface.casefold() \
            else target.base
        out.append(Token(TokenKind.MATH, surface, tok.font))
    return out


def _pair_seed(seed: int, pair_id: str) -> int:
    digest = hashlib.sha256(pair_id.encode("utf-8")).digest()
    sub = int.from_bytes(digest[:8], "little")
    return (seed ^ sub) & 0xFFFFFFFFFFFFFFFF


def _pair_forbidden(pair: PairRecord) -> set[str]:
    return {k.base for t in pair.statement + pair.proof
            if (k := symbol_key(t)) is not None}


def replace_pair(pair: PairRecord, level: ReplacementLevel,
                 protected: ProtectedSet | None = None,
                 seed: int = 0) -> PairRecord:
    sub_seed = _pair_seed(seed, pair.pair_id)
    shared = extract_shared_symbols(pair, protected)
    rmap = build_replacement_map(shared, level, protected, sub_seed,
                                 forbidden=_pair_forbidden(pair))
    return dc_replace(pair, proof=apply_replacement(pair.proof, rmap))


def replace_corpus(corpus: Corpus, level: ReplacementLevel,
                   protected: ProtectedSet | None = None,
                   seed: int = 0) -> Corpus:
    """Apply one replacement level to every proof; statements untouched.
    Each pair derives an independent sub-seed from its pair_id, so a single
    pair can be replayed in isolation."""
    return Corpus([replace_pair(p, level, protected, seed) for p in corpus.pairs],
                  split_tag=corpus.split_tag)
