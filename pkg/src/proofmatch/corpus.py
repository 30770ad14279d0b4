"""Statement-proof corpus: token model, on-disk format, filtering and splits.

The corpus file is UTF-8, line-delimited. Each record is one line of
tab-separated fields::

    pair_id<TAB>article_id<TAB>cat1,cat2<TAB>statement-tokens<TAB>proof-tokens

Token lists are space-separated items: ``t:surface`` (text) or
``m:surface`` / ``m:surface#font`` (math). Literal ``%``, tab, space,
``#``, ``:`` and newline inside surfaces are percent-encoded. Lines
starting with ``#`` are comments.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np


class CorpusError(Exception):
    """Base class for corpus-layer errors."""


class EmptyCorpus(CorpusError):
    pass


class MissingArticleIds(CorpusError):
    pass


class FormatError(CorpusError):
    def __init__(self, message: str, line: int, column: int = 0):
        super().__init__(f"line {line}, col {column}: {message}")
        self.line = line
        self.column = column


class TokenKind(enum.Enum):
    TEXT = "t"
    MATH = "m"


class Font(enum.Enum):
    NORMAL = "normal"
    BOLD = "bold"
    ITALIC = "italic"
    SCRIPT = "script"
    FRAKTUR = "fraktur"
    DOUBLE_STRUCK = "dstruck"
    OTHER = "other"


@dataclass(frozen=True)
class Token:
    """A typed lexical unit. Text and math vocabularies are disjoint because
    kind participates in equality; math symbols additionally carry a font
    channel."""

    kind: TokenKind
    surface: str
    font: Font = Font.NORMAL

    def __post_init__(self):
        if not self.surface:
            raise ValueError("empty token surface")
        if any(c.isspace() for c in self.surface):
            raise ValueError(f"whitespace in token surface: {self.surface!r}")
        if self.kind is TokenKind.TEXT and self.font is not Font.NORMAL:
            raise ValueError("text tokens must carry the normal font")


def text_token(surface: str) -> Token:
    return Token(TokenKind.TEXT, surface)


def math_token(surface: str, font: Font = Font.NORMAL) -> Token:
    return Token(TokenKind.MATH, surface, font)


@dataclass
class PairRecord:
    pair_id: str
    article_id: str
    categories: list[str]
    statement: list[Token]
    proof: list[Token]


class SplitTag(enum.Enum):
    UNSPLIT = "unsplit"
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"


@dataclass
class Corpus:
    pairs: list[PairRecord]
    split_tag: SplitTag = SplitTag.UNSPLIT

    def __len__(self) -> int:
        return len(self.pairs)

    def __post_init__(self):
        seen = set()
        for p in self.pairs:
            if p.pair_id in seen:
                raise ValueError(f"duplicate pair_id: {p.pair_id}")
            seen.add(p.pair_id)


class SplitMode(enum.Enum):
    MIXED = "mixed"
    UNMIXED = "unmixed"


@dataclass
class SplitSpec:
    mode: SplitMode = SplitMode.MIXED
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if any(r < 0 for r in self.ratios):
            raise ValueError("negative split ratio")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"split ratios sum to {sum(self.ratios)}, not 1")


# ---------------------------------------------------------------------------
# Filtering

MIN_LEN = 20
MAX_LEN = 500


class FilterResult(enum.Enum):
    KEEP = "keep"
    REJECT_TOO_SHORT = "too_short"
    REJECT_TOO_LONG = "too_long"


def filter_pair(record: PairRecord) -> FilterResult:
    """Keep iff both statement and proof lengths are in [20, 500] inclusive.
    Too-short takes precedence when both violations occur."""
    ns, np_ = len(record.statement), len(record.proof)
    if ns < MIN_LEN or np_ < MIN_LEN:
        return FilterResult.REJECT_TOO_SHORT
    if ns > MAX_LEN or np_ > MAX_LEN:
        return FilterResult.REJECT_TOO_LONG
    return FilterResult.KEEP


# ---------------------------------------------------------------------------
# Channel filter (text-only / math-only experiments)


def filter_channel(tokens: list[Token], channel: str) -> list[Token]:
    """channel is one of 'both', 'text', 'math'."""
    if channel == "both":
        return list(tokens)
    if channel == "text":
        return [t for t in tokens if t.kind is TokenKind.TEXT]
    if channel == "math":
        return [t for t in tokens if t.kind is TokenKind.MATH]
    raise ValueError(f"unknown channel: {channel}")


# ---------------------------------------------------------------------------
# Splits


def split_corpus(corpus: Corpus, spec: SplitSpec) -> tuple[Corpus, Corpus, Corpus]:
    """Deterministic 3-way split.

    Mixed: pairs are shuffled by the seeded PRNG and cut at ratio boundaries;
    dev/test counts are floored, the remainder goes to train. Unmixed:
    article ids are shuffled and greedily assigned to the split with the
    largest pair-count deficit, so all pairs of one article share a split.
    """
    if not corpus.pairs:
        raise EmptyCorpus("cannot split an empty corpus")
    rng = np.random.default_rng(spec.seed)
    n = len(corpus.pairs)
    r_train, r_dev, r_test = spec.ratios

    if spec.mode is SplitMode.MIXED:
        order = rng.permutation(n)
        n_dev = math.floor(n * r_dev + 1e-9)
        n_test = math.floor(n * r_test + 1e-9)
        n_train = n - n_dev - n_test
        idx_train = sorted(order[:n_train])
        idx_dev = sorted(order[n_train:n_train + n_dev])
        idx_test = sorted(order[n_train + n_dev:])
        groups = (idx_train, idx_dev, idx_test)
    else:
        if any(not p.article_id for p in corpus.pairs):
            raise MissingArticleIds("unmixed split requires article ids")
        articles: dict[str, list[int]] = {}
        for i, p in enumerate(corpus.pairs):
            articles.setdefault(p.article_id, []).append(i)
        names = list(articles)
        rng.shuffle(names)
        targets = [n * r_train, n * r_dev, n * r_test]
        assigned = [0, 0, 0]
        buckets: list[list[int]] = [[], [], []]
        for name in names:
            deficits = [targets[s] - assigned[s] for s in range(3)]
            s = int(np.argmax(deficits))  # ties resolve to train, dev, test
            buckets[s].extend(articles[name])
            assigned[s] += len(articles[name])
        groups = tuple(sorted(b) for b in buckets)

    tags = (SplitTag.TRAIN, SplitTag.DEV, SplitTag.TEST)
    return tuple(
        Corpus([corpus.pairs[i] for i in idx], split_tag=tag)
        for idx, tag in zip(groups, tags)
    )


# ---------------------------------------------------------------------------
# Serialization

_FONT_SIGILS = {
    Font.BOLD: "bold",
    Font.ITALIC: "italic",
    Font.SCRIPT: "script",
    Font.FRAKTUR: "fraktur",
    Font.DOUBLE_STRUCK: "dstruck",
    Font.OTHER: "other",
}
_SIGIL_FONTS = {v: k for k, v in _FONT_SIGILS.items()}

_ESCAPES = [("%", "%25"), ("\t", "%09"), (" ", "%20"),
            ("#", "%23"), (":", "%3A"), (",", "%2C"), ("\n", "%0A")]
_PCT_RE = re.compile(r"%([0-9A-Fa-f]{2})")


def _escape(s: str) -> str:
    for raw, enc in _ESCAPES:
        s = s.replace(raw, enc)
    return s


def _unescape(s: str) -> str:
    return _PCT_RE.sub(lambda m: chr(int(m.group(1), 16)), s)


def format_token(tok: Token) -> str:
    surf = _escape(tok.surface)
    if tok.kind is TokenKind.TEXT:
        return f"t:{surf}"
    if tok.font is Font.NORMAL:
        return f"m:{surf}"
    return f"m:{surf}#{_FONT_SIGILS[tok.font]}"


def parse_token(item: str, line: int = 0, column: int = 0) -> Token:
    if len(item) < 3 or item[1] != ":":
        raise FormatError(f"bad token item {item!r}", line, column)
    sigil, rest = item[0], item[2:]
    if sigil == "t":
        return Token(TokenKind.TEXT, _unescape(rest))
    if sigil == "m":
        font = Font.NORMAL
        if "#" in rest:
            rest, fname = rest.rsplit("#", 1)
            if fname not in _SIGIL_FONTS:
                raise FormatError(f"unknown font sigil {fname!r}", line, column)
            font = _SIGIL_FONTS[fname]
        if not rest:
            raise FormatError("empty math surface", line, column)
        return Token(TokenKind.MATH, _unescape(rest), font)
    raise FormatError(f"unknown token-kind sigil {sigil!r}", line, column)


def format_record(rec: PairRecord) -> str:
    cats = ",".join(_escape(c) for c in rec.categories)
    stmt = " ".join(format_token(t) for t in rec.statement)
    proof = " ".join(format_token(t) for t in rec.proof)
    return "\t".join((_escape(rec.pair_id), _escape(rec.article_id), cats, stmt, proof))


def parse_record(line: str, lineno: int) -> PairRecord:
    fields = line.split("\t")
    if len(fields) != 5:
        raise FormatError(f"expected 5 tab-separated fields, got {len(fields)}",
                          lineno)
    pair_id, article_id, cats_s, stmt_s, proof_s = fields
    cats = [_unescape(c) for c in cats_s.split(",")] if cats_s else []

    def parse_list(s: str, col0: int) -> list[Token]:
        toks = []
        col = col0
        for item in s.split(" "):
            if item:
                toks.append(parse_token(item, lineno, col))
            col += len(item) + 1
        return toks

    stmt_col = len(fields[0]) + len(fields[1]) + len(fields[2]) + 3
    proof_col = stmt_col + len(stmt_s) + 1
    return PairRecord(
        pair_id=_unescape(pair_id),
        article_id=_unescape(article_id),
        categories=cats,
        statement=parse_list(stmt_s, stmt_col),
        proof=parse_list(proof_s, proof_col),
    )


def write_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in corpus.pairs:
            fh.write(format_record(rec) + "\n")


def read_corpus(path) -> Corpus:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            pairs.append(parse_record(line, lineno))
    if not pairs:
        raise EmptyCorpus(f"no records in {path}")
    return Corpus(pairs)
