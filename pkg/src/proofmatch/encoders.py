"""Text encoders and the bilinear score head.

Three encoders: a TF-IDF baseline, a pooled-embedding encoder, and a
self-attentive encoder (multi-head scaled dot-product attention with a
residual connection around each layer, sinusoidal position encodings, then
max or mean pooling). Gradients are computed manually and are exact for
the implemented forward pass.

Model files are a versioned binary container: magic ``PMM1``, vocabulary,
config, row-major little-endian float32 parameter tensors, and a trailing
SHA-256 checksum.
"""

from __future__ import annotations

import enum
import hashlib
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, Font, Token, TokenKind
from .corpus import EmptyCorpus


class EncoderError(Exception):
    pass


class EmptyDocument(EncoderError):
    pass


class EmptyStats(EncoderError):
    pass


class DimensionMismatch(EncoderError):
    pass


class ModelFormatError(EncoderError):
    pass


# ---------------------------------------------------------------------------
# Vocabulary

UNK_ID = 0


@dataclass
class Vocabulary:
    """Dense token ids; id 0 is UNK. Math and text tokens are distinct
    entries because Token equality includes the kind."""

    id_of: dict[Token, int]
    tokens: list[Token | None]
    min_freq: int = 1

    def __len__(self) -> int:
        return len(self.tokens)

    def encode_ids(self, doc: list[Token]) -> np.ndarray:
        return np.array([self.id_of.get(t, UNK_ID) for t in doc], dtype=np.int64)


def build_vocab(corpus: Corpus, min_freq: int = 1) -> Vocabulary:
    """Tokens with frequency >= min_freq, ids by (frequency desc,
    first occurrence asc); everything else maps to UNK at encode time."""
    if not corpus.pairs:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    freq: dict[Token, int] = {}
    first: dict[Token, int] = {}
    pos = 0
    for pair in corpus.pairs:
        for tok in pair.statement + pair.proof:
            freq[tok] = freq.get(tok, 0) + 1
            if tok not in first:
                first[tok] = pos
            pos += 1
    kept = [t for t, c in freq.items() if c >= min_freq]
    kept.sort(key=lambda t: (-freq[t], first[t]))
    tokens: list[Token | None] = [None] + kept
    id_of = {t: i for i, t in enumerate(tokens) if t is not None}
    return Vocabulary(id_of, tokens, min_freq)


# ---------------------------------------------------------------------------
# TF-IDF baseline


@dataclass
class DocumentStats:
    df: dict[Token, int]
    n_docs: int


def build_stats(corpus: Corpus) -> DocumentStats:
    """Each statement and each proof is one document."""
    if not corpus.pairs:
        raise EmptyCorpus("cannot build stats from an empty corpus")
    df: dict[Token, int] = {}
    n_docs = 0
    for pair in corpus.pairs:
        for doc in (pair.statement, pair.proof):
            n_docs += 1
            for tok in set(doc):
                df[tok] = df.get(tok, 0) + 1
    return DocumentStats(df, n_docs)


def tfidf_encode(doc: list[Token], stats: DocumentStats) -> dict[Token, float]:
    """weight(t) = tf(t, doc) * ln(N / (1 + df(t))); unknown tokens dropped."""
    if stats.n_docs == 0:
        raise EmptyStats("document-frequency table is empty")
    tf: dict[Token, int] = {}
    for tok in doc:
        tf[tok] = tf.get(tok, 0) + 1
    return {
        tok: count * math.log(stats.n_docs / (1 + stats.df[tok]))
        for tok, count in tf.items() if tok in stats.df
    }


def cosine(u: dict[Token, float], v: dict[Token, float]) -> float:
    nu = math.sqrt(sum(x * x for x in u.values()))
    nv = math.sqrt(sum(x * x for x in v.values()))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    dot = sum(x * v[t] for t, x in u.items() if t in v)
    return dot / (nu * nv)


# ---------------------------------------------------------------------------
# Trainable encoders


class EncoderKind(enum.Enum):
    TFIDF = "tfidf"
    POOLED = "pooled"
    SELF_ATTENTIVE = "selfattn"


class Pooling(enum.Enum):
    MAX = "max"
    MEAN = "mean"


@dataclass(frozen=True)
class EncoderConfig:
    kind: EncoderKind = EncoderKind.POOLED
    d: int = 64
    layers: int = 1
    heads: int = 2
    d_k: int = 32
    pooling: Pooling = Pooling.MAX
    # Sinusoidal position encodings for the self-attentive encoder; without
    # them self-attention is order-blind.
    use_positions: bool = True

    def __post_init__(self):
        if self.kind is EncoderKind.SELF_ATTENTIVE and self.d % self.heads:
            raise ValueError(f"d={self.d} not divisible by heads={self.heads}")


# Full-scale reference shape; the desk-scale default is the dataclass default.
REFERENCE_CONFIG = EncoderConfig(EncoderKind.SELF_ATTENTIVE,
                                 d=300, layers=2, heads=4, d_k=128)


@dataclass
class LayerParams:
    wq: np.ndarray  # (H, d, d_k)
    wk: np.ndarray  # (H, d, d_k)
    wv: np.ndarray  # (H, d, d_v)
    wo: np.ndarray  # (d, d)


@dataclass
class BilinearHead:
    w: np.ndarray  # (d, d)
    b: float


@dataclass
class ModelState:
    vocab: Vocabulary
    config: EncoderConfig
    embeddings: np.ndarray  # (|V|, d)
    layers: list[LayerParams]
    head: BilinearHead
    rng_seed: int = 0

    def copy(self) -> "ModelState":
        return ModelState(
            self.vocab, self.config, self.embeddings.copy(),
            [LayerParams(l.wq.copy(), l.wk.copy(), l.wv.copy(), l.wo.copy())
             for l in self.layers],
            BilinearHead(self.head.w.copy(), self.head.b),
            self.rng_seed,
        )

    def param_arrays(self) -> list[np.ndarray]:
        out = [self.embeddings]
        for l in self.layers:
            out.extend((l.wq, l.wk, l.wv, l.wo))
        out.append(self.head.w)
        return out


def init_model(vocab: Vocabulary, config: EncoderConfig,
               seed: int = 0) -> ModelState:
    """Uniform(-1/sqrt(d), 1/sqrt(d)) embeddings and projections,
    W = I/sqrt(d), b = 0."""
    rng = np.random.default_rng(seed)
    d = config.d
    scale = 1.0 / math.sqrt(d)

    def u(*shape):
        return rng.uniform(-scale, scale, size=shape)

    layers = []
    if config.kind is EncoderKind.SELF_ATTENTIVE:
        d_v = d // config.heads
        for _ in range(config.layers):
            layers.append(LayerParams(
                wq=u(config.heads, d, config.d_k),
                wk=u(config.heads, d, config.d_k),
                wv=u(config.heads, d, d_v),
                wo=u(d, d),
            ))
    return ModelState(
        vocab=vocab, config=config,
        embeddings=u(len(vocab), d),
        layers=layers,
        head=BilinearHead(np.eye(d) * scale, 0.0),
        rng_seed=seed,
    )


def positional_encoding(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    enc = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return enc


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class LayerCache:
    x_in: np.ndarray          # (T, d)
    q: np.ndarray             # (H, T, d_k)
    k: np.ndarray             # (H, T, d_k)
    v: np.ndarray             # (H, T, d_v)
    attn: np.ndarray          # (H, T, T)
    concat: np.ndarray        # (T, d)


@dataclass
class ForwardCache:
    ids: np.ndarray
    x0: np.ndarray            # embeddings (+ position) before layer 0
    layers: list[LayerCache]
    x_final: np.ndarray       # (T, d) after last layer
    pool_idx: np.ndarray | None  # argmax positions for max pooling


def forward(state: ModelState, doc: list[Token]) -> tuple[np.ndarray, ForwardCache]:
    """Encode a document, keeping the activations needed for backward."""
    if not doc:
        raise EmptyDocument("cannot encode an empty document")
    cfg = state.config
    if cfg.kind is EncoderKind.TFIDF:
        raise EncoderError("tf-idf encoding has no trainable forward pass")
    ids = state.vocab.encode_ids(doc)
    x = state.embeddings[ids].astype(np.float64, copy=True)
    if cfg.kind is EncoderKind.SELF_ATTENTIVE and state.layers and cfg.use_positions:
        x = x + positional_encoding(len(doc), cfg.d)
    x0 = x
    caches: list[LayerCache] = []
    for lp in state.layers:
        q = np.einsum("td,hdk->htk", x, lp.wq)
        k = np.einsum("td,hdk->htk", x, lp.wk)
        v = np.einsum("td,hdv->htv", x, lp.wv)
        attn = _softmax_rows(q @ k.transpose(0, 2, 1) / math.sqrt(cfg.d_k))
        heads = attn @ v                       # (H, T, d_v)
        concat = heads.transpose(1, 0, 2).reshape(x.shape[0], cfg.d)
        caches.append(LayerCache(x, q, k, v, attn, concat))
        x = x + concat @ lp.wo                 # residual connection
    if cfg.pooling is Pooling.MAX:
        pool_idx = np.argmax(x, axis=0)        # ties -> lowest position
        vec = x[pool_idx, np.arange(cfg.d)]
    else:
        pool_idx = None
        vec = x.mean(axis=0)
    return vec, ForwardCache(ids, x0, caches, x, pool_idx)


def encode(state: ModelState, doc: list[Token]) -> np.ndarray:
    return forward(state, doc)[0]


def score(state: ModelState, s_vec: np.ndarray, p_vec: np.ndarray) -> float:
    if s_vec.shape != (state.config.d,) or p_vec.shape != (state.config.d,):
        raise DimensionMismatch(
            f"expected vectors of dim {state.config.d}, "
            f"got {s_vec.shape} and {p_vec.shape}")
    return float(s_vec @ state.head.w @ p_vec + state.head.b)


# ---------------------------------------------------------------------------
# Gradients


class Gradients:
    """Per-call gradient buffer; embedding rows are kept sparse."""

    def __init__(self, state: ModelState):
        self.embedding_rows: dict[int, np.ndarray] = {}
        self.layers = [
            {"wq": np.zeros_like(l.wq), "wk": np.zeros_like(l.wk),
             "wv": np.zeros_like(l.wv), "wo": np.zeros_like(l.wo)}
            for l in state.layers
        ]
        self.w = np.zeros_like(state.head.w)
        self.b = 0.0
        self._d = state.config.d

    def add_embedding(self, row: int, grad: np.ndarray) -> None:
        if row in self.embedding_rows:
            self.embedding_rows[row] += grad
        else:
            self.embedding_rows[row] = grad.copy()

    def merge(self, other: "Gradients") -> None:
        for row, g in other.embedding_rows.items():
            self.add_embedding(row, g)
        for mine, theirs in zip(self.layers, other.layers):
            for name in mine:
                mine[name] += theirs[name]
        self.w += other.w
        self.b += other.b

    def global_norm(self) -> float:
        total = sum(float(np.sum(g * g)) for g in self.embedding_rows.values())
        for layer in self.layers:
            total += sum(float(np.sum(g * g)) for g in layer.values())
        total += float(np.sum(self.w * self.w)) + self.b * self.b
        return math.sqrt(total)

    def scale(self, factor: float) -> None:
        for g in self.embedding_rows.values():
            g *= factor
        for layer in self.layers:
            for g in layer.values():
                g *= factor
        self.w *= factor
        self.b *= factor


def backward(state: ModelState, cache: ForwardCache, grad_vec: np.ndarray,
             grads: Gradients) -> None:
    """Accumulate d(loss)/d(params) for one encoded document, given the
    gradient with respect to its pooled vector."""
    cfg = state.config
    t_len = cache.x0.shape[0]
    dx = np.zeros((t_len, cfg.d))
    if cfg.pooling is Pooling.MAX:
        dx[cache.pool_idx, np.arange(cfg.d)] = grad_vec
    else:
        dx += grad_vec[None, :] / t_len

    for lp, lc, lg in zip(reversed(state.layers), reversed(cache.layers),
                          reversed(grads.layers)):
        # x_out = x_in + concat @ wo
        d_out = dx
        lg["wo"] += lc.concat.T @ d_out
        d_concat = d_out @ lp.wo.T
        d_heads = d_concat.reshape(t_len, cfg.heads, -1).transpose(1, 0, 2)
        d_attn = d_heads @ lc.v.transpose(0, 2, 1)          # (H, T, T)
        d_v = lc.attn.transpose(0, 2, 1) @ d_heads          # (H, T, d_v)
        # softmax rows backward
        tmp = (d_attn * lc.attn).sum(axis=-1, keepdims=True)
        d_scores = lc.attn * (d_attn - tmp) / math.sqrt(cfg.d_k)
        d_q = d_scores @ lc.k                               # (H, T, d_k)
        d_k = d_scores.transpose(0, 2, 1) @ lc.q            # (H, T, d_k)
        dx_in = d_out.copy()                                # residual branch
        dx_in += np.einsum("htk,hdk->td", d_q, lp.wq)
        dx_in += np.einsum("htk,hdk->td", d_k, lp.wk)
        dx_in += np.einsum("htv,hdv->td", d_v, lp.wv)
        lg["wq"] += np.einsum("td,htk->hdk", lc.x_in, d_q)
        lg["wk"] += np.einsum("td,htk->hdk", lc.x_in, d_k)
        lg["wv"] += np.einsum("td,htv->hdv", lc.x_in, d_v)
        dx = dx_in

    for pos, row in enumerate(cache.ids):
        grads.add_embedding(int(row), dx[pos])


def score_matrix(state: ModelState, s_vecs: np.ndarray,
                 p_vecs: np.ndarray) -> np.ndarray:
    """All-pairs bilinear scores: m[i][j] = s_i^T W p_j + b."""
    return s_vecs @ state.head.w @ p_vecs.T + state.head.b


def score_matrix_backward(state: ModelState, s_vecs: np.ndarray,
                          p_vecs: np.ndarray, d_m: np.ndarray,
                          grads: Gradients) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of a scalar loss through the all-pairs score matrix.
    Returns (d_s_vecs, d_p_vecs) for the encoder backward passes."""
    grads.w += s_vecs.T @ d_m @ p_vecs
    grads.b += float(d_m.sum())
    d_s = d_m @ (p_vecs @ state.head.w.T)
    d_p = d_m.T @ (s_vecs @ state.head.w)
    return d_s, d_p


def apply_gradients(state: ModelState, grads: Gradients, lr: float) -> None:
    """Plain gradient-descent update (loss minimization)."""
    for row, g in grads.embedding_rows.items():
        state.embeddings[row] -= lr * g
    for lp, lg in zip(state.layers, grads.layers):
        lp.wq -= lr * lg["wq"]
        lp.wk -= lr * lg["wk"]
        lp.wv -= lr * lg["wv"]
        lp.wo -= lr * lg["wo"]
    state.head.w -= lr * grads.w
    state.head.b -= lr * grads.b


# ---------------------------------------------------------------------------
# Serialization

_MAGIC = b"PMM1"
_VERSION = 1
_KIND_CODES = {EncoderKind.TFIDF: 0, EncoderKind.POOLED: 1,
               EncoderKind.SELF_ATTENTIVE: 2}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}
_POOL_CODES = {Pooling.MAX: 0, Pooling.MEAN: 1}
_CODE_POOLS = {v: k for k, v in _POOL_CODES.items()}
_TOKEN_KIND_CODES = {TokenKind.TEXT: 0, TokenKind.MATH: 1}
_CODE_TOKEN_KINDS = {v: k for k, v in _TOKEN_KIND_CODES.items()}
_FONT_CODES = {f: i for i, f in enumerate(Font)}
_CODE_FONTS = {i: f for f, i in _FONT_CODES.items()}


def _pack_tensor(arr: np.ndarray) -> bytes:
    a = np.ascontiguousarray(arr, dtype="<f4")
    return struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape) \
        + a.tobytes()


def _unpack_tensor(buf: memoryview, off: int) -> tuple[np.ndarray, int]:
    ndim = struct.unpack_from("<B", buf, off)[0]
    off += 1
    shape = struct.unpack_from(f"<{ndim}I", buf, off)
    off += 4 * ndim
    count = int(np.prod(shape)) if shape else 1
    arr = np.frombuffer(buf, dtype="<f4", count=count, offset=off)
    off += 4 * count
    return arr.reshape(shape).astype(np.float64), off


def save_model(state: ModelState, path) -> None:
    chunks = [_MAGIC, struct.pack("<I", _VERSION)]
    vocab = state.vocab
    chunks.append(struct.pack("<II", len(vocab), vocab.min_freq))
    for tok in vocab.tokens:
        if tok is None:  # UNK sentinel
            chunks.append(struct.pack("<BBH", 255, 0, 0))
            continue
        data = tok.surface.encode("utf-8")
        chunks.append(struct.pack("<BBH", _TOKEN_KIND_CODES[tok.kind],
                                  _FONT_CODES[tok.font], len(data)))
        chunks.append(data)
    cfg = state.config
    chunks.append(struct.pack("<BIIIIBB", _KIND_CODES[cfg.kind], cfg.d,
                              cfg.layers, cfg.heads, cfg.d_k,
                              _POOL_CODES[cfg.pooling],
                              1 if cfg.use_positions else 0))
    chunks.append(struct.pack("<Q", state.rng_seed & 0xFFFFFFFFFFFFFFFF))
    chunks.append(_pack_tensor(state.embeddings))
    for lp in state.layers:
        for arr in (lp.wq, lp.wk, lp.wv, lp.wo):
            chunks.append(_pack_tensor(arr))
    chunks.append(_pack_tensor(state.head.w))
    chunks.append(struct.pack("<f", state.head.b))
    body = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(hashlib.sha256(body).digest())


def load_model(path) -> ModelState:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 36 or blob[:4] != _MAGIC:
        raise ModelFormatError("bad magic or truncated model file")
    body, checksum = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != checksum:
        raise ModelFormatError("checksum mismatch")
    buf = memoryview(body)
    off = 4
    version = struct.unpack_from("<I", buf, off)[0]
    off += 4
    if version != _VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    n_tokens, min_freq = struct.unpack_from("<II", buf, off)
    off += 8
    tokens: list[Token | None] = []
    for _ in range(n_tokens):
        kind_c, font_c, length = struct.unpack_from("<BBH", buf, off)
        off += 4
        if kind_c == 255:
            tokens.append(None)
            continue
        surface = bytes(buf[off:off + length]).decode("utf-8")
        off += length
        tokens.append(Token(_CODE_TOKEN_KINDS[kind_c], surface,
                            _CODE_FONTS[font_c]))
    id_of = {t: i for i, t in enumerate(tokens) if t is not None}
    vocab = Vocabulary(id_of, tokens, min_freq)
    kind_c, d, layers_n, heads, d_k, pool_c, pos_c = struct.unpack_from(
        "<BIIIIBB", buf, off)
    off += 19
    cfg = EncoderConfig(_CODE_KINDS[kind_c], d, layers_n, heads, d_k,
                        _CODE_POOLS[pool_c], bool(pos_c))
    seed = struct.unpack_from("<Q", buf, off)[0]
    off += 8
    embeddings, off = _unpack_tensor(buf, off)
    layers = []
    if cfg.kind is EncoderKind.SELF_ATTENTIVE:
        for _ in range(cfg.layers):
            wq, off = _unpack_tensor(buf, off)
            wk, off = _unpack_tensor(buf, off)
            wv, off = _unpack_tensor(buf, off)
            wo, off = _unpack_tensor(buf, off)
            layers.append(LayerParams(wq, wk, wv, wo))
    w, off = _unpack_tensor(buf, off)
    b = struct.unpack_from("<f", buf, off)[0]
    return ModelState(vocab, cfg, embeddings, layers,
                      BilinearHead(w, float(b)), seed)
