import math

import numpy as np
import pytest

from proofmatch.corpus import Corpus, PairRecord, math_token, text_token
from proofmatch.encoders import (
    DimensionMismatch,
    EmptyDocument,
    EncoderConfig,
    EncoderKind,
    ModelState,
    Pooling,
    UNK_ID,
    build_stats,
    build_vocab,
    cosine,
    encode,
    forward,
    init_model,
    load_model,
    save_model,
    score,
    tfidf_encode,
)
from proofmatch.corpus import EmptyCorpus
from conftest import random_corpus


def one_pair_corpus(tokens):
    return Corpus([PairRecord("p0", "a", [], list(tokens), list(tokens))])


class TestVocabulary:
    def test_min_freq_threshold(self):
        # "x" appears 5 times in total (statement only), min_freq 6 drops it
        corpus = Corpus([PairRecord("p0", "a", [],
                                    [math_token("x")] * 5,
                                    [text_token("w")] * 6)])
        vocab = build_vocab(corpus, min_freq=6)
        assert vocab.id_of.get(math_token("x")) is None
        assert vocab.encode_ids([math_token("x")])[0] == UNK_ID

    def test_math_text_disjoint_entries(self):
        corpus = one_pair_corpus([math_token("a"), text_token("a")])
        vocab = build_vocab(corpus, 1)
        assert vocab.id_of[math_token("a")] != vocab.id_of[text_token("a")]

    def test_deterministic_order(self):
        rng = np.random.default_rng(4)
        corpus = random_corpus(rng, 20)
        v1 = build_vocab(corpus, 1)
        v2 = build_vocab(corpus, 1)
        assert v1.tokens == v2.tokens

    def test_frequency_then_first_occurrence(self):
        corpus = one_pair_corpus([text_token("rare"), text_token("top"),
                                  text_token("top")])
        vocab = build_vocab(corpus, 1)
        assert vocab.id_of[text_token("top")] == 1
        assert vocab.id_of[text_token("rare")] == 2

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            build_vocab(Corpus([]), 1)


class TestTfIdf:
    def test_all_unknown_is_zero_vector(self):
        corpus = one_pair_corpus([text_token("known")])
        stats = build_stats(corpus)
        assert tfidf_encode([text_token("unseen")], stats) == {}

    def test_ubiquitous_token_negative_weight(self):
        # token in every one of 9 documents: idf = ln(9/10) < 0
        from proofmatch.encoders import DocumentStats
        stats = DocumentStats(df={text_token("the"): 9}, n_docs=9)
        vec = tfidf_encode([text_token("the")] * 3, stats)
        expected = 3 * math.log(9 / (1 + 9))
        assert vec[text_token("the")] == pytest.approx(expected)
        assert vec[text_token("the")] < 0

    def test_cosine_self_is_one(self):
        corpus = one_pair_corpus([text_token("a"), text_token("b")])
        stats = build_stats(corpus)
        doc = [text_token("a"), text_token("b"), text_token("b")]
        v = tfidf_encode(doc, stats)
        assert cosine(v, v) == pytest.approx(1.0)

    def test_cosine_symmetry_and_scale_invariance(self):
        u = {text_token("a"): 1.0, text_token("b"): 2.0}
        v = {text_token("b"): 3.0, text_token("c"): -1.0}
        assert cosine(u, v) == pytest.approx(cosine(v, u))
        scaled = {t: 7.5 * x for t, x in u.items()}
        assert cosine(scaled, v) == pytest.approx(cosine(u, v))

    def test_cosine_zero_vector_is_zero(self):
        assert cosine({}, {text_token("a"): 1.0}) == 0.0


def small_state(kind=EncoderKind.POOLED, pooling=Pooling.MAX, layers=1,
                seed=0, **kwargs):
    corpus = one_pair_corpus([math_token(f"v{i}") for i in range(10)])
    vocab = build_vocab(corpus, 1)
    cfg = EncoderConfig(kind, d=8, layers=layers, heads=2, d_k=3,
                        pooling=pooling, **kwargs)
    return init_model(vocab, cfg, seed=seed)


class TestEncode:
    def test_single_token_max_pool_is_embedding(self):
        state = small_state()
        doc = [math_token("v3")]
        vec = encode(state, doc)
        row = state.vocab.id_of[math_token("v3")]
        assert np.allclose(vec, state.embeddings[row])

    def test_mean_of_identical_tokens(self):
        state = small_state(pooling=Pooling.MEAN)
        one = encode(state, [math_token("v1")])
        two = encode(state, [math_token("v1")] * 2)
        assert np.allclose(one, two)

    def test_empty_document_raises(self):
        with pytest.raises(EmptyDocument):
            encode(small_state(), [])

    def test_zeroed_self_attention_reduces_to_pooled(self):
        state = small_state(EncoderKind.SELF_ATTENTIVE, use_positions=False)
        for lp in state.layers:
            lp.wo[:] = 0.0
        doc = [math_token("v1"), math_token("v5"), math_token("v2")]
        pooled_state = small_state()
        pooled_state.embeddings = state.embeddings
        assert np.allclose(encode(state, doc), encode(pooled_state, doc))

    def test_max_pool_permutation_invariance(self):
        rng = np.random.default_rng(1)
        for state in (small_state(),
                      small_state(EncoderKind.SELF_ATTENTIVE, layers=0)):
            doc = [math_token(f"v{i}") for i in rng.integers(0, 10, size=6)]
            base = encode(state, doc)
            for _ in range(5):
                perm = [doc[i] for i in rng.permutation(len(doc))]
                assert np.allclose(encode(state, perm), base)

    def test_attention_rows_sum_to_one(self):
        state = small_state(EncoderKind.SELF_ATTENTIVE, layers=2)
        doc = [math_token(f"v{i}") for i in range(5)]
        _, cache = forward(state, doc)
        for lc in cache.layers:
            assert np.allclose(lc.attn.sum(axis=-1), 1.0, atol=1e-6)

    def test_deterministic(self):
        state = small_state(EncoderKind.SELF_ATTENTIVE)
        doc = [math_token("v1"), math_token("v2")]
        assert np.array_equal(encode(state, doc), encode(state, doc))


class TestScore:
    def test_identity_w_is_dot(self):
        state = small_state()
        state.head.w = np.eye(8)
        state.head.b = 0.0
        s = np.arange(8.0)
        p = np.ones(8)
        assert score(state, s, p) == pytest.approx(float(s @ p))

    def test_zero_statement_gives_bias(self):
        state = small_state()
        state.head.b = -2.5
        assert score(state, np.zeros(8), np.ones(8)) == pytest.approx(-2.5)

    def test_worked_two_dim_example(self):
        corpus = one_pair_corpus([math_token("v0")])
        vocab = build_vocab(corpus, 1)
        state = init_model(vocab, EncoderConfig(EncoderKind.POOLED, d=2,
                                                heads=1, d_k=2), seed=0)
        state.head.w = np.eye(2)
        state.head.b = 0.5
        assert score(state, np.array([1.0, 2.0]),
                     np.array([3.0, 4.0])) == pytest.approx(11.5)

    def test_dimension_mismatch(self):
        state = small_state()
        with pytest.raises(DimensionMismatch):
            score(state, np.zeros(3), np.zeros(8))


class TestSerialization:
    @pytest.mark.parametrize("kind,layers", [(EncoderKind.POOLED, 0),
                                             (EncoderKind.SELF_ATTENTIVE, 2)])
    def test_round_trip_exact(self, tmp_path, kind, layers):
        state = small_state(kind, layers=max(layers, 1), seed=5)
        path = tmp_path / "m.pmm"
        save_model(state, path)
        loaded = load_model(path)
        # a second write of the loaded state is byte-identical
        path2 = tmp_path / "m2.pmm"
        save_model(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()
        again = load_model(path2)
        for a, b in zip(loaded.param_arrays(), again.param_arrays()):
            assert np.array_equal(a, b)
        assert loaded.vocab.tokens == state.vocab.tokens
        assert loaded.config == state.config

    def test_checksum_detects_corruption(self, tmp_path):
        from proofmatch.encoders import ModelFormatError
        state = small_state()
        path = tmp_path / "m.pmm"
        save_model(state, path)
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(ModelFormatError):
            load_model(path)
