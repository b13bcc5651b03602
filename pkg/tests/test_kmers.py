import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from repcap import kmers
from repcap.dataset import Alphabet, synthesize_dataset
from repcap.embeddings import (
    EmbeddingError,
    EmbeddingMatrix,
    Method,
    embed_dataset,
    parse_embedding_binary,
    parse_embedding_csv,
)

DNA = Alphabet.dna()
AB = Alphabet.custom("AB")


def at(kmer: str, alphabet=DNA) -> int:
    return kmers.kmer_index(kmer, alphabet)


def test_enumerate():
    assert kmers.enumerate_kmers("ATCGGCA", 3) == ["ATC", "TCG", "CGG", "GGC", "GCA"]
    assert kmers.enumerate_kmers("AA", 2) == ["AA"]
    with pytest.raises(kmers.KmerError, match="shorter than k"):
        kmers.enumerate_kmers("AT", 3)


def test_index_roundtrip():
    for idx in range(64):
        assert kmers.kmer_index(kmers.kmer_from_index(idx, 3, DNA), DNA) == idx


def test_spectrum_single_kmer():
    vec = kmers.spectrum("AAAA", 2, DNA)
    assert vec.shape == (16,)
    assert vec[at("AA")] == 1.0 and vec.sum() == 1.0


def test_spectrum_distinct_kmers():
    vec = kmers.spectrum("ATCGGCA", 3, DNA)
    assert np.count_nonzero(vec) == 5
    assert np.allclose(vec[vec > 0], 0.2)


def test_spectrum_repeated():
    vec = kmers.spectrum("ACAC", 2, DNA)
    assert vec[at("AC")] == pytest.approx(2 / 3)
    assert vec[at("CA")] == pytest.approx(1 / 3)


def test_spaced_hand_case():
    vec = kmers.spaced_spectrum("ABABABABABAB", 2, 9, AB)
    assert vec[at("AB", AB)] == 0.5 and vec[at("BA", AB)] == 0.5


def test_spaced_single_window():
    vec = kmers.spaced_spectrum("ACGTACGTT", 4, 9, DNA)
    assert vec[at("ACGT")] == 1.0 and vec.sum() == 1.0


@pytest.mark.parametrize("k, g", [(4, 4), (5, 4), (0, 3)])
def test_spaced_parameter_validation(k, g):
    with pytest.raises(kmers.KmerError):
        kmers.spaced_spectrum("ACGTACGTACGT", k, g, DNA)


def test_spaced_short_sequence():
    with pytest.raises(kmers.KmerError, match="shorter than g"):
        kmers.spaced_spectrum("ACGT", 2, 9, DNA)


@settings(max_examples=200, deadline=None)
@given(s=st.text("ACGT", min_size=3, max_size=12), k=st.integers(1, 3))
def test_spectrum_matches_dictionary(s, k):
    expected = oracles.dense_from_counts(oracles.kmer_count_dict(s, k), k, "ACGT")
    assert np.array_equal(kmers.spectrum(s, k, DNA), expected)


def test_spectrum_ignores_ids():
    a = synthesize_dataset(2, 3, 20, DNA, 0.2, seed=4)
    vecs = [kmers.spectrum(r.residues, 3, DNA) for r in a.records]
    again = [kmers.spectrum(r.residues, 3, DNA) for r in reversed(a.records)]
    assert all(np.array_equal(x, y) for x, y in zip(vecs, reversed(again)))


# -- PWM ---------------------------------------------------------------------


def test_pwm_pseudocount_arithmetic():
    pwm = kmers.build_pwm(["AA", "AA"], DNA, pseudocount=0.1)
    assert pwm.probabilities[:, 0] == pytest.approx([2.1 / 2.4, 2.1 / 2.4])
    assert np.allclose(pwm.probabilities.sum(axis=1), 1.0, atol=1e-9)


def test_pwm_uniform_column_is_zero():
    pwm = kmers.build_pwm(["AC", "CC", "GC", "TC"], DNA)
    assert np.allclose(pwm.entries[0], 0.0)


def test_pwm_errors():
    with pytest.raises(kmers.KmerError):
        kmers.build_pwm([], DNA)
    with pytest.raises(kmers.KmerError, match="mixed"):
        kmers.build_pwm(["AC", "A"], DNA)


def test_pwm2vec_closed_form():
    vec = kmers.pwm2vec("AAAA", 2, DNA, pseudocount=1e-12)
    assert np.allclose(vec, 2 * math.log(4), rtol=1e-9)


def test_pwm2vec_padding():
    vec = kmers.pwm2vec("ACGTAC", 2, DNA, target_len=8)
    assert vec.shape == (8,)
    assert np.all(vec[5:] == 0)
    assert kmers.pwm2vec("ACGTAC", 2, DNA, target_len=5).shape == (5,)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.text("ACGT", min_size=4, max_size=4), min_size=1, max_size=20))
def test_pwm_rows_are_distributions(kms):
    pwm = kmers.build_pwm(kms, DNA, pseudocount=0.3)
    assert np.allclose(pwm.probabilities.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(np.isfinite(pwm.entries))


# -- one-hot -----------------------------------------------------------------


@pytest.mark.parametrize(
    "s, expected",
    [
        ("AC", [1, 0, 0, 0, 0, 1, 0, 0]),
        ("A", [1, 0, 0, 0, 0, 0, 0, 0]),
        ("ACG", [1, 0, 0, 0, 0, 1, 0, 0]),
    ],
)
def test_one_hot(s, expected):
    assert kmers.one_hot(s, DNA, 2).tolist() == expected


# -- dataset-level embeddings -----------------------------------------------


@pytest.fixture(scope="module")
def small():
    return synthesize_dataset(2, 10, 40, DNA, 0.1, seed=2)


def test_embed_spike2vec(small):
    emb = embed_dataset(small, "spike2vec", {"k": 3})
    assert emb.shape == (20, 64)
    assert np.allclose(emb.values.sum(axis=1), 1.0)


def test_embed_onehot(small):
    emb = embed_dataset(small, Method.ONEHOT, {"target_len": 150})
    assert emb.shape == (20, 600)
    assert set(np.unique(emb.values)) <= {0.0, 1.0}


def test_embed_spaced_names_shortest():
    from repcap.dataset import LabeledDataset, SequenceRecord

    ds = LabeledDataset(
        (SequenceRecord("long", "ACGTACGTACGT", "x"), SequenceRecord("tiny", "ACGTA", "y")), DNA
    )
    with pytest.raises(EmbeddingError, match="tiny"):
        embed_dataset(ds, "spaced_kmers")


def test_pwm_default_target_len(small):
    emb = embed_dataset(small, "pwm2vec")
    assert emb.params["target_len"] == 40 - 9 + 1


def test_unknown_method_lists_valid():
    with pytest.raises(EmbeddingError, match="spike2vec"):
        Method.parse("word2vec")


def test_row_permutation(small):
    a = embed_dataset(small, "spike2vec")
    order = np.random.default_rng(0).permutation(len(small))
    b = embed_dataset(small.reorder(order), "spike2vec")
    assert np.array_equal(a.values[order], b.values)
    assert [a.row_ids[i] for i in order] == b.row_ids


def test_embedding_serialization(small):
    emb = embed_dataset(small, "pwm2vec", {"k": 5})
    back = parse_embedding_csv(emb.to_csv())
    assert np.array_equal(back.values, emb.values)
    assert back.row_ids == emb.row_ids and back.params == emb.params
    assert np.array_equal(parse_embedding_binary(emb.to_binary()), emb.values)
    with pytest.raises(EmbeddingError, match="truncated"):
        parse_embedding_binary(emb.to_binary()[:-8])


def test_embedding_rejects_nan():
    with pytest.raises(EmbeddingError):
        EmbeddingMatrix(np.array([[np.nan]]), ["a"], "pwm2vec")
