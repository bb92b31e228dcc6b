import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdxcodes.dp_code import (CompleteAccess, EncodedWord, Message, NoisyWord, PlantedLists, RepetitionLayout,
                              SubspaceAccess, corrupt_random, corrupt_two_messages, dp_encode, encode_block,
                              gi_compose_lists, read_codeword, rep_decode_sample, rep_pad, write_codeword)
from hdxcodes.subspace_system import SubspaceSystem


class _PathAccess:
    """Vertices 1, 2, 3 (ids 0..2) and hyperedges {1,2}, {2,3}."""

    num_vertices = 3
    edges = [(1, 2), (2, 3)]

    def degree(self, s):
        return 2

    def local_vertices(self, s):
        return np.asarray([v - 1 for v in s], dtype=np.int64)


def test_encoding_reads_off_the_message():
    sys = _PathAccess()
    f = Message(2, table=np.array([0, 1, 1]))
    assert [tuple(encode_block(sys, f, s)) for s in sys.edges] == [(0, 1), (1, 1)]


def test_constant_message_gives_constant_blocks():
    sys = CompleteAccess(9, 3)
    f = Message.constant(sys, 5, 3)
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert set(encode_block(sys, f, sys.random_hyperedge(rng))) == {3}


def test_message_rejects_symbols_outside_alphabet():
    with pytest.raises(ValueError):
        Message(2, table=np.array([0, 2]))
    with pytest.raises(ValueError):
        Message(2)


def test_dp_encode_index_range():
    sys = CompleteAccess(6, 3)
    f = Message.random(sys, 4, np.random.default_rng(1))
    s = (0, 2, 5)
    assert [dp_encode(sys, f, s, i) for i in range(3)] == [f(0), f(2), f(5)]
    with pytest.raises(IndexError):
        dp_encode(sys, f, s, 3)


@pytest.fixture(scope="module")
def subspace_access():
    return SubspaceAccess(SubspaceSystem(4, 3))


def test_restrictions_agree_on_shared_vertices(subspace_access):
    sys = subspace_access
    rng = np.random.default_rng(2)
    f = Message.random(sys, 16, rng)
    for _ in range(200):
        s = sys.random_hyperedge(rng)
        s2 = sys.random_hyperedge(rng)
        ia, ib = sys.shared_indices(s, s2)
        np.testing.assert_array_equal(encode_block(sys, f, s)[ia], encode_block(sys, f, s2)[ib])


def test_clean_word_queries_return_the_message(subspace_access):
    sys = subspace_access
    rng = np.random.default_rng(3)
    f = Message.random(sys, 16, rng)
    w = EncodedWord(sys, f)
    for _ in range(200):
        s = sys.random_hyperedge(rng)
        verts = sys.local_vertices(s)
        i = int(rng.integers(len(verts)))
        if verts[i] >= 0:
            assert int(w.block(s)[i]) == f(int(verts[i]))


def test_corrupt_random_extremes():
    sys = CompleteAccess(10, 3)
    rng = np.random.default_rng(4)
    f = Message.random(sys, 7, rng)
    w = EncodedWord(sys, f)
    keep_all = corrupt_random(w, 1.0, rng)
    keep_none = corrupt_random(w, 0.0, rng)
    agree = 0
    for idx in range(sys.num_hyperedges):
        s = sys.hyperedge_at(idx)
        np.testing.assert_array_equal(keep_all.block(s), w.block(s))
        assert not keep_none.kept(s)
        agree += np.array_equal(keep_none.block(s), w.block(s))
    # chance agreement of a uniform block is 7^-3
    assert agree <= 3
    with pytest.raises(ValueError):
        corrupt_random(w, 1.5, rng)


def test_corrupt_random_kept_fraction():
    sys = CompleteAccess(20, 4)
    rng = np.random.default_rng(5)
    w = EncodedWord(sys, Message.random(sys, 3, rng))
    eps = 0.3
    noisy = corrupt_random(w, eps, rng)
    n = sys.num_hyperedges
    kept = sum(noisy.kept(idx) for idx in range(n))
    assert abs(kept / n - eps) <= 3 * np.sqrt(eps * (1 - eps) / n)
    s = sys.hyperedge_at(0)
    np.testing.assert_array_equal(noisy.block(s), noisy.block(s))


def test_two_message_channel():
    sys = CompleteAccess(12, 3)
    rng = np.random.default_rng(6)
    f1, f2 = Message.random(sys, 5, rng), Message.random(sys, 5, rng)
    eps = 0.25
    w = corrupt_two_messages(sys, f1, f2, eps, rng)
    n = sys.num_hyperedges
    assert w.in_d.sum() == round(4 * eps * n) == n
    ones = (w.choice[w.in_d] == 1).mean()
    assert abs(ones - 0.5) <= 3 * np.sqrt(0.25 / n)
    for idx in range(n):
        s = sys.hyperedge_at(idx)
        f = f1 if w.choice[idx] == 1 else f2
        np.testing.assert_array_equal(w.block(s), encode_block(sys, f, s))
    small = corrupt_two_messages(sys, f1, f2, 0.1, rng)
    assert small.in_d.sum() == round(0.4 * n)
    off = int(np.flatnonzero(~small.in_d)[0])
    assert set(small.block(sys.hyperedge_at(off))) == {1}
    with pytest.raises(ValueError):
        corrupt_two_messages(sys, f1, f2, 0.3, rng)


def test_gi_lists_on_clean_word(subspace_access):
    sys = subspace_access
    rng = np.random.default_rng(7)
    f = Message.random(sys, 16, rng)
    w = EncodedWord(sys, f, layer="T")
    lists = gi_compose_lists(sys, w, 1, shared_seed=99)
    again = gi_compose_lists(sys, w, 1, shared_seed=99)
    for _ in range(100):
        s = sys.random_hyperedge(rng)
        (entry,) = lists.entries(s)
        np.testing.assert_array_equal(entry, encode_block(sys, f, s))
        np.testing.assert_array_equal(again.entries(s)[0], entry)


def test_gi_lists_need_gi_layer(subspace_access):
    w = EncodedWord(subspace_access, Message.constant(subspace_access, 2, 0))
    with pytest.raises(ValueError):
        gi_compose_lists(subspace_access, w, 2, 0)


def test_planted_lists_hold_the_truth(subspace_access):
    sys = subspace_access
    rng = np.random.default_rng(8)
    f = Message.random(sys, 16, rng)
    lists = PlantedLists(sys, f, 4, seed=3)
    for _ in range(100):
        s = sys.random_hyperedge(rng)
        entries = lists.entries(s)
        assert len(entries) == 4
        np.testing.assert_array_equal(entries[lists.true_position(s)], encode_block(sys, f, s))


def test_repetition_padding():
    assert rep_pad(2, 5, "ab") == "ababa"
    assert rep_pad(3, 3, "xyz") == "xyz"
    lay = RepetitionLayout(2, 5)
    assert [lay.multiplicity(v) for v in range(2)] == [3, 2]
    with pytest.raises(ValueError):
        lay.pad("abc")
    with pytest.raises(ValueError):
        RepetitionLayout(4, 3)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(0, 20), st.integers(0, 2**32 - 1))
def test_repetition_decode_lands_on_copies(k_small, extra, seed):
    k_big = k_small + extra
    f = list(range(k_small))
    padded = rep_pad(k_small, k_big, f)
    rng = np.random.default_rng(seed)
    for v in range(k_small):
        slot = rep_decode_sample(k_small, k_big, v, rng)
        assert 0 <= slot < k_big and padded[slot] == v


def test_repetition_decode_is_uniform_over_copies():
    rng = np.random.default_rng(9)
    counts = np.bincount([rep_decode_sample(2, 5, 0, rng) for _ in range(3000)], minlength=5)
    assert counts[1] == counts[3] == 0
    assert all(abs(c - 1000) < 120 for c in counts[[0, 2, 4]])


def test_container_roundtrip(tmp_path, subspace_access):
    sys = subspace_access
    rng = np.random.default_rng(10)
    w = EncodedWord(sys, Message.random(sys, 16, rng))
    blocks = [sys.random_hyperedge(rng) for _ in range(20)]
    path = tmp_path / "word.bin"
    manifest = write_codeword(path, w, blocks)
    assert manifest["blocks"] == 20
    header, data = read_codeword(path)
    assert header["alphabet"] == 16 and header["layer"] == "S"
    for s in blocks:
        np.testing.assert_array_equal(data[sys.hyperedge_key(s)], w.block(s))
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"nope")
    with pytest.raises(ValueError):
        read_codeword(bad)


def test_noisy_word_is_deterministic_given_seed():
    sys = CompleteAccess(8, 3)
    w = EncodedWord(sys, Message.random(sys, 9, np.random.default_rng(11)))
    a, b = NoisyWord(w, 0.5, 42), NoisyWord(w, 0.5, 42)
    for idx in range(sys.num_hyperedges):
        s = sys.hyperedge_at(idx)
        np.testing.assert_array_equal(a.block(s), b.block(s))
