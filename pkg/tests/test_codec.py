import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bcisim.codec import (Bitstream, Dictionary, HashBatch, crc32, dcomp_decode, decode_batch, elias_gamma_decode,
                          elias_gamma_encode, encode_batch, encoded_bits, hcomp_encode, hfreq)
from bcisim.errors import FramingError
from oracles.bit_packet import crc32_bitwise


def test_gamma_examples():
    assert elias_gamma_encode(1) == "1"
    assert elias_gamma_encode(2) == "010"
    assert elias_gamma_encode(5) == "00101"
    with pytest.raises(ValueError):
        elias_gamma_encode(0)


def test_gamma_roundtrip_range():
    for n in range(1, 10_001):
        code = elias_gamma_encode(n)
        assert elias_gamma_decode(code + "1") == (n, len(code))


def test_gamma_truncated():
    with pytest.raises(FramingError):
        elias_gamma_decode("0001")


def test_hcomp_hand_example():
    d, s = hcomp_encode([7, 7, 7, 3])
    assert d.entries == (7, 3)
    assert s.to_bits() == "0" + "011" + "1" + "1"


def test_single_value_batch():
    d, s = hcomp_encode([42] * 9)
    assert d.entries == (42,) and d.index_bits == 0
    assert s.to_bits() == elias_gamma_encode(9)
    assert dcomp_decode(d, s).hashes == (42,) * 9


def test_frequency_ties_by_value():
    assert hfreq([9, 1, 9, 1, 4]).entries == (1, 9, 4)


batches = st.lists(st.integers(0, 255), min_size=1, max_size=200)


@given(batches)
def test_roundtrip_property(h):
    d, s = hcomp_encode(h)
    assert dcomp_decode(d, s).hashes == tuple(h)
    assert decode_batch(encode_batch(HashBatch(h, 7)), 7) == HashBatch(h, 7)
    assert 8 * len(encode_batch(h)) >= encoded_bits(h) > 8 * len(encode_batch(h)) - 8


def test_bulk_roundtrip_100k():
    rng = np.random.default_rng(2024)
    for i in range(100_000):
        n = int(rng.integers(1, 48))
        alphabet = int(rng.integers(1, 256))
        h = rng.integers(0, alphabet, size=n)
        if i % 3 == 0:
            h = np.repeat(h[: max(1, n // 4)], 4)[:n]
        payload = encode_batch(h.tolist())
        assert decode_batch(payload).hashes == tuple(h.tolist())


def test_truncated_stream_is_framing_error():
    payload = encode_batch([1, 2, 3, 1, 2, 3, 4])
    with pytest.raises(FramingError):
        decode_batch(payload[:3])
    d, s = hcomp_encode([5, 6, 7, 7])
    with pytest.raises(FramingError):
        dcomp_decode(d, s.to_bits()[:-1])


def test_index_overrun_is_framing_error():
    with pytest.raises(FramingError):
        dcomp_decode(Dictionary((1, 2, 3)), "11" + "1")


def test_bitstream_bounds():
    with pytest.raises(ValueError):
        Bitstream(b"\x00", 9)
    assert Bitstream.from_bits("101").to_bits() == "101"


def test_zipfian_batches_compress():
    rng = np.random.default_rng(5)
    for _ in range(50):
        h = np.minimum(rng.zipf(1.6, size=300), 255)
        h = np.sort(h)[rng.permutation(300)] if rng.random() < 0.5 else np.sort(h)
        assert encoded_bits(h.tolist()) < 8 * len(h)


def test_crc_known_answers():
    assert crc32(b"") == 0
    assert crc32(b"123456789") == 0xCBF43926 == crc32_bitwise(b"123456789")


@given(st.binary(max_size=300))
def test_crc_matches_bitwise_reference(data):
    assert crc32(data) == crc32_bitwise(data)


def test_single_bit_flip_always_changes_crc():
    msg = bytes([0xDE, 0xAD, 0xBE, 0xEF])
    ref = crc32(msg)
    for bit in range(32):
        flipped = bytearray(msg)
        flipped[bit // 8] ^= 0x80 >> (bit % 8)
        assert crc32(bytes(flipped)) != ref
