"""Bit-level codecs for hash streams: Elias-gamma, frequency dictionary,
run-length index coding, and CRC-32.

Bit strings in the public helpers are plain ``str`` of ``'0'``/``'1'`` so
they read naturally in tests; the packed form is :class:`Bitstream`
(MSB-first within each byte).
"""
from __future__ import annotations

import zlib
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import FramingError


@dataclass(frozen=True)
class Bitstream:
    data: bytes
    bit_length: int

    def __post_init__(self):
        if not 0 <= self.bit_length <= 8 * len(self.data):
            raise ValueError("bit_length exceeds the byte buffer")

    @classmethod
    def from_bits(cls, bits: str) -> "Bitstream":
        n = len(bits)
        if n == 0:
            return cls(b"", 0)
        padded = bits + "0" * (-n % 8)
        return cls(int(padded, 2).to_bytes(len(padded) // 8, "big"), n)

    def to_bits(self) -> str:
        if not self.bit_length:
            return ""
        full = format(int.from_bytes(self.data, "big"), f"0{8 * len(self.data)}b")
        return full[:self.bit_length]

    def __len__(self):
        return self.bit_length


class BitReader:
    """Sequential reader over a bit string; raises FramingError past the end."""

    def __init__(self, bits: str, pos: int = 0):
        self.bits = bits
        self.pos = pos

    def remaining(self) -> int:
        return len(self.bits) - self.pos

    def read(self, n: int) -> int:
        if n == 0:
            return 0
        if self.pos + n > len(self.bits):
            raise FramingError(f"bitstream truncated: need {n} bits at position {self.pos}")
        v = int(self.bits[self.pos:self.pos + n], 2)
        self.pos += n
        return v


# --------------------------------------------------------------------------
# Elias-gamma

def elias_gamma_encode(n: int) -> str:
    if n < 1:
        raise ValueError(f"Elias-gamma needs a positive integer, got {n}")
    b = format(n, "b")
    return "0" * (len(b) - 1) + b


def elias_gamma_decode(bits: str, pos: int = 0) -> tuple[int, int]:
    """Decode one codeword starting at ``pos``; returns ``(n, bits consumed)``."""
    zeros = 0
    i = pos
    while i < len(bits) and bits[i] == "0":
        zeros += 1
        i += 1
    end = i + zeros + 1
    if end > len(bits):
        raise FramingError(f"truncated Elias-gamma codeword at bit {pos}")
    return int(bits[i:end], 2), end - pos


# --------------------------------------------------------------------------
# dictionary + run-length coding of hash batches

@dataclass(frozen=True)
class HashBatch:
    hashes: tuple[int, ...]
    epoch: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hashes", tuple(int(h) for h in self.hashes))
        if any(not 0 <= h <= 255 for h in self.hashes):
            raise ValueError("hash values are 8-bit")


@dataclass(frozen=True)
class Dictionary:
    entries: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(int(e) for e in self.entries))
        if len(set(self.entries)) != len(self.entries):
            raise ValueError("dictionary entries must be distinct")

    @property
    def index_bits(self) -> int:
        return max(0, (len(self.entries) - 1).bit_length())

    def __len__(self):
        return len(self.entries)


def hfreq(hashes: Iterable[int]) -> Dictionary:
    """Distinct values by descending frequency, ties by ascending value."""
    counts = Counter(int(h) for h in hashes)
    return Dictionary(tuple(sorted(counts, key=lambda v: (-counts[v], v))))


def runs(seq: Sequence[int]) -> list[tuple[int, int]]:
    out: list[tuple[int, int]] = []
    for v in seq:
        if out and out[-1][0] == v:
            out[-1] = (v, out[-1][1] + 1)
        else:
            out.append((v, 1))
    return out


def hcomp_encode(batch: HashBatch | Sequence[int]) -> tuple[Dictionary, Bitstream]:
    """Dictionary-code a batch, then run-length code the index sequence.

    Each run is emitted as a fixed-width index followed by the Elias-gamma
    code of its length. A one-entry dictionary uses zero index bits.
    """
    hashes = batch.hashes if isinstance(batch, HashBatch) else tuple(int(h) for h in batch)
    if not hashes:
        raise ValueError("cannot encode an empty batch")
    d = hfreq(hashes)
    pos = {v: i for i, v in enumerate(d.entries)}
    k = d.index_bits
    parts = []
    for value, length in runs(hashes):
        if k:
            parts.append(format(pos[value], f"0{k}b"))
        parts.append(elias_gamma_encode(length))
    return d, Bitstream.from_bits("".join(parts))


def dcomp_decode(dictionary: Dictionary, stream: Bitstream | str, epoch: int = 0) -> HashBatch:
    bits = stream.to_bits() if isinstance(stream, Bitstream) else stream
    reader = BitReader(bits)
    k = dictionary.index_bits
    out: list[int] = []
    while reader.remaining():
        idx = reader.read(k)
        if idx >= len(dictionary):
            raise FramingError(f"dictionary index {idx} out of range (size {len(dictionary)})")
        n, used = elias_gamma_decode(bits, reader.pos)
        reader.pos += used
        out.extend([dictionary.entries[idx]] * n)
    if not out:
        raise FramingError("empty hash stream")
    return HashBatch(tuple(out), epoch)


def pack_hash_payload(dictionary: Dictionary, stream: Bitstream) -> bytes:
    """Wire layout: entry count minus one (1 byte), the raw entries, the
    stream bit length (2 bytes, big-endian), then the packed stream."""
    if not 1 <= len(dictionary) <= 256:
        raise ValueError("dictionary must hold 1..256 entries")
    if stream.bit_length >= 1 << 16:
        raise ValueError("hash stream too long for one payload")
    return (bytes([len(dictionary) - 1]) + bytes(dictionary.entries)
            + stream.bit_length.to_bytes(2, "big") + stream.data[:(stream.bit_length + 7) // 8])


def unpack_hash_payload(payload: bytes) -> tuple[Dictionary, Bitstream]:
    if len(payload) < 4:
        raise FramingError("hash payload too short")
    size = payload[0] + 1
    if len(payload) < 1 + size + 2:
        raise FramingError("hash payload truncated inside the dictionary")
    entries = tuple(payload[1:1 + size])
    nbits = int.from_bytes(payload[1 + size:3 + size], "big")
    body = payload[3 + size:]
    if 8 * len(body) < nbits:
        raise FramingError("hash payload truncated inside the stream")
    try:
        d = Dictionary(entries)
    except ValueError as exc:
        raise FramingError(str(exc)) from None
    return d, Bitstream(bytes(body), nbits)


def encode_batch(batch: HashBatch | Sequence[int]) -> bytes:
    return pack_hash_payload(*hcomp_encode(batch))


def decode_batch(payload: bytes, epoch: int = 0) -> HashBatch:
    return dcomp_decode(*unpack_hash_payload(payload), epoch=epoch)


def encoded_bits(hashes: Sequence[int]) -> int:
    """Size in bits of the full wire payload for ``hashes``."""
    d, s = hcomp_encode(hashes)
    return 8 * (1 + len(d) + 2) + s.bit_length


# --------------------------------------------------------------------------
# CRC-32

def crc32(data: bytes) -> int:
    """CRC-32 (reflected 0x04C11DB7, init and final XOR 0xFFFFFFFF)."""
    return zlib.crc32(bytes(data)) & 0xFFFFFFFF
