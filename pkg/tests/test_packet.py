from importlib import resources

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bcisim.errors import FramingError, IntegrityError
from bcisim.packet import (BROADCAST, HEADER_BITS, MAX_PAYLOAD, OVERHEAD_BITS, Packet, PacketType, flip_bits,
                           frame_bits, npack, parse_frame, unpack)
from oracles.bit_packet import build


def golden():
    text = resources.files("bcisim").joinpath("data").joinpath("packet_vectors.hex").read_text()
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        *fields, payload, frame = line.split()
        yield [int(f) for f in fields], bytes.fromhex(payload), bytes.fromhex(frame)


def test_header_width_and_overhead():
    assert HEADER_BITS == 84
    assert OVERHEAD_BITS == 148
    assert frame_bits(10) == 84 + 32 + 80 + 32


def test_golden_vectors():
    vecs = list(golden())
    assert len(vecs) >= 20
    for (version, ptype, src, dst, flow, seq, ts), payload, frame in vecs:
        assert npack(payload, ptype, src, dst, flow, seq, ts, version) == frame
        p = unpack(frame)
        assert (p.ptype, p.src, p.dst, p.flow_id, p.seq, p.sample_ts, p.payload) == (ptype, src, dst, flow, seq, ts,
                                                                                      payload)


packets = st.builds(
    lambda t, s, d, f, q, ts, pl: (t, s, d, f, q, ts, pl),
    st.integers(0, 15), st.integers(0, 255), st.integers(0, 255), st.integers(0, 255), st.integers(0, 65535),
    st.integers(0, (1 << 28) - 1), st.binary(min_size=1, max_size=MAX_PAYLOAD))


@given(packets)
def test_roundtrip_and_independent_builder(pk):
    t, s, d, f, q, ts, pl = pk
    frame = npack(pl, t, s, d, f, q, ts)
    assert frame == build({"version": 1, "ptype": t, "src": s, "dst": d, "flow_id": f, "seq": q, "sample_ts": ts}, pl)
    assert unpack(frame) == Packet(t, s, d, pl, f, q, ts)


def test_bulk_roundtrip_100k():
    rng = np.random.default_rng(77)
    for _ in range(100_000):
        n = int(rng.integers(1, 65))
        pl = rng.integers(0, 256, size=n, dtype=np.uint8).tobytes()
        h = rng.integers(0, [6, 256, 256, 256, 65536, 1 << 28])
        p = unpack(npack(pl, int(h[0]), int(h[1]), int(h[2]), int(h[3]), int(h[4]), int(h[5])))
        assert p.payload == pl and p.seq == h[4] and p.sample_ts == h[5]


def test_oversize_payload():
    with pytest.raises(ValueError):
        npack(bytes(257), PacketType.HASH, 0, BROADCAST)
    with pytest.raises(ValueError):
        npack(b"", PacketType.HASH, 0, BROADCAST)


def test_payload_flip_reports_payload_only():
    frame = npack(b"hello world", PacketType.SIGNAL, 3, 4)
    bad = flip_bits(frame, [HEADER_BITS + 32 + 5])
    with pytest.raises(IntegrityError) as ei:
        unpack(bad)
    e = ei.value
    assert e.header_ok and not e.payload_ok and e.ptype == PacketType.SIGNAL
    assert e.packet.payload != b"hello world"


def test_header_flip_hides_type():
    frame = npack(b"abc", PacketType.HASH, 1, 2)
    with pytest.raises(IntegrityError) as ei:
        unpack(flip_bits(frame, [10]))
    assert not ei.value.header_ok and ei.value.ptype is None


@given(st.binary(min_size=1, max_size=40), st.data())
def test_every_single_bit_flip_is_detected(pl, data):
    frame = npack(pl, PacketType.CONTROL, 0, 1)
    bit = data.draw(st.integers(0, frame_bits(len(pl)) - 1))
    r = parse_frame(flip_bits(frame, [bit]))
    assert not (r.header_ok and r.payload_ok)


def test_short_frame():
    with pytest.raises(FramingError):
        parse_frame(bytes(5))
