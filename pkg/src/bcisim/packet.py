"""Packet framing with separate header and payload CRCs.

Frame layout, all fields MSB-first::

    version:4 ptype:4 src:8 dst:8 flow_id:8 seq:16 sample_ts:28 payload_len:8
    header_crc:32  payload:8*L  payload_crc:32

The 84 header bits are not byte aligned, so the header CRC is taken over
the header padded with four zero bits to 11 bytes. ``payload_len`` holds
``L - 1`` so that the full 1..256 byte range fits in 8 bits. The frame is
shipped as ``ceil(bits / 8)`` bytes; trailing pad bits are not part of the
frame and are never flipped by the channel model.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

from .codec import crc32
from .errors import FramingError, IntegrityError

HEADER_FIELDS = (
    ("version", 4), ("ptype", 4), ("src", 8), ("dst", 8),
    ("flow_id", 8), ("seq", 16), ("sample_ts", 28), ("payload_len", 8),
)
HEADER_BITS = sum(w for _, w in HEADER_FIELDS)
CRC_BITS = 32
OVERHEAD_BITS = HEADER_BITS + 2 * CRC_BITS
MAX_PAYLOAD = 256
BROADCAST = 255
VERSION = 1


class PacketType(IntEnum):
    HASH = 0
    SIGNAL = 1
    CONTROL = 2
    QUERY = 3
    SYNC = 4
    EXTERNAL = 5


@dataclass(frozen=True)
class Packet:
    ptype: int
    src: int
    dst: int
    payload: bytes
    flow_id: int = 0
    seq: int = 0
    sample_ts: int = 0
    version: int = VERSION

    def __post_init__(self):
        object.__setattr__(self, "payload", bytes(self.payload))
        if not 1 <= len(self.payload) <= MAX_PAYLOAD:
            raise ValueError(f"payload must be 1..{MAX_PAYLOAD} bytes, got {len(self.payload)}")
        for name, width in HEADER_FIELDS[:-1]:
            v = int(getattr(self, name))
            if not 0 <= v < (1 << width):
                raise ValueError(f"header field {name}={v} does not fit in {width} bits")

    @property
    def frame_bits(self) -> int:
        return frame_bits(len(self.payload))

    def header_value(self) -> int:
        v = 0
        for name, width in HEADER_FIELDS:
            field = len(self.payload) - 1 if name == "payload_len" else int(getattr(self, name))
            v = (v << width) | field
        return v


def frame_bits(payload_len: int) -> int:
    return OVERHEAD_BITS + 8 * payload_len


def _header_crc(header: int) -> int:
    return crc32((header << 4).to_bytes(11, "big"))


def npack(payload: bytes, ptype: int, src: int, dst: int, flow_id: int = 0, seq: int = 0,
          sample_ts: int = 0, version: int = VERSION) -> bytes:
    """Serialize a packet to bytes (see the module docstring for the layout)."""
    if len(payload) > MAX_PAYLOAD:
        raise ValueError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    return serialize(Packet(int(ptype), src, dst, payload, flow_id, seq, sample_ts, version))


def serialize(p: Packet) -> bytes:
    h = p.header_value()
    L = len(p.payload)
    v = (h << CRC_BITS) | _header_crc(h)
    v = (v << (8 * L)) | int.from_bytes(p.payload, "big")
    v = (v << CRC_BITS) | crc32(p.payload)
    nbits = frame_bits(L)
    pad = -nbits % 8
    return (v << pad).to_bytes((nbits + pad) // 8, "big")


class ParseResult(NamedTuple):
    packet: Packet | None
    ptype: int | None
    header_ok: bool
    payload_ok: bool


def parse_frame(frame: bytes) -> ParseResult:
    """Check both CRCs without raising on mismatch.

    With a bad header CRC the length field is untrusted, so the payload
    extent is taken from the frame size instead.
    """
    min_bytes = (OVERHEAD_BITS + 8 + 7) // 8
    if len(frame) < min_bytes:
        raise FramingError(f"frame of {len(frame)} bytes is shorter than the minimum {min_bytes}")
    total = len(frame) * 8
    v = int.from_bytes(frame, "big")
    header = v >> (total - HEADER_BITS)
    hcrc = (v >> (total - HEADER_BITS - CRC_BITS)) & 0xFFFFFFFF
    header_ok = _header_crc(header) == hcrc

    fields = {}
    rest = header
    for name, width in reversed(HEADER_FIELDS):
        fields[name] = rest & ((1 << width) - 1)
        rest >>= width
    # the payload extent implied by the frame size (pad bits are < 8)
    L_frame = (total - OVERHEAD_BITS) // 8
    L = fields["payload_len"] + 1 if header_ok else L_frame
    if header_ok and frame_bits(L) > total:
        raise FramingError(f"header announces {L} payload bytes but frame holds {L_frame}")
    used = frame_bits(L)
    tail = v >> (total - used)
    pcrc = tail & 0xFFFFFFFF
    payload = ((tail >> CRC_BITS) & ((1 << (8 * L)) - 1)).to_bytes(L, "big")
    payload_ok = crc32(payload) == pcrc

    ptype = fields["ptype"] if header_ok else None
    packet = None
    if header_ok:
        packet = Packet(fields["ptype"], fields["src"], fields["dst"], payload, fields["flow_id"],
                        fields["seq"], fields["sample_ts"], fields["version"])
    return ParseResult(packet, ptype, header_ok, payload_ok)


def unpack(frame: bytes) -> Packet:
    """Parse a frame, raising IntegrityError when either CRC fails.

    The error carries ``ptype`` and, when only the payload is damaged, the
    parsed (degraded) packet so that the receiver can decide what to keep.
    """
    r = parse_frame(frame)
    if r.header_ok and r.payload_ok:
        return r.packet
    which = "header" if not r.header_ok else "payload"
    raise IntegrityError(f"{which} CRC mismatch", ptype=r.ptype, header_ok=r.header_ok,
                         payload_ok=r.payload_ok, packet=r.packet)


def flip_bits(frame: bytes, positions) -> bytes:
    """Flip the given bit positions (0 = MSB of the first byte)."""
    buf = bytearray(frame)
    for p in positions:
        buf[p >> 3] ^= 0x80 >> (p & 7)
    return bytes(buf)
