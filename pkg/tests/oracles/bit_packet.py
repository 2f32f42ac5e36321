"""Frame builder working on a string of '0'/'1' characters.

Shares no code with the package: the CRC is the bitwise reflected
polynomial loop rather than zlib, and fields are concatenated as text.
Run as a script to regenerate the golden vector file.
"""
import random
import sys

FIELDS = (("version", 4), ("ptype", 4), ("src", 8), ("dst", 8), ("flow_id", 8), ("seq", 16),
          ("sample_ts", 28), ("payload_len", 8))


def crc32_bitwise(data: bytes) -> int:
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ (0xEDB88320 if crc & 1 else 0)
    return crc ^ 0xFFFFFFFF


def bits_of(value: int, width: int) -> str:
    return format(value, f"0{width}b")


def bits_to_bytes(bits: str) -> bytes:
    bits = bits + "0" * (-len(bits) % 8)
    return bytes(int(bits[i:i + 8], 2) for i in range(0, len(bits), 8))


def build(fields: dict, payload: bytes) -> bytes:
    vals = dict(fields, payload_len=len(payload) - 1)
    header = "".join(bits_of(vals[name], w) for name, w in FIELDS)
    out = header + bits_of(crc32_bitwise(bits_to_bytes(header)), 32)
    out += "".join(bits_of(b, 8) for b in payload)
    out += bits_of(crc32_bitwise(payload), 32)
    return bits_to_bytes(out)


def vectors(seed: int = 20240601, count: int = 24):
    rng = random.Random(seed)
    lengths = [1, 2, 3, 255, 256] + [rng.randint(1, 256) for _ in range(count - 5)]
    for n in lengths:
        fields = {"version": 1, "ptype": rng.randint(0, 5), "src": rng.randint(0, 255),
                  "dst": rng.choice([255, rng.randint(0, 254)]), "flow_id": rng.randint(0, 255),
                  "seq": rng.randint(0, 65535), "sample_ts": rng.randint(0, (1 << 28) - 1)}
        payload = bytes(rng.randint(0, 255) for _ in range(n))
        yield fields, payload, build(fields, payload)


def format_line(fields, payload, frame) -> str:
    head = " ".join(str(fields[k]) for k, _ in FIELDS[:-1])
    return f"{head} {payload.hex()} {frame.hex()}"


if __name__ == "__main__":
    out = sys.stdout if len(sys.argv) < 2 else open(sys.argv[1], "w")
    out.write("# version ptype src dst flow_id seq sample_ts payload_hex frame_hex\n")
    for v in vectors():
        out.write(format_line(*v) + "\n")
