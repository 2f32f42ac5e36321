"""NVM device model, partitions with chunked layout, and the storage controller.

Layout inside a data partition is chunk-major: chunk row ``c`` holds one
chunk per electrode, so the byte address of item ``i`` of electrode ``e``
at chunk ``c`` is::

    base + ((c mod rows) * E + e) * chunk_bytes + i * item_bytes

Rows are reused circularly; writing chunk ``c`` into the slot that holds an
older chunk evicts that older row. Validity is tracked per row. The
physical device only enforces page/erase timing and energy: a page that
was programmed since its block was last erased forces a block erase first.
Time is in microseconds, energy in nanojoules.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .errors import BackpressureError, ConfigurationError, DataExpiredError

KB = 1024
MB = 1024 * KB


@dataclass(frozen=True)
class NvmGeometry:
    capacity: int = 64 * MB
    page: int = 4 * KB
    block: int = 1 * MB
    read_unit: int = 8
    program_us: float = 350.0
    erase_us: float = 1500.0
    read_us_per_page: float = 30.0
    read_nj_per_page: float = 164.4
    write_nj_per_page: float = 261.143
    erase_nj_per_block: float = 0.0
    leakage_mw: float = 0.252

    def __post_init__(self):
        if self.block % self.page:
            raise ConfigurationError("block size must be a multiple of the page size")
        if self.capacity % self.block:
            raise ConfigurationError("capacity must be a multiple of the block size")

    @property
    def pages_per_block(self) -> int:
        return self.block // self.page

    @property
    def program_power_mw(self) -> float:
        """Average power while a page program is in flight."""
        return self.write_nj_per_page / self.program_us


class NvmOp(NamedTuple):
    kind: str
    start: float
    end: float
    page: int


class NvmDevice:
    """One-operation-at-a-time flash timeline with energy accounting."""

    def __init__(self, geometry: NvmGeometry = NvmGeometry()):
        self.geometry = geometry
        self.busy_until = 0.0
        self.ops: list[NvmOp] = []
        self.energy_nj = 0.0
        self._programmed: dict[int, set[int]] = {}   # block -> pages programmed since erase
        self.erases = 0
        self.keep_log = True

    def _reserve(self, kind: str, now: float, duration: float, page: int) -> NvmOp:
        start = max(now, self.busy_until)
        op = NvmOp(kind, start, start + duration, page)
        self.busy_until = op.end
        if self.keep_log:
            self.ops.append(op)
        return op

    def program(self, page: int, now: float) -> NvmOp:
        g = self.geometry
        block = page // g.pages_per_block
        done = self._programmed.setdefault(block, set())
        if page in done:
            self._reserve("erase", now, g.erase_us, block * g.pages_per_block)
            self.energy_nj += g.erase_nj_per_block
            self.erases += 1
            done.clear()
        done.add(page)
        self.energy_nj += g.write_nj_per_page
        return self._reserve("program", now, g.program_us, page)

    def read_pages(self, n_pages: int, now: float, first_page: int = -1) -> NvmOp:
        g = self.geometry
        self.energy_nj += g.read_nj_per_page * n_pages
        return self._reserve("read", now, g.read_us_per_page * n_pages, first_page)

    def check_serial(self) -> None:
        ops = sorted(self.ops, key=lambda o: o.start)
        for a, b in zip(ops, ops[1:]):
            if b.start < a.end - 1e-9:
                raise AssertionError(f"overlapping NVM operations: {a} and {b}")


class Role(str, Enum):
    RAW = "raw-signals"
    HASHES = "hashes"
    PRELOADED = "preloaded"
    MC = "microcontroller"


DEFAULT_SPLIT = {Role.RAW: 0.70, Role.HASHES: 0.20, Role.PRELOADED: 0.05, Role.MC: 0.05}


@dataclass
class Partition:
    role: Role
    base: int
    size: int
    electrodes: int = 96
    chunk_items: int = 120
    item_bytes: int = 2
    write_cursor: int = 0          # next chunk index slot to be filled
    resident: dict = field(default_factory=dict)     # slot -> chunk index
    rows: dict = field(default_factory=dict)         # slot -> (E, chunk_items) array
    filled: dict = field(default_factory=dict)       # slot -> bool array of written electrodes
    evictions: list = field(default_factory=list)

    @property
    def chunk_bytes(self) -> int:
        return self.chunk_items * self.item_bytes

    @property
    def row_bytes(self) -> int:
        return self.electrodes * self.chunk_bytes

    @property
    def n_rows(self) -> int:
        return self.size // self.row_bytes

    @property
    def dtype(self):
        return np.int16 if self.item_bytes == 2 else np.uint8

    def address(self, electrode_id: int, chunk_index: int, offset_items: int = 0) -> int:
        slot = chunk_index % self.n_rows
        return self.base + (slot * self.electrodes + electrode_id) * self.chunk_bytes + offset_items * self.item_bytes


def make_partitions(geometry: NvmGeometry, electrodes: int = 96, chunk_samples: int = 120,
                    hash_chunk_items: int = 3, split=None) -> dict[Role, Partition]:
    """Carve the device into four block-aligned, disjoint partitions covering it."""
    split = DEFAULT_SPLIT if split is None else {Role(k): v for k, v in split.items()}
    if abs(sum(split.values()) - 1.0) > 1e-9:
        raise ConfigurationError("partition fractions must sum to 1")
    blocks = geometry.capacity // geometry.block
    counts = {r: int(blocks * split[r]) for r in Role}
    counts[Role.RAW] += blocks - sum(counts.values())
    parts, base = {}, 0
    for role in Role:
        size = counts[role] * geometry.block
        if role is Role.RAW:
            p = Partition(role, base, size, electrodes, chunk_samples, 2)
        elif role is Role.HASHES:
            p = Partition(role, base, size, electrodes, hash_chunk_items, 1)
        else:
            p = Partition(role, base, size, 1, geometry.page, 1)
        parts[role] = p
        base += size
    for role in (Role.RAW, Role.HASHES):
        if parts[role].n_rows < 1:
            raise ConfigurationError(f"partition {role.value} too small for one chunk row")
    return parts


class StorageAddress(NamedTuple):
    partition: Role
    address: int
    chunk_index: int


class ReadResult(NamedTuple):
    samples: np.ndarray
    latency_us: float
    energy_nj: float
    pages: int
    done_at: float


class StorageController:
    """SRAM staging in front of the NVM plus the chunked layout bookkeeping."""

    def __init__(self, geometry: NvmGeometry = NvmGeometry(), electrodes: int = 96, chunk_samples: int = 120,
                 hash_chunk_items: int = 3, buffer_bytes: int = 24 * KB, split=None):
        self.geometry = geometry
        self.device = NvmDevice(geometry)
        self.partitions = make_partitions(geometry, electrodes, chunk_samples, hash_chunk_items, split)
        self.buffer_bytes = buffer_bytes
        self.stalls = 0
        self.peak_occupancy = 0
        self.last_written_page = -1
        self.bytes_written = 0
        self._page_fill: dict[int, int] = {}
        self._staged = 0                       # bytes staged in partial pages
        self._inflight: list[tuple[float, int]] = []   # (program end, bytes)
        self._blobs: dict[str, tuple[int, int]] = {}
        self._blob_cursor = {Role.PRELOADED: 0, Role.MC: 0}
        self._blob_data: dict[str, bytes] = {}

    # ------------------------------------------------------------------ buffer
    def occupancy(self, now: float) -> int:
        self._retire(now)
        return self._staged + sum(b for _, b in self._inflight)

    def _retire(self, now: float) -> None:
        while self._inflight and self._inflight[0][0] <= now:
            heapq.heappop(self._inflight)

    def _stage(self, address: int, nbytes: int, now: float) -> None:
        page_size = self.geometry.page
        if self.occupancy(now) + nbytes > self.buffer_bytes:
            self.stalls += 1
            raise BackpressureError(f"SC buffer full at t={now:.1f} us "
                                    f"({self.occupancy(now)} + {nbytes} > {self.buffer_bytes} bytes)")
        end = address + nbytes
        a = address
        while a < end:
            page = a // page_size
            take = min(end, (page + 1) * page_size) - a
            fill = self._page_fill.get(page, 0) + take
            if fill >= page_size:
                self._page_fill.pop(page, None)
                self._staged -= fill - take
                op = self.device.program(page, now)
                heapq.heappush(self._inflight, (op.end, page_size))
                self.last_written_page = page
            else:
                self._page_fill[page] = fill
                self._staged += take
            a += take
        self.bytes_written += nbytes
        self.peak_occupancy = max(self.peak_occupancy, self._staged + sum(b for _, b in self._inflight))

    def flush(self, now: float) -> None:
        """Program every partially filled page (end of a run)."""
        for page in sorted(self._page_fill):
            op = self.device.program(page, now)
            heapq.heappush(self._inflight, (op.end, self._page_fill[page]))
            self.last_written_page = page
        self._page_fill.clear()
        self._staged = 0

    # ------------------------------------------------------------------ chunks
    def sc_write(self, role: Role | str, electrode_id: int, start: int, samples, now: float = 0.0) -> StorageAddress:
        """Stage whole chunks of one electrode (``start`` must be chunk aligned)."""
        part = self.partitions[Role(role)]
        x = np.asarray(samples)
        if not 0 <= electrode_id < part.electrodes:
            raise ValueError(f"electrode {electrode_id} outside 0..{part.electrodes - 1}")
        if start % part.chunk_items or x.size % part.chunk_items or x.size == 0:
            raise ValueError("writes must cover whole chunks")
        first = start // part.chunk_items
        for k in range(x.size // part.chunk_items):
            c = first + k
            slot = c % part.n_rows
            held = part.resident.get(slot)
            if held is not None and held != c:
                if held > c:
                    raise DataExpiredError(f"chunk {c} is older than resident chunk {held}")
                part.evictions.append(held)
                del part.resident[slot]
                part.rows.pop(slot)
                part.filled.pop(slot)
            if slot not in part.rows:
                part.rows[slot] = np.zeros((part.electrodes, part.chunk_items), dtype=part.dtype)
                part.filled[slot] = np.zeros(part.electrodes, dtype=bool)
                part.resident[slot] = c
            piece = x[k * part.chunk_items:(k + 1) * part.chunk_items]
            part.rows[slot][electrode_id] = piece
            part.filled[slot][electrode_id] = True
            self._stage(part.address(electrode_id, c), part.chunk_bytes, now)
            part.write_cursor = max(part.write_cursor, c + 1)
        return StorageAddress(part.role, part.address(electrode_id, first), first)

    def circular_overwrite(self, role: Role | str) -> list[int]:
        """Chunk indices evicted so far in this partition (oldest first)."""
        return list(self.partitions[Role(role)].evictions)

    def is_resident(self, role: Role | str, electrode_id: int, chunk_index: int) -> bool:
        part = self.partitions[Role(role)]
        slot = chunk_index % part.n_rows
        return part.resident.get(slot) == chunk_index and bool(part.filled[slot][electrode_id])

    def oldest_resident(self, role: Role | str) -> int | None:
        part = self.partitions[Role(role)]
        return min(part.resident.values()) if part.resident else None

    def touched_pages(self, role: Role | str, electrode_id: int, start: int, stop: int) -> list[int]:
        part = self.partitions[Role(role)]
        pages = set()
        page = self.geometry.page
        n = part.chunk_items
        t = start
        while t < stop:
            c, off = divmod(t, n)
            run = min(stop, (c + 1) * n) - t
            a = part.address(electrode_id, c, off)
            b = a + run * part.item_bytes - 1
            pages.update(range(a // page, b // page + 1))
            t += run
        return sorted(pages)

    def sc_read(self, role: Role | str, electrode_id: int, start: int, stop: int, now: float = 0.0) -> ReadResult:
        """Read items ``[start, stop)`` of one electrode; charges NVM time and energy per page."""
        part = self.partitions[Role(role)]
        if stop <= start:
            raise ValueError("empty read range")
        n = part.chunk_items
        out = np.empty(stop - start, dtype=part.dtype)
        for c in range(start // n, (stop - 1) // n + 1):
            if not self.is_resident(role, electrode_id, c):
                raise DataExpiredError(f"chunk {c} of electrode {electrode_id} is not stored "
                                       f"(oldest resident chunk: {self.oldest_resident(role)})")
            slot = c % part.n_rows
            lo, hi = max(start, c * n), min(stop, (c + 1) * n)
            out[lo - start:hi - start] = part.rows[slot][electrode_id, lo - c * n:hi - c * n]
        pages = self.touched_pages(role, electrode_id, start, stop)
        op = self.device.read_pages(len(pages), now, pages[0])
        energy = self.geometry.read_nj_per_page * len(pages)
        return ReadResult(out, op.end - now, energy, len(pages), op.end)

    def sc_read_many(self, role: Role | str, electrodes, start: int, stop: int,
                     now: float = 0.0) -> tuple[dict[int, np.ndarray], ReadResult]:
        """Read one time span of several electrodes, fetching each page once.

        Chunks of neighbouring electrodes share pages, so a multi-electrode
        read costs the union of the pages touched, not their sum.
        """
        part = self.partitions[Role(role)]
        if stop <= start:
            raise ValueError("empty read range")
        n = part.chunk_items
        out, pages = {}, set()
        for e in electrodes:
            buf = np.empty(stop - start, dtype=part.dtype)
            for c in range(start // n, (stop - 1) // n + 1):
                if not self.is_resident(role, e, c):
                    raise DataExpiredError(f"chunk {c} of electrode {e} is not stored "
                                           f"(oldest resident chunk: {self.oldest_resident(role)})")
                lo, hi = max(start, c * n), min(stop, (c + 1) * n)
                buf[lo - start:hi - start] = part.rows[c % part.n_rows][e, lo - c * n:hi - c * n]
            out[e] = buf
            pages.update(self.touched_pages(role, e, start, stop))
        if not pages:
            return out, ReadResult(np.empty(0, dtype=part.dtype), 0.0, 0.0, 0, now)
        op = self.device.read_pages(len(pages), now, min(pages))
        energy = self.geometry.read_nj_per_page * len(pages)
        return out, ReadResult(np.empty(0, dtype=part.dtype), op.end - now, energy, len(pages), op.end)

    # ------------------------------------------------------------------ blobs
    def store_blob(self, role: Role | str, key: str, data: bytes, now: float = 0.0) -> int:
        """Append an opaque record (templates, MC state) to a non-chunked partition."""
        role = Role(role)
        if role not in self._blob_cursor:
            raise ValueError("blobs live in the preloaded or microcontroller partitions")
        part = self.partitions[role]
        off = self._blob_cursor[role]
        if off + len(data) > part.size:
            raise ConfigurationError(f"partition {role.value} is full")
        addr = part.base + off
        self._blobs[key] = (addr, len(data))
        self._blob_data[key] = bytes(data)
        self._blob_cursor[role] = off + len(data)
        self._stage(addr, len(data), now)
        return addr

    def load_blob(self, key: str, now: float = 0.0) -> ReadResult:
        addr, size = self._blobs[key]
        page = self.geometry.page
        n_pages = (addr + size - 1) // page - addr // page + 1
        op = self.device.read_pages(n_pages, now, addr // page)
        return ReadResult(np.frombuffer(self._blob_data[key], dtype=np.uint8),
                          op.end - now, self.geometry.read_nj_per_page * n_pages, n_pages, op.end)


def adc_stream_audit(controller: StorageController, seconds: float, sample_rate: float = 30000.0,
                     signal=None) -> dict:
    """Feed raw chunks at the ADC byte rate and check nothing resident is lost.

    Chunk writes for the electrodes of a row are spread evenly over the
    row's acquisition period, so bytes reach the controller at the ADC rate
    in layout order. Returns counters for the audit.
    """
    part = controller.partitions[Role.RAW]
    E, n = part.electrodes, part.chunk_items
    period = n / sample_rate * 1e6
    rows = int(seconds * sample_rate) // n
    rng = np.random.default_rng(0)
    kept: dict[tuple[int, int], int] = {}
    for c in range(rows):
        t0 = (c + 1) * period
        for e in range(E):
            chunk = (rng.integers(-2000, 2000, size=n, dtype=np.int16) if signal is None
                     else signal[e, c * n:(c + 1) * n])
            controller.sc_write(Role.RAW, e, c * n, chunk, now=t0 + e * period / E)
            kept[(e, c)] = int(np.asarray(chunk, dtype=np.int64).sum())
    lost = 0
    for (e, c), s in kept.items():
        if controller.is_resident(Role.RAW, e, c):
            got = part.rows[c % part.n_rows][e]
            lost += int(int(got.astype(np.int64).sum()) != s)
    controller.device.check_serial()
    return {"rows": rows, "lost": lost, "stalls": controller.stalls,
            "peak_occupancy": controller.peak_occupancy, "erases": controller.device.erases,
            "evicted": len(part.evictions)}
