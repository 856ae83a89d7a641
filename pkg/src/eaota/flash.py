"""Segmented NOR flash and a bounded SRAM staging buffer.

Erase sets every byte of a segment to ``0xFF``; a write may only clear
bits (1 -> 0).  Writes are whole-segment because every update path in this
package reconstructs a full segment before programming it.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

ERASED = 0xFF
DEFAULT_FLASH_SIZE = 128 * 1024
DEFAULT_SEGMENT_SIZE = 512
DEFAULT_SRAM_SIZE = 8 * 1024


class FlashError(Exception):
    pass


class SegmentIndexError(FlashError, IndexError):
    pass


class BitSetViolation(FlashError):
    """A write tried to flip a bit from 0 to 1 (the segment was not erased)."""

    def __init__(self, segment: int, position: int, old: int, new: int):
        self.segment = segment
        self.position = position
        super().__init__(
            f"segment {segment} byte {position}: 0x{old:02X} -> 0x{new:02X} "
            "would set bits without an erase"
        )


class SramOverflow(Exception):
    pass


class FlashMemory:
    def __init__(self, total_size: int = DEFAULT_FLASH_SIZE,
                 segment_size: int = DEFAULT_SEGMENT_SIZE):
        if segment_size <= 0 or total_size <= 0:
            raise ValueError("sizes must be positive")
        if total_size % segment_size:
            raise ValueError(
                f"total_size {total_size} is not a multiple of segment_size {segment_size}")
        self.total_size = total_size
        self.segment_size = segment_size
        self.cells = np.full(total_size, ERASED, dtype=np.uint8)
        self.erase_count = np.zeros(self.n_segments, dtype=np.int64)

    @property
    def n_segments(self) -> int:
        return self.total_size // self.segment_size

    def _span(self, idx: int) -> slice:
        if not 0 <= idx < self.n_segments:
            raise SegmentIndexError(
                f"segment {idx} out of range (0..{self.n_segments - 1})")
        start = idx * self.segment_size
        return slice(start, start + self.segment_size)

    def erase_segment(self, idx: int) -> None:
        span = self._span(idx)
        self.cells[span] = ERASED
        self.erase_count[idx] += 1

    def write_segment(self, idx: int, data) -> None:
        span = self._span(idx)
        new = np.frombuffer(bytes(data), dtype=np.uint8)
        if new.size != self.segment_size:
            raise ValueError(f"write needs exactly {self.segment_size} bytes, got {new.size}")
        old = self.cells[span]
        bad = np.flatnonzero((old & new) != new)
        if bad.size:
            p = int(bad[0])
            raise BitSetViolation(idx, p, int(old[p]), int(new[p]))
        self.cells[span] = new

    def read_segment(self, idx: int) -> bytes:
        return self.cells[self._span(idx)].tobytes()

    def is_blank(self, idx: int) -> bool:
        return bool(np.all(self.cells[self._span(idx)] == ERASED))

    def segment_of(self, address: int) -> int:
        return address // self.segment_size

    # -- whole-image helpers (bypass erase accounting, like a factory programmer) --

    def load_image(self, image: bytes) -> None:
        if len(image) > self.total_size:
            raise ValueError(f"image of {len(image)} bytes exceeds flash ({self.total_size})")
        self.cells[:] = ERASED
        self.cells[:len(image)] = np.frombuffer(bytes(image), dtype=np.uint8)

    def image(self, length: int | None = None) -> bytes:
        return self.cells[:length].tobytes()

    def copy(self) -> "FlashMemory":
        other = FlashMemory.__new__(FlashMemory)
        other.total_size = self.total_size
        other.segment_size = self.segment_size
        other.cells = self.cells.copy()
        other.erase_count = self.erase_count.copy()
        return other

    def save(self, path) -> None:
        Path(path).write_bytes(self.cells.tobytes())

    @classmethod
    def from_file(cls, path, segment_size: int = DEFAULT_SEGMENT_SIZE) -> "FlashMemory":
        raw = Path(path).read_bytes()
        flash = cls(len(raw), segment_size)
        flash.cells[:] = np.frombuffer(raw, dtype=np.uint8)
        return flash

    def hexdump(self, start: int = 0, length: int | None = None) -> str:
        end = self.total_size if length is None else start + length
        return hexdump(self.cells[start:end].tobytes(), base=start)


class SramBuffer:
    """Byte-granular SRAM accounting.  ``capacity=None`` means unbounded."""

    def __init__(self, capacity: int | None = DEFAULT_SRAM_SIZE):
        self.capacity = capacity
        self.used = 0
        self.peak = 0

    def allocate(self, n: int) -> None:
        if n < 0:
            raise ValueError("negative allocation")
        if self.capacity is not None and self.used + n > self.capacity:
            raise SramOverflow(
                f"need {self.used + n} bytes of SRAM, capacity is {self.capacity}")
        self.used += n
        self.peak = max(self.peak, self.used)

    def release(self, n: int) -> None:
        if n > self.used:
            raise ValueError(f"releasing {n} bytes but only {self.used} in use")
        self.used -= n

    def clear(self) -> None:
        self.used = 0


def hexdump(data: bytes, base: int = 0) -> str:
    lines = []
    for off in range(0, len(data), 16):
        chunk = data[off:off + 16]
        lines.append(f"{base + off:08x}: " + " ".join(f"{b:02x}" for b in chunk))
    return "\n".join(lines)


def parse_hexdump(text: str) -> bytes:
    out = bytearray()
    for line in text.splitlines():
        if not line.strip():
            continue
        _, _, rest = line.partition(":")
        out.extend(int(tok, 16) for tok in rest.split())
    return bytes(out)
