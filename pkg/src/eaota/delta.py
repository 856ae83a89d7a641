"""Per-segment byte deltas between two firmware images.

Both images are compared segment by segment after padding the shorter one
with ``0xFF`` (erased flash).  Changed bytes are grouped into blocks of at
most :data:`MAX_BLOCK_LEN` bytes; runs separated by no more than
``merge_gap`` unchanged bytes share a block.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .flash import DEFAULT_FLASH_SIZE, DEFAULT_SEGMENT_SIZE, ERASED

MAX_BLOCK_LEN = 255
DEFAULT_MERGE_GAP = 4


class DeltaError(ValueError):
    pass


class ImageTooLarge(DeltaError):
    pass


@dataclass(frozen=True)
class UpdateBlock:
    offset: int
    data: bytes

    def __post_init__(self):
        if not 1 <= len(self.data) <= MAX_BLOCK_LEN:
            raise DeltaError(f"block length {len(self.data)} outside 1..{MAX_BLOCK_LEN}")
        if self.offset < 0:
            raise DeltaError("negative block offset")

    @property
    def length(self) -> int:
        return len(self.data)

    @property
    def end(self) -> int:
        return self.offset + len(self.data)


@dataclass(frozen=True)
class SegmentDelta:
    segment_index: int
    blocks: tuple[UpdateBlock, ...] = field(default_factory=tuple)
    grows_image: bool = False

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        prev_end = 0
        for b in self.blocks:
            if b.offset < prev_end:
                raise DeltaError(
                    f"segment {self.segment_index}: blocks overlap or are unsorted")
            prev_end = b.end

    @property
    def n_bytes(self) -> int:
        return sum(b.length for b in self.blocks)


def _as_array(image) -> np.ndarray:
    return np.frombuffer(bytes(image), dtype=np.uint8)


def padded_pair(old, new, segment_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Both images padded with 0xFF to a common segment-aligned length."""
    n = max(len(old), len(new))
    n = -(-n // segment_size) * segment_size
    a = np.full(n, ERASED, dtype=np.uint8)
    b = np.full(n, ERASED, dtype=np.uint8)
    a[:len(old)] = _as_array(old)
    b[:len(new)] = _as_array(new)
    return a, b


def changed_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True in ``mask`` as half-open ``(start, end)`` pairs."""
    if not mask.any():
        return []
    edges = np.diff(np.concatenate(([0], mask.view(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), ends.tolist()))


def group_runs(runs: Iterable[tuple[int, int]], merge_gap: int,
               max_len: int = MAX_BLOCK_LEN) -> list[tuple[int, int]]:
    """Greedy left-to-right grouping of changed runs into capped blocks.

    A block grows while the next changed byte lies within ``merge_gap``
    unchanged bytes of it and the block stays within ``max_len``.  Greedy
    extension gives the fewest blocks for a given gap, so the block count
    never increases as ``merge_gap`` grows.
    """
    out: list[tuple[int, int]] = []
    cur: tuple[int, int] | None = None
    for s, e in runs:
        if cur is not None:
            cs, ce = cur
            if s - ce <= merge_gap and s < cs + max_len:
                if e <= cs + max_len:
                    cur = (cs, e)
                    continue
                out.append((cs, cs + max_len))
                s = cs + max_len
            else:
                out.append(cur)
            cur = None
        while e - s > max_len:
            out.append((s, s + max_len))
            s += max_len
        cur = (s, e)
    if cur is not None:
        out.append(cur)
    return out


def compute_deltas(old, new, segment_size: int = DEFAULT_SEGMENT_SIZE,
                   merge_gap: int = DEFAULT_MERGE_GAP,
                   flash_size: int | None = DEFAULT_FLASH_SIZE) -> list[SegmentDelta]:
    if len(old) == 0 or len(new) == 0:
        raise DeltaError("images must be non-empty")
    if merge_gap < 0:
        raise DeltaError("merge_gap must be >= 0")
    if flash_size is not None and max(len(old), len(new)) > flash_size:
        raise ImageTooLarge(
            f"image of {max(len(old), len(new))} bytes does not fit {flash_size} bytes of flash")
    a, b = padded_pair(old, new, segment_size)
    diff = (a != b).reshape(-1, segment_size)
    deltas = []
    for idx in np.flatnonzero(diff.any(axis=1)).tolist():
        seg_new = b[idx * segment_size:(idx + 1) * segment_size]
        blocks = tuple(
            UpdateBlock(s, seg_new[s:e].tobytes())
            for s, e in group_runs(changed_runs(diff[idx]), merge_gap)
        )
        deltas.append(SegmentDelta(idx, blocks, grows_image=idx * segment_size >= len(old)))
    return deltas


def dirty_segments(old, new, segment_size: int = DEFAULT_SEGMENT_SIZE) -> list[int]:
    a, b = padded_pair(old, new, segment_size)
    return np.flatnonzero((a != b).reshape(-1, segment_size).any(axis=1)).tolist()


def apply_blocks(old_segment: bytes, blocks: Iterable[UpdateBlock]) -> bytes:
    seg = bytearray(old_segment)
    for b in blocks:
        if b.end > len(seg):
            raise DeltaError(
                f"block at {b.offset}+{b.length} exceeds segment of {len(seg)} bytes")
        seg[b.offset:b.end] = b.data
    return bytes(seg)


def apply_delta(old_segment: bytes, delta: SegmentDelta) -> bytes:
    return apply_blocks(old_segment, delta.blocks)


def apply_deltas(old, deltas: Sequence[SegmentDelta], length: int,
                 segment_size: int = DEFAULT_SEGMENT_SIZE) -> bytes:
    """Rebuild an image of ``length`` bytes from ``old`` plus every delta."""
    n = max(len(old), length)
    n = -(-n // segment_size) * segment_size
    buf = bytearray([ERASED]) * n
    buf[:len(old)] = old
    for d in deltas:
        start = d.segment_index * segment_size
        buf[start:start + segment_size] = apply_delta(
            bytes(buf[start:start + segment_size]), d)
    return bytes(buf[:length])
