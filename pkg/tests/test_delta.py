import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eaota.delta import (
    MAX_BLOCK_LEN, DeltaError, ImageTooLarge, SegmentDelta, UpdateBlock,
    apply_delta, apply_deltas, compute_deltas, dirty_segments,
)


def brute_blocks(old_seg: bytes, new_seg: bytes, gap: int, cap: int = MAX_BLOCK_LEN):
    """Byte-at-a-time greedy: open a block at the first changed byte and keep
    absorbing changed bytes while the gap and length limits allow."""
    changed = [i for i in range(len(new_seg)) if old_seg[i] != new_seg[i]]
    out = []
    i = 0
    while i < len(changed):
        start = end = changed[i]
        j = i + 1
        while j < len(changed) and changed[j] - end - 1 <= gap and changed[j] - start < cap:
            end = changed[j]
            j += 1
        out.append((start, end - start + 1))
        i = j
    return out


def pad(b: bytes, n: int) -> bytes:
    return b + b"\xff" * (n - len(b))


def brute_deltas(old: bytes, new: bytes, size: int, gap: int):
    n = -(-max(len(old), len(new)) // size) * size
    a, b = pad(old, n), pad(new, n)
    out = {}
    for s in range(n // size):
        so, sn = a[s * size:(s + 1) * size], b[s * size:(s + 1) * size]
        if so != sn:
            out[s] = brute_blocks(so, sn, gap)
    return out


def as_map(deltas):
    return {d.segment_index: [(b.offset, b.length) for b in d.blocks] for d in deltas}


def test_identical_images_have_no_deltas():
    img = bytes(range(256)) * 8
    assert compute_deltas(img, img) == []


def test_single_changed_byte():
    old = bytes(1024)
    new = bytearray(old)
    new[700] = 1
    deltas = compute_deltas(old, bytes(new))
    assert as_map(deltas) == {1: [(188, 1)]}
    assert as_map(deltas) == brute_deltas(old, bytes(new), 512, 4)


def test_nearby_runs_merge():
    old = bytes(512)
    new = bytearray(old)
    for i in (10, 11, 12, 15, 16):
        new[i] = 0xAA
    d, = compute_deltas(old, bytes(new), merge_gap=4)
    assert [(b.offset, b.length) for b in d.blocks] == [(10, 7)]
    d, = compute_deltas(old, bytes(new), merge_gap=1)
    assert [(b.offset, b.length) for b in d.blocks] == [(10, 3), (15, 2)]


def test_long_run_is_split():
    old = bytes(512)
    new = b"\x01" * 512
    d, = compute_deltas(old, new)
    assert [b.length for b in d.blocks] == [255, 255, 2]


def test_growth_segments_flagged():
    old = bytes(512)
    new = bytes(512) + b"\x01" * 100
    d, = compute_deltas(old, new)
    assert d.segment_index == 1 and d.grows_image
    assert d.blocks[0].offset == 0 and d.blocks[0].length == 100


def test_shrink_erases_old_tail():
    old = bytes(1024)
    new = bytes(512)
    d, = compute_deltas(old, new)
    assert d.segment_index == 1
    assert apply_delta(bytes(512), d) == b"\xff" * 512


def test_errors():
    with pytest.raises(DeltaError):
        compute_deltas(b"", b"x")
    with pytest.raises(ImageTooLarge):
        compute_deltas(b"x", bytes(131073))
    with pytest.raises(DeltaError):
        UpdateBlock(0, b"")
    with pytest.raises(DeltaError):
        UpdateBlock(0, bytes(256))
    with pytest.raises(DeltaError):
        SegmentDelta(0, (UpdateBlock(5, b"ab"), UpdateBlock(6, b"c")))
    with pytest.raises(DeltaError):
        apply_delta(bytes(16), SegmentDelta(0, (UpdateBlock(15, b"ab"),)))


def test_apply_edge_cases():
    seg = bytes(range(256)) * 2
    assert apply_delta(seg, SegmentDelta(0, ())) == seg
    whole = SegmentDelta(0, (UpdateBlock(0, b"\x07" * 255), UpdateBlock(255, b"\x07" * 255),
                             UpdateBlock(510, b"\x07\x07")))
    assert apply_delta(seg, whole) == b"\x07" * 512


images = st.integers(1, 3000).flatmap(
    lambda n: st.tuples(st.binary(min_size=n, max_size=n), st.integers(0, 3000),
                        st.integers(0, 2**32 - 1)))


def mutate(old: bytes, new_len: int, seed: int) -> bytes:
    rng = np.random.default_rng(seed)
    new = bytearray(old[:new_len].ljust(new_len, b"\x00")) or bytearray(b"\x00")
    for _ in range(int(rng.integers(0, 40))):
        p = int(rng.integers(0, len(new)))
        n = int(rng.integers(1, 300))
        new[p:p + n] = rng.integers(0, 256, len(new[p:p + n]), dtype=np.uint8).tobytes()
    return bytes(new)


@settings(max_examples=120, deadline=None)
@given(images, st.sampled_from([16, 64, 512]), st.integers(0, 12))
def test_matches_brute_force_and_round_trips(args, size, gap):
    old, new_len, seed = args
    new = mutate(old, max(new_len, 1), seed)
    deltas = compute_deltas(old, new, size, gap)
    assert as_map(deltas) == brute_deltas(old, new, size, gap)
    assert [d.segment_index for d in deltas] == dirty_segments(old, new, size)
    for d in deltas:
        assert all(1 <= b.length <= 255 and b.end <= size for b in d.blocks)
    # rebuilding from old + deltas gives the padded new image
    n = max(len(old), len(new))
    assert apply_deltas(old, deltas, n, size) == pad(new, n)


@settings(max_examples=120, deadline=None)
@given(st.binary(min_size=512, max_size=512), st.integers(0, 2**32 - 1), st.integers(0, 30))
def test_more_merging_never_adds_blocks(old, seed, gap):
    new = mutate(old, 512, seed)
    count = lambda g: sum(len(d.blocks) for d in compute_deltas(old, new, 512, g))
    assert count(gap + 1) <= count(gap)


def test_merge_is_monotone_at_the_length_cap():
    # two 255-byte runs one byte apart: merging must not cost a third block
    old = bytes(512)
    new = bytearray(512)
    new[0:255] = b"\x01" * 255
    new[256:511] = b"\x01" * 255
    for gap in range(0, 6):
        assert sum(len(d.blocks) for d in compute_deltas(old, bytes(new), merge_gap=gap)) == 2
