"""
Flash semantics and per-segment deltas
======================================

A NOR segment erases to 0xFF and a write can only clear bits.  The delta
engine lists, for every segment that differs, the byte blocks to patch.
"""
import numpy as np

from eaota.delta import compute_deltas, apply_deltas
from eaota.flash import BitSetViolation, FlashMemory

flash = FlashMemory()
print(flash.n_segments, "segments of", flash.segment_size, "bytes")

# writing zeros is fine; turning a zero back into a one is not
flash.write_segment(0, bytes(512))
try:
    flash.write_segment(0, b"\x01" + bytes(511))
except BitSetViolation as exc:
    print("rejected:", exc)

# an erase makes the segment writable again
flash.erase_segment(0)
flash.write_segment(0, b"\x01" + bytes(511))

###############################################################################
# Diff two images.  Runs closer than ``merge_gap`` bytes share one block,
# which saves a 3-byte block header per merge.

rng = np.random.default_rng(0)
old = rng.integers(0, 256, 4000, dtype=np.uint8).tobytes()
new = bytearray(old)
new[700] ^= 0xFF
new[2050:2053] = b"abc"
new[2056:2058] = b"de"
new = bytes(new)

for d in compute_deltas(old, new):
    print(d.segment_index, [(b.offset, b.length) for b in d.blocks])

# patching old with the deltas gives back the new image
assert apply_deltas(old, compute_deltas(old, new), len(new), 512) == new
