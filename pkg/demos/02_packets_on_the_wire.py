"""
Packets on the wire
===================

The same delta framed three ways: EA (one segment per packet, defer flag),
IN (blocks with absolute addresses, packed across segments) and LW (the
whole image in raw chunks).
"""
from eaota.bench import DEFAULT_PROFILES, gen_benchmark
from eaota.codec import decode, describe, encode
from eaota.protocol import plan_packets

old, new = gen_benchmark(DEFAULT_PROFILES[1])   # STR, about 8 KB

for approach in ("EA", "IN", "LW"):
    pkts = plan_packets(approach, old, new)
    wire = sum(p.frame_size for p in pkts)
    print(f"{approach}: {len(pkts):3d} packets, {wire:5d} bytes on air")

###############################################################################
# Every frame carries a CRC-16 over header and payload; decode checks it
# before trusting any field.

first = plan_packets("EA", old, new)[0]
frame = encode(first)
print(describe(decode(frame)))
corrupt = bytes([frame[0]]) + bytes([frame[1] ^ 4]) + frame[2:]
try:
    decode(corrupt)
except ValueError as exc:
    print(type(exc).__name__, exc)
