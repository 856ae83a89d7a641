"""Wire framing for update and control messages.

Frame layout, multi-byte fields little-endian::

    [version:1][msg_type:1][flags:1][segment_index:2][packet_seq:2][payload_len:1]
    [payload:payload_len][crc16:2]

The CRC is CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF) over header and
payload.  Frames never exceed :data:`MAX_FRAME` bytes.

Payloads:

* EA_DATA: blocks ``[offset:2][length:1][data]`` for the one segment named
  in the header.
* IN_DATA: blocks ``[abs_offset:3][length:1][data]``, free to span segments.
* LW_DATA: a raw chunk of the new image.
* control messages: ``[session_id:2][arg:2]``.
"""
from __future__ import annotations

import binascii
import enum
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .delta import MAX_BLOCK_LEN, SegmentDelta, UpdateBlock

VERSION = 1
HEADER = struct.Struct("<BBBHHB")
HEADER_SIZE = HEADER.size
CRC_SIZE = 2
MAX_FRAME = 261
MAX_PAYLOAD = MAX_FRAME - HEADER_SIZE - CRC_SIZE
MIN_FRAME = HEADER_SIZE + CRC_SIZE

EA_BLOCK_OVERHEAD = 3
IN_BLOCK_OVERHEAD = 4
CONTROL = struct.Struct("<HH")

FLAG_DEFER = 0x01
FLAG_FINAL = 0x02
_KNOWN_FLAGS = FLAG_DEFER | FLAG_FINAL


class MsgType(enum.IntEnum):
    EA_DATA = 1
    IN_DATA = 2
    LW_DATA = 3
    NOTIFY = 4
    HELLO = 5
    REQUEST_NEXT = 6
    ACK = 7
    DONE = 8


DATA_TYPES = frozenset({MsgType.EA_DATA, MsgType.IN_DATA, MsgType.LW_DATA})


class CodecError(ValueError):
    pass


class MalformedHeader(CodecError):
    pass


class CrcMismatch(CodecError):
    pass


class LengthMismatch(CodecError):
    pass


class MalformedPayload(CodecError):
    pass


def crc16(data: bytes) -> int:
    return binascii.crc_hqx(data, 0xFFFF)


@dataclass(frozen=True)
class PacketHeader:
    msg_type: MsgType
    flags: int = 0
    segment_index: int = 0
    packet_seq: int = 0
    payload_len: int = 0
    version: int = VERSION

    @property
    def defer(self) -> bool:
        return bool(self.flags & FLAG_DEFER)

    @property
    def final(self) -> bool:
        return bool(self.flags & FLAG_FINAL)

    def pack(self) -> bytes:
        return HEADER.pack(self.version, int(self.msg_type), self.flags,
                           self.segment_index, self.packet_seq, self.payload_len)


@dataclass(frozen=True)
class UpdatePacket:
    header: PacketHeader
    payload: bytes = b""

    def __post_init__(self):
        if self.header.payload_len != len(self.payload):
            raise LengthMismatch(
                f"header says {self.header.payload_len} payload bytes, got {len(self.payload)}")

    @property
    def msg_type(self) -> MsgType:
        return self.header.msg_type

    @property
    def seq(self) -> int:
        return self.header.packet_seq

    @property
    def defer(self) -> bool:
        return self.header.defer

    @property
    def final(self) -> bool:
        return self.header.final

    @property
    def is_data(self) -> bool:
        return self.header.msg_type in DATA_TYPES

    @property
    def crc(self) -> int:
        return crc16(self.header.pack() + self.payload)

    @property
    def frame_size(self) -> int:
        return HEADER_SIZE + len(self.payload) + CRC_SIZE


def make_packet(msg_type: MsgType, payload: bytes = b"", *, flags: int = 0,
                segment_index: int = 0, seq: int = 0) -> UpdatePacket:
    header = PacketHeader(MsgType(msg_type), flags, segment_index, seq, len(payload))
    return UpdatePacket(header, bytes(payload))


def control(msg_type: MsgType, session_id: int, arg: int = 0, seq: int = 0) -> UpdatePacket:
    if MsgType(msg_type) in DATA_TYPES:
        raise ValueError(f"{MsgType(msg_type).name} is not a control message")
    return make_packet(msg_type, CONTROL.pack(session_id, arg), seq=seq)


def control_fields(packet: UpdatePacket) -> tuple[int, int]:
    """``(session_id, arg)`` of a control message."""
    if packet.is_data or len(packet.payload) != CONTROL.size:
        raise MalformedPayload(f"{packet.msg_type.name} frame is not a control message")
    return CONTROL.unpack(packet.payload)


def encode(packet: UpdatePacket) -> bytes:
    h = packet.header
    if len(packet.payload) > MAX_PAYLOAD:
        raise LengthMismatch(f"payload of {len(packet.payload)} bytes exceeds {MAX_PAYLOAD}")
    if h.flags & ~_KNOWN_FLAGS:
        raise MalformedHeader(f"unknown flag bits 0x{h.flags:02X}")
    try:
        body = h.pack() + packet.payload
    except struct.error as exc:
        raise MalformedHeader(str(exc)) from None
    return body + crc16(body).to_bytes(2, "little")


def decode(frame: bytes) -> UpdatePacket:
    """Parse one frame.

    The checksum is verified before any header field is trusted, so a
    corrupted length or type byte surfaces as :class:`CrcMismatch`.
    """
    frame = bytes(frame)
    if len(frame) < MIN_FRAME:
        raise MalformedHeader(f"frame of {len(frame)} bytes is shorter than {MIN_FRAME}")
    if len(frame) > MAX_FRAME:
        raise LengthMismatch(f"frame of {len(frame)} bytes exceeds {MAX_FRAME}")
    body, tail = frame[:-CRC_SIZE], frame[-CRC_SIZE:]
    if crc16(body) != int.from_bytes(tail, "little"):
        raise CrcMismatch("checksum does not match frame contents")
    version, mtype, flags, seg, seq, plen = HEADER.unpack_from(body)
    if version != VERSION:
        raise MalformedHeader(f"unsupported version {version}")
    try:
        mtype = MsgType(mtype)
    except ValueError:
        raise MalformedHeader(f"unknown message type {mtype}") from None
    if flags & ~_KNOWN_FLAGS:
        raise MalformedHeader(f"unknown flag bits 0x{flags:02X}")
    if plen != len(body) - HEADER_SIZE:
        raise LengthMismatch(
            f"header declares {plen} payload bytes, frame carries {len(body) - HEADER_SIZE}")
    return UpdatePacket(PacketHeader(mtype, flags, seg, seq, plen), body[HEADER_SIZE:])


# -- payload block encodings -------------------------------------------------

def encode_ea_blocks(blocks: Iterable[UpdateBlock]) -> bytes:
    out = bytearray()
    for b in blocks:
        out += struct.pack("<HB", b.offset, b.length) + b.data
    return bytes(out)


def parse_ea_blocks(payload: bytes) -> list[UpdateBlock]:
    blocks, pos = [], 0
    while pos < len(payload):
        if pos + EA_BLOCK_OVERHEAD > len(payload):
            raise MalformedPayload("truncated EA block header")
        off, n = struct.unpack_from("<HB", payload, pos)
        pos += EA_BLOCK_OVERHEAD
        if n == 0 or pos + n > len(payload):
            raise MalformedPayload(f"bad EA block length {n} at payload byte {pos}")
        blocks.append(UpdateBlock(off, payload[pos:pos + n]))
        pos += n
    return blocks


def encode_in_blocks(blocks: Iterable[tuple[int, bytes]]) -> bytes:
    out = bytearray()
    for addr, data in blocks:
        if not 0 <= addr < 1 << 24:
            raise ValueError(f"absolute offset {addr} does not fit 24 bits")
        out += addr.to_bytes(3, "little") + bytes([len(data)]) + data
    return bytes(out)


def parse_in_blocks(payload: bytes) -> list[tuple[int, bytes]]:
    blocks, pos = [], 0
    while pos < len(payload):
        if pos + IN_BLOCK_OVERHEAD > len(payload):
            raise MalformedPayload("truncated IN block header")
        addr = int.from_bytes(payload[pos:pos + 3], "little")
        n = payload[pos + 3]
        pos += IN_BLOCK_OVERHEAD
        if n == 0 or pos + n > len(payload):
            raise MalformedPayload(f"bad IN block length {n} at payload byte {pos}")
        blocks.append((addr, payload[pos:pos + n]))
        pos += n
    return blocks


# -- packetizers ---------------------------------------------------------------

def _pack_blocks(blocks: Iterable[tuple[int, bytes]], overhead: int,
                 capacity: int) -> list[list[tuple[int, bytes]]]:
    """Greedily fill packets of ``capacity`` payload bytes, splitting blocks
    at packet boundaries without reordering them."""
    packets: list[list[tuple[int, bytes]]] = [[]]
    room = capacity
    for addr, data in blocks:
        while data:
            if room < overhead + 1:
                packets.append([])
                room = capacity
            take = min(len(data), room - overhead, MAX_BLOCK_LEN)
            packets[-1].append((addr, data[:take]))
            room -= overhead + take
            addr += take
            data = data[take:]
    return [p for p in packets if p]


def _check_max_packet(max_packet: int, overhead: int) -> int:
    if max_packet > MAX_FRAME:
        raise ValueError(f"max_packet {max_packet} exceeds the {MAX_FRAME}-byte frame limit")
    capacity = max_packet - HEADER_SIZE - CRC_SIZE
    if capacity < overhead + 1:
        raise ValueError(
            f"max_packet {max_packet} cannot hold a header, CRC and one {overhead + 1}-byte block")
    return capacity


def packetize_segment_ea(delta: SegmentDelta, max_packet: int = MAX_FRAME,
                         first_seq: int = 0) -> list[UpdatePacket]:
    """Packets for one segment; every packet but the last carries the defer flag."""
    if not delta.blocks:
        raise ValueError(f"segment {delta.segment_index} delta has no blocks")
    capacity = _check_max_packet(max_packet, EA_BLOCK_OVERHEAD)
    groups = _pack_blocks(((b.offset, b.data) for b in delta.blocks),
                          EA_BLOCK_OVERHEAD, capacity)
    out = []
    for i, group in enumerate(groups):
        payload = encode_ea_blocks(UpdateBlock(o, d) for o, d in group)
        flags = FLAG_DEFER if i < len(groups) - 1 else 0
        out.append(make_packet(MsgType.EA_DATA, payload, flags=flags,
                               segment_index=delta.segment_index, seq=first_seq + i))
    return out


def packetize_ea(deltas: Sequence[SegmentDelta], max_packet: int = MAX_FRAME) -> list[UpdatePacket]:
    out: list[UpdatePacket] = []
    for d in deltas:
        out.extend(packetize_segment_ea(d, max_packet, first_seq=len(out)))
    return _mark_final(out)


def packetize_stream_in(deltas: Sequence[SegmentDelta], max_packet: int = MAX_FRAME,
                        segment_size: int = 512) -> list[UpdatePacket]:
    if any(a.segment_index >= b.segment_index for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be sorted by segment index")
    capacity = _check_max_packet(max_packet, IN_BLOCK_OVERHEAD)
    blocks = ((d.segment_index * segment_size + b.offset, b.data)
              for d in deltas for b in d.blocks)
    groups = _pack_blocks(blocks, IN_BLOCK_OVERHEAD, capacity)
    out = [make_packet(MsgType.IN_DATA, encode_in_blocks(g), seq=i)
           for i, g in enumerate(groups)]
    return _mark_final(out)


def packetize_image_lw(new_image: bytes, max_packet: int = MAX_FRAME) -> list[UpdatePacket]:
    if not new_image:
        raise ValueError("image must be non-empty")
    chunk = _check_max_packet(max_packet, 0)
    out = [make_packet(MsgType.LW_DATA, new_image[i:i + chunk], seq=i // chunk)
           for i in range(0, len(new_image), chunk)]
    return _mark_final(out)


def _mark_final(packets: list[UpdatePacket]) -> list[UpdatePacket]:
    if packets:
        last = packets[-1]
        h = last.header
        packets[-1] = UpdatePacket(
            PacketHeader(h.msg_type, h.flags | FLAG_FINAL, h.segment_index,
                         h.packet_seq, h.payload_len, h.version), last.payload)
    return packets


# -- capture files: a sequence of [len:2 LE][frame] records ---------------------

def write_capture(frames: Iterable[bytes]) -> bytes:
    out = bytearray()
    for f in frames:
        out += len(f).to_bytes(2, "little") + f
    return bytes(out)


def read_capture(data: bytes) -> Iterator[bytes]:
    pos = 0
    while pos < len(data):
        if pos + 2 > len(data):
            raise MalformedHeader("truncated length prefix in capture")
        n = int.from_bytes(data[pos:pos + 2], "little")
        pos += 2
        if pos + n > len(data):
            raise MalformedHeader("truncated frame in capture")
        yield data[pos:pos + n]
        pos += n


def describe(packet: UpdatePacket) -> str:
    """One-line human summary of a frame, as printed by ``pktdump``."""
    h = packet.header
    flags = "|".join(n for bit, n in ((FLAG_DEFER, "defer"), (FLAG_FINAL, "final"))
                     if h.flags & bit) or "-"
    head = (f"{h.msg_type.name:<12} seq={h.packet_seq:<5} seg={h.segment_index:<4} "
            f"flags={flags:<11} len={h.payload_len:<3} crc=0x{packet.crc:04X}")
    if h.msg_type is MsgType.EA_DATA:
        blocks = parse_ea_blocks(packet.payload)
        return head + " blocks=" + ",".join(f"{b.offset}+{b.length}" for b in blocks)
    if h.msg_type is MsgType.IN_DATA:
        blocks = parse_in_blocks(packet.payload)
        return head + " blocks=" + ",".join(f"@{a}+{len(d)}" for a, d in blocks)
    if h.msg_type is MsgType.LW_DATA:
        return head
    sid, arg = control_fields(packet)
    return head + f" session={sid} arg={arg}"
