"""Distributor and device state machines for the EA, IN and LW update flows.

The exchange is stop-and-wait: the distributor NOTIFYs, the device answers
REQUEST_NEXT, and from then on every data packet is answered with an ACK
carrying its sequence number.  After the last ACK the distributor sends
DONE.  A rebooted device sends HELLO and the distributor rewinds to the
first packet of the first unit the device has not committed.

Device handlers are generators: each ``yield`` hands out one atomic unit
(a tuple of :class:`Action`) *before* it touches flash, so an executor can
charge it, or abandon the handler to model a power failure.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator

from .codec import (
    MAX_FRAME, MsgType, UpdatePacket, control, control_fields,
    packetize_ea, packetize_image_lw, packetize_stream_in,
    parse_ea_blocks, parse_in_blocks,
)
from .delta import (
    DEFAULT_MERGE_GAP, UpdateBlock, apply_blocks, compute_deltas,
)
from .energy import CATEGORY, CostModel, op_cost
from .flash import (
    DEFAULT_FLASH_SIZE, DEFAULT_SEGMENT_SIZE, DEFAULT_SRAM_SIZE, ERASED,
    FlashMemory, SramBuffer,
)


class Approach(str, enum.Enum):
    EA = "EA"
    IN = "IN"
    LW = "LW"


class Phase(str, enum.Enum):
    IDLE = "IDLE"
    RECEIVING = "RECEIVING"
    COMMITTING = "COMMITTING"
    DONE = "DONE"


class ProtocolError(Exception):
    pass


class UnknownSession(ProtocolError):
    pass


class UpdateImpossible(Exception):
    pass


@dataclass(frozen=True)
class UpdateConfig:
    segment_size: int = DEFAULT_SEGMENT_SIZE
    flash_size: int = DEFAULT_FLASH_SIZE
    sram_capacity: int = DEFAULT_SRAM_SIZE
    max_packet: int = MAX_FRAME
    merge_gap: int = DEFAULT_MERGE_GAP
    hypothetical_sram: bool = False
    lw_light_write: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Action:
    kind: str
    segment: int | None = None
    nbytes: int = 0
    message: UpdatePacket | None = field(default=None, compare=False)

    def cost(self, model: CostModel) -> tuple[float, float]:
        if self.kind in CATEGORY and self.kind != "tx":
            return op_cost(self.kind, 1, model)
        if self.kind == "tx":
            return op_cost("tx", self.nbytes, model)
        return 0.0, 0.0

    @property
    def category(self) -> str | None:
        return CATEGORY.get(self.kind)


def plan_packets(approach, old: bytes, new: bytes,
                 config: UpdateConfig = UpdateConfig()) -> list[UpdatePacket]:
    approach = Approach(approach)
    if approach is Approach.LW:
        if len(new) > config.flash_size:
            raise ValueError("new image does not fit in flash")
        return packetize_image_lw(new, config.max_packet)
    deltas = compute_deltas(old, new, config.segment_size, config.merge_gap, config.flash_size)
    if approach is Approach.EA:
        return packetize_ea(deltas, config.max_packet)
    return packetize_stream_in(deltas, config.max_packet, config.segment_size)


def check_feasible(approach, new: bytes, config: UpdateConfig) -> None:
    """LW stages the whole new image in SRAM before writing it."""
    if (Approach(approach) is Approach.LW and not config.hypothetical_sram
            and len(new) > config.sram_capacity):
        raise UpdateImpossible(
            f"LW needs {len(new)} bytes of SRAM for the image, device has {config.sram_capacity}")


# -- device ----------------------------------------------------------------------

POWER_ON = object()


class DeviceState:
    def __init__(self, flash: FlashMemory, sram: SramBuffer | None = None,
                 device_id: int = 1, lw_light_write: bool = True):
        self.flash = flash
        self.sram = sram if sram is not None else SramBuffer()
        self.device_id = device_id
        self.lw_light_write = lw_light_write
        self.phase = Phase.IDLE
        self.pending_segment: int | None = None
        self.pending_blocks: list[UpdateBlock] = []
        self._pending_bytes = 0
        self._lw_chunks: list[bytes] = []
        self.reboots = 0

    @classmethod
    def with_image(cls, image: bytes, config: UpdateConfig = UpdateConfig(),
                   device_id: int = 1) -> "DeviceState":
        flash = FlashMemory(config.flash_size, config.segment_size)
        flash.load_image(image)
        sram = SramBuffer(None if config.hypothetical_sram else config.sram_capacity)
        return cls(flash, sram, device_id, config.lw_light_write)

    @property
    def segment_size(self) -> int:
        return self.flash.segment_size

    def power_on(self) -> UpdatePacket:
        """Reboot: every volatile byte is gone.  Returns the HELLO to send."""
        self.sram.clear()
        self.pending_segment = None
        self.pending_blocks = []
        self._pending_bytes = 0
        self._lw_chunks = []
        self.phase = Phase.IDLE
        self.reboots += 1
        return control(MsgType.HELLO, self.device_id, arg=0)

    def process(self, msg: UpdatePacket) -> Iterator[tuple[Action, ...]]:
        """Handle one incoming frame; the generator's return value is the
        reply frame (or ``None`` after DONE)."""
        t = msg.msg_type
        if t is MsgType.NOTIFY:
            self.phase = Phase.RECEIVING
            return control(MsgType.REQUEST_NEXT, self.device_id)
        if t is MsgType.DONE:
            if self.pending_blocks or self._lw_chunks:
                raise ProtocolError("DONE with uncommitted data in SRAM")
            self.phase = Phase.DONE
            return None
        if self.phase is not Phase.RECEIVING:
            raise ProtocolError(f"{t.name} received in phase {self.phase.name}")
        if t is MsgType.EA_DATA:
            yield from self._ea(msg)
        elif t is MsgType.IN_DATA:
            yield from self._in(msg)
        elif t is MsgType.LW_DATA:
            yield from self._lw(msg)
        else:
            raise ProtocolError(f"device cannot handle {t.name}")
        return control(MsgType.ACK, self.device_id, seq=msg.seq)

    def _commit(self, seg: int, blocks: list[UpdateBlock]):
        self.sram.allocate(self.segment_size)
        self.phase = Phase.COMMITTING
        yield (Action("read", seg), Action("reconstruct", seg),
               Action("erase", seg), Action("write", seg))
        new = apply_blocks(self.flash.read_segment(seg), blocks)
        self.flash.erase_segment(seg)
        self.flash.write_segment(seg, new)
        self.sram.release(self.segment_size)
        self.phase = Phase.RECEIVING

    def _ea(self, msg: UpdatePacket):
        seg = msg.header.segment_index
        if self.pending_segment is not None and self.pending_segment != seg:
            raise ProtocolError(
                f"packet for segment {seg} while segment {self.pending_segment} is pending")
        blocks = parse_ea_blocks(msg.payload)
        self.sram.allocate(len(msg.payload))
        self._pending_bytes += len(msg.payload)
        self.pending_segment = seg
        self.pending_blocks.extend(blocks)
        if msg.defer:
            yield (Action("buffer", seg, len(msg.payload)),)
            return
        yield from self._commit(seg, self.pending_blocks)
        self.sram.release(self._pending_bytes)
        self._pending_bytes = 0
        self.pending_blocks = []
        self.pending_segment = None

    def _in(self, msg: UpdatePacket):
        size = self.segment_size
        by_segment: dict[int, list[UpdateBlock]] = {}
        for addr, data in parse_in_blocks(msg.payload):
            while data:
                seg, off = divmod(addr, size)
                take = min(len(data), size - off)
                by_segment.setdefault(seg, []).append(UpdateBlock(off, data[:take]))
                addr += take
                data = data[take:]
        self.sram.allocate(len(msg.payload))
        for seg, blocks in by_segment.items():
            yield from self._commit(seg, blocks)
        self.sram.release(len(msg.payload))

    def _lw(self, msg: UpdatePacket):
        if msg.seq != len(self._lw_chunks):
            raise ProtocolError(
                f"LW chunk {msg.seq} out of order, expected {len(self._lw_chunks)}")
        self.sram.allocate(len(msg.payload))
        self._lw_chunks.append(msg.payload)
        if not msg.final:
            yield (Action("buffer", None, len(msg.payload)),)
            return
        image = b"".join(self._lw_chunks)
        size = self.segment_size
        n_seg = -(-len(image) // size)
        for idx in range(n_seg):
            data = image[idx * size:(idx + 1) * size].ljust(size, bytes([ERASED]))
            if self.lw_light_write:
                yield (Action("light_write", idx), Action("reinforce", idx))
            else:
                yield (Action("erase", idx), Action("write", idx))
            self.flash.erase_segment(idx)
            self.flash.write_segment(idx, data)
        # stale tail of a longer old image
        for idx in range(n_seg, self.flash.n_segments):
            if not self.flash.is_blank(idx):
                yield (Action("erase", idx),)
                self.flash.erase_segment(idx)
        self.sram.release(len(image))
        self._lw_chunks = []


def drive(device: DeviceState, msg: UpdatePacket,
          admit: Callable[[tuple[Action, ...]], bool] | None = None
          ) -> tuple[UpdatePacket | None, list[Action], bool]:
    """Run one device handler to completion.

    ``admit`` sees each atomic unit before it executes; returning False
    abandons the handler (the unit never happens).  Returns ``(reply,
    executed_actions, completed)``.
    """
    gen = device.process(msg)
    done: list[Action] = []
    try:
        unit = next(gen)
        while True:
            if admit is not None and not admit(unit):
                gen.close()
                return None, done, False
            done.extend(unit)
            unit = gen.send(None)
    except StopIteration as stop:
        reply = stop.value
    if reply is not None:
        kind = "ack" if reply.msg_type is MsgType.ACK else "request"
        done.append(Action(kind, message=reply))
    return reply, done, True


def device_step(state: DeviceState, event) -> list[Action]:
    """Process a packet (or :data:`POWER_ON`) to completion and list the
    memory and radio actions it caused; the reply rides on the last one."""
    if event is POWER_ON:
        return [Action("hello", message=state.power_on())]
    _, actions, _ = drive(state, event)
    return actions


# -- distributor -------------------------------------------------------------------

class DistributorSession:
    def __init__(self, session_id: int, approach, packets: list[UpdatePacket]):
        self.session_id = session_id
        self.approach = Approach(approach)
        self.packets = list(packets)
        self.unit_start: list[int] = []
        for i, p in enumerate(self.packets):
            if i == 0 or self._ends_unit(self.packets[i - 1]):
                self.unit_start.append(i)
        self.cursor = 0
        self.units_acked = 0
        self.packets_acked = 0
        self.in_flight: int | None = None
        self.phase = "NEW"
        self.sent_high = 0
        self.packets_sent = 0
        self.retransmissions: list[int] = []

    def _ends_unit(self, p: UpdatePacket) -> bool:
        return not (self.approach is Approach.EA and p.defer)

    @property
    def segments_acked(self) -> int:
        return self.units_acked

    @property
    def done(self) -> bool:
        return self.phase == "DONE"

    @property
    def retransmitted(self) -> int:
        return sum(self.retransmissions)

    def _notify(self) -> UpdatePacket:
        self.phase = "NOTIFIED"
        return control(MsgType.NOTIFY, self.session_id)

    def start(self) -> UpdatePacket:
        return self._notify()

    def _send_next(self) -> UpdatePacket:
        if self.cursor >= len(self.packets):
            self.phase = "DONE"
            return control(MsgType.DONE, self.session_id)
        i = self.cursor
        if i < self.sent_high:
            if not self.retransmissions:
                self.retransmissions.append(0)
            self.retransmissions[-1] += 1
        self.sent_high = max(self.sent_high, i + 1)
        self.in_flight = i
        self.packets_sent += 1
        self.phase = "SENDING"
        return self.packets[i]

    def abort_send(self) -> None:
        """The last packet handed out never reached the radio."""
        if self.in_flight is not None and self.sent_high == self.in_flight + 1:
            self.sent_high = self.in_flight
            self.packets_sent -= 1

    def step(self, msg: UpdatePacket) -> UpdatePacket:
        sid, _ = control_fields(msg)
        t = msg.msg_type
        if t is MsgType.HELLO:
            self.resume(msg)
            return self._notify()
        if sid != self.session_id:
            raise UnknownSession(f"message for session {sid}, this is {self.session_id}")
        if t is MsgType.REQUEST_NEXT:
            if self.phase != "NOTIFIED":
                raise ProtocolError(f"REQUEST_NEXT in phase {self.phase}")
            return self._send_next()
        if t is MsgType.ACK:
            if self.phase != "SENDING" or self.in_flight is None:
                raise ProtocolError(f"ACK in phase {self.phase}")
            pkt = self.packets[self.in_flight]
            if msg.seq != pkt.seq:
                raise ProtocolError(f"ACK for seq {msg.seq}, expected {pkt.seq}")
            self.packets_acked = self.in_flight + 1
            if self._ends_unit(pkt):
                self.units_acked += 1
            self.cursor = self.in_flight + 1
            self.in_flight = None
            return self._send_next()
        raise ProtocolError(f"distributor cannot handle {t.name}")

    def resume(self, hello: UpdatePacket) -> int:
        """Rewind after a device reboot and return the new cursor."""
        sid, held = control_fields(hello)
        if sid != self.session_id:
            # not our device: start over
            self.session_id = sid
            self.units_acked = self.packets_acked = 0
            self.cursor = 0
        elif self.approach is Approach.LW:
            # no per-segment commit: rewind to the chunks the device still holds
            self.units_acked = self.packets_acked = min(self.packets_acked, held)
            self.cursor = self.packets_acked
        else:
            self.cursor = (self.unit_start[self.units_acked]
                           if self.units_acked < len(self.unit_start) else len(self.packets))
            self.packets_acked = self.cursor
        self.in_flight = None
        self.retransmissions.append(0)
        return self.cursor


class Distributor:
    """Hosts independent sessions keyed by device id.  ``planner`` rebuilds
    a packet plan when an unknown device says HELLO."""

    def __init__(self, planner: Callable[[int], tuple[Approach, list[UpdatePacket]]] | None = None):
        self.sessions: dict[int, DistributorSession] = {}
        self.planner = planner

    def open(self, session_id: int, approach, packets) -> UpdatePacket:
        s = DistributorSession(session_id, approach, packets)
        self.sessions[session_id] = s
        return s.start()

    def abort_send(self) -> None:
        """The last packet handed out never reached the radio."""
        if self.in_flight is not None and self.sent_high == self.in_flight + 1:
            self.sent_high = self.in_flight
            self.packets_sent -= 1

    def step(self, msg: UpdatePacket) -> UpdatePacket:
        sid, _ = control_fields(msg)
        session = self.sessions.get(sid)
        if session is None:
            if msg.msg_type is MsgType.HELLO and self.planner is not None:
                return self.open(sid, *self.planner(sid))
            raise UnknownSession(f"no session {sid}")
        return session.step(msg)


# -- transcript and the pure-channel run -------------------------------------------

@dataclass(frozen=True)
class TranscriptEvent:
    time_s: float
    actor: str
    kind: str
    nbytes: int = 0
    energy_uj: float = 0.0
    category: str | None = None
    segment: int | None = None
    seq: int | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class Transcript:
    events: list[TranscriptEvent] = field(default_factory=list)

    def add(self, **kw) -> None:
        self.events.append(TranscriptEvent(**kw))

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        return cls([TranscriptEvent(**json.loads(line)) for line in text.splitlines() if line])

    def of_kind(self, *kinds: str) -> list[TranscriptEvent]:
        return [e for e in self.events if e.kind in kinds]


def record_message(transcript: Transcript, clock: float, msg: UpdatePacket,
                   sender: str, model: CostModel) -> float:
    """Log one frame on the channel; data frames are charged as communication."""
    if msg.is_data:
        e, d = op_cost("tx", msg.frame_size, model)
        clock += d
        transcript.add(time_s=clock, actor=sender, kind="tx", nbytes=msg.frame_size,
                       energy_uj=e, category="communication",
                       segment=msg.header.segment_index, seq=msg.seq)
    else:
        transcript.add(time_s=clock, actor=sender, kind=msg.msg_type.name.lower(),
                       nbytes=msg.frame_size, seq=msg.seq)
    return clock


def record_actions(transcript: Transcript, clock: float, actions, model: CostModel) -> float:
    for a in actions:
        if a.kind in ("ack", "request", "hello"):
            continue
        e, d = a.cost(model)
        if a.kind != "reinforce":
            clock += d
        transcript.add(time_s=clock, actor="device", kind=a.kind, nbytes=a.nbytes,
                       energy_uj=e, category=a.category, segment=a.segment)
    return clock


def run_update(approach, old: bytes, new: bytes, config: UpdateConfig = UpdateConfig(),
               cost: CostModel = CostModel(),
               packets: list[UpdatePacket] | None = None) -> tuple[DeviceState, Transcript]:
    """End-to-end update over a lossless channel with unlimited energy."""
    approach = Approach(approach)
    check_feasible(approach, new, config)
    if packets is None:
        packets = plan_packets(approach, old, new, config)
    device = DeviceState.with_image(old, config)
    session = DistributorSession(device.device_id, approach, packets)
    transcript = Transcript()
    clock = 0.0
    msg = session.start()
    for _ in range(2 * len(packets) + 3):
        clock = record_message(transcript, clock, msg, "distributor", cost)
        reply, actions, _ = drive(device, msg)
        clock = record_actions(transcript, clock, actions, cost)
        if msg.msg_type is MsgType.DONE:
            return device, transcript
        clock = record_message(transcript, clock, reply, "device", cost)
        msg = session.step(reply)
    raise ProtocolError("update did not finish within its packet budget")


def expected_flash(new: bytes, flash_size: int) -> bytes:
    """Flash contents after a successful update: new image then erased bytes."""
    return bytes(new) + bytes([ERASED]) * (flash_size - len(new))


def segments_for(nbytes: int, segment_size: int) -> int:
    return math.ceil(nbytes / segment_size)
