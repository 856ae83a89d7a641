"""Energy-aware incremental OTA updates for flash-based batteryless devices.

Segment-scoped delta packets with deferred segment commits (EA), compared
against a packet-by-packet incremental baseline (IN) and a whole-image
baseline (LW), under a flash/radio cost model and simulated harvested power.
"""
from .codec import (
    CrcMismatch, LengthMismatch, MalformedHeader, MsgType, PacketHeader, UpdatePacket,
    decode, encode, packetize_ea, packetize_image_lw, packetize_segment_ea,
    packetize_stream_in,
)
from .delta import SegmentDelta, UpdateBlock, apply_delta, compute_deltas, dirty_segments
from .energy import (
    CapacitorState, CostModel, EnergyLedger, PowerTrace, TraceParams, capacitor_step,
    generate_trace, op_cost,
)
from .flash import BitSetViolation, FlashMemory, SramBuffer, SramOverflow
from .intermittent import NonTerminating, SimConfig, simulate, simulate_detailed
from .metrics import Metrics, metrics_from_transcript
from .protocol import (
    Approach, DeviceState, DistributorSession, UpdateConfig, UpdateImpossible,
    device_step, run_update,
)

__version__ = "0.1.0"
