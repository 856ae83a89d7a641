"""Per-run summary figures shared by the pure-channel run, the simulator and
the benchmark reports."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .codec import CRC_SIZE, HEADER_SIZE
from .energy import EnergyLedger
from .protocol import Transcript


@dataclass
class Metrics:
    approach: str
    benchmark: str = ""
    status: str = "ok"
    total_update_bytes: int = 0
    n_packets: int = 0
    n_writes: int = 0
    n_erases: int = 0
    header_bytes: int = 0
    energy_uj: dict = field(default_factory=dict)
    total_energy_uj: float = 0.0
    update_energy_uj: float = 0.0
    total_time_s: float = 0.0
    n_power_failures: int = 0
    n_retransmitted_packets: int = 0
    max_retransmissions_per_failure: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def impossible(cls, approach: str, benchmark: str = "") -> "Metrics":
        return cls(approach=approach, benchmark=benchmark, status="update_impossible")


def metrics_from_transcript(approach, transcript: Transcript, benchmark: str = "") -> Metrics:
    """Summarise a pure-channel run."""
    tx = [e for e in transcript.events if e.kind == "tx"]
    writes = erases = 0
    ledger = EnergyLedger()
    prev_t = 0.0
    for e in transcript.events:
        if e.kind in ("write", "light_write"):
            writes += 1
        if e.kind in ("erase", "light_write"):
            erases += 1
        if e.category is not None:
            ledger.charge(e.category, e.energy_uj, max(0.0, e.time_s - prev_t))
        prev_t = max(prev_t, e.time_s)
    end = transcript.events[-1].time_s if transcript.events else 0.0
    return Metrics(
        approach=getattr(approach, "value", approach),
        benchmark=benchmark,
        total_update_bytes=sum(e.nbytes for e in tx),
        n_packets=len(tx),
        n_writes=writes,
        n_erases=erases,
        header_bytes=len(tx) * (HEADER_SIZE + CRC_SIZE),
        energy_uj=dict(ledger.energy),
        total_energy_uj=ledger.total,
        update_energy_uj=ledger.update_energy,
        total_time_s=end,
    )
