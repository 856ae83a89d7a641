"""Discrete-event execution of an update on harvested power.

Every atomic unit (a radio frame, or a whole segment commit) is admitted
only when the capacitor holds its full energy plus a margin.  Otherwise the
device idles in low-power mode until the capacitor is back at the turn-on
voltage; if it drains to brown-out on the way, SRAM is lost, the device
recharges while off, reboots and the distributor resumes it.  An optional
injector fails admitted units at random: the unit's energy is charged as
wasted and the device goes through the same reboot path.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .codec import CRC_SIZE, HEADER_SIZE, MsgType, UpdatePacket
from .energy import CapacitorState, CostModel, EnergyLedger, PowerTrace
from .metrics import Metrics
from .protocol import (
    Action, Approach, DeviceState, DistributorSession, Transcript,
    UpdateConfig, check_feasible, drive, expected_flash, plan_packets,
)


class NonTerminating(RuntimeError):
    pass


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    capacitance: float = 0.400
    v_max: float = 3.6
    v_on: float = 3.0
    v_off: float = 1.8
    v_init: float | None = None        # None: start empty, at v_off
    margin_uj: float = 0.0
    failure_prob: float = 0.0          # per admitted energy-consuming unit
    seed: int = 0
    max_sim_time_s: float = 30 * 86400.0
    record: bool = False

    def capacitor(self) -> CapacitorState:
        v = self.v_off if self.v_init is None else self.v_init
        return CapacitorState(self.capacitance, v, self.v_max, self.v_on, self.v_off)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimResult:
    metrics: Metrics
    device: DeviceState
    session: DistributorSession
    ledger: EnergyLedger
    harvested_uj: float
    overflow_uj: float
    initial_uj: float
    final_uj: float
    retransmissions_per_failure: list[int]
    transcript: Transcript = field(default_factory=Transcript)

    @property
    def conservation_error(self) -> float:
        """Relative mismatch of harvested + initial vs drawn + overflow + final."""
        lhs = self.harvested_uj + self.initial_uj
        rhs = self.ledger.drawn + self.overflow_uj + self.final_uj
        return abs(lhs - rhs) / max(lhs, rhs, 1.0)


class IntermittentExecutor:
    def __init__(self, approach, old: bytes, new: bytes, trace: PowerTrace,
                 sim: SimConfig = SimConfig(), config: UpdateConfig = UpdateConfig(),
                 cost: CostModel = CostModel(), packets: list[UpdatePacket] | None = None):
        self.approach = Approach(approach)
        check_feasible(self.approach, new, config)
        self.old, self.new = bytes(old), bytes(new)
        self.trace = trace
        self.sim = sim
        self.config = config
        self.cost = cost
        self.packets = packets if packets is not None else plan_packets(
            self.approach, old, new, config)
        cap = sim.capacitor()
        self.e_max = cap.energy_max
        self.e_on = cap.energy_on
        self.e = cap.energy
        self.e0 = self.e
        self.t = 0.0
        self.harvested = 0.0
        self.overflow = 0.0
        self.ledger = EnergyLedger()
        self.rng = np.random.default_rng(sim.seed)
        self.failures = 0
        self.unit_started = False
        self.tx_frames = 0
        self.tx_bytes = 0
        self.writes = 0
        self.erases = 0
        self.transcript = Transcript()

    # -- energy bookkeeping ---------------------------------------------------

    def _log(self, **kw) -> None:
        if self.sim.record:
            self.transcript.add(time_s=self.t, **kw)

    def _check_clock(self) -> None:
        if self.t > self.sim.max_sim_time_s:
            raise NonTerminating(
                f"update unfinished after {self.sim.max_sim_time_s:.0f} s of simulated time "
                f"(trace mean {self.trace.mean_power:.1f} uW, low-power draw "
                f"{self.cost.p_lowpower:.1f} uW)")

    def _active(self, energy: float, duration: float) -> None:
        """Draw ``energy`` over ``duration`` while harvesting."""
        h = self.trace.energy_between(self.t, self.t + duration) if duration > 0 else 0.0
        self.harvested += h
        e = self.e - energy + h
        if e > self.e_max:
            self.overflow += e - self.e_max
            e = self.e_max
        self.e = e
        self.t += duration

    def _charge_off(self, target: float) -> None:
        """Device off: no load, wait for the harvester to reach ``target``."""
        need = target - self.e
        if need <= 0:
            return
        t = self.trace.time_to_harvest(self.t, need)
        if math.isinf(t):
            raise NonTerminating("trace harvests no energy; the capacitor can never recharge")
        self._log(actor="device", kind="off", energy_uj=0.0)
        self.harvested += need
        self.e = target
        self.t = float(t)
        self._check_clock()

    def _lowpower_wait(self, target: float) -> bool:
        """Idle at ``p_lowpower`` until the store reaches ``target`` (True)
        or drains to brown-out (False)."""
        p_l = self.cost.p_lowpower
        t_start = self.t
        while True:
            self._check_clock()
            starts, ends, pw = self.trace.segments_from(self.t)
            widths = ends - starts
            net = pw - p_l
            path = self.e + np.cumsum(net * widths)
            hit = np.flatnonzero((path >= target) | (path <= 0.0))
            if hit.size == 0:
                self.harvested += float(np.dot(pw, widths))
                self.e = float(path[-1])
                self.t = float(ends[-1])
                continue
            j = int(hit[0])
            e_start = self.e if j == 0 else float(path[j - 1])
            reached = bool(path[j] >= target)
            level = target if reached else 0.0
            dt = (level - e_start) / net[j] if net[j] != 0 else 0.0
            dt = max(dt, 0.0)
            self.harvested += float(np.dot(pw[:j], widths[:j])) + float(pw[j]) * dt
            self.e = level
            self.t = float(starts[j]) + dt
            waited = self.t - t_start
            if waited > 0:
                self.ledger.charge("lowpower_idle", p_l * waited, waited)
            self._log(actor="device", kind="lowpower", energy_uj=p_l * waited,
                      category="lowpower_idle")
            return reached

    def _power_cycle(self, reason: str) -> None:
        self.failures += 1
        self._log(actor="device", kind=reason)
        self._charge_off(self.e_on)

    def _admit(self, unit: tuple[Action, ...]) -> bool:
        """Charge one atomic unit; False means the device lost power."""
        costs = [(a, *a.cost(self.cost)) for a in unit]
        # reinforcement runs after the update window, off the capacitor
        deferred = [e for a, e, _ in costs if a.kind == "reinforce"]
        live = [(a, e, d) for a, e, d in costs if a.kind != "reinforce"]
        energy = math.fsum(e for _, e, _ in live)
        duration = math.fsum(d for _, _, d in live)
        if energy == 0 and duration == 0:
            for e in deferred:
                self.ledger.charge("reinforcement", e, 0.0)
            return True
        need = energy + self.sim.margin_uj
        if need > self.e_max:
            raise NonTerminating(
                f"unit needs {need:.1f} uJ but the capacitor holds at most {self.e_max:.1f} uJ")
        while self.e < need:
            if not self._lowpower_wait(max(self.e_on, need)):
                self.unit_started = False
                self._power_cycle("brownout")
                return False
        self.unit_started = True
        if self.sim.failure_prob and self.rng.random() < self.sim.failure_prob:
            self._active(energy, duration)
            self.ledger.charge("wasted", energy, duration)
            self._power_cycle("injected_failure")
            return False
        self._active(energy, duration)
        for e in deferred:
            self.ledger.charge("reinforcement", e, 0.0)
        for a, e, d in live:
            if a.category is not None:
                self.ledger.charge(a.category, e, d)
            if a.kind in ("write", "light_write"):
                self.writes += 1
            if a.kind in ("erase", "light_write"):
                self.erases += 1
            self._log(actor="device" if a.kind != "tx" else "distributor", kind=a.kind,
                      nbytes=a.nbytes, energy_uj=e, category=a.category, segment=a.segment)
        return True

    # -- main loop --------------------------------------------------------------

    def run(self) -> SimResult:
        device = DeviceState.with_image(self.old, self.config)
        session = DistributorSession(device.device_id, self.approach, self.packets)
        self._charge_off(self.e_on)
        msg = session.start()
        while True:
            self._check_clock()
            if msg.is_data:
                ok = self._admit((Action("tx", nbytes=msg.frame_size),))
                if ok or self.unit_started:
                    self.tx_frames += 1
                    self.tx_bytes += msg.frame_size
                else:
                    session.abort_send()
            else:
                ok = True
            if ok:
                reply, _, ok = drive(device, msg, admit=self._admit)
            if not ok:
                msg = session.step(device.power_on())
                continue
            if msg.msg_type is MsgType.DONE:
                break
            msg = session.step(reply)

        want = expected_flash(self.new, self.config.flash_size)
        if device.flash.image() != want:
            raise SimulationError("final flash does not match the new image")
        per_failure = list(session.retransmissions)
        metrics = Metrics(
            approach=self.approach.value,
            total_update_bytes=self.tx_bytes,
            n_packets=self.tx_frames,
            n_writes=self.writes,
            n_erases=self.erases,
            header_bytes=self.tx_frames * (HEADER_SIZE + CRC_SIZE),
            energy_uj=dict(self.ledger.energy),
            total_energy_uj=self.ledger.total,
            update_energy_uj=self.ledger.update_energy,
            total_time_s=self.t,
            n_power_failures=self.failures,
            n_retransmitted_packets=session.retransmitted,
            max_retransmissions_per_failure=max(per_failure, default=0),
        )
        return SimResult(metrics, device, session, self.ledger, self.harvested,
                         self.overflow, self.e0, float(self.e), per_failure, self.transcript)


def simulate_detailed(approach, old: bytes, new: bytes, trace: PowerTrace,
                      sim: SimConfig = SimConfig(), config: UpdateConfig = UpdateConfig(),
                      cost: CostModel = CostModel(),
                      packets: list[UpdatePacket] | None = None) -> SimResult:
    return IntermittentExecutor(approach, old, new, trace, sim, config, cost, packets).run()


def simulate(approach, old: bytes, new: bytes, trace: PowerTrace,
             sim: SimConfig = SimConfig(), config: UpdateConfig = UpdateConfig(),
             cost: CostModel = CostModel(),
             packets: list[UpdatePacket] | None = None) -> Metrics:
    return simulate_detailed(approach, old, new, trace, sim, config, cost, packets).metrics
