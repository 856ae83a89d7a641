"""Energy and time costs, capacitor storage, ledgers and harvested-power traces.

Units: energy in microjoules, power in microwatts, time in seconds.
Conveniently 1 uW x 1 s = 1 uJ, so trace integrals need no scaling.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np


class UnknownAction(ValueError):
    pass


@dataclass(frozen=True)
class CostModel:
    e_byte_tx: float = 0.251          # uJ / byte
    e_erase: float = 137.2            # uJ / segment
    e_write: float = 78.80            # uJ / segment
    e_read_reconstruct: float = 0.500  # uJ / segment
    t_byte_tx: float = 9.361e-6       # s / byte
    t_erase: float = 27.00e-3         # s / segment
    t_write: float = 16.00e-3         # s / segment
    p_lowpower: float = 89.00         # uW
    # LW baseline only; none of these is published, see README.
    e_light_write: float | None = None   # default 0.1 * e_write
    t_light_write: float | None = None   # default 0.1 * (t_erase + t_write)
    e_reinforce: float | None = None     # default e_erase + e_write

    def __post_init__(self):
        if self.e_light_write is None:
            object.__setattr__(self, "e_light_write", 0.1 * self.e_write)
        if self.t_light_write is None:
            object.__setattr__(self, "t_light_write", 0.1 * (self.t_erase + self.t_write))
        if self.e_reinforce is None:
            object.__setattr__(self, "e_reinforce", self.e_erase + self.e_write)
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"cost model value {f.name} must be > 0")

    @property
    def e_commit(self) -> float:
        """Erase plus write of one segment."""
        return self.e_erase + self.e_write

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CostModel":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown cost model keys: {sorted(unknown)}")
        return cls(**d)


# action kind -> ledger category; kinds missing here cost nothing
CATEGORY = {
    "tx": "communication",
    "erase": "flash_erase",
    "write": "flash_write",
    "read": "flash_read",
    "light_write": "light_flash_write",
    "reinforce": "reinforcement",
    "lowpower": "lowpower_idle",
}
FREE_ACTIONS = frozenset({"reconstruct", "buffer", "ack", "request", "hello", "done"})


def op_cost(kind: str, size: float, model: CostModel = CostModel()) -> tuple[float, float]:
    """``(energy_uJ, duration_s)`` of one action.

    ``size`` is bytes for ``tx``, seconds for ``lowpower`` and a segment
    count for flash actions.
    """
    if not size > 0:
        raise ValueError(f"{kind}: size must be > 0, got {size}")
    m = model
    if kind == "tx":
        return size * m.e_byte_tx, size * m.t_byte_tx
    if kind == "erase":
        return size * m.e_erase, size * m.t_erase
    if kind == "write":
        return size * m.e_write, size * m.t_write
    if kind == "read":
        return size * m.e_read_reconstruct, 0.0
    if kind == "light_write":
        return size * m.e_light_write, size * m.t_light_write
    if kind == "reinforce":
        return size * m.e_reinforce, 0.0
    if kind == "lowpower":
        return size * m.p_lowpower, size
    if kind in FREE_ACTIONS:
        return 0.0, 0.0
    raise UnknownAction(f"unknown action kind {kind!r}")


LEDGER_CATEGORIES = (
    "communication", "flash_erase", "flash_write", "flash_read",
    "light_flash_write", "reinforcement", "lowpower_idle", "wasted",
)
# Drawn outside the simulated update window (LW reinforcement).
DEFERRED_CATEGORIES = frozenset({"reinforcement"})
UPDATE_CATEGORIES = (
    "communication", "flash_erase", "flash_write", "flash_read",
    "light_flash_write", "reinforcement",
)


@dataclass
class EnergyLedger:
    energy: dict = field(default_factory=lambda: dict.fromkeys(LEDGER_CATEGORIES, 0.0))
    time: dict = field(default_factory=lambda: dict.fromkeys(LEDGER_CATEGORIES, 0.0))

    def charge(self, category: str, energy_uj: float, duration_s: float = 0.0) -> None:
        if category not in self.energy:
            raise KeyError(f"unknown ledger category {category!r}")
        if energy_uj < 0 or duration_s < 0:
            raise ValueError("ledger charges must be non-negative")
        self.energy[category] += energy_uj
        self.time[category] += duration_s

    @property
    def total(self) -> float:
        return math.fsum(self.energy.values())

    @property
    def update_energy(self) -> float:
        """Energy of the update work itself: no idle draw, no wasted actions."""
        return math.fsum(self.energy[c] for c in UPDATE_CATEGORIES)

    @property
    def drawn(self) -> float:
        """Energy taken from the capacitor during the simulated window."""
        return math.fsum(v for c, v in self.energy.items() if c not in DEFERRED_CATEGORIES)

    def to_dict(self) -> dict:
        return {"energy_uj": dict(self.energy), "time_s": dict(self.time),
                "total_uj": self.total}


# -- capacitor ----------------------------------------------------------------

@dataclass(frozen=True)
class CapacitorState:
    capacitance: float = 0.400   # F
    v_now: float = 1.8
    v_max: float = 3.6
    v_on: float = 3.0
    v_off: float = 1.8

    def __post_init__(self):
        if not self.v_off <= self.v_on <= self.v_max:
            raise ValueError("need v_off <= v_on <= v_max")
        if not self.v_off - 1e-12 <= self.v_now <= self.v_max + 1e-12:
            raise ValueError(f"v_now {self.v_now} outside [{self.v_off}, {self.v_max}]")

    def _usable(self, v: float) -> float:
        return 0.5 * self.capacitance * (v * v - self.v_off * self.v_off) * 1e6

    @property
    def energy(self) -> float:
        """Usable energy above brown-out, uJ."""
        return max(0.0, self._usable(self.v_now))

    @property
    def energy_max(self) -> float:
        return self._usable(self.v_max)

    @property
    def energy_on(self) -> float:
        return self._usable(self.v_on)

    def voltage_for(self, energy_uj: float) -> float:
        return math.sqrt(self.v_off ** 2 + 2 * energy_uj * 1e-6 / self.capacitance)

    def with_energy(self, energy_uj: float) -> "CapacitorState":
        e = min(max(energy_uj, 0.0), self.energy_max)
        return replace(self, v_now=min(self.voltage_for(e), self.v_max))

    @property
    def is_off(self) -> bool:
        return self.energy <= 0.0


def capacitor_step(cap: CapacitorState, harvest_uw: float, load_uw: float,
                   dt: float) -> CapacitorState:
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if harvest_uw == load_uw:
        return cap
    return cap.with_energy(cap.energy + (harvest_uw - load_uw) * dt)


# -- power traces ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PowerTrace:
    """Piecewise-constant harvested power; sample ``i`` holds from
    ``times[i]`` to ``times[i+1]`` and the last one until ``period``.
    Lookups past ``period`` wrap around."""

    times: np.ndarray
    power: np.ndarray
    period: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.power, dtype=float)
        if t.ndim != 1 or t.shape != p.shape or t.size == 0:
            raise ValueError("times and power must be equal-length 1-D arrays")
        if t[0] != 0.0:
            raise ValueError("trace must start at t=0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("trace times must be strictly increasing")
        if np.any(p < 0):
            raise ValueError("trace power must be >= 0")
        if not self.period > t[-1]:
            raise ValueError("period must extend past the last sample")
        t.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "power", p)
        widths = np.diff(np.append(t, self.period))
        cum = np.concatenate(([0.0], np.cumsum(p * widths)))
        object.__setattr__(self, "_cum", cum)

    @property
    def cycle_energy(self) -> float:
        return float(self._cum[-1])

    @property
    def mean_power(self) -> float:
        return self.cycle_energy / self.period

    def power_at(self, t: float) -> float:
        phase = t % self.period
        return float(self.power[np.searchsorted(self.times, phase, "right") - 1])

    def cumulative(self, t: float) -> float:
        """Harvested energy from 0 to ``t`` (uJ)."""
        k, phase = divmod(t, self.period)
        i = int(np.searchsorted(self.times, phase, "right")) - 1
        return k * self.cycle_energy + float(self._cum[i]) + float(self.power[i]) * (phase - self.times[i])

    def energy_between(self, t0: float, t1: float) -> float:
        return self.cumulative(t1) - self.cumulative(t0)

    def time_to_harvest(self, t0: float, amount: float) -> float:
        """Earliest ``t >= t0`` with ``energy_between(t0, t) >= amount``;
        ``inf`` if the trace never delivers it."""
        if amount <= 0:
            return t0
        if self.cycle_energy <= 0:
            return math.inf
        target = self.cumulative(t0) + amount
        k, r = divmod(target, self.cycle_energy)
        if r == 0 and k > 0:
            k, r = k - 1, self.cycle_energy
        i = int(np.searchsorted(self._cum, r, "left")) - 1
        i = max(i, 0)
        t = k * self.period + self.times[i] + (r - self._cum[i]) / self.power[i]
        return max(t, t0)

    def segments_from(self, t0: float):
        """Remaining samples of the cycle containing ``t0``:
        ``(starts, ends, power)`` in absolute time."""
        k, phase = divmod(t0, self.period)
        i = int(np.searchsorted(self.times, phase, "right")) - 1
        base = k * self.period
        starts = base + self.times[i:]
        starts = starts.copy()
        starts[0] = t0
        ends = base + np.append(self.times[i + 1:], self.period)
        return starts, ends, self.power[i:]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_s", "power_uW"])
        for t, p in zip(self.times, self.power):
            w.writerow([repr(float(t)), repr(float(p))])
        return buf.getvalue()

    def save_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str, period: float | None = None) -> "PowerTrace":
        """Parse ``time_s,power_uW`` rows.  Without an explicit ``period``
        the final sample lasts as long as the one before it (1 s if alone)."""
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("trace CSV has no samples")
        t = np.array([float(r["time_s"]) for r in rows])
        p = np.array([float(r["power_uW"]) for r in rows])
        if period is None:
            period = t[-1] + (t[-1] - t[-2] if t.size > 1 else 1.0)
        return cls(t, p, float(period))

    @classmethod
    def load_csv(cls, path, period: float | None = None) -> "PowerTrace":
        return cls.from_csv(Path(path).read_text(), period)

    @classmethod
    def constant(cls, power_uw: float, period: float = 1.0) -> "PowerTrace":
        return cls(np.array([0.0]), np.array([float(power_uw)]), period)


@dataclass(frozen=True)
class TraceParams:
    base_uw: float = 20.0
    burst_uw: float = 400.0
    burst_prob: float = 0.35
    slot_s: float = 1.0
    duration_s: float = 3600.0

    def __post_init__(self):
        if self.base_uw < 0 or self.burst_uw < 0:
            raise ValueError("trace powers must be >= 0")
        if not 0.0 <= self.burst_prob <= 1.0:
            raise ValueError("burst_prob must lie in [0, 1]")
        if self.slot_s <= 0 or self.duration_s < self.slot_s:
            raise ValueError("need 0 < slot_s <= duration_s")


def generate_trace(seed, params: TraceParams = TraceParams()) -> PowerTrace:
    """Slotted bursty trace: each slot harvests ``base_uw``, plus ``burst_uw``
    with probability ``burst_prob``."""
    rng = np.random.default_rng(seed)
    n = int(math.ceil(params.duration_s / params.slot_s))
    bursts = rng.random(n) < params.burst_prob
    power = params.base_uw + params.burst_uw * bursts
    return PowerTrace(np.arange(n) * params.slot_s, power, n * params.slot_s)
