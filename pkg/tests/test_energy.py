import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eaota.energy import (
    CapacitorState, CostModel, EnergyLedger, PowerTrace, TraceParams, UnknownAction,
    capacitor_step, generate_trace, op_cost,
)


def test_segment_commit_costs():
    e_erase, _ = op_cost("erase", 1)
    e_write, _ = op_cost("write", 1)
    assert e_erase + e_write == pytest.approx(216.0)
    assert CostModel().e_commit == pytest.approx(216.0)
    assert op_cost("erase", 1)[1] == pytest.approx(0.027)
    assert op_cost("write", 1)[1] == pytest.approx(0.016)


def test_full_frame_costs():
    e, t = op_cost("tx", 261)
    assert e == pytest.approx(261 * 0.251)
    assert e == pytest.approx(65.511)
    assert abs(e - 65.6) <= 0.15
    assert t == pytest.approx(2.443e-3, abs=1e-6)


def test_costs_are_linear():
    m = CostModel()
    for kind in ("tx", "erase", "write", "read", "lowpower", "light_write", "reinforce"):
        e1, t1 = op_cost(kind, 1, m)
        e3, t3 = op_cost(kind, 3, m)
        assert e3 == pytest.approx(3 * e1) and t3 == pytest.approx(3 * t1)


def test_invalid_costs():
    with pytest.raises(ValueError):
        op_cost("tx", 0)
    with pytest.raises(UnknownAction):
        op_cost("teleport", 1)
    with pytest.raises(ValueError):
        CostModel(e_erase=0)
    with pytest.raises(ValueError):
        CostModel.from_dict({"nope": 1})
    m = CostModel(e_write=100.0)
    assert m.e_light_write == pytest.approx(10.0)
    assert CostModel.from_dict(m.to_dict()) == m


def test_ledger():
    led = EnergyLedger()
    led.charge("communication", 10.0, 0.1)
    led.charge("reinforcement", 5.0)
    led.charge("lowpower_idle", 2.0, 1.0)
    assert led.total == pytest.approx(17.0)
    assert led.update_energy == pytest.approx(15.0)
    assert led.drawn == pytest.approx(12.0)
    with pytest.raises(KeyError):
        led.charge("snacks", 1.0)
    with pytest.raises(ValueError):
        led.charge("communication", -1.0)


def test_capacitor_window():
    cap = CapacitorState()
    assert cap.energy == 0.0 and cap.is_off
    assert cap.energy_max == pytest.approx(1.944e6)
    assert cap.energy_on == pytest.approx(1.152e6)
    full = cap.with_energy(1e9)
    assert full.v_now == pytest.approx(3.6)
    assert cap.with_energy(cap.energy_on).v_now == pytest.approx(3.0)


def test_capacitor_equilibrium():
    cap = CapacitorState(v_now=2.5)
    assert capacitor_step(cap, 300.0, 300.0, 100.0) == cap


def test_empty_to_full_at_one_milliwatt():
    # 1944 one-second steps at 1 mW fill the window exactly, 1943 do not
    cap = CapacitorState()
    for i in range(1944):
        if i == 1943:
            assert cap.v_now < 3.6 - 1e-6
        cap = capacitor_step(cap, 1000.0, 0.0, 1.0)
    assert cap.v_now == pytest.approx(3.6)
    assert 0.5 * 0.4 * (3.6**2 - 1.8**2) / 1e-3 == pytest.approx(1944.0)


@settings(max_examples=60)
@given(st.floats(1.8, 3.6), st.floats(0, 2000), st.floats(0, 2000), st.floats(1e-3, 1e4))
def test_voltage_stays_in_window(v, h, load, dt):
    cap = capacitor_step(CapacitorState(v_now=v), h, load, dt)
    assert 1.8 - 1e-9 <= cap.v_now <= 3.6 + 1e-9


def brute_cumulative(trace: PowerTrace, t: float, step: float = 1e-3) -> float:
    grid = np.arange(0.0, t, step)
    return float(sum(trace.power_at(x + step / 2) for x in grid) * step)


def test_trace_integrals():
    tr = PowerTrace(np.array([0.0, 2.0, 5.0]), np.array([10.0, 0.0, 100.0]), 6.0)
    assert tr.cycle_energy == pytest.approx(120.0)
    assert tr.cumulative(7.5) == pytest.approx(120.0 + 15.0)
    assert tr.cumulative(4.321) == pytest.approx(brute_cumulative(tr, 4.321), abs=0.05)
    assert tr.power_at(15.0) == 0.0
    t = tr.time_to_harvest(1.0, 50.0)
    assert tr.energy_between(1.0, t) == pytest.approx(50.0)
    assert t == pytest.approx(5.4)
    assert math.isinf(PowerTrace.constant(0.0).time_to_harvest(0.0, 1.0))


@settings(max_examples=100)
@given(st.floats(0, 50), st.floats(0.01, 500))
def test_time_to_harvest_inverts_cumulative(t0, amount):
    tr = generate_trace(3, TraceParams(duration_s=20))
    t = tr.time_to_harvest(t0, amount)
    assert t >= t0
    assert tr.energy_between(t0, t) == pytest.approx(amount, rel=1e-9, abs=1e-9)


def test_burst_fraction():
    tr = generate_trace(42, TraceParams(burst_prob=0.35, duration_s=100_000))
    frac = float(np.mean(tr.power > 20.0))
    assert abs(frac - 0.35) <= 0.01


def test_burst_probability_edges():
    assert np.all(generate_trace(1, TraceParams(burst_prob=0.0)).power == 20.0)
    assert np.all(generate_trace(1, TraceParams(burst_prob=1.0)).power == 420.0)
    with pytest.raises(ValueError):
        TraceParams(burst_prob=1.5)


def test_trace_determinism_and_csv(tmp_path):
    a = generate_trace(9)
    b = generate_trace(9)
    assert np.array_equal(a.power, b.power)
    path = tmp_path / "t.csv"
    a.save_csv(path)
    c = PowerTrace.load_csv(path)
    assert np.array_equal(a.times, c.times) and np.array_equal(a.power, c.power)
    assert c.period == a.period


def test_trace_validation():
    with pytest.raises(ValueError):
        PowerTrace(np.array([1.0]), np.array([1.0]), 2.0)
    with pytest.raises(ValueError):
        PowerTrace(np.array([0.0, 0.0]), np.array([1.0, 1.0]), 2.0)
    with pytest.raises(ValueError):
        PowerTrace(np.array([0.0]), np.array([-1.0]), 2.0)
