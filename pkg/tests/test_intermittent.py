import numpy as np
import pytest

from eaota.energy import PowerTrace, TraceParams, generate_trace
from eaota.intermittent import NonTerminating, SimConfig, simulate, simulate_detailed
from eaota.protocol import UpdateConfig, UpdateImpossible, expected_flash, run_update
from eaota.metrics import metrics_from_transcript


def test_charged_capacitor_without_harvest_needs_no_reboot(scattered_pair):
    old, new = scattered_pair
    res = simulate_detailed("EA", old, new, PowerTrace.constant(0.0), SimConfig(v_init=3.6))
    m = res.metrics
    assert m.n_power_failures == 0 and m.n_retransmitted_packets == 0
    assert res.harvested_uj == 0.0
    assert res.conservation_error < 1e-9


def test_empty_capacitor_without_harvest_never_finishes(scattered_pair):
    with pytest.raises(NonTerminating):
        simulate("EA", *scattered_pair, PowerTrace.constant(0.0))


def test_harvest_below_sleep_draw_still_finishes(scattered_pair):
    # every low-power wait browns out, but each off-charge buys a few commits
    old, new = scattered_pair
    res = simulate_detailed("EA", old, new, PowerTrace.constant(50.0), SimConfig(capacitance=0.001))
    assert res.device.flash.image() == expected_flash(new, res.device.flash.total_size)
    assert res.metrics.n_power_failures > 0
    assert res.conservation_error <= 1e-9


def test_simulated_time_limit(scattered_pair):
    sim = SimConfig(capacitance=0.001, max_sim_time_s=10.0)
    with pytest.raises(NonTerminating):
        simulate("EA", *scattered_pair, PowerTrace.constant(50.0), sim)


def test_lw_over_sram_is_impossible():
    with pytest.raises(UpdateImpossible):
        simulate("LW", bytes(100), bytes(9000), PowerTrace.constant(500.0))


def test_steady_power_matches_pure_run(scattered_pair):
    old, new = scattered_pair
    for approach in ("EA", "IN", "LW"):
        cfg = UpdateConfig(hypothetical_sram=True)
        m = simulate(approach, old, new, PowerTrace.constant(1e5), SimConfig(v_init=3.6), cfg)
        ref = metrics_from_transcript(approach, run_update(approach, old, new, cfg)[1])
        for f in ("total_update_bytes", "n_packets", "n_writes", "n_erases"):
            assert getattr(m, f) == getattr(ref, f)
        assert m.update_energy_uj == pytest.approx(ref.update_energy_uj)


def test_simulation_is_deterministic(scattered_pair):
    tr = generate_trace(5)
    sim = SimConfig(failure_prob=0.1, seed=3)
    a = simulate("EA", *scattered_pair, tr, sim)
    b = simulate("EA", *scattered_pair, tr, sim)
    assert a == b


@pytest.mark.parametrize("approach", ["EA", "IN", "LW"])
@pytest.mark.parametrize("seed", range(4))
def test_brownouts_on_a_small_capacitor(approach, seed, scattered_pair):
    # mean harvest sits below the sleep draw, so waits end in brown-outs
    old, new = scattered_pair
    tr = generate_trace(seed, TraceParams(base_uw=0.0, burst_uw=400.0, burst_prob=0.2))
    sim = SimConfig(capacitance=0.001, failure_prob=0.05, seed=seed)
    cfg = UpdateConfig(hypothetical_sram=True)
    res = simulate_detailed(approach, old, new, tr, sim, cfg)
    assert res.device.flash.image() == expected_flash(new, cfg.flash_size)
    assert res.metrics.n_power_failures > 0
    assert res.conservation_error <= 1e-6
    if approach != "LW":
        assert res.metrics.max_retransmissions_per_failure <= 3


def test_injected_failures_waste_energy(scattered_pair):
    res = simulate_detailed("IN", *scattered_pair, generate_trace(1),
                            SimConfig(failure_prob=0.3, seed=2, record=True))
    m = res.metrics
    assert m.n_power_failures > 0
    assert m.energy_uj["wasted"] > 0
    assert m.total_energy_uj == pytest.approx(sum(m.energy_uj.values()))
    kinds = {e.kind for e in res.transcript.events}
    assert {"injected_failure", "off", "tx"} <= kinds
    times = [e.time_s for e in res.transcript.events]
    assert times == sorted(times)


def test_lw_reinforcement_is_outside_the_window(scattered_pair):
    old, new = scattered_pair
    res = simulate_detailed("LW", old, new, PowerTrace.constant(1e5), SimConfig(v_init=3.6),
                            UpdateConfig(hypothetical_sram=True))
    assert res.metrics.energy_uj["reinforcement"] > 0
    assert res.ledger.drawn < res.ledger.total
    assert res.conservation_error < 1e-9
