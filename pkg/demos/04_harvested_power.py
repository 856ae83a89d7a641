"""
An update on harvested power
============================

A bursty trace charges a 400 mF capacitor.  Each frame and each segment
commit runs only once the capacitor holds its energy; random failures can
be injected on top of that.
"""
from eaota.bench import DEFAULT_PROFILES, gen_benchmark
from eaota.energy import generate_trace
from eaota.intermittent import SimConfig, simulate_detailed

old, new = gen_benchmark(DEFAULT_PROFILES[0])   # MTH
trace = generate_trace(seed=1)
print(f"trace mean {trace.mean_power:.0f} uW")

for approach in ("EA", "IN"):
    res = simulate_detailed(approach, old, new, trace, SimConfig(failure_prob=0.05, seed=7))
    m = res.metrics
    print(f"{approach}: {m.update_energy_uj:8.0f} uJ of update work, "
          f"{m.n_power_failures} failures, {m.n_retransmitted_packets} packets resent, "
          f"done at t={m.total_time_s:.0f} s")

###############################################################################
# Where the energy went, and the bookkeeping check: harvested plus initial
# energy equals what was drawn, spilled at full charge and left over.

for k, v in res.metrics.energy_uj.items():
    print(f"  {k:18s} {v:10.1f}")
print("conservation error", res.conservation_error)
