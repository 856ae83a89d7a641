"""Synthetic firmware pairs and full-suite comparisons of EA, IN and LW.

The original benchmark binaries are not available, so each profile
generates a deterministic old/new pair of the stated sizes with a given
change pattern.  A suite run reports, per (profile, approach), the
pure-channel update figures (size, packets, writes, energy breakdown) and
the update time averaged over a set of harvested-power traces.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .delta import dirty_segments, padded_pair
from .energy import CostModel, TraceParams, generate_trace
from .flash import DEFAULT_FLASH_SIZE
from .intermittent import SimConfig, simulate_detailed
from .metrics import Metrics, metrics_from_transcript
from .protocol import (
    Approach, UpdateConfig, UpdateImpossible, expected_flash, plan_packets, run_update,
)


class ChangePattern(str, enum.Enum):
    SCATTERED_SMALL = "SCATTERED_SMALL"
    LOCALIZED_BLOCK = "LOCALIZED_BLOCK"
    WEIGHTS_REGION = "WEIGHTS_REGION"
    GROWTH = "GROWTH"


WEIGHT_DENSITY = 0.8


@dataclass(frozen=True)
class BenchmarkProfile:
    name: str
    old_size: int
    new_size: int
    change_pattern: ChangePattern
    change_fraction: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "change_pattern", ChangePattern(self.change_pattern))
        if self.old_size <= 0 or self.new_size <= 0:
            raise ValueError(f"{self.name}: image sizes must be positive")
        if not 0.0 < self.change_fraction <= 1.0:
            raise ValueError(f"{self.name}: change_fraction must lie in (0, 1]")
        if (self.change_pattern is ChangePattern.GROWTH
                and self.new_size <= self.old_size):
            raise ValueError(f"{self.name}: GROWTH needs new_size > old_size")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["change_pattern"] = self.change_pattern.value
        return d


# Image sizes of the reference benchmark set; change patterns follow each
# benchmark's one-line update description.
DEFAULT_PROFILES = (
    BenchmarkProfile("MTH", 30814, 30814, ChangePattern.SCATTERED_SMALL, 0.035, seed=11),
    BenchmarkProfile("STR", 8254, 8254, ChangePattern.SCATTERED_SMALL, 0.035, seed=12),
    BenchmarkProfile("SRT", 57324, 57324, ChangePattern.LOCALIZED_BLOCK, 0.04, seed=13),
    BenchmarkProfile("AES", 2900, 3355, ChangePattern.GROWTH, 0.2, seed=14),
    BenchmarkProfile("OKG", 56210, 56210, ChangePattern.WEIGHTS_REGION, 0.18, seed=15),
)


def changed_fraction(old: bytes, new: bytes) -> float:
    """Share of differing bytes once both images are 0xFF-padded to the
    longer length."""
    a, b = padded_pair(old, new, 1)
    return float(np.count_nonzero(a != b)) / len(a)


def _scattered_mask(rng, m: int, count: int) -> np.ndarray:
    mask = np.zeros(m, dtype=bool)
    have = 0
    while have < count:
        start = int(rng.integers(0, m))
        n = int(rng.integers(1, 9))
        fresh = np.flatnonzero(~mask[start:start + n]) + start
        fresh = fresh[:count - have]
        mask[fresh] = True
        have += fresh.size
    return mask


def gen_benchmark(profile: BenchmarkProfile,
                  flash_size: int = DEFAULT_FLASH_SIZE) -> tuple[bytes, bytes]:
    p = profile
    if max(p.old_size, p.new_size) > flash_size:
        raise ValueError(f"{p.name}: images larger than {flash_size} bytes of flash")
    rng = np.random.default_rng(p.seed)
    old = rng.integers(0, 256, p.old_size, dtype=np.uint8)
    common = min(p.old_size, p.new_size)
    new = old[:p.new_size].copy()
    if p.new_size > p.old_size:
        # never 0xFF, so every appended byte differs from erased flash
        tail = rng.integers(0, 255, p.new_size - p.old_size, dtype=np.uint8)
        new = np.concatenate([new, tail])
    total = max(p.old_size, p.new_size)
    a, b = padded_pair(old.tobytes(), new.tobytes(), 1)
    already = int(np.count_nonzero(a != b))
    count = min(common, max(0, round(p.change_fraction * total) - already))

    mask = np.zeros(common, dtype=bool)
    if count:
        pat = p.change_pattern
        if pat in (ChangePattern.SCATTERED_SMALL, ChangePattern.GROWTH):
            mask = _scattered_mask(rng, common, count)
        elif pat is ChangePattern.LOCALIZED_BLOCK:
            start = int(rng.integers(0, common - count + 1))
            mask[start:start + count] = True
        elif pat is ChangePattern.WEIGHTS_REGION:
            length = min(common, math.ceil(count / WEIGHT_DENSITY))
            start = int(rng.integers(0, common - length + 1))
            picks = rng.choice(length, size=count, replace=False)
            mask[start + picks] = True
    idx = np.flatnonzero(mask)
    new[idx] ^= rng.integers(1, 256, idx.size, dtype=np.uint8)
    return old.tobytes(), new.tobytes()


# -- suite -----------------------------------------------------------------------

@dataclass
class SuiteConfig:
    profiles: tuple[BenchmarkProfile, ...] = DEFAULT_PROFILES
    approaches: tuple[str, ...] = ("EA", "IN", "LW")
    n_traces: int = 100
    master_seed: int = 2024
    trace: TraceParams = field(default_factory=TraceParams)
    sim: SimConfig = field(default_factory=SimConfig)
    update: UpdateConfig = field(default_factory=UpdateConfig)
    cost: CostModel = field(default_factory=CostModel)
    workers: int = 1

    def to_dict(self) -> dict:
        return {
            "profiles": [p.to_dict() for p in self.profiles],
            "approaches": list(self.approaches),
            "n_traces": self.n_traces,
            "master_seed": self.master_seed,
            "trace": asdict(self.trace),
            "sim": self.sim.to_dict(),
            "update": self.update.to_dict(),
            "cost": self.cost.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SuiteConfig":
        known = {"profiles", "approaches", "n_traces", "master_seed", "trace", "sim",
                 "update", "cost", "workers"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown suite config keys: {sorted(unknown)}")
        cfg = cls()
        if "profiles" in d:
            cfg.profiles = tuple(BenchmarkProfile(**p) for p in d["profiles"])
        if "approaches" in d:
            cfg.approaches = tuple(Approach(a).value for a in d["approaches"])
        for key in ("n_traces", "master_seed", "workers"):
            if key in d:
                setattr(cfg, key, int(d[key]))
        if "trace" in d:
            cfg.trace = TraceParams(**d["trace"])
        if "sim" in d:
            cfg.sim = SimConfig(**d["sim"])
        if "update" in d:
            cfg.update = UpdateConfig(**d["update"])
        if "cost" in d:
            cfg.cost = CostModel.from_dict(d["cost"])
        return cfg

    @classmethod
    def load(cls, path) -> "SuiteConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def trace_seeds(master_seed: int, n: int) -> list[int]:
    """Per-trace seeds, shared by every approach and profile so comparisons
    see the same harvesting conditions."""
    ss = np.random.SeedSequence(master_seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(n)]


def _run_row(cfg: SuiteConfig, profile: BenchmarkProfile, approach: str) -> dict:
    old, new = gen_benchmark(profile, cfg.update.flash_size)
    checks: list[dict] = []
    try:
        device, transcript = run_update(approach, old, new, cfg.update, cfg.cost)
    except UpdateImpossible as exc:
        row = Metrics.impossible(approach, profile.name).to_dict()
        row.update(detail=str(exc), n_traces=0)
        return {"row": row, "per_trace": [], "checks": checks}

    base = metrics_from_transcript(approach, transcript, profile.name)
    size = cfg.update.segment_size
    dirty = len(dirty_segments(old, new, size))
    checks.append(_check(f"{profile.name}/{approach}: flash matches new image",
                         device.flash.image() == expected_flash(new, cfg.update.flash_size)))
    if approach == "EA":
        checks.append(_check(f"{profile.name}/EA: writes == dirty segments",
                             base.n_writes == dirty, f"{base.n_writes} vs {dirty}"))
    if approach in ("EA", "IN"):
        checks.append(_check(f"{profile.name}/{approach}: erases == writes",
                             base.n_erases == base.n_writes))
    if approach == "LW":
        want = math.ceil(len(new) / size)
        checks.append(_check(f"{profile.name}/LW: writes == ceil(new/segment)",
                             base.n_writes == want, f"{base.n_writes} vs {want}"))

    packets = plan_packets(approach, old, new, cfg.update)
    per_trace = []
    seeds = trace_seeds(cfg.master_seed, cfg.n_traces)
    worst_conservation = 0.0
    for i, seed in enumerate(seeds):
        trace = generate_trace(seed, cfg.trace)
        sim = replace(cfg.sim, seed=seed ^ profile.seed)
        res = simulate_detailed(approach, old, new, trace, sim, cfg.update, cfg.cost, packets)
        worst_conservation = max(worst_conservation, res.conservation_error)
        m = res.metrics
        per_trace.append({
            "benchmark": profile.name, "approach": approach, "trace": i,
            "trace_seed": seed, "total_time_s": m.total_time_s,
            "total_energy_uj": m.total_energy_uj,
            "update_energy_uj": m.update_energy_uj,
            "n_power_failures": m.n_power_failures,
            "n_retransmitted_packets": m.n_retransmitted_packets,
        })
    if per_trace:
        checks.append(_check(f"{profile.name}/{approach}: ledger conservation",
                             worst_conservation <= 1e-6, f"{worst_conservation:.3e}"))

    row = base.to_dict()
    row["dirty_segments"] = dirty
    row["old_size"], row["new_size"] = len(old), len(new)
    row["n_traces"] = len(per_trace)
    for key in ("total_time_s", "total_energy_uj", "n_power_failures",
                "n_retransmitted_packets"):
        vals = [r[key] for r in per_trace]
        row[f"mean_{key}"] = statistics.fmean(vals) if vals else None
        row[f"std_{key}"] = statistics.pstdev(vals) if vals else None
    return {"row": row, "per_trace": per_trace, "checks": checks}


def _check(name: str, passed: bool, detail: str = "") -> dict:
    return {"name": name, "passed": bool(passed), "detail": detail}


def _cross_checks(rows: list[dict]) -> list[dict]:
    out = []
    by = {(r["benchmark"], r["approach"]): r for r in rows if r["status"] == "ok"}
    for (bench, approach), r in by.items():
        if approach == "IN" and (bench, "EA") in by:
            ea = by[(bench, "EA")]
            out.append(_check(f"{bench}: IN erases >= EA erases",
                              r["n_erases"] >= ea["n_erases"],
                              f"{r['n_erases']} vs {ea['n_erases']}"))
    return out


def run_suite(cfg: SuiteConfig = SuiteConfig()) -> dict:
    tasks = [(cfg, p, Approach(a).value) for p in cfg.profiles for a in cfg.approaches]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_run_row, *zip(*tasks)))
    else:
        results = [_run_row(*t) for t in tasks]
    rows = [r["row"] for r in results]
    checks = [c for r in results for c in r["checks"]] + _cross_checks(rows)
    return {
        "config": cfg.to_dict(),
        "rows": rows,
        "per_trace": [t for r in results for t in r["per_trace"]],
        "checks": checks,
        "all_checks_passed": all(c["passed"] for c in checks),
    }


# -- report writers -----------------------------------------------------------------

ROW_FIELDS = (
    "benchmark", "approach", "status", "old_size", "new_size", "dirty_segments",
    "total_update_bytes", "n_packets", "n_writes", "n_erases", "header_bytes",
    "update_energy_uj", "total_energy_uj", "total_time_s",
    "mean_total_time_s", "std_total_time_s", "mean_total_energy_uj",
    "std_total_energy_uj", "mean_n_power_failures", "mean_n_retransmitted_packets",
    "n_traces",
)


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
    return buf.getvalue()


def report_csv(report: dict) -> str:
    cats = sorted({k for r in report["rows"] for k in r.get("energy_uj", {})})
    rows = [{**r, **{f"energy_{c}_uj": r.get("energy_uj", {}).get(c) for c in cats}}
            for r in report["rows"]]
    return _csv(rows, ROW_FIELDS + tuple(f"energy_{c}_uj" for c in cats))


def report_long_csv(report: dict) -> str:
    """One row per (benchmark, approach, trace); plot-ready."""
    cols = ("benchmark", "approach", "trace", "trace_seed", "total_time_s",
            "total_energy_uj", "update_energy_uj", "n_power_failures",
            "n_retransmitted_packets")
    return _csv(report["per_trace"], cols)


def write_report(report: dict, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "report.json": report_json(report),
        "report.csv": report_csv(report),
        "per_trace.csv": report_long_csv(report),
    }
    paths = []
    for name, text in files.items():
        (out / name).write_text(text)
        paths.append(out / name)
    return paths


def format_table(report: dict) -> str:
    """Plain-text table: sizes, packets and writes, then energy and time."""
    head = (f"{'BM':<5}{'appr':<5}{'status':<8}{'bytes':>8}{'pkts':>6}{'writes':>7}"
            f"{'energy uJ':>12}{'mean time s':>14}")
    lines = [head, "-" * len(head)]
    for r in report["rows"]:
        if r["status"] != "ok":
            lines.append(f"{r['benchmark']:<5}{r['approach']:<5}{'SRAM!':<8}")
            continue
        t = r.get("mean_total_time_s")
        lines.append(
            f"{r['benchmark']:<5}{r['approach']:<5}{'ok':<8}{r['total_update_bytes']:>8}"
            f"{r['n_packets']:>6}{r['n_writes']:>7}{r['update_energy_uj']:>12.1f}"
            f"{(f'{t:.1f}' if t is not None else '-'):>14}")
    return "\n".join(lines)
