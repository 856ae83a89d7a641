import csv
import io
import json

import pytest

from eaota.bench import (
    DEFAULT_PROFILES, BenchmarkProfile, ChangePattern, SuiteConfig, changed_fraction,
    format_table, gen_benchmark, report_csv, report_json, run_suite, trace_seeds,
    write_report,
)


@pytest.mark.parametrize("pattern", list(ChangePattern))
@pytest.mark.parametrize("frac", [0.01, 0.05, 0.2])
def test_change_fraction_is_honoured(pattern, frac):
    old_size, new_size = 20000, (21000 if pattern is ChangePattern.GROWTH else 20000)
    p = BenchmarkProfile("x", old_size, new_size, pattern, frac, seed=3)
    old, new = gen_benchmark(p)
    assert (len(old), len(new)) == (old_size, new_size)
    got = changed_fraction(old, new)
    if pattern is ChangePattern.GROWTH and frac < 1000 / 21000:
        assert got == pytest.approx(1000 / 21000, abs=0.001)
    else:
        assert abs(got - frac) <= 0.02


def test_same_seed_same_pair():
    p = DEFAULT_PROFILES[0]
    assert gen_benchmark(p) == gen_benchmark(p)
    q = BenchmarkProfile(p.name, p.old_size, p.new_size, p.change_pattern, p.change_fraction, seed=99)
    assert gen_benchmark(q) != gen_benchmark(p)


def test_growth_keeps_a_common_prefix_and_appends():
    p = BenchmarkProfile("g", 2900, 3355, ChangePattern.GROWTH, 0.2, seed=14)
    old, new = gen_benchmark(p)
    assert len(new) > len(old)
    assert b"\xff" not in new[len(old):]
    with pytest.raises(ValueError):
        BenchmarkProfile("g", 3000, 3000, ChangePattern.GROWTH, 0.1)


def test_localized_block_is_contiguous():
    p = BenchmarkProfile("l", 10000, 10000, ChangePattern.LOCALIZED_BLOCK, 0.1, seed=2)
    old, new = gen_benchmark(p)
    diff = [i for i in range(len(old)) if old[i] != new[i]]
    assert diff[-1] - diff[0] + 1 == 1000 == len(diff)


def test_default_profiles_match_reference_sizes():
    sizes = {p.name: (p.old_size, p.new_size) for p in DEFAULT_PROFILES}
    assert sizes == {"MTH": (30814, 30814), "STR": (8254, 8254), "SRT": (57324, 57324),
                     "AES": (2900, 3355), "OKG": (56210, 56210)}


def test_trace_seeds_are_stable():
    assert trace_seeds(1, 5) == trace_seeds(1, 5)
    assert trace_seeds(1, 5)[:3] == trace_seeds(1, 3)
    assert len(set(trace_seeds(1, 100))) == 100


@pytest.fixture(scope="module")
def small_report():
    return run_suite(SuiteConfig(n_traces=3))


def test_suite_rows_and_checks(small_report):
    rows = small_report["rows"]
    assert len(rows) == 15
    assert small_report["all_checks_passed"], [c for c in small_report["checks"] if not c["passed"]]
    status = {(r["benchmark"], r["approach"]): r["status"] for r in rows}
    assert status[("AES", "LW")] == "ok"
    assert [b for (b, a), s in status.items() if s != "ok"] == ["MTH", "STR", "SRT", "OKG"]
    assert len(small_report["per_trace"]) == 11 * 3


def test_suite_is_deterministic(small_report):
    again = run_suite(SuiteConfig(n_traces=3))
    assert report_json(again) == report_json(small_report)


def test_parallel_run_matches_serial(small_report):
    par = run_suite(SuiteConfig(n_traces=3, workers=2))
    assert report_json(par) == report_json(small_report)


def test_reports(small_report, tmp_path):
    paths = write_report(small_report, tmp_path)
    assert {p.name for p in paths} == {"report.json", "report.csv", "per_trace.csv"}
    assert json.loads((tmp_path / "report.json").read_text())["all_checks_passed"]
    rows = list(csv.DictReader(io.StringIO(report_csv(small_report))))
    assert len(rows) == 15 and rows[0]["benchmark"] == "MTH"
    assert "SRAM" in format_table(small_report)


def test_config_round_trip(tmp_path):
    cfg = SuiteConfig(n_traces=7)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    again = SuiteConfig.load(path)
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ValueError):
        SuiteConfig.from_dict({"bogus": 1})
