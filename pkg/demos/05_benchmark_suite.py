"""
The benchmark suite
===================

Five synthetic image pairs sized like the reference benchmarks, three
approaches, many traces.  LW needs the whole image in 8 KB of SRAM and so
only fits the smallest one.
"""
import tempfile

from eaota.bench import SuiteConfig, format_table, run_suite, write_report

report = run_suite(SuiteConfig(n_traces=20))
print(format_table(report))
print("all checks passed:", report["all_checks_passed"])

with tempfile.TemporaryDirectory() as out:
    for path in write_report(report, out):
        print("wrote", path.name)
