import numpy as np
import pytest

from eaota.bench import BenchmarkProfile, ChangePattern, gen_benchmark

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_pair(seed: int, pattern=None, max_size: int = 20000):
    """A synthetic (old, new) pair with randomly drawn sizes and pattern."""
    rng = np.random.default_rng(seed)
    patterns = list(ChangePattern)
    pattern = ChangePattern(pattern) if pattern else patterns[seed % len(patterns)]
    old_size = int(rng.integers(600, max_size))
    if pattern is ChangePattern.GROWTH:
        new_size = old_size + int(rng.integers(1, 3000))
    else:
        new_size = max(1, old_size + int(rng.integers(-700, 700)))
    profile = BenchmarkProfile(f"r{seed}", old_size, new_size, pattern,
                               float(rng.uniform(0.005, 0.3)), seed=seed)
    return gen_benchmark(profile)


@pytest.fixture
def scattered_pair():
    p = BenchmarkProfile("scat", 12000, 12000, ChangePattern.SCATTERED_SMALL, 0.035, seed=5)
    return gen_benchmark(p)
