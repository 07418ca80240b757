import numpy as np
import pytest

from ksubstream.objectives import (
    AdWelfareOracle,
    GraphCutFunction,
    MaxKCutOracle,
    ModularOracle,
    PartitionWrapperOracle,
    SqrtModularSetFunction,
)

TRIANGLE = [(0, 1), (1, 2), (2, 0)]


def random_graph(rng, m, prob=0.5):
    return [(i, j) for i in range(m) for j in range(i + 1, m) if rng.random() < prob]


def random_monotone_oracle(rng, m, k, family):
    if family == "modular":
        return ModularOracle(rng.integers(0, 10, size=(m, k)).astype(float))
    if family == "ad":
        return AdWelfareOracle(np.where(rng.random((m, k)) < 0.7, rng.random((m, k)), 0.0))
    if family == "partition":
        inner = SqrtModularSetFunction(rng.random(m) + 0.05)
        return PartitionWrapperOracle(inner, rng.integers(0, k, size=m).tolist(), k)
    raise ValueError(family)


def random_cut_oracle(rng, m, k, prob=0.5):
    return MaxKCutOracle(m, random_graph(rng, m, prob), k)


def random_cut_partition(rng, m, k, prob=0.5):
    inner = GraphCutFunction(m, random_graph(rng, m, prob))
    return PartitionWrapperOracle(inner, rng.integers(0, k, size=m).tolist(), k)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def triangle_cut():
    return MaxKCutOracle(3, TRIANGLE, 2)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            for name, value in getattr(rep, "user_properties", ()):
                if name == "acceptance":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
