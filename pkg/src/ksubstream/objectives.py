"""Built-in k-submodular objectives and a randomized/exhaustive property checker.

Every objective is immutable after construction. Runs talk to an objective
through an :class:`OracleHandle`, which owns a private allocation, the
incremental caches that make marginal gains cheap, and the call counters.

A set function on ``2^V`` is represented as an objective with ``k == 1``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .core import (
    Allocation,
    ItemAlreadyAllocated,
    ItemNotInPart,
    lattice_join,
    lattice_meet,
)


class KSubmodularOracle:
    """Base class. Subclasses override ``value`` and, for speed, the cache hooks.

    The default hooks carry no cache and compute a gain as the difference of
    two from-scratch evaluations.
    """

    kind = "abstract"
    monotone = False
    #: integer-valued objectives are compared exactly by the checkers
    exact = False

    def __init__(self, m: int, k: int):
        self.m = int(m)
        self.k = int(k)

    def value(self, alloc: Allocation) -> float:
        raise NotImplementedError

    # cache hooks; ``alloc`` is the handle's allocation *before* the mutation
    def _init_cache(self, alloc: Allocation) -> Any:
        return None

    def _gain(self, cache: Any, alloc: Allocation, t: int, a: int) -> float:
        bigger = alloc.copy().add(t, a)
        return self.value(bigger) - self.value(alloc)

    def _on_add(self, cache: Any, alloc: Allocation, t: int, a: int) -> Any:
        return cache

    def _on_remove(self, cache: Any, alloc: Allocation, t: int, a: int) -> Any:
        return cache

    def _cached_value(self, cache: Any, alloc: Allocation) -> float:
        return self.value(alloc)

    def handle(self, alloc: Allocation | None = None) -> "OracleHandle":
        return OracleHandle(self, alloc)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(m={self.m}, k={self.k})"


class OracleHandle:
    """Per-run view of an objective: private allocation, caches and counters.

    ``marginal_evals`` and ``full_evals`` go up by exactly one per query.
    Mutations (``add``/``remove``/``swap``) are free.
    """

    def __init__(self, oracle: KSubmodularOracle, alloc: Allocation | None = None):
        self.oracle = oracle
        self.alloc = alloc.copy() if alloc is not None else Allocation(oracle.k)
        self._cache = oracle._init_cache(self.alloc)
        self.marginal_evals = 0
        self.full_evals = 0

    @property
    def k(self) -> int:
        return self.oracle.k

    def marginal(self, t: int, a: int) -> float:
        if t in self.alloc.where:
            raise ItemAlreadyAllocated(f"item {t} already allocated")
        self.marginal_evals += 1
        return self.oracle._gain(self._cache, self.alloc, t, a)

    def value(self) -> float:
        self.full_evals += 1
        return self.oracle._cached_value(self._cache, self.alloc)

    def add(self, t: int, a: int) -> None:
        if t in self.alloc.where:
            raise ItemAlreadyAllocated(f"item {t} already allocated")
        self._cache = self.oracle._on_add(self._cache, self.alloc, t, a)
        self.alloc.add(t, a)

    def remove(self, t: int) -> int:
        a = self.alloc.part_of(t)
        if a is None:
            raise ItemNotInPart(f"item {t} is not allocated")
        self._cache = self.oracle._on_remove(self._cache, self.alloc, t, a)
        self.alloc.remove(t)
        return a

    def swap(self, t_in: int, t_out: int, a: int) -> None:
        if t_out not in self.alloc.parts[a]:
            raise ItemNotInPart(f"item {t_out} is not in part {a}")
        self.remove(t_out)
        self.add(t_in, a)


def evaluate(oracle: KSubmodularOracle, alloc: Allocation) -> float:
    return oracle.value(alloc)


def marginal(oracle: KSubmodularOracle, t: int, a: int, alloc: Allocation) -> float:
    return oracle.handle(alloc).marginal(t, a)


# ---------------------------------------------------------------------------
# k-submodular objectives


class ModularOracle(KSubmodularOracle):
    """Linear welfare: sum of ``w[t, a]`` over allocated pairs."""

    kind = "modular"
    monotone = True

    def __init__(self, weights):
        w = np.array(weights, dtype=float)
        if w.ndim != 2:
            raise ValueError("weights must be an m x k matrix")
        if (w < 0).any():
            raise ValueError("modular weights must be non-negative")
        super().__init__(*w.shape)
        w.setflags(write=False)
        self.weights = w
        self._rows = [tuple(map(float, row)) for row in w]

    def value(self, alloc):
        return math.fsum(self._rows[t][a] for t, a in alloc.where.items())

    def _init_cache(self, alloc):
        return None

    def _gain(self, cache, alloc, t, a):
        return self._rows[t][a]

    def _cached_value(self, cache, alloc):
        return self.value(alloc)


class AdWelfareOracle(KSubmodularOracle):
    """Sum over advertisers of the square root of their total valuation."""

    kind = "ad_welfare"
    monotone = True

    def __init__(self, valuations):
        v = np.array(valuations, dtype=float)
        if v.ndim != 2:
            raise ValueError("valuations must be an m x k matrix")
        if (v < 0).any():
            raise ValueError("valuations must be non-negative")
        super().__init__(*v.shape)
        v.setflags(write=False)
        self.valuations = v
        self._rows = [tuple(map(float, row)) for row in v]

    def value(self, alloc):
        total = 0.0
        for a, part in enumerate(alloc.parts):
            total += math.sqrt(math.fsum(self._rows[t][a] for t in part))
        return total

    def _init_cache(self, alloc):
        return [math.fsum(self._rows[t][a] for t in part) for a, part in enumerate(alloc.parts)]

    def _gain(self, sums, alloc, t, a):
        v = self._rows[t][a]
        if v == 0.0:
            return 0.0
        s = sums[a]
        # cancellation-free form of sqrt(s + v) - sqrt(s)
        return v / (math.sqrt(s + v) + math.sqrt(s))

    def _on_add(self, sums, alloc, t, a):
        sums[a] += self._rows[t][a]
        return sums

    def _on_remove(self, sums, alloc, t, a):
        # recompute rather than subtract: running differences drift away from 0
        sums[a] = math.fsum(self._rows[i][a] for i in alloc.parts[a] if i != t)
        return sums

    def _cached_value(self, sums, alloc):
        return sum(math.sqrt(s) for s in sums)


def _adjacency(m: int, edges) -> tuple[tuple[int, ...], ...]:
    adj: list[set[int]] = [set() for _ in range(m)]
    for u, v in edges:
        if u == v:
            raise ValueError(f"self-loop on node {u}")
        adj[u].add(v)
        adj[v].add(u)
    return tuple(tuple(sorted(s)) for s in adj)


class MaxKCutOracle(KSubmodularOracle):
    """Total cut size: sum over parts of the number of edges leaving the part.

    Non-monotone. Values are integers, so the checkers compare exactly.
    """

    kind = "max_k_cut"
    monotone = False
    exact = True

    def __init__(self, m: int, edges, k: int):
        super().__init__(m, k)
        self.adj = _adjacency(m, edges)
        self.edges = tuple(sorted({(min(u, v), max(u, v)) for u, v in edges}))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def value(self, alloc):
        where = alloc.where
        total = 0
        for u, v in self.edges:
            pu, pv = where.get(u), where.get(v)
            if pu != pv:
                total += (pu is not None) + (pv is not None)
        return total

    def _init_cache(self, alloc):
        return self.value(alloc)

    def _inside(self, alloc, t, a):
        where = alloc.where
        return sum(1 for u in self.adj[t] if where.get(u) == a)

    def _gain(self, cache, alloc, t, a):
        return len(self.adj[t]) - 2 * self._inside(alloc, t, a)

    def _on_add(self, cache, alloc, t, a):
        return cache + len(self.adj[t]) - 2 * self._inside(alloc, t, a)

    def _on_remove(self, cache, alloc, t, a):
        return cache - (len(self.adj[t]) - 2 * self._inside(alloc, t, a))

    def _cached_value(self, cache, alloc):
        return cache


# ---------------------------------------------------------------------------
# set functions (k == 1)


class SetFunction(KSubmodularOracle):
    """A function on subsets of the ground set, stored as a one-part objective."""

    def __init__(self, m: int):
        super().__init__(m, 1)

    def set_value(self, items) -> float:
        return self.value(Allocation(1, [set(items)]))


class ModularSetFunction(SetFunction):
    kind = "modular_set"
    monotone = True

    def __init__(self, weights):
        w = np.array(weights, dtype=float).ravel()
        if (w < 0).any():
            raise ValueError("weights must be non-negative")
        super().__init__(len(w))
        self._w = tuple(map(float, w))

    def value(self, alloc):
        return math.fsum(self._w[t] for t in alloc.parts[0])

    def _gain(self, cache, alloc, t, a):
        return self._w[t]


class SqrtModularSetFunction(SetFunction):
    """``sqrt(sum of w_t)``: monotone submodular."""

    kind = "sqrt_modular_set"
    monotone = True

    def __init__(self, weights):
        w = np.array(weights, dtype=float).ravel()
        if (w < 0).any():
            raise ValueError("weights must be non-negative")
        super().__init__(len(w))
        self._w = tuple(map(float, w))

    def value(self, alloc):
        return math.sqrt(math.fsum(self._w[t] for t in alloc.parts[0]))

    def _init_cache(self, alloc):
        return [math.fsum(self._w[t] for t in alloc.parts[0])]

    def _gain(self, cache, alloc, t, a):
        v = self._w[t]
        if v == 0.0:
            return 0.0
        return v / (math.sqrt(cache[0] + v) + math.sqrt(cache[0]))

    def _on_add(self, cache, alloc, t, a):
        cache[0] += self._w[t]
        return cache

    def _on_remove(self, cache, alloc, t, a):
        cache[0] = math.fsum(self._w[i] for i in alloc.parts[0] if i != t)
        return cache

    def _cached_value(self, cache, alloc):
        return math.sqrt(cache[0])


class GroupedSqrtSetFunction(SetFunction):
    """Sum over groups of ``sqrt(total weight chosen from the group)``: monotone submodular."""

    kind = "grouped_sqrt_set"
    monotone = True

    def __init__(self, weights, groups: Sequence[int]):
        w = np.array(weights, dtype=float).ravel()
        if (w < 0).any():
            raise ValueError("weights must be non-negative")
        if len(groups) != len(w):
            raise ValueError("need one group per item")
        super().__init__(len(w))
        self._w = tuple(map(float, w))
        self.groups = tuple(int(g) for g in groups)
        self._n_groups = max(self.groups, default=-1) + 1

    def value(self, alloc):
        sums: dict[int, list[float]] = {}
        for t in alloc.parts[0]:
            sums.setdefault(self.groups[t], []).append(self._w[t])
        return sum(math.sqrt(math.fsum(v)) for v in sums.values())

    def _init_cache(self, alloc):
        sums = [0.0] * self._n_groups
        for t in alloc.parts[0]:
            sums[self.groups[t]] += self._w[t]
        return sums

    def _gain(self, sums, alloc, t, a):
        v = self._w[t]
        if v == 0.0:
            return 0.0
        s = sums[self.groups[t]]
        return v / (math.sqrt(s + v) + math.sqrt(s))

    def _on_add(self, sums, alloc, t, a):
        sums[self.groups[t]] += self._w[t]
        return sums

    def _on_remove(self, sums, alloc, t, a):
        g = self.groups[t]
        sums[g] = math.fsum(self._w[i] for i in alloc.parts[0] if i != t and self.groups[i] == g)
        return sums

    def _cached_value(self, sums, alloc):
        return sum(math.sqrt(s) for s in sums)


class CoverageFunction(SetFunction):
    """Weighted coverage: total weight of universe elements hit by chosen sets."""

    kind = "coverage_set"
    monotone = True

    def __init__(self, covers: Sequence[Sequence[int]], element_weights):
        super().__init__(len(covers))
        self._covers = tuple(tuple(sorted(set(c))) for c in covers)
        self._ew = tuple(map(float, element_weights))

    def value(self, alloc):
        hit = set()
        for t in alloc.parts[0]:
            hit.update(self._covers[t])
        return math.fsum(self._ew[e] for e in hit)

    def _init_cache(self, alloc):
        counts: dict[int, int] = {}
        for t in alloc.parts[0]:
            for e in self._covers[t]:
                counts[e] = counts.get(e, 0) + 1
        return counts

    def _gain(self, counts, alloc, t, a):
        return math.fsum(self._ew[e] for e in self._covers[t] if not counts.get(e))

    def _on_add(self, counts, alloc, t, a):
        for e in self._covers[t]:
            counts[e] = counts.get(e, 0) + 1
        return counts

    def _on_remove(self, counts, alloc, t, a):
        for e in self._covers[t]:
            counts[e] -= 1
        return counts

    def _cached_value(self, counts, alloc):
        return math.fsum(self._ew[e] for e, c in counts.items() if c > 0)


class GraphCutFunction(SetFunction):
    """``delta(S)``: number of edges with exactly one endpoint in S. Non-monotone."""

    kind = "cut_set"
    monotone = False
    exact = True

    def __init__(self, m: int, edges):
        super().__init__(m)
        self._cut = MaxKCutOracle(m, edges, 1)
        self.adj = self._cut.adj
        self.edges = self._cut.edges

    def value(self, alloc):
        return self._cut.value(alloc)

    def _init_cache(self, alloc):
        return self._cut._init_cache(alloc)

    def _gain(self, cache, alloc, t, a):
        return self._cut._gain(cache, alloc, t, a)

    def _on_add(self, cache, alloc, t, a):
        return self._cut._on_add(cache, alloc, t, a)

    def _on_remove(self, cache, alloc, t, a):
        return self._cut._on_remove(cache, alloc, t, a)

    def _cached_value(self, cache, alloc):
        return cache


class PartRestriction(SetFunction):
    """``S -> f(S placed in part a, every other part empty)`` for a k-part objective."""

    kind = "part_restriction"

    def __init__(self, inner: KSubmodularOracle, part: int):
        super().__init__(inner.m)
        self.inner = inner
        self.part = int(part)
        self.monotone = inner.monotone
        self.exact = inner.exact

    def _lift(self, alloc: Allocation) -> Allocation:
        lifted = Allocation(self.inner.k)
        for t in alloc.parts[0]:
            lifted.add(t, self.part)
        return lifted

    def value(self, alloc):
        return self.inner.value(self._lift(alloc))

    def _init_cache(self, alloc):
        lifted = self._lift(alloc)
        return [lifted, self.inner._init_cache(lifted)]

    def _gain(self, state, alloc, t, a):
        lifted, cache = state
        return self.inner._gain(cache, lifted, t, self.part)

    def _on_add(self, state, alloc, t, a):
        lifted, cache = state
        state[1] = self.inner._on_add(cache, lifted, t, self.part)
        lifted.add(t, self.part)
        return state

    def _on_remove(self, state, alloc, t, a):
        lifted, cache = state
        state[1] = self.inner._on_remove(cache, lifted, t, self.part)
        lifted.remove(t)
        return state

    def _cached_value(self, state, alloc):
        return self.inner._cached_value(state[1], state[0])


class PartitionWrapperOracle(KSubmodularOracle):
    """k-submodular lift of a submodular set function over a partition of the items.

    ``g(X) = f(union over a of (P_a intersect X_a))``: an item placed in a part
    other than its own class contributes nothing.
    """

    kind = "partition"

    def __init__(self, inner: SetFunction, classes: Sequence[int], k: int | None = None):
        if inner.k != 1:
            raise ValueError("inner function must be a set function (k == 1)")
        classes = tuple(int(c) for c in classes)
        if len(classes) != inner.m:
            raise ValueError("need one class per item")
        k = (max(classes) + 1 if classes else 1) if k is None else int(k)
        super().__init__(inner.m, k)
        self.inner = inner
        self.classes = classes
        self.monotone = inner.monotone
        self.exact = inner.exact

    def _filtered(self, alloc: Allocation) -> Allocation:
        kept = {t for t, a in alloc.where.items() if self.classes[t] == a}
        return Allocation(1, [kept])

    def value(self, alloc):
        return self.inner.value(self._filtered(alloc))

    def _init_cache(self, alloc):
        union = self._filtered(alloc)
        return [union, self.inner._init_cache(union)]

    def _gain(self, state, alloc, t, a):
        if self.classes[t] != a:
            return 0.0
        union, cache = state
        return self.inner._gain(cache, union, t, 0)

    def _on_add(self, state, alloc, t, a):
        if self.classes[t] == a:
            union, cache = state
            state[1] = self.inner._on_add(cache, union, t, 0)
            union.add(t, 0)
        return state

    def _on_remove(self, state, alloc, t, a):
        if self.classes[t] == a:
            union, cache = state
            state[1] = self.inner._on_remove(cache, union, t, 0)
            union.remove(t)
        return state

    def _cached_value(self, state, alloc):
        return self.inner._cached_value(state[1], state[0])


# ---------------------------------------------------------------------------
# property checker


@dataclass
class Counterexample:
    property: str
    x: tuple[int, ...]
    y: tuple[int, ...] | None
    item: int | None
    parts: tuple[int, ...]
    lhs: float
    rhs: float

    def describe(self) -> str:
        return (
            f"{self.property}: X={self.x} Y={self.y} item={self.item} parts={self.parts} "
            f"lhs={self.lhs!r} rhs={self.rhs!r}"
        )


@dataclass
class OracleCheckReport:
    passed: bool
    monotone: bool
    exhaustive: bool
    checks: int
    counterexample: Counterexample | None = None
    failures: dict[str, int] = field(default_factory=dict)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        mode = "exhaustive" if self.exhaustive else "sampled"
        line = f"{status} k-submodular ({mode}, {self.checks} checks, monotone={self.monotone})"
        if self.counterexample is not None:
            line += "\n  first counterexample: " + self.counterexample.describe()
        return line


EXHAUSTIVE_MAX_ITEMS = 8
EXHAUSTIVE_MAX_TABLE = 70_000


def _tolerance(oracle: KSubmodularOracle, scale: float) -> float:
    return 0.0 if oracle.exact else 1e-9 * (1.0 + abs(scale))


def _value_table(oracle: KSubmodularOracle, m: int, k: int) -> np.ndarray:
    """f on every assignment, indexed by (x_0, ..., x_{m-1}) with 0 = unallocated."""
    table = np.empty((k + 1,) * m, dtype=float)
    for x in itertools.product(range(k + 1), repeat=m):
        table[x] = oracle.value(Allocation.from_assignment(k, [c - 1 for c in x]))
    return table


def _check_exhaustive(oracle, m, k, report: OracleCheckReport):
    table = _value_table(oracle, m, k)
    tol = _tolerance(oracle, float(np.abs(table).max()) if table.size else 0.0)

    def note(prop, cex):
        report.failures[prop] = report.failures.get(prop, 0) + 1
        if report.counterexample is None:
            report.counterexample = cex

    def full_index(t, reduced_idx, value):
        x = list(reduced_idx)
        x.insert(t, value)
        return tuple(int(c) - 1 for c in x)

    gains = {}
    for t in range(m):
        base = np.take(table, 0, axis=t)
        for a in range(k):
            g = np.take(table, a + 1, axis=t) - base
            gains[t, a] = g
            report.checks += g.size
            if (g < -tol).any():
                report.monotone = False

    for t in range(m):
        for a, b in itertools.combinations(range(k), 2):
            s = gains[t, a] + gains[t, b]
            report.checks += s.size
            bad = np.argwhere(s < -tol)
            if len(bad):
                idx = tuple(bad[0])
                note("pairwise_monotone", Counterexample(
                    "pairwise_monotone", full_index(t, idx, 0), None, t, (a, b), float(s[idx]), -tol))

    for t in range(m):
        others = [s for s in range(m) if s != t]
        for a in range(k):
            g = gains[t, a]
            for axis, s_item in enumerate(others):
                lo = np.take(g, 0, axis=axis)
                for b in range(k):
                    hi = np.take(g, b + 1, axis=axis)
                    report.checks += lo.size
                    bad = np.argwhere(lo < hi - tol)
                    if len(bad):
                        idx = list(bad[0])
                        x_idx = idx[:axis] + [0] + idx[axis:]
                        y_idx = idx[:axis] + [b + 1] + idx[axis:]
                        note("orthant_submodular", Counterexample(
                            "orthant_submodular", full_index(t, x_idx, 0), full_index(t, y_idx, 0),
                            t, (a,), float(lo[tuple(idx)]), float(hi[tuple(idx)])))
    return table


def check_k_submodular(
    oracle: KSubmodularOracle,
    m: int | None = None,
    k: int | None = None,
    trials: int = 1000,
    seed: int = 0,
    exhaustive: bool | None = None,
) -> OracleCheckReport:
    """Test orthant submodularity, pairwise monotonicity and the lattice inequality.

    Small instances (``m <= 8`` with a table of at most 70k assignments) are
    checked exhaustively for the marginal-gain properties; larger ones are
    sampled ``trials`` times. The lattice inequality is always sampled.
    A violation is reported, never raised.
    """
    m = oracle.m if m is None else m
    k = oracle.k if k is None else k
    rng = np.random.default_rng(seed)
    report = OracleCheckReport(passed=True, monotone=True, exhaustive=False, checks=0)
    if exhaustive is None:
        exhaustive = m <= EXHAUSTIVE_MAX_ITEMS and (k + 1) ** m <= EXHAUSTIVE_MAX_TABLE
    report.exhaustive = bool(exhaustive)

    def f(assign) -> float:
        return oracle.value(Allocation.from_assignment(k, assign))

    def note(cex: Counterexample):
        report.failures[cex.property] = report.failures.get(cex.property, 0) + 1
        if report.counterexample is None:
            report.counterexample = cex

    if exhaustive and m > 0:
        _check_exhaustive(oracle, m, k, report)
    elif m > 0:
        for _ in range(trials):
            t = int(rng.integers(m))
            y = rng.integers(-1, k, size=m)
            y[t] = -1
            x = np.where(rng.random(m) < 0.5, y, -1)
            a = int(rng.integers(k))
            fx, fy = f(x), f(y)
            x_t, y_t = x.copy(), y.copy()
            x_t[t], y_t[t] = a, a
            gx, gy = f(x_t) - fx, f(y_t) - fy
            tol = _tolerance(oracle, max(abs(fx), abs(fy)))
            report.checks += 1
            if min(gx, gy) < -tol:
                report.monotone = False
            if gx < gy - tol:
                note(Counterexample("orthant_submodular", tuple(map(int, x)), tuple(map(int, y)),
                                    t, (a,), gx, gy))
            if k >= 2:
                a, b = (int(v) for v in rng.choice(k, size=2, replace=False))
                x_b = x.copy()
                x_b[t] = b
                gb = f(x_b) - fx
                report.checks += 1
                if gx + 0.0 < -tol or gb < -tol:
                    report.monotone = False
                x_a = x.copy()
                x_a[t] = a
                ga = f(x_a) - fx
                if ga + gb < -tol:
                    note(Counterexample("pairwise_monotone", tuple(map(int, x)), None, t, (a, b),
                                        ga + gb, -tol))

    # lattice inequality f(X) + f(Y) >= f(X meet Y) + f(X join Y), always sampled
    for _ in range(trials if m > 0 else 0):
        x = Allocation.from_assignment(k, rng.integers(-1, k, size=m))
        y = Allocation.from_assignment(k, rng.integers(-1, k, size=m))
        lhs = oracle.value(x) + oracle.value(y)
        rhs = oracle.value(lattice_meet(x, y)) + oracle.value(lattice_join(x, y))
        report.checks += 1
        if lhs < rhs - _tolerance(oracle, max(abs(lhs), abs(rhs))):
            note(Counterexample("lattice", x.assignment(m), y.assignment(m), None, (), lhs, rhs))

    report.passed = report.counterexample is None
    return report
