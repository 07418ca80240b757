"""One-pass threshold algorithms, the any-budget combiner and offline greedy baselines.

Every run returns a :class:`StreamResult` whose :class:`RunTrace` holds one
record per stream item, enough to replay the run and audit it afterwards.

Tie-breaking is fixed: the lowest part index wins an argmax, and the
earliest-arrived item loses an argmin eviction.
"""

from __future__ import annotations

import bisect
import heapq
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    Allocation,
    Budgets,
    InvalidBudget,
    InvalidSchedule,
    ItemWithoutClass,
    KTooSmall,
    BudgetPreconditionViolated,
    OracleNotMonotone,
    ParameterOutOfRange,
    SizeOutOfRange,
)
from .objectives import KSubmodularOracle, PartitionWrapperOracle, PartRestriction
from .schedules import (
    CoefficientSchedule,
    KnapsackSchedule,
    alpha_monotone,
    alpha_partition_nonmon,
    knapsack_params,
    partition_nonmon_params,
)

MONOTONE_SLACK = 1e-9


@dataclass(slots=True)
class StepRecord:
    t: int
    marginals: tuple[float, ...]
    selected: int | None
    part: int | None
    weight: float | None
    disposed: tuple[int, ...]
    beta_before: tuple[float, ...]
    beta_after: tuple[float, ...]
    marginal_evals: int
    coin: int | None = None
    size: float | None = None


@dataclass
class RunTrace:
    algorithm: str
    k: int
    m: int
    order: tuple[int, ...]
    budgets: tuple[int, ...] | None = None
    schedule: CoefficientSchedule | KnapsackSchedule | None = None
    records: list[StepRecord] = field(default_factory=list)
    classes: tuple[int, ...] | None = None
    sizes: np.ndarray | None = None
    p: float | None = None
    seed: int | None = None

    def replay(self) -> Allocation:
        alloc = Allocation(self.k)
        for rec in self.records:
            _apply(alloc, rec)
        return alloc

    def records_json(self) -> str:
        """Canonical serialization of the decision records only."""
        return json.dumps([asdict(r) for r in self.records], separators=(",", ":"))

    def to_json(self) -> str:
        head = {
            "algorithm": self.algorithm,
            "k": self.k,
            "m": self.m,
            "order": list(self.order),
            "budgets": None if self.budgets is None else list(self.budgets),
            "classes": None if self.classes is None else list(self.classes),
            "p": self.p,
            "seed": self.seed,
        }
        return json.dumps({"head": head, "records": json.loads(self.records_json())})


def _apply(alloc: Allocation, rec: StepRecord) -> None:
    # insertion first: a knapsack step may dispose of the item it just added
    if rec.part is not None:
        alloc.add(rec.t, rec.part)
    for t_out in rec.disposed:
        alloc.remove(t_out)


@dataclass
class RunMetrics:
    marginal_evals: int
    full_evals: int
    peak_items: int
    wall_ms: float


@dataclass
class StreamResult:
    allocation: Allocation
    value: float
    trace: RunTrace
    metrics: RunMetrics
    #: insertion weight (or density, for knapsack) of every item in the final solution
    weights: dict[int, float] = field(default_factory=dict)
    #: sub-runs of a combined algorithm, e.g. {"A": ..., "B": ...}
    components: dict[str, "StreamResult"] = field(default_factory=dict)
    chosen: str | None = None


# ---------------------------------------------------------------------------
# helpers


def _order(order: Sequence[int] | None, m: int) -> tuple[int, ...]:
    if order is None:
        return tuple(range(m))
    order = tuple(int(t) for t in order)
    if len(set(order)) != len(order) or any(not 0 <= t < m for t in order):
        raise ValueError("stream order must list distinct items in [0, m)")
    return order


def _budgets(budgets) -> tuple[int, ...]:
    n = tuple(budgets.per_part if isinstance(budgets, Budgets) else budgets)
    if any(int(x) != x or x < 1 for x in n):
        raise InvalidBudget(f"every part needs a budget >= 1, got {n}")
    return tuple(int(x) for x in n)


def _check_schedule(schedule: CoefficientSchedule, n: tuple[int, ...], d_min: float) -> None:
    if tuple(schedule.n) != n:
        raise InvalidSchedule(f"schedule budgets {schedule.n} do not match {n}")
    if any(d < d_min for d in schedule.d):
        raise InvalidSchedule(f"schedule needs every d_a >= {d_min}, got {schedule.d}")


class _MonotoneGuard:
    """Aborts when a declared-monotone oracle returns a clearly negative gain."""

    __slots__ = ("active", "scale")

    def __init__(self, active: bool):
        self.active = active
        self.scale = 0.0

    def __call__(self, gains) -> None:
        if not self.active:
            return
        for g in gains:
            if g < -MONOTONE_SLACK * (1.0 + self.scale):
                raise OracleNotMonotone(f"negative marginal {g!r} from a monotone oracle")
            if g > self.scale:
                self.scale = g


class _ThresholdPart:
    """Stored insertion weights of one part, sorted so the eviction candidate is last."""

    __slots__ = ("n", "entries", "schedule", "a")

    def __init__(self, schedule: CoefficientSchedule, a: int):
        self.schedule = schedule
        self.a = a
        self.n = schedule.n[a]
        # (-weight, -arrival position, item): last entry is the min weight, earliest on ties
        self.entries: list[tuple[float, int, int]] = []

    def full(self) -> bool:
        return len(self.entries) >= self.n

    def insert(self, w: float, pos: int, t: int) -> None:
        bisect.insort(self.entries, (-w, -pos, t))

    def evict(self) -> tuple[float, int]:
        neg_w, _, t = self.entries.pop()
        return -neg_w, t

    def beta(self) -> float:
        return self.schedule.threshold(self.a, [-e[0] for e in self.entries])


def _finish(handle, alloc, trace, weights, peak, start) -> StreamResult:
    value = handle.value()
    metrics = RunMetrics(
        marginal_evals=handle.marginal_evals,
        full_evals=handle.full_evals,
        peak_items=peak,
        wall_ms=(time.perf_counter() - start) * 1e3,
    )
    return StreamResult(alloc, value, trace, metrics, weights)


# ---------------------------------------------------------------------------
# k-part cardinality constraints


def _run_kpart(oracle, budgets, schedule, order, nonmono: bool, tag: str) -> StreamResult:
    start = time.perf_counter()
    k = oracle.k
    n = _budgets(budgets)
    if len(n) != k:
        raise InvalidBudget(f"need {k} budgets, got {len(n)}")
    order = _order(order, oracle.m)
    guard = _MonotoneGuard(not nonmono)
    handle = oracle.handle()
    parts = [_ThresholdPart(schedule, a) for a in range(k)]
    beta = [0.0] * k
    trace = RunTrace(tag, k, oracle.m, order, n, schedule)
    weights: dict[int, float] = {}
    peak = 0
    for pos, t in enumerate(order):
        w = tuple(handle.marginal(t, a) for a in range(k))
        guard(w)
        if nonmono:
            lo = sorted(range(k), key=beta.__getitem__)[:2]
            scores = [w[a] - beta[a] - beta[lo[1] if a == lo[0] else lo[0]] for a in range(k)]
        else:
            scores = [w[a] - beta[a] for a in range(k)]
        a = max(range(k), key=scores.__getitem__)
        before = tuple(beta)
        disposed: tuple[int, ...] = ()
        admitted = None
        if w[a] - beta[a] >= 0:
            part = parts[a]
            if part.full():
                _, t_out = part.evict()
                handle.remove(t_out)
                del weights[t_out]
                disposed = (t_out,)
            handle.add(t, a)
            part.insert(w[a], pos, t)
            weights[t] = w[a]
            beta[a] = part.beta()
            admitted = a
            peak = max(peak, len(handle.alloc) + len(disposed))
        trace.records.append(StepRecord(
            t, w, a, admitted, w[a] if admitted is not None else None, disposed,
            before, tuple(beta), handle.marginal_evals))
    return _finish(handle, handle.alloc, trace, weights, peak, start)


def run_monotone_ksub(
    oracle: KSubmodularOracle,
    budgets,
    schedule: CoefficientSchedule | None = None,
    order: Sequence[int] | None = None,
) -> StreamResult:
    """Monotone k-submodular maximization under per-part cardinality budgets."""
    if not oracle.monotone:
        raise OracleNotMonotone(f"{oracle!r} is not declared monotone")
    n = _budgets(budgets)
    schedule = CoefficientSchedule.monotone(n) if schedule is None else schedule
    _check_schedule(schedule, n, 1.0)
    return _run_kpart(oracle, n, schedule, order, False, "mono")


def run_nonmon_ksub(
    oracle: KSubmodularOracle,
    budgets,
    schedule: CoefficientSchedule | None = None,
    order: Sequence[int] | None = None,
) -> StreamResult:
    """General k-submodular maximization when no part holds more than half the total budget."""
    n = _budgets(budgets)
    if oracle.k < 2 or len(n) < 2:
        raise KTooSmall("the non-monotone algorithm needs k >= 2")
    if 2 * max(n) > sum(n):
        raise BudgetPreconditionViolated(f"max budget {max(n)} exceeds half the total {sum(n)}")
    schedule = CoefficientSchedule.nonmonotone(n) if schedule is None else schedule
    _check_schedule(schedule, n, 0.5)
    return _run_kpart(oracle, n, schedule, order, True, "nonmono")


# ---------------------------------------------------------------------------
# partition matroid


def _classes(classes, m: int, k: int) -> tuple[int, ...]:
    if classes is None or len(classes) != m:
        raise ItemWithoutClass("every item needs a class")
    out = []
    for t, c in enumerate(classes):
        if c is None or not 0 <= int(c) < k:
            raise ItemWithoutClass(f"item {t} has no valid class ({c!r})")
        out.append(int(c))
    return tuple(out)


def _unwrap(oracle, classes):
    if isinstance(oracle, PartitionWrapperOracle):
        return oracle.inner, oracle.classes if classes is None else classes
    if oracle.k != 1:
        raise ValueError("partition algorithms need a set function or a PartitionWrapperOracle")
    return oracle, classes


def _run_partition(setfn, classes, budgets, schedule, order, p, seed, tag) -> StreamResult:
    start = time.perf_counter()
    n = _budgets(budgets)
    k = len(n)
    classes = _classes(classes, setfn.m, k)
    _check_schedule(schedule, n, 0.0)
    order = _order(order, setfn.m)
    if p is None:
        coins = None
    else:
        if not 0 < p <= 1:
            raise ParameterOutOfRange(f"p must lie in (0, 1], got {p}")
        # one draw per item in arrival order, whatever the threshold test says
        coins = np.random.Generator(np.random.PCG64(seed)).random(len(order)) < p
    guard = _MonotoneGuard(tag == "part-mono")
    handle = setfn.handle()
    alloc = Allocation(k)
    parts = [_ThresholdPart(schedule, a) for a in range(k)]
    beta = [0.0] * k
    trace = RunTrace(tag, k, setfn.m, order, n, schedule, classes=classes, p=p, seed=seed)
    weights: dict[int, float] = {}
    peak = 0
    for pos, t in enumerate(order):
        a = classes[t]
        w = handle.marginal(t, 0)
        guard((w,))
        coin = 1 if coins is None else int(coins[pos])
        before = tuple(beta)
        disposed: tuple[int, ...] = ()
        admitted = None
        if w - beta[a] >= 0 and coin:
            part = parts[a]
            if part.full():
                _, t_out = part.evict()
                handle.remove(t_out)
                alloc.remove(t_out)
                del weights[t_out]
                disposed = (t_out,)
            handle.add(t, 0)
            alloc.add(t, a)
            part.insert(w, pos, t)
            weights[t] = w
            beta[a] = part.beta()
            admitted = a
            peak = max(peak, len(alloc) + len(disposed))
        trace.records.append(StepRecord(
            t, (w,), a, admitted, w if admitted is not None else None, disposed,
            before, tuple(beta), handle.marginal_evals, coin))
    return _finish(handle, alloc, trace, weights, peak, start)


def run_partition_monotone(
    oracle,
    classes: Sequence[int] | None = None,
    budgets=None,
    schedule: CoefficientSchedule | None = None,
    order: Sequence[int] | None = None,
) -> StreamResult:
    """Monotone submodular maximization under a partition matroid.

    ``oracle`` is a set function (k == 1) with ``classes`` mapping items to
    parts, or a :class:`PartitionWrapperOracle` carrying both.
    """
    setfn, classes = _unwrap(oracle, classes)
    if not setfn.monotone:
        raise OracleNotMonotone(f"{setfn!r} is not declared monotone")
    n = _budgets(budgets)
    schedule = CoefficientSchedule.monotone(n) if schedule is None else schedule
    return _run_partition(setfn, classes, n, schedule, order, None, None, "part-mono")


def run_partition_nonmon(
    oracle,
    classes: Sequence[int] | None = None,
    budgets=None,
    schedule: CoefficientSchedule | None = None,
    p: float | None = None,
    seed: int = 0,
    order: Sequence[int] | None = None,
) -> StreamResult:
    """Subsampled variant for non-monotone submodular functions.

    Defaults for ``schedule`` and ``p`` follow the budget regime of the instance.
    """
    setfn, classes = _unwrap(oracle, classes)
    n = _budgets(budgets)
    if schedule is None:
        schedule, p_default = CoefficientSchedule.partition_nonmon(n)
        p = p_default if p is None else p
    elif p is None:
        p = partition_nonmon_params(min(n), n[0])[0]
    return _run_partition(setfn, classes, n, schedule, order, p, seed, "part-nonmono")


# ---------------------------------------------------------------------------
# any budgets, general objective


def run_nonmon_anybudget(
    oracle: KSubmodularOracle,
    budgets,
    schedule: CoefficientSchedule | None = None,
    order: Sequence[int] | None = None,
    mode: str = "streaming",
    seed: int = 0,
) -> StreamResult:
    """Combine a single-part subsampled run (A) with a clamped-budget run (B).

    A works on ``S -> f(S in the largest part, rest empty)``; B lowers the
    largest budget to the sum of the others. ``streaming`` keeps the better of
    the two, ``online`` commits to one at random before the stream starts.
    """
    if mode not in ("streaming", "online"):
        raise ValueError(f"mode must be 'streaming' or 'online', got {mode!r}")
    n = _budgets(budgets)
    if oracle.k < 2 or len(n) < 2:
        raise KTooSmall("the any-budget combiner needs k >= 2")
    start = time.perf_counter()
    big = max(range(len(n)), key=lambda a: (n[a], -a))
    n_big = n[big]
    rest = sum(n) - n_big
    clamped = tuple(min(x, rest) if a == big else x for a, x in enumerate(n))

    p, d = partition_nonmon_params(n_big, n_big)
    sched_a = CoefficientSchedule.from_d((n_big,), (d,))
    if schedule is None:
        sched_b = CoefficientSchedule.nonmonotone(clamped)
    else:
        sched_b = CoefficientSchedule.from_d(clamped, schedule.d)
    if schedule is not None and schedule.modified:
        sched_a, sched_b = sched_a.with_modified(), sched_b.with_modified()

    alpha_nmp = alpha_partition_nonmon(n_big)
    alpha_mon = alpha_monotone(min(clamped))
    q = (1 / alpha_nmp) / (1 / alpha_nmp + 2 / alpha_mon)

    restricted = PartRestriction(oracle, big)
    res_a = run_partition_nonmon(restricted, [0] * oracle.m, (n_big,), sched_a, p, seed, order)
    res_b = run_nonmon_ksub(oracle, clamped, sched_b, order)

    # A's allocation lives in a single part; relabel to the original index
    alloc_a = Allocation(oracle.k)
    for t in res_a.allocation.parts[0]:
        alloc_a.add(t, big)
    value_a = oracle.value(alloc_a)

    if mode == "streaming":
        pick_a = value_a > res_b.value
    else:
        sel = np.random.Generator(np.random.PCG64([seed, 1]))
        pick_a = bool(sel.random() < q)
    chosen = res_a if pick_a else res_b
    allocation = alloc_a if pick_a else res_b.allocation
    value = value_a if pick_a else res_b.value
    metrics = RunMetrics(
        marginal_evals=res_a.metrics.marginal_evals + res_b.metrics.marginal_evals,
        full_evals=res_a.metrics.full_evals + res_b.metrics.full_evals + 1,
        peak_items=res_a.metrics.peak_items + res_b.metrics.peak_items,
        wall_ms=(time.perf_counter() - start) * 1e3,
    )
    return StreamResult(
        allocation, value, chosen.trace, metrics,
        dict(chosen.weights), {"A": res_a, "B": res_b}, "A" if pick_a else "B",
    )


# ---------------------------------------------------------------------------
# knapsack


def run_knapsack_monotone(
    oracle: KSubmodularOracle,
    sizes,
    schedule: KnapsackSchedule | None = None,
    order: Sequence[int] | None = None,
) -> StreamResult:
    """Monotone k-submodular maximization with a unit knapsack per part.

    ``sizes[t][a]`` is the size of item t in part a, in ``(0, eps]``.
    """
    start = time.perf_counter()
    if not oracle.monotone:
        raise OracleNotMonotone(f"{oracle!r} is not declared monotone")
    k, m = oracle.k, oracle.m
    u = np.asarray(sizes, dtype=float).reshape(m, k) if m else np.zeros((0, k))
    if u.size and (not (u > 0).all() or (u > 1).any()):
        raise SizeOutOfRange("item sizes must lie in (0, 1]")
    if schedule is None:
        schedule = knapsack_params(float(u.max()) if u.size else 1.0)
    if u.size and (u > schedule.eps).any():
        raise SizeOutOfRange(f"item size {u.max()} exceeds the schedule's eps {schedule.eps}")
    order = _order(order, m)
    rows = [tuple(map(float, r)) for r in u]
    guard = _MonotoneGuard(True)
    handle = oracle.handle()
    # per part: item -> (density, size, arrival position)
    items: list[dict[int, tuple[float, float, int]]] = [{} for _ in range(k)]
    shadow: list[tuple[int, tuple[float, float, int]] | None] = [None] * k
    beta = [0.0] * k
    trace = RunTrace("knapsack", k, m, order, None, schedule, sizes=u)
    weights: dict[int, float] = {}
    peak = 0
    for pos, t in enumerate(order):
        gains = tuple(handle.marginal(t, a) for a in range(k))
        guard(gains)
        rho = [gains[a] / rows[t][a] for a in range(k)]
        scores = [rows[t][a] * (rho[a] - beta[a]) for a in range(k)]
        a = max(range(k), key=scores.__getitem__)
        before = tuple(beta)
        disposed: list[int] = []
        admitted = None
        if rho[a] - beta[a] >= 0:
            held = items[a]
            handle.add(t, a)
            held[t] = (rho[a], rows[t][a], pos)
            weights[t] = rho[a]
            peak = max(peak, len(handle.alloc) + sum(s is not None for s in shadow))
            while math.fsum(v[1] for v in held.values()) > 1.0:
                t_out = min(held, key=lambda i: (held[i][0], held[i][2]))
                shadow[a] = (t_out, held.pop(t_out))
                handle.remove(t_out)
                del weights[t_out]
                disposed.append(t_out)
            beta[a] = _knapsack_beta(schedule, held, shadow[a])
            admitted = a
        trace.records.append(StepRecord(
            t, gains, a, admitted, rho[a] if admitted is not None else None, tuple(disposed),
            before, tuple(beta), handle.marginal_evals, None, rows[t][a]))
    return _finish(handle, handle.alloc, trace, weights, peak, start)


def _knapsack_beta(schedule: KnapsackSchedule, held, shadow) -> float:
    pool = list(held.values())
    if shadow is not None:
        pool.append(shadow[1])
    pool.sort(key=lambda v: (-v[0], v[2]))
    return schedule.threshold([(rho, u) for rho, u, _ in pool])


# ---------------------------------------------------------------------------
# common cardinality


def run_common_cardinality(
    oracle: KSubmodularOracle,
    n: int,
    schedule: CoefficientSchedule | None = None,
    order: Sequence[int] | None = None,
) -> StreamResult:
    """At most ``n`` items overall, shared by all parts, with a single threshold."""
    start = time.perf_counter()
    if not oracle.monotone:
        raise OracleNotMonotone(f"{oracle!r} is not declared monotone")
    if isinstance(n, (Budgets, tuple, list)):
        n = tuple(n)
        if len(n) != 1:
            raise InvalidBudget("common cardinality takes a single budget")
        n = n[0]
    (n,) = _budgets((n,))
    schedule = CoefficientSchedule.monotone((n,)) if schedule is None else schedule
    _check_schedule(schedule, (n,), 0.0)
    k = oracle.k
    order = _order(order, oracle.m)
    guard = _MonotoneGuard(True)
    handle = oracle.handle()
    pool = _ThresholdPart(schedule, 0)
    beta = 0.0
    trace = RunTrace("common", k, oracle.m, order, (n,), schedule)
    weights: dict[int, float] = {}
    peak = 0
    for pos, t in enumerate(order):
        w = tuple(handle.marginal(t, a) for a in range(k))
        guard(w)
        a = max(range(k), key=w.__getitem__)
        before = (beta,)
        disposed: tuple[int, ...] = ()
        admitted = None
        if w[a] - beta >= 0:
            if pool.full():
                _, t_out = pool.evict()
                handle.remove(t_out)
                del weights[t_out]
                disposed = (t_out,)
            handle.add(t, a)
            pool.insert(w[a], pos, t)
            weights[t] = w[a]
            beta = pool.beta()
            admitted = a
            peak = max(peak, len(handle.alloc) + len(disposed))
        trace.records.append(StepRecord(
            t, w, a, admitted, w[a] if admitted is not None else None, disposed,
            before, (beta,), handle.marginal_evals))
    return _finish(handle, handle.alloc, trace, weights, peak, start)


# ---------------------------------------------------------------------------
# offline greedy


def _greedy(oracle, budgets, lazy: bool, general: bool, tag: str) -> StreamResult:
    start = time.perf_counter()
    n = _budgets(budgets)
    k, m = oracle.k, oracle.m
    if len(n) != k:
        raise InvalidBudget(f"need {k} budgets, got {len(n)}")
    handle = oracle.handle()
    sizes = [0] * k
    trace = RunTrace(tag, k, m, tuple(range(m)), n, None)
    weights: dict[int, float] = {}

    def open_parts():
        return [a for a in range(k) if sizes[a] < n[a]]

    def commit(t, a, g):
        before = tuple(0.0 for _ in range(k))
        handle.add(t, a)
        sizes[a] += 1
        weights[t] = g
        trace.records.append(StepRecord(t, (g,), a, a, g, (), before, before, handle.marginal_evals))

    if not lazy:
        while True:
            best = None
            for t in range(m):
                if t in handle.alloc.where:
                    continue
                for a in open_parts():
                    g = handle.marginal(t, a)
                    if best is None or g > best[0]:
                        best = (g, t, a)
            if best is None or (general and best[0] < 0):
                break
            commit(best[1], best[2], best[0])
    else:
        version = 0
        heap = [(-handle.marginal(t, a), t, a, 0) for t in range(m) for a in range(k)]
        heapq.heapify(heap)
        while heap and open_parts():
            neg, t, a, ver = heapq.heappop(heap)
            if t in handle.alloc.where or sizes[a] >= n[a]:
                continue
            if ver != version:
                heapq.heappush(heap, (-handle.marginal(t, a), t, a, version))
                continue
            if general and -neg < 0:
                break
            commit(t, a, -neg)
            version += 1
    return _finish(handle, handle.alloc, trace, weights, len(handle.alloc), start)


def offline_greedy_monotone(oracle: KSubmodularOracle, budgets, lazy: bool = True) -> StreamResult:
    """Repeatedly add the feasible (item, part) pair of largest gain until budgets are used."""
    return _greedy(oracle, budgets, lazy, False, "greedy-mono")


def offline_greedy_general(oracle: KSubmodularOracle, budgets, lazy: bool = True) -> StreamResult:
    """As the monotone greedy, but stops once the best remaining gain is negative."""
    return _greedy(oracle, budgets, lazy, True, "greedy-gen")
