"""Exact optimum by enumeration, and a replaying auditor for run traces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Allocation, InstanceTooLarge, TraceMismatch
from .algorithms import RunTrace, StepRecord, StreamResult
from .objectives import KSubmodularOracle, PartitionWrapperOracle
from .schedules import CoefficientSchedule, KnapsackSchedule

BRUTE_FORCE_LIMIT = 10**8
STEP_EVAL_LIMIT = 64
CONSISTENCY_RTOL = 1e-12
AUDIT_TOL = 1e-9


# ---------------------------------------------------------------------------
# brute force


@dataclass
class BruteForceResult:
    allocation: Allocation
    value: float
    candidates: int


def brute_force_opt(
    oracle: KSubmodularOracle,
    budgets: Sequence[int] | None = None,
    classes: Sequence[int] | None = None,
    sizes=None,
    common: int | None = None,
) -> BruteForceResult:
    """Maximize ``oracle`` over every feasible allocation.

    Constraints combine freely: per-part ``budgets``, a partition (``classes``
    restricts item t to part ``classes[t]``), knapsack ``sizes`` (m x k, unit
    capacity per part) and a ``common`` cap on the total number of items.
    Assignments are enumerated depth-first in mixed-radix order (unallocated
    first, then parts ascending), so ties go to the lexicographically smallest
    assignment vector.
    """
    if classes is not None and oracle.k == 1 and budgets is not None and len(budgets) > 1:
        oracle = PartitionWrapperOracle(oracle, classes, len(budgets))
    m, k = oracle.m, oracle.k
    if (k + 1) ** m > BRUTE_FORCE_LIMIT:
        raise InstanceTooLarge(f"(k+1)^m = {(k + 1) ** m} exceeds {BRUTE_FORCE_LIMIT}")
    n = None if budgets is None else tuple(int(x) for x in budgets)
    u = None if sizes is None else [tuple(map(float, r)) for r in np.asarray(sizes, float).reshape(m, k)]
    choices = [
        (-1, classes[t]) if classes is not None else (-1, *range(k))
        for t in range(m)
    ]
    handle = oracle.handle()
    counts = [0] * k
    loads: list[list[float]] = [[] for _ in range(k)]
    best_value = -math.inf
    best: tuple[int, ...] = ()
    assign = [-1] * m
    leaves = 0

    def feasible(t: int, a: int) -> bool:
        if n is not None and counts[a] >= n[a]:
            return False
        if common is not None and len(handle.alloc) >= common:
            return False
        if u is not None and math.fsum(loads[a] + [u[t][a]]) > 1.0:
            return False
        return True

    def dfs(t: int) -> None:
        nonlocal best_value, best, leaves
        if t == m:
            leaves += 1
            v = handle.value()
            if v > best_value:
                best_value, best = v, tuple(assign)
            return
        for a in choices[t]:
            if a < 0:
                dfs(t + 1)
                continue
            if not feasible(t, a):
                continue
            handle.add(t, a)
            counts[a] += 1
            if u is not None:
                loads[a].append(u[t][a])
            assign[t] = a
            dfs(t + 1)
            assign[t] = -1
            if u is not None:
                loads[a].pop()
            counts[a] -= 1
            handle.remove(t)

    dfs(0)
    alloc = Allocation.from_assignment(k, best)
    return BruteForceResult(alloc, oracle.value(alloc), leaves)


# ---------------------------------------------------------------------------
# guarantees


def theoretical_bound(algorithm: str, schedule, p: float | None = None) -> float:
    """Proven approximation factor for a run with this schedule (theory mode only)."""
    if isinstance(schedule, KnapsackSchedule):
        return schedule.bound
    q_parts = [1.0 + d + c for d, c in zip(schedule.d, schedule.c)]
    if algorithm in ("mono", "part-mono", "common"):
        return 1.0 / max(q_parts)
    if algorithm == "nonmono":
        return 1.0 / (2.0 * max(q_parts))
    if algorithm == "part-nonmono":
        if p is None:
            raise ValueError("part-nonmono needs p")
        q = max(
            max(1.0 + c + d, (1.0 - 1.0 / n) * c + 1.0 / p)
            for n, d, c in zip(schedule.n, schedule.d, schedule.c)
        )
        return (1.0 - p) / q
    raise ValueError(f"no bound for algorithm {algorithm!r}")


def check_guarantee(result: StreamResult | float, opt: BruteForceResult | float, bound: float) -> bool:
    value = result.value if isinstance(result, StreamResult) else float(result)
    best = opt.value if isinstance(opt, BruteForceResult) else float(opt)
    return value >= bound * best - 1e-9 * (1.0 + abs(best))


# ---------------------------------------------------------------------------
# audit


@dataclass
class CheckOutcome:
    passed: bool = True
    first_step: int | None = None
    worst_slack: float = math.inf
    evaluated: int = 0
    skipped: str | None = None

    def record(self, step: int, slack: float, ok: bool) -> None:
        self.evaluated += 1
        self.worst_slack = min(self.worst_slack, slack)
        if not ok and self.passed:
            self.passed = False
            self.first_step = step


AUDIT_CHECKS = (
    "feasibility",
    "free_disposal",
    "beta_monotone",
    "beta_consistency",
    "admission",
    "marginals",
    "call_count",
    "solution_lower_bound",
    "threshold_change_bound",
    "primal_dual",
)


@dataclass
class AuditReport:
    algorithm: str
    checks: dict[str, CheckOutcome] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self) -> list[str]:
        return [name for name, c in self.checks.items() if not c.passed]

    def summary(self) -> str:
        lines = [f"audit[{self.algorithm}]: {'PASS' if self.passed else 'FAIL'}"]
        for name, c in self.checks.items():
            if c.skipped:
                lines.append(f"  {name:<26} skipped ({c.skipped})")
                continue
            status = "ok" if c.passed else f"FAIL at step {c.first_step}"
            slack = "" if c.worst_slack == math.inf else f" worst slack {c.worst_slack:.3e}"
            lines.append(f"  {name:<26} {status} ({c.evaluated} evaluated){slack}")
        return "\n".join(lines)


def _le(lhs: float, rhs: float, scale: float) -> tuple[float, bool]:
    slack = rhs - lhs
    return slack, slack >= -AUDIT_TOL * (1.0 + abs(scale))


def _profile(pool: dict[int, tuple[float, float, int]]) -> list[tuple[float, float]]:
    return [(rho, u) for rho, u, _ in sorted(pool.values(), key=lambda v: (-v[0], v[2]))]


def _profile_tail_integral(profile: list[tuple[float, float]], lo: float) -> float:
    """Integral of the step function over [lo, 1] (no weighting)."""
    total, start = [], 0.0
    for rho, u in profile:
        end = min(start + u, 1.0)
        a, b = max(start, lo), end
        if b > a:
            total.append(rho * (b - a))
        start = end
        if start >= 1.0:
            break
    return math.fsum(total)


def audit_trace(
    trace: RunTrace,
    oracle: KSubmodularOracle,
    schedule=None,
    algorithm: str | None = None,
    result: StreamResult | None = None,
) -> AuditReport:
    """Replay ``trace`` and evaluate every per-step invariant of its algorithm.

    ``oracle`` is the objective the run used: for partition runs either the
    set function or its :class:`PartitionWrapperOracle`. Raises
    :class:`TraceMismatch` if the records cannot be replayed, or disagree
    with ``result``.
    """
    algorithm = algorithm or trace.algorithm
    schedule = trace.schedule if schedule is None else schedule
    checks = {name: CheckOutcome() for name in AUDIT_CHECKS}
    report = AuditReport(algorithm, checks)

    if trace.classes is not None and oracle.k == 1:
        value_oracle = PartitionWrapperOracle(oracle, trace.classes, trace.k)
    else:
        value_oracle = oracle
    knapsack = algorithm == "knapsack"
    partition = algorithm in ("part-mono", "part-nonmono")
    common = algorithm == "common"
    greedy = algorithm.startswith("greedy")
    modified = bool(getattr(schedule, "modified", False))

    if greedy:
        for name in ("beta_monotone", "beta_consistency", "admission", "solution_lower_bound",
                     "threshold_change_bound", "primal_dual"):
            checks[name].skipped = "offline baseline"
    if modified:
        # with a quartered c an admitted item can be lighter than the one it evicts
        for name in ("beta_monotone", "threshold_change_bound", "primal_dual"):
            checks[name].skipped = "modified parameters carry no guarantee"
    if algorithm == "part-nonmono":
        checks["primal_dual"].skipped = "holds only in expectation over the coins"
    step_evals = trace.m <= STEP_EVAL_LIMIT

    alloc = Allocation(trace.k)
    weights: dict[int, float] = {}
    arrival: dict[int, int] = {}
    ever_disposed: set[int] = set()
    seen: set[int] = set()
    # knapsack: every item ever admitted, per part (the analysis profile)
    admitted_pool: list[dict[int, tuple[float, float, int]]] = [{} for _ in range(trace.k)]
    beta_prev = None
    calls = 0
    sizes = None if trace.sizes is None else np.asarray(trace.sizes, float)

    for step, rec in enumerate(trace.records):
        before_alloc = alloc.copy() if step_evals else None
        before_parts = [set(p) for p in alloc.parts]
        arrival[rec.t] = step

        # free disposal: one arrival, at most one insertion, disposals only of held items
        fd_ok = rec.t not in seen and rec.t not in ever_disposed
        seen.add(rec.t)
        held = set(alloc.where) | ({rec.t} if rec.part is not None else set())
        fd_ok = fd_ok and all(t in held for t in rec.disposed)
        checks["free_disposal"].record(step, 0.0, fd_ok)

        try:
            _replay_step(alloc, rec)
        except Exception as exc:  # noqa: BLE001 - any replay failure is a mismatch
            raise TraceMismatch(f"step {step}: {exc}") from exc
        ever_disposed.update(rec.disposed)

        # feasibility
        if knapsack:
            ok = all(
                math.fsum(sizes[t][a] for t in part) <= 1.0 for a, part in enumerate(alloc.parts)
            )
        elif common:
            ok = len(alloc) <= trace.budgets[0]
        else:
            ok = all(len(p) <= n for p, n in zip(alloc.parts, trace.budgets))
            if partition:
                ok = ok and all(trace.classes[t] == a for t, a in alloc.where.items())
        checks["feasibility"].record(step, 0.0, ok and alloc.is_consistent())

        if greedy:
            continue

        # call accounting
        calls += len(rec.marginals)
        checks["call_count"].record(step, 0.0, calls == rec.marginal_evals)

        # marginals against a from-scratch difference on the replayed state
        if step_evals:
            base = value_oracle.value(before_alloc)
            parts_queried = [rec.selected] if partition else range(trace.k)
            for idx, a in enumerate(parts_queried):
                bigger = before_alloc.copy().add(rec.t, a)
                true = value_oracle.value(bigger) - base
                got = rec.marginals[0 if partition else idx]
                tol = 0.0 if value_oracle.exact else AUDIT_TOL * (1.0 + abs(base))
                checks["marginals"].record(step, tol - abs(true - got), abs(true - got) <= tol)

        # threshold continuity and monotonicity
        if beta_prev is not None:
            same = all(x == y for x, y in zip(beta_prev, rec.beta_before))
            checks["beta_consistency"].record(step, 0.0, same)
        if not modified:
            for b0, b1 in zip(rec.beta_before, rec.beta_after):
                checks["beta_monotone"].record(step, b1 - b0, b1 >= b0)
        beta_prev = rec.beta_after

        # admission rule
        _audit_admission(checks["admission"], step, rec, algorithm, sizes)

        a = rec.part
        if a is None:
            same = rec.beta_after == rec.beta_before
            checks["beta_consistency"].record(step, 0.0, same)
            continue

        w = rec.weight
        bpart = 0 if common else a
        b0, b1 = rec.beta_before[bpart], rec.beta_after[bpart]

        if knapsack:
            u = float(sizes[rec.t][a])
            profile_before = _profile(admitted_pool[a])
            admitted_pool[a][rec.t] = (w, u, step)
            beta_re = schedule.threshold(_profile(admitted_pool[a]))
            tail = _profile_tail_integral(profile_before, 1.0 - u)
            if not modified:
                e = math.expm1(schedule.d * u)
                rhs = e * b0 + w * schedule.c / schedule.d * e - schedule.g(1.0) * tail
                slack, ok = _le(b1 - b0, rhs, max(b1, w))
                checks["threshold_change_bound"].record(step, slack, ok)
                d_change = u * (2 * w - b0) + (b1 - b0)
                p_change = w * u - tail
                slack, ok = _le(d_change, schedule.q * p_change, max(b1, w))
                checks["primal_dual"].record(step, slack, ok)
        else:
            if common:
                pool = [weights[t] for t in _union(before_parts)]
            else:
                pool = [weights[t] for t in before_parts[a]]
            n_a = schedule.n[bpart]
            full = len(pool) >= n_a
            w_min = min(pool) if full else 0.0
            current = sorted(
                (weights.get(t, w if t == rec.t else None) for t in _held(alloc, a, common)),
                reverse=True,
            )
            beta_re = schedule.threshold(bpart, current)
            if not modified:
                d, c = schedule.d[bpart], schedule.c[bpart]
                rhs = d * b0 + c * w - c * schedule.growth(bpart) * w_min
                slack, ok = _le(n_a * (b1 - b0), rhs, max(b1, w))
                checks["threshold_change_bound"].record(step, slack, ok)
                if algorithm != "part-nonmono":
                    q = 1.0 + d + c
                    p_change = w - w_min
                    if algorithm == "nonmono":
                        d_change = 3 * w - b0 + 2 * n_a * (b1 - b0)
                        q *= 2.0
                    else:
                        d_change = 2 * w - b0 + n_a * (b1 - b0)
                    slack, ok = _le(d_change, q * p_change, max(b1, w))
                    checks["primal_dual"].record(step, slack, ok)

        for t_out in rec.disposed:
            weights.pop(t_out, None)
        if rec.t not in rec.disposed:
            weights[rec.t] = w
        tol = CONSISTENCY_RTOL * (1.0 + abs(beta_re))
        checks["beta_consistency"].record(step, tol - abs(beta_re - b1), abs(beta_re - b1) <= tol)

        if step_evals:
            _audit_solution_bound(checks["solution_lower_bound"], step, value_oracle, alloc, weights, sizes, knapsack)

    if not greedy and not step_evals:
        _audit_solution_bound(checks["solution_lower_bound"], len(trace.records), value_oracle, alloc,
                      weights, sizes, knapsack)

    if result is not None:
        if alloc != result.allocation:
            raise TraceMismatch("replayed allocation differs from the reported result")
        if not greedy:
            ok = result.metrics.marginal_evals == calls
            checks["call_count"].record(len(trace.records), 0.0, ok)
    return report


def _union(parts: list[set[int]]) -> set[int]:
    out: set[int] = set()
    for p in parts:
        out |= p
    return out


def _held(alloc: Allocation, a: int, common: bool):
    return alloc.where.keys() if common else alloc.parts[a]


def _replay_step(alloc: Allocation, rec: StepRecord) -> None:
    if rec.part is not None:
        alloc.add(rec.t, rec.part)
    for t_out in rec.disposed:
        alloc.remove(t_out)


def _audit_admission(check: CheckOutcome, step, rec: StepRecord, algorithm, sizes) -> None:
    beta = rec.beta_before
    if algorithm in ("part-mono", "part-nonmono"):
        a = rec.selected
        w = rec.marginals[0]
        passes = w - beta[a] >= 0 and rec.coin == 1
        ok = (rec.part == a) if passes else rec.part is None
        if rec.part is not None:
            ok = ok and rec.weight == w
        check.record(step, w - beta[a], ok)
        return
    k = len(rec.marginals)
    w = rec.marginals
    if algorithm == "knapsack":
        u = sizes[rec.t]
        rho = [w[a] / u[a] for a in range(k)]
        scores = [u[a] * (rho[a] - beta[a]) for a in range(k)]
        gain = [rho[a] for a in range(k)]
    elif algorithm == "common":
        scores = list(w)
        beta = [beta[0]] * k
        gain = list(w)
    elif algorithm == "nonmono":
        scores = [w[a] - beta[a] - min(beta[b] for b in range(k) if b != a) for a in range(k)]
        gain = list(w)
    else:
        scores = [w[a] - beta[a] for a in range(k)]
        gain = list(w)
    a = max(range(k), key=scores.__getitem__)
    passes = gain[a] - beta[a] >= 0
    ok = rec.selected == a and ((rec.part == a) if passes else rec.part is None)
    if rec.part is not None:
        ok = ok and rec.weight == gain[a]
    check.record(step, gain[a] - beta[a], ok)


def _audit_solution_bound(check, step, oracle, alloc, weights, sizes, knapsack) -> None:
    value = oracle.value(alloc)
    if knapsack:
        lower = math.fsum(weights[t] * sizes[t][a] for t, a in alloc.where.items())
    else:
        lower = math.fsum(weights[t] for t in alloc.where)
    slack, ok = _le(lower, value, value)
    check.record(step, slack, ok)
