"""Coefficient schedules for the threshold algorithms and the matching Q formulas.

A discrete schedule gives each part ``a`` the coefficients

    g_a(i) = (c_a / n_a) * (1 + d_a/n_a)^(i-1),   i = 1..n_a

and the threshold is the inner product of these with the part's stored
weights sorted in decreasing order. The knapsack variant uses the continuous
coefficient ``g(u) = c * exp(d*u)`` on ``[0, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from .core import Budgets, InvalidBudget, ParameterOutOfRange

# d_a for uniform-budget monotone runs, keyed by n_a (n_a >= 4 shares one value)
MONOTONE_D = {1: 1.0, 2: 1.0642, 3: 1.0893}
MONOTONE_D_LARGE = 1.1461

# subsampled partition algorithm, small-budget regime (n_min <= 10)
PARTITION_P_SMALL = 0.3
PARTITION_D_SMALL = {
    1: 1.0, 2: 1.7961, 3: 2.0654, 4: 2.1627, 5: 2.2107,
    6: 2.2387, 7: 2.2567, 8: 2.2692, 9: 2.2783, 10: 2.2852,
}
# large-budget regime (n_min >= 11)
PARTITION_D_LARGE = 1.9532

MODIFIED_C_FACTOR = 0.25


def _check_n(n: int) -> int:
    if int(n) != n or n < 1:
        raise InvalidBudget(f"budget must be a positive integer, got {n}")
    return int(n)


def growth(n: int, d: float) -> float:
    """(1 + d/n)^n via exp/log1p so that large n stays accurate."""
    return math.exp(n * math.log1p(d / n))


def c_from_d(n: int, d: float) -> float:
    n = _check_n(n)
    if not d > 0:
        raise ParameterOutOfRange(f"d must be positive, got {d}")
    return (1.0 + d) / math.expm1(n * math.log1p(d / n))


def monotone_d(n: int) -> float:
    n = _check_n(n)
    return MONOTONE_D.get(n, MONOTONE_D_LARGE)


def q_monotone(n: int, d: float) -> float:
    if d < 1:
        raise ParameterOutOfRange(f"monotone Q requires d >= 1, got {d}")
    return 1.0 + d + c_from_d(n, d)


def q_nonmon_ksub(n: int, d: float) -> float:
    if d < 0.5:
        raise ParameterOutOfRange(f"non-monotone Q requires d >= 1/2, got {d}")
    return 2.0 * (1.0 + d + c_from_d(n, d))


def q_nonmon_alpha(n: int, d: float, alpha: float) -> float:
    """Q for a max-budget share of ``1 - alpha``; equals q_nonmon_ksub at alpha = 1/2.

    Exposed for experimentation only; no d table is derived for alpha != 1/2.
    """
    if not 0 < alpha <= 0.5:
        raise ParameterOutOfRange(f"alpha must lie in (0, 1/2], got {alpha}")
    n = _check_n(n)
    return (2.0 + d / alpha) * (1.0 + 1.0 / math.expm1(n * math.log1p(d / n)))


def partition_nonmon_params(n_min: int, n_a: int) -> tuple[float, float]:
    """(p, d_a) for the subsampled partition algorithm."""
    n_min, n_a = _check_n(n_min), _check_n(n_a)
    if n_min <= 10:
        p = PARTITION_P_SMALL
        return p, PARTITION_D_SMALL.get(n_a, (1.0 - p) / p)
    d = PARTITION_D_LARGE
    return 1.0 / (d + 1.0), d


def q_partition_nonmon(n: int, d: float, p: float) -> float:
    if not 0 < p <= 1:
        raise ParameterOutOfRange(f"p must lie in (0, 1], got {p}")
    c = c_from_d(n, d)
    return max(1.0 + c + d, (1.0 - 1.0 / n) * c + 1.0 / p)


def exp_approx_lower_bound(n: int, n0: int, d: float) -> float:
    """Lower bound on the ratio of the finite-n factor to its n -> infinity limit, for n >= n0."""
    if not (n >= n0 >= d >= 0) or n0 <= 0:
        raise ParameterOutOfRange(f"need n >= n0 >= d >= 0, got n={n}, n0={n0}, d={d}")
    if d == 0:
        return 1.0
    return 1.0 - n0 * math.expm1(d * d / n0) / (n * math.expm1(d))


def _golden_min(fn, lo: float, hi: float, rtol: float = 1e-6) -> float:
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1, x2 = b - inv * (b - a), a + inv * (b - a)
    f1, f2 = fn(x1), fn(x2)
    while b - a > rtol * max(1.0, abs(a) + abs(b)) / 2:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv * (b - a)
            f1 = fn(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv * (b - a)
            f2 = fn(x2)
    return (a + b) / 2


def minimize_q(n: int, objective: str = "monotone", p: float | None = None) -> float:
    """d in [0.5, 8] minimizing Q for the given objective, never worse than the table value.

    ``objective`` is ``"monotone"`` or ``"nonmon_partition"`` (which needs ``p``).
    Monotone results are clamped to d >= 1, where that Q formula is valid.
    """
    n = _check_n(n)
    if objective == "monotone":
        def q(d):
            return 1.0 + d + c_from_d(n, d)
        table = monotone_d(n)
        d = max(1.0, _golden_min(q, 0.5, 8.0))
    elif objective == "nonmon_partition":
        if p is None:
            raise ParameterOutOfRange("nonmon_partition needs p")
        def q(d):
            return q_partition_nonmon(n, d, p)
        table = PARTITION_D_SMALL.get(n, (1.0 - p) / p) if p == PARTITION_P_SMALL else PARTITION_D_LARGE
        d = _golden_min(q, 0.5, 8.0)
    else:
        raise ParameterOutOfRange(f"unknown objective {objective!r}")
    return d if q(d) <= q(table) else table


@dataclass(frozen=True)
class CoefficientSchedule:
    """Per-part (n_a, d_a, c_a). ``modified`` marks the quarter-c experiment variant."""

    n: tuple[int, ...]
    d: tuple[float, ...]
    c: tuple[float, ...]
    modified: bool = False
    _coeffs: tuple[tuple[float, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (len(self.n) == len(self.d) == len(self.c)):
            raise ParameterOutOfRange("n, d, c must have equal length")
        for n, d, c in zip(self.n, self.d, self.c):
            _check_n(n)
            if not (d > 0 and c > 0):
                raise ParameterOutOfRange(f"d and c must be positive, got d={d}, c={c}")
        coeffs = tuple(
            tuple(c / n * math.exp(i * math.log1p(d / n)) for i in range(n))
            for n, d, c in zip(self.n, self.d, self.c)
        )
        object.__setattr__(self, "_coeffs", coeffs)

    @classmethod
    def from_d(cls, budgets: Budgets | Sequence[int], d: Sequence[float]) -> "CoefficientSchedule":
        n = tuple(budgets)
        d = tuple(float(x) for x in d)
        if len(d) != len(n):
            raise ParameterOutOfRange("need one d per part")
        return cls(n, d, tuple(c_from_d(na, da) for na, da in zip(n, d)))

    @classmethod
    def monotone(cls, budgets) -> "CoefficientSchedule":
        n = tuple(budgets)
        return cls.from_d(n, [monotone_d(na) for na in n])

    # the non-monotone k-part algorithm reuses the monotone table
    nonmonotone = monotone

    @classmethod
    def partition_nonmon(cls, budgets) -> tuple["CoefficientSchedule", float]:
        n = tuple(budgets)
        n_min = min(n)
        p = partition_nonmon_params(n_min, n[0])[0]
        d = [partition_nonmon_params(n_min, na)[1] for na in n]
        return cls.from_d(n, d), p

    @property
    def k(self) -> int:
        return len(self.n)

    def with_modified(self) -> "CoefficientSchedule":
        if self.modified:
            return self
        return replace(self, c=tuple(c * MODIFIED_C_FACTOR for c in self.c), modified=True)

    def g(self, a: int, i: int) -> float:
        """Coefficient for the i-th largest weight (1-based)."""
        return self._coeffs[a][i - 1]

    def coefficients(self, a: int) -> tuple[float, ...]:
        return self._coeffs[a]

    def growth(self, a: int) -> float:
        return growth(self.n[a], self.d[a])

    def threshold(self, a: int, weights_desc: Sequence[float]) -> float:
        """beta_a for weights sorted in decreasing order (missing entries count as 0)."""
        return math.fsum(w * g for w, g in zip(weights_desc, self._coeffs[a]))

    def q_monotone(self, a: int) -> float:
        return 1.0 + self.d[a] + self.c[a]


@dataclass(frozen=True)
class KnapsackSchedule:
    d: float
    c: float
    eps: float
    modified: bool = False

    @property
    def q(self) -> float:
        return self.c * math.exp(self.d)

    @property
    def bound(self) -> float:
        return (1.0 - self.eps) / self.q

    def g(self, u: float) -> float:
        return self.c * math.exp(self.d * u)

    def integral(self, lo: float, hi: float) -> float:
        """Integral of g over [lo, hi]."""
        return self.c / self.d * (math.exp(self.d * hi) - math.exp(self.d * lo))

    def threshold(self, profile: Sequence[tuple[float, float]]) -> float:
        """Integral over [0, 1] of the step function given as (density, size) pairs.

        Pairs must be sorted by non-increasing density; capacity beyond 1 is cut off.
        """
        total = []
        lo = 0.0
        for rho, u in profile:
            if lo >= 1.0:
                break
            hi = min(lo + u, 1.0)
            total.append(rho * self.integral(lo, hi))
            lo = hi
        return math.fsum(total)

    def with_modified(self) -> "KnapsackSchedule":
        if self.modified:
            return self
        return replace(self, c=self.c * MODIFIED_C_FACTOR, modified=True)


def knapsack_params(eps: float, d: float = MONOTONE_D_LARGE) -> KnapsackSchedule:
    if not 0 < eps <= 1:
        raise ParameterOutOfRange(f"eps must lie in (0, 1], got {eps}")
    if not d > 0:
        raise ParameterOutOfRange(f"d must be positive, got {d}")
    em = math.expm1(d * eps)
    c = (em + eps) / (eps * math.exp(d) - em / d)
    return KnapsackSchedule(d=d, c=c, eps=eps)


def alpha_monotone(n_min: int) -> float:
    """Proven factor 1/Q for the monotone algorithm at the given minimum budget."""
    return 1.0 / q_monotone(n_min, monotone_d(n_min))


def alpha_nonmon_ksub(n_min: int) -> float:
    return 1.0 / q_nonmon_ksub(n_min, monotone_d(n_min))


def alpha_partition_nonmon(n_min: int) -> float:
    """(1 - p)/Q for the subsampled partition algorithm, at the worst part (n_a = n_min)."""
    p, d = partition_nonmon_params(n_min, n_min)
    return (1.0 - p) / q_partition_nonmon(n_min, d, p)
