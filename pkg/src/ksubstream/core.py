"""Allocations of items to k disjoint parts, and the lattice operations on them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


class KSubError(Exception):
    """Base class for all errors raised by this package."""


class ItemAlreadyAllocated(KSubError):
    pass


class ItemNotInPart(KSubError):
    pass


class InvalidBudget(KSubError):
    pass


class ParameterOutOfRange(KSubError):
    pass


class PreconditionError(KSubError):
    """An algorithm was called on an instance outside its stated preconditions."""


class OracleNotMonotone(PreconditionError):
    pass


class BudgetPreconditionViolated(PreconditionError):
    pass


class KTooSmall(PreconditionError):
    pass


class ItemWithoutClass(PreconditionError):
    pass


class SizeOutOfRange(PreconditionError):
    pass


class InvalidSchedule(PreconditionError):
    pass


class InstanceTooLarge(KSubError):
    pass


class TraceMismatch(KSubError):
    pass


@dataclass(frozen=True)
class Budgets:
    per_part: tuple[int, ...]

    def __post_init__(self):
        if any(int(n) != n or n < 0 for n in self.per_part):
            raise InvalidBudget(f"budgets must be non-negative integers: {self.per_part}")

    @classmethod
    def of(cls, values: Iterable[int]) -> "Budgets":
        return cls(tuple(int(v) for v in values))

    @classmethod
    def uniform(cls, n: int, k: int) -> "Budgets":
        return cls((int(n),) * k)

    @property
    def k(self) -> int:
        return len(self.per_part)

    @property
    def total(self) -> int:
        return sum(self.per_part)

    @property
    def n_min(self) -> int:
        return min(self.per_part)

    @property
    def n_max(self) -> int:
        return max(self.per_part)

    def __getitem__(self, a: int) -> int:
        return self.per_part[a]

    def __len__(self) -> int:
        return len(self.per_part)

    def __iter__(self):
        return iter(self.per_part)


class Allocation:
    """k pairwise-disjoint item sets with a reverse index ``item -> part``.

    Mutation is in place. Items are dense non-negative integers.
    """

    __slots__ = ("parts", "where")

    def __init__(self, k: int, parts: Sequence[Iterable[int]] | None = None):
        if k < 0:
            raise ValueError("k must be >= 0")
        self.parts: list[set[int]] = [set() for _ in range(k)]
        self.where: dict[int, int] = {}
        if parts is not None:
            if len(parts) != k:
                raise ValueError(f"expected {k} parts, got {len(parts)}")
            for a, items in enumerate(parts):
                for t in items:
                    self.add(t, a)

    @classmethod
    def from_assignment(cls, k: int, assignment: Sequence[int]) -> "Allocation":
        """Build from a vector with entry -1 (unallocated) or a part index per item."""
        alloc = cls(k)
        for t, a in enumerate(assignment):
            if a >= 0:
                alloc.add(t, a)
        return alloc

    @property
    def k(self) -> int:
        return len(self.parts)

    def part_of(self, t: int) -> int | None:
        return self.where.get(t)

    def __contains__(self, t: int) -> bool:
        return t in self.where

    def __len__(self) -> int:
        return len(self.where)

    def add(self, t: int, a: int) -> "Allocation":
        if t in self.where:
            raise ItemAlreadyAllocated(f"item {t} already in part {self.where[t]}")
        self.parts[a].add(t)
        self.where[t] = a
        return self

    def remove(self, t: int) -> int:
        """Dispose of ``t``; returns the part it was in."""
        a = self.where.pop(t, None)
        if a is None:
            raise ItemNotInPart(f"item {t} is not allocated")
        self.parts[a].discard(t)
        return a

    def swap(self, t_in: int, t_out: int, a: int) -> "Allocation":
        if t_out not in self.parts[a]:
            raise ItemNotInPart(f"item {t_out} is not in part {a}")
        if t_in in self.where:
            raise ItemAlreadyAllocated(f"item {t_in} already in part {self.where[t_in]}")
        self.remove(t_out)
        return self.add(t_in, a)

    def copy(self) -> "Allocation":
        return Allocation(self.k, [set(p) for p in self.parts])

    def sizes(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.parts)

    def assignment(self, m: int) -> tuple[int, ...]:
        return tuple(self.where.get(t, -1) for t in range(m))

    def is_consistent(self) -> bool:
        seen: dict[int, int] = {}
        for a, part in enumerate(self.parts):
            for t in part:
                if t in seen:
                    return False
                seen[t] = a
        return seen == self.where

    def frozen(self) -> tuple[frozenset[int], ...]:
        return tuple(frozenset(p) for p in self.parts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Allocation):
            return NotImplemented
        return self.parts == other.parts

    def __repr__(self) -> str:
        inner = ", ".join(f"S_{a}={sorted(p)}" for a, p in enumerate(self.parts))
        return f"Allocation({inner})"


def apply_add(alloc: Allocation, t: int, a: int) -> Allocation:
    return alloc.add(t, a)


def apply_swap(alloc: Allocation, t_in: int, t_out: int, a: int) -> Allocation:
    return alloc.swap(t_in, t_out, a)


def support(alloc: Allocation) -> set[int]:
    return set(alloc.where)


def lattice_meet(x: Allocation, y: Allocation) -> Allocation:
    if x.k != y.k:
        raise ValueError("allocations have different k")
    return Allocation(x.k, [xa & ya for xa, ya in zip(x.parts, y.parts)])


def lattice_join(x: Allocation, y: Allocation) -> Allocation:
    """Per-part union, minus items that either side places in some other part."""
    if x.k != y.k:
        raise ValueError("allocations have different k")
    unions = [xa | ya for xa, ya in zip(x.parts, y.parts)]
    counts: dict[int, int] = {}
    for u in unions:
        for t in u:
            counts[t] = counts.get(t, 0) + 1
    return Allocation(x.k, [{t for t in u if counts[t] == 1} for u in unions])


def precedes(x: Allocation, y: Allocation) -> bool:
    """Componentwise order: X_a is a subset of Y_a for every part."""
    return all(xa <= ya for xa, ya in zip(x.parts, y.parts))
