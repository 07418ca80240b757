"""Instance loaders and writers, seeded generators, the experiment runner and results I/O."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .algorithms import (
    StreamResult,
    offline_greedy_general,
    offline_greedy_monotone,
    run_common_cardinality,
    run_knapsack_monotone,
    run_monotone_ksub,
    run_nonmon_anybudget,
    run_nonmon_ksub,
    run_partition_monotone,
    run_partition_nonmon,
)
from .core import KSubError, ParameterOutOfRange
from .objectives import (
    AdWelfareOracle,
    GraphCutFunction,
    GroupedSqrtSetFunction,
    KSubmodularOracle,
    MaxKCutOracle,
    ModularOracle,
    PartitionWrapperOracle,
)
from .schedules import CoefficientSchedule, knapsack_params

log = logging.getLogger(__name__)

ALGORITHMS = (
    "mono", "nonmono", "anybudget", "part-mono", "part-nonmono",
    "knapsack", "common", "greedy-mono", "greedy-gen",
)
RANDOMIZED = frozenset({"part-nonmono", "anybudget"})
RESULT_COLUMNS = (
    "algorithm", "mode", "n", "seed", "value",
    "marginal_evals", "full_evals", "peak_items", "wall_ms",
)


class ParseError(KSubError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NegativeValue(ParseError):
    def __init__(self, line: int, message: str = "negative value"):
        super().__init__(line, message)


class ResultsIOError(KSubError):
    pass


# ---------------------------------------------------------------------------
# loaders and writers


def _int_field(text: str, line: int, what: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ParseError(line, f"{what} {text!r} is not an integer") from None
    if value < 0:
        raise ParseError(line, f"{what} {value} is negative")
    return value


def parse_valuations(text: str) -> np.ndarray:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "item,part,value":
        raise ParseError(1, "expected header 'item,part,value'")
    cells: dict[tuple[int, int], float] = {}
    for no, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 3:
            raise ParseError(no, f"expected 3 fields, got {len(parts)}")
        t = _int_field(parts[0].strip(), no, "item")
        a = _int_field(parts[1].strip(), no, "part")
        try:
            v = float(parts[2])
        except ValueError:
            raise ParseError(no, f"value {parts[2]!r} is not a number") from None
        if not math.isfinite(v):
            raise ParseError(no, "value must be finite")
        if v < 0:
            raise NegativeValue(no)
        if (t, a) in cells:
            raise ParseError(no, f"duplicate cell ({t}, {a})")
        cells[t, a] = v
    m = max((t for t, _ in cells), default=-1) + 1
    k = max((a for _, a in cells), default=-1) + 1
    v = np.zeros((m, k))
    for (t, a), x in cells.items():
        v[t, a] = x
    return v


def load_valuations_csv(path) -> AdWelfareOracle:
    """Sparse ``item,part,value`` rows into a dense ad-welfare objective (absent cells are 0)."""
    return AdWelfareOracle(parse_valuations(Path(path).read_text(encoding="utf-8")))


@dataclass
class EdgeList:
    m: int
    edges: list[tuple[int, int]]
    self_loops: int = 0
    duplicates: int = 0


def parse_edge_list(text: str) -> EdgeList:
    seen: set[tuple[int, int]] = set()
    edges: list[tuple[int, int]] = []
    loops = dups = 0
    top = -1
    declared = 0
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            # our own writer records the node count so isolated nodes survive
            head = line[1:].split()
            if len(head) == 2 and head[0] == "nodes" and head[1].isdigit():
                declared = int(head[1])
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(no, f"expected 'u v', got {line!r}")
        u = _int_field(parts[0], no, "node")
        v = _int_field(parts[1], no, "node")
        top = max(top, u, v)
        if u == v:
            loops += 1
            continue
        key = (min(u, v), max(u, v))
        if key in seen:
            dups += 1
            continue
        seen.add(key)
        edges.append(key)
    if loops or dups:
        log.warning("edge list: dropped %d self-loops and %d duplicate edges", loops, dups)
    return EdgeList(max(top + 1, declared), edges, loops, dups)


def load_edge_list(path, k: int = 2) -> MaxKCutOracle:
    """Whitespace-separated undirected edges; the parse statistics ride along as ``load_stats``."""
    parsed = parse_edge_list(Path(path).read_text(encoding="utf-8"))
    oracle = MaxKCutOracle(parsed.m, parsed.edges, k)
    oracle.load_stats = parsed
    return oracle


def write_valuations_csv(valuations: np.ndarray, path) -> None:
    v = np.asarray(valuations, dtype=float)
    rows = ["item,part,value"]
    for t, a in zip(*np.nonzero(v)):
        rows.append(f"{int(t)},{int(a)},{float(v[t, a])!r}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_edge_list(m: int, edges: Iterable[tuple[int, int]], path) -> None:
    rows = [f"# nodes {m}"] + [f"{u} {v}" for u, v in edges]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# instances and generators


@dataclass
class Instance:
    """An objective plus what the partition and knapsack algorithms need on top."""

    kind: str
    oracle: KSubmodularOracle
    params: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.oracle.m

    @property
    def k(self) -> int:
        return self.oracle.k

    def classes(self) -> tuple[int, ...]:
        """Item classes for the partition algorithms."""
        if isinstance(self.oracle, (AdWelfareOracle, ModularOracle)):
            mat = self.oracle.valuations if isinstance(self.oracle, AdWelfareOracle) else self.oracle.weights
            return tuple(int(a) for a in np.argmax(mat, axis=1)) if mat.size else ()
        return tuple(t % self.k for t in range(self.m))

    def partition_oracle(self) -> PartitionWrapperOracle:
        classes = self.classes()
        if isinstance(self.oracle, MaxKCutOracle):
            inner = GraphCutFunction(self.m, self.oracle.edges)
        else:
            mat = self.oracle.valuations if isinstance(self.oracle, AdWelfareOracle) else self.oracle.weights
            own = [mat[t, a] for t, a in enumerate(classes)]
            inner = GroupedSqrtSetFunction(own, classes)
        return PartitionWrapperOracle(inner, classes, self.k)


def generate_synthetic(
    kind: str,
    m: int,
    k: int,
    seed: int,
    density: float = 0.1,
    edge_prob: float = 0.1,
) -> Instance:
    """Seeded instance from numpy's PCG64 stream (identical across platforms).

    ``ad``: each cell is nonzero with probability ``density`` and then
    uniform on [0, 1). ``cut``: G(m, edge_prob) over pairs i < j in
    lexicographic order. ``modular``: dense uniform weights.
    """
    if m < 0 or k < 1:
        raise ParameterOutOfRange(f"need m >= 0 and k >= 1, got m={m}, k={k}")
    rng = np.random.default_rng(seed)
    if kind in ("ad", "ad_welfare"):
        if not 0 <= density <= 1:
            raise ParameterOutOfRange(f"density must lie in [0, 1], got {density}")
        mask = rng.random((m, k)) < density
        vals = rng.random((m, k))
        v = np.where(mask, vals, 0.0)
        return Instance("ad_welfare", AdWelfareOracle(v), {"density": density, "seed": seed})
    if kind in ("cut", "max_k_cut"):
        if not 0 <= edge_prob <= 1:
            raise ParameterOutOfRange(f"edge probability must lie in [0, 1], got {edge_prob}")
        iu, ju = np.triu_indices(m, k=1)
        keep = rng.random(len(iu)) < edge_prob
        edges = [(int(i), int(j)) for i, j in zip(iu[keep], ju[keep])]
        return Instance("max_k_cut", MaxKCutOracle(m, edges, k), {"edge_prob": edge_prob, "seed": seed})
    if kind == "modular":
        return Instance("modular", ModularOracle(rng.random((m, k))), {"seed": seed})
    raise ParameterOutOfRange(f"unknown instance kind {kind!r}")


def generate_budgets(k: int, seed: int, low: int = 1, high: int = 10) -> tuple[int, ...]:
    """Per-part budgets uniform on {low..high}."""
    if not 1 <= low <= high:
        raise ParameterOutOfRange(f"need 1 <= low <= high, got {low}, {high}")
    rng = np.random.default_rng(seed)
    return tuple(int(x) for x in rng.integers(low, high + 1, size=k))


def generate_sizes(m: int, k: int, eps: float, seed: int) -> np.ndarray:
    """Knapsack sizes uniform on (0, eps]."""
    if not 0 < eps <= 1:
        raise ParameterOutOfRange(f"eps must lie in (0, 1], got {eps}")
    rng = np.random.default_rng(seed)
    return eps * (1.0 - rng.random((m, k)))


def stream_order(m: int, policy: str | int | None = None) -> list[int] | None:
    """``None``/``"file"`` keeps file order; an integer seed shuffles."""
    if policy is None or policy == "file":
        return None
    perm = np.random.default_rng(int(policy)).permutation(m)
    return [int(t) for t in perm]


# ---------------------------------------------------------------------------
# running


@dataclass
class Metrics:
    algorithm: str
    mode: str
    n: int
    seed: int
    value: float
    marginal_evals: int
    full_evals: int
    peak_items: int
    wall_ms: float


def _schedule(budgets, mode: str, factory=CoefficientSchedule.monotone):
    sched = factory(budgets)
    return sched.with_modified() if mode == "modified" else sched


def run_algorithm(
    instance: Instance,
    algorithm: str,
    budgets: Sequence[int],
    mode: str = "theory",
    seed: int = 0,
    p: float | None = None,
    sizes=None,
    order: Sequence[int] | None = None,
) -> StreamResult:
    """Dispatch one run by algorithm tag."""
    if mode not in ("theory", "modified"):
        raise ValueError(f"mode must be 'theory' or 'modified', got {mode!r}")
    oracle = instance.oracle
    budgets = tuple(int(x) for x in budgets)
    if algorithm == "mono":
        return run_monotone_ksub(oracle, budgets, _schedule(budgets, mode), order)
    if algorithm == "nonmono":
        return run_nonmon_ksub(oracle, budgets, _schedule(budgets, mode), order)
    if algorithm == "anybudget":
        sched = _schedule(budgets, mode)
        return run_nonmon_anybudget(oracle, budgets, sched, order, "streaming", seed)
    if algorithm == "part-mono":
        return run_partition_monotone(
            instance.partition_oracle(), budgets=budgets, schedule=_schedule(budgets, mode), order=order)
    if algorithm == "part-nonmono":
        sched, p_default = CoefficientSchedule.partition_nonmon(budgets)
        if mode == "modified":
            sched = sched.with_modified()
        return run_partition_nonmon(
            instance.partition_oracle(), budgets=budgets, schedule=sched,
            p=p_default if p is None else p, seed=seed, order=order)
    if algorithm == "knapsack":
        if sizes is None:
            raise ValueError("knapsack runs need item sizes")
        sizes = np.asarray(sizes, dtype=float)
        sched = knapsack_params(float(sizes.max()) if sizes.size else 1.0)
        if mode == "modified":
            sched = sched.with_modified()
        return run_knapsack_monotone(oracle, sizes, sched, order)
    if algorithm == "common":
        if len(set(budgets)) != 1:
            raise ValueError("common cardinality takes a single budget")
        n = budgets[0]
        return run_common_cardinality(oracle, n, _schedule((n,), mode), order)
    if algorithm == "greedy-mono":
        return offline_greedy_monotone(oracle, budgets)
    if algorithm == "greedy-gen":
        return offline_greedy_general(oracle, budgets)
    raise ValueError(f"unknown algorithm {algorithm!r}; choose from {', '.join(ALGORITHMS)}")


def metrics_of(result: StreamResult, algorithm: str, mode: str, n: int, seed: int) -> Metrics:
    return Metrics(
        algorithm=algorithm,
        mode=mode,
        n=int(n),
        seed=int(seed),
        value=float(result.value),
        marginal_evals=result.metrics.marginal_evals,
        full_evals=result.metrics.full_evals,
        peak_items=result.metrics.peak_items,
        wall_ms=round(result.metrics.wall_ms, 3),
    )


def default_workers() -> int:
    raw = os.environ.get("KSUBSTREAM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class ExperimentResult:
    runs: list[Metrics]

    @property
    def mean(self) -> float:
        return statistics.fmean(r.value for r in self.runs) if self.runs else math.nan

    @property
    def std(self) -> float:
        return statistics.pstdev(r.value for r in self.runs) if self.runs else math.nan


def run_experiment(
    instance: Instance,
    algorithm: str,
    budgets: Sequence[int],
    mode: str = "theory",
    repetitions: int = 1,
    seed: int = 0,
    p: float | None = None,
    sizes=None,
    order: Sequence[int] | None = None,
    workers: int | None = None,
) -> ExperimentResult:
    """Repeat a run; randomized algorithms get seeds ``seed, seed+1, ...``.

    Results come back in repetition order whatever the worker count.
    """
    budgets = tuple(int(x) for x in budgets)
    n = min(budgets) if budgets else 0
    randomized = algorithm in RANDOMIZED

    def one(rep: int) -> Metrics:
        s = seed + rep if randomized else seed
        res = run_algorithm(instance, algorithm, budgets, mode, s, p, sizes, order)
        return metrics_of(res, algorithm, mode, n, s)

    workers = default_workers() if workers is None else workers
    if workers > 1 and repetitions > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(one, range(repetitions)))
    else:
        runs = [one(r) for r in range(repetitions)]
    return ExperimentResult(runs)


# ---------------------------------------------------------------------------
# results files


def _coerce(record: dict) -> Metrics:
    types = {f.name: f.type for f in fields(Metrics)}
    out = {}
    for name in RESULT_COLUMNS:
        raw = record[name]
        kind = types[name]
        out[name] = int(raw) if kind == "int" else float(raw) if kind == "float" else str(raw)
    return Metrics(**out)


def format_results(metrics: Sequence[Metrics], fmt: str = "csv") -> str:
    buf = io.StringIO()
    if fmt == "csv":
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for m in metrics:
            row = asdict(m)
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in RESULT_COLUMNS])
    elif fmt == "json-lines":
        for m in metrics:
            row = asdict(m)
            buf.write(json.dumps({c: row[c] for c in RESULT_COLUMNS}) + "\n")
    else:
        raise ValueError(f"unknown results format {fmt!r}")
    return buf.getvalue()


def write_results(metrics: Sequence[Metrics], path, fmt: str = "csv") -> None:
    """Write per-run metrics; ``path == "-"`` writes to stdout."""
    text = format_results(metrics, fmt)
    if str(path) == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ResultsIOError(f"cannot write {path}: {exc}") from exc


def parse_results(text: str, fmt: str = "csv") -> list[Metrics]:
    if fmt == "csv":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise ParseError(1, f"unexpected columns {reader.fieldnames}")
        return [_coerce(r) for r in reader]
    if fmt == "json-lines":
        return [_coerce(json.loads(line)) for line in text.splitlines() if line.strip()]
    raise ValueError(f"unknown results format {fmt!r}")


def read_results(path, fmt: str = "csv") -> list[Metrics]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ResultsIOError(f"cannot read {path}: {exc}") from exc
    return parse_results(text, fmt)


def write_trace(result: StreamResult, path) -> None:
    try:
        Path(path).write_text(result.trace.to_json() + "\n", encoding="utf-8")
    except OSError as exc:
        raise ResultsIOError(f"cannot write {path}: {exc}") from exc
