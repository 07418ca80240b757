import hashlib
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksubstream.core import ParameterOutOfRange
from ksubstream.harness import (
    RESULT_COLUMNS,
    Metrics,
    NegativeValue,
    ParseError,
    ResultsIOError,
    format_results,
    generate_budgets,
    generate_sizes,
    generate_synthetic,
    load_edge_list,
    load_valuations_csv,
    parse_edge_list,
    parse_results,
    parse_valuations,
    read_results,
    run_algorithm,
    run_experiment,
    stream_order,
    write_edge_list,
    write_results,
    write_trace,
    write_valuations_csv,
)


# -- loaders --------------------------------------------------------------

def test_valuations_small(tmp_path):
    path = tmp_path / "v.csv"
    path.write_text("item,part,value\n0,0,4\n0,1,9\n")
    oracle = load_valuations_csv(path)
    assert oracle.valuations.tolist() == [[4.0, 9.0]]


def test_valuations_header_only():
    v = parse_valuations("item,part,value\n")
    assert v.shape == (0, 0)


def test_valuations_negative_line_number():
    with pytest.raises(NegativeValue) as info:
        parse_valuations("item,part,value\n0,0,-1\n")
    assert info.value.line == 2


@pytest.mark.parametrize("text,line", [
    ("item,part,value\n0,0\n", 2),
    ("item,part,value\n0,0,1\nx,0,1\n", 3),
    ("item,part,value\n0,0,abc\n", 2),
    ("item,part,value\n0,0,1\n0,0,2\n", 3),
    ("wrong,header\n0,0,1\n", 1),
    ("item,part,value\n-1,0,1\n", 2),
    ("item,part,value\n0,0,nan\n", 2),
])
def test_valuations_rejects(text, line):
    with pytest.raises(ParseError) as info:
        parse_valuations(text)
    assert info.value.line == line


def test_valuations_absent_cells_zero():
    v = parse_valuations("item,part,value\n2,1,0.5\n")
    assert v.shape == (3, 2) and v.sum() == 0.5


def test_edge_list_triangle(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("# c\n0 1\n1 2\n2 0\n")
    oracle = load_edge_list(path)
    assert oracle.m == 3 and oracle.n_edges == 3


def test_edge_list_duplicate_and_self_loop():
    parsed = parse_edge_list("0 1\n1 0\n")
    assert len(parsed.edges) == 1 and parsed.duplicates == 1
    parsed = parse_edge_list("0 0\n")
    assert parsed.edges == [] and parsed.self_loops == 1


def test_edge_list_bad_line():
    with pytest.raises(ParseError) as info:
        parse_edge_list("0 1\n1 2 3\n")
    assert info.value.line == 2


def test_edge_list_round_trip_keeps_isolated_nodes(tmp_path):
    path = tmp_path / "g.txt"
    write_edge_list(6, [(0, 1)], path)
    assert load_edge_list(path).m == 6


def test_valuations_round_trip(tmp_path):
    v = np.array([[0.0, 0.25], [1.5, 0.0], [0.0, 0.0]])
    path = tmp_path / "v.csv"
    write_valuations_csv(v, path)
    back = load_valuations_csv(path).valuations
    assert np.array_equal(back, v[:2])  # trailing all-zero rows are not representable


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="0123456789,.-e \nitemparvlux#", max_size=80))
def test_loaders_never_crash(text):
    for parse in (lambda s: parse_valuations("item,part,value\n" + s), parse_valuations, parse_edge_list):
        try:
            parse(text)
        except ParseError:
            pass


# -- generators -----------------------------------------------------------

def _digest(inst):
    mat = getattr(inst.oracle, "valuations", None)
    if mat is None:
        mat = getattr(inst.oracle, "weights", None)
    payload = mat.tobytes() if mat is not None else json.dumps(inst.oracle.edges).encode()
    return hashlib.sha256(payload).hexdigest()


@pytest.mark.parametrize("kind", ["ad", "cut", "modular"])
def test_generator_deterministic(kind):
    a = generate_synthetic(kind, 20, 3, 5, density=0.3, edge_prob=0.3)
    b = generate_synthetic(kind, 20, 3, 5, density=0.3, edge_prob=0.3)
    assert _digest(a) == _digest(b)
    c = generate_synthetic(kind, 20, 3, 6, density=0.3, edge_prob=0.3)
    assert _digest(a) != _digest(c)


def test_generator_frozen_values():
    # [DERIVED] PCG64(0): mask draws then value draws, row-major
    rng = np.random.default_rng(0)
    mask = rng.random((4, 2)) < 0.5
    vals = rng.random((4, 2))
    inst = generate_synthetic("ad", 4, 2, 0, density=0.5)
    assert np.array_equal(inst.oracle.valuations, np.where(mask, vals, 0.0))


def test_density_zero_gives_empty_value():
    inst = generate_synthetic("ad", 10, 2, 1, density=0.0)
    for alg in ("mono", "part-mono", "common", "greedy-mono"):
        assert run_algorithm(inst, alg, (2, 2)).value == 0


def test_complete_graph():
    assert generate_synthetic("cut", 6, 2, 7, edge_prob=1.0).oracle.n_edges == 15


def test_generator_rejects():
    with pytest.raises(ParameterOutOfRange):
        generate_synthetic("ad", 5, 2, 0, density=1.5)
    with pytest.raises(ParameterOutOfRange):
        generate_synthetic("nope", 5, 2, 0)


def test_budgets_and_sizes():
    b = generate_budgets(50, 3)
    assert all(1 <= x <= 10 for x in b) and b == generate_budgets(50, 3)
    u = generate_sizes(30, 2, 0.34, 1)
    assert (u > 0).all() and (u <= 0.34).all()


def test_stream_order():
    assert stream_order(5) is None and stream_order(5, "file") is None
    perm = stream_order(10, 3)
    assert sorted(perm) == list(range(10)) and perm == stream_order(10, 3)


# -- experiments ----------------------------------------------------------

def test_deterministic_repetitions_have_zero_std():
    inst = generate_synthetic("ad", 40, 3, 0, density=0.5)
    exp = run_experiment(inst, "mono", (2, 2, 2), repetitions=3)
    assert exp.std == 0 and len(exp.runs) == 3


def test_randomized_repetitions_use_distinct_seeds():
    inst = generate_synthetic("cut", 30, 2, 0, edge_prob=0.3)
    exp = run_experiment(inst, "part-nonmono", (3, 3), repetitions=4, seed=10)
    assert [r.seed for r in exp.runs] == [10, 11, 12, 13]


def test_parallel_matches_serial():
    inst = generate_synthetic("cut", 30, 2, 0, edge_prob=0.3)
    serial = run_experiment(inst, "part-nonmono", (3, 3), repetitions=6, workers=1)
    parallel = run_experiment(inst, "part-nonmono", (3, 3), repetitions=6, workers=4)
    assert [r.value for r in serial.runs] == [r.value for r in parallel.runs]


def test_modified_mode_quarters_c():
    inst = generate_synthetic("ad", 30, 2, 0, density=0.5)
    theory = run_algorithm(inst, "mono", (2, 2), "theory")
    modified = run_algorithm(inst, "mono", (2, 2), "modified")
    assert modified.trace.schedule.c == pytest.approx(tuple(c / 4 for c in theory.trace.schedule.c))


def test_sweep_value_nondecreasing_in_n():
    inst = generate_synthetic("ad", 300, 5, 2, density=0.3)
    values = [run_experiment(inst, "mono", (n,) * 5).mean for n in range(1, 11)]
    assert all(a <= b + 1e-9 for a, b in zip(values, values[1:]))


def test_run_algorithm_rejects():
    inst = generate_synthetic("ad", 5, 2, 0)
    with pytest.raises(ValueError):
        run_algorithm(inst, "nope", (1, 1))
    with pytest.raises(ValueError):
        run_algorithm(inst, "mono", (1, 1), mode="fast")
    with pytest.raises(ValueError):
        run_algorithm(inst, "knapsack", (1, 1))


# -- results files --------------------------------------------------------

def _metrics(n=3):
    return [Metrics("mono", "theory", i + 1, 0, 0.1 * (i + 1), 10 * i, 1, i, 0.5) for i in range(n)]


@pytest.mark.parametrize("fmt", ["csv", "json-lines"])
def test_results_round_trip(tmp_path, fmt):
    path = tmp_path / "out"
    write_results(_metrics(), path, fmt)
    assert read_results(path, fmt) == _metrics()


def test_results_empty_csv_is_header_only():
    assert format_results([], "csv") == ",".join(RESULT_COLUMNS) + "\n"


def test_json_lines_count():
    assert len(format_results(_metrics(5), "json-lines").splitlines()) == 5


def test_results_bad_header():
    with pytest.raises(ParseError):
        parse_results("a,b\n1,2\n")


def test_results_io_errors(tmp_path):
    with pytest.raises(ResultsIOError):
        read_results(tmp_path / "missing.csv")
    with pytest.raises(ResultsIOError):
        write_results(_metrics(), tmp_path / "no" / "dir.csv")


def test_write_results_stdout(capsys):
    write_results(_metrics(1), "-")
    assert capsys.readouterr().out.startswith("algorithm,")


def test_write_trace(tmp_path):
    inst = generate_synthetic("ad", 10, 2, 0, density=0.5)
    res = run_algorithm(inst, "mono", (1, 1))
    path = tmp_path / "t.json"
    write_trace(res, path)
    data = json.loads(path.read_text())
    assert data["head"]["algorithm"] == "mono" and len(data["records"]) == 10
