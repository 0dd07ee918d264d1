import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capauction.lp import LinearProgram, LpStatus, solve, to_lp_text, violation


def vertex_oracle(c, a, b, box):
    """Maximise c@x over {a x <= b, 0 <= x <= box} in 2-D by enumerating vertices."""
    rows = [*zip(a, b), ((1, 0), box[0]), ((0, 1), box[1]), ((-1, 0), 0), ((0, -1), 0)]
    best = None
    for (r1, b1), (r2, b2) in itertools.combinations(rows, 2):
        m = np.array([r1, r2], dtype=float)
        if abs(np.linalg.det(m)) < 1e-12:
            continue
        x = np.linalg.solve(m, [b1, b2])
        if np.all(np.array(a) @ x <= np.array(b) + 1e-9) and np.all(x >= -1e-9) and np.all(x <= np.array(box) + 1e-9):
            val = float(np.dot(c, x))
            best = val if best is None else max(best, val)
    return best


def test_simple_max():
    lp = LinearProgram(np.array([3.0, 2.0]), np.zeros(2), np.array([4.0, 4.0]),
                       ub_matrix=np.array([[1.0, 1.0]]), ub_rhs=np.array([5.0]))
    sol = solve(lp)
    assert sol.status is LpStatus.OPTIMAL
    assert sol.values.tolist() == [4.0, 1.0]
    assert sol.objective_value == 14.0


def test_equality_and_infinite_bound():
    lp = LinearProgram(np.array([-1.0, 5.0]), np.zeros(2), np.array([np.inf, 3.0]),
                       eq_matrix=np.array([[1.0, -1.0]]), eq_rhs=np.array([0.0]))
    sol = solve(lp)
    assert sol.values.tolist() == [3.0, 3.0]


def test_infeasible_and_unbounded():
    infeasible = LinearProgram(np.ones(1), np.zeros(1), np.ones(1),
                               eq_matrix=np.array([[1.0]]), eq_rhs=np.array([2.0]))
    assert solve(infeasible).status is LpStatus.INFEASIBLE
    unbounded = LinearProgram(np.ones(1), np.zeros(1), np.array([np.inf]))
    assert solve(unbounded).status is LpStatus.UNBOUNDED


def test_dimension_checks():
    with pytest.raises(ValueError):
        LinearProgram(np.ones(2), np.zeros(1), np.ones(2))
    with pytest.raises(ValueError):
        LinearProgram(np.ones(1), np.ones(1), np.zeros(1))
    with pytest.raises(ValueError):
        LinearProgram(np.ones(2), np.zeros(2), np.ones(2), ub_matrix=np.ones((1, 3)), ub_rhs=np.ones(1))


def test_empty_program():
    sol = solve(LinearProgram(np.zeros(0), np.zeros(0), np.zeros(0)))
    assert sol.optimal and sol.objective_value == 0


def test_lp_text():
    lp = LinearProgram(np.array([1.0, -2.0]), np.zeros(2), np.array([1.0, np.inf]),
                       ub_matrix=np.array([[1.0, 1.0]]), ub_rhs=np.array([3.0]), names=("a", "b"))
    text = to_lp_text(lp)
    assert "obj: 1 a - 2 b" in text
    assert "ub0: 1 a + 1 b <= 3" in text
    assert "0 <= b <= +inf" in text


@settings(max_examples=150, deadline=None)
@given(
    c=st.lists(st.integers(-10, 10), min_size=2, max_size=2),
    a=st.lists(st.lists(st.integers(-5, 5), min_size=2, max_size=2), min_size=1, max_size=3),
    b=st.lists(st.integers(0, 20), min_size=3, max_size=3),
    box=st.lists(st.integers(1, 10), min_size=2, max_size=2),
)
def test_matches_vertex_enumeration(c, a, b, box):
    b = b[: len(a)]
    lp = LinearProgram(np.array(c, float), np.zeros(2), np.array(box, float),
                       ub_matrix=np.array(a, float), ub_rhs=np.array(b, float))
    sol = solve(lp)
    # origin is always feasible (b >= 0), the box bounds everything
    assert sol.optimal
    assert violation(lp, sol.values) <= 1e-8
    assert sol.objective_value == pytest.approx(vertex_oracle(c, a, b, box), abs=1e-7)


def test_retries_after_numerical_trouble(monkeypatch):
    import capauction.lp as lpmod

    calls = []
    real = lpmod.linprog

    def flaky(*args, method, **kwargs):
        calls.append(method)
        res = real(*args, method=method, **kwargs)
        if len(calls) == 1:
            res.status = 4
        return res

    monkeypatch.setattr(lpmod, "linprog", flaky)
    sol = solve(LinearProgram(np.array([1.0]), np.zeros(1), np.ones(1)))
    assert sol.optimal and sol.values.tolist() == [1.0]
    assert calls == ["highs", "highs-ds"]
