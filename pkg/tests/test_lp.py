import random
from fractions import Fraction as F

import pytest

from reachkit.core import LinearTerm
from reachkit.lp import LinearProgram, LPStatus, lp_from_rows, minimize_slacks, solve


def test_feasible_point_is_exact():
    lp = lp_from_rows([({"a": 1, "b": 1}, "<=", 1), ({"a": 3}, ">=", 1), ({"b": 1}, "==", F(1, 3))])
    res = solve(lp)
    assert res.feasible
    assert lp.satisfied_by(res.assignment)
    assert res.assignment["b"] == F(1, 3)


def test_infeasible():
    lp = lp_from_rows([({"a": 1}, "<=", 0), ({"a": 1}, ">=", F(1, 10**9))])
    assert solve(lp).status is LPStatus.INFEASIBLE


def test_strict_bounds():
    lp = lp_from_rows([({"a": 1}, "<", 1), ({"a": 1}, ">", 0)])
    res = solve(lp)
    assert 0 < res.assignment["a"] < 1
    lp = lp_from_rows([({"a": 1}, "<", 1), ({"a": 1}, ">=", 1)])
    assert solve(lp).status is LPStatus.INFEASIBLE


def test_optimum_and_unbounded():
    lp = lp_from_rows([({"a": 1, "b": 2}, "<=", 4), ({"a": 1}, ">=", 0), ({"b": 1}, ">=", 0)])
    lp.objective = LinearTerm({"a": -1, "b": -1})
    res = solve(lp)
    assert res.status is LPStatus.OPTIMAL and res.value == -4
    lp.objective = LinearTerm({"a": 1, "b": -1, "c": -1})
    assert solve(lp).status is LPStatus.UNBOUNDED


def test_slack_methods_agree():
    rng = random.Random(7)
    for _ in range(60):
        lp = LinearProgram()
        names = ["a", "b", "z"]
        for _ in range(rng.randint(1, 4)):
            coeffs = {v: F(rng.randint(-3, 3), rng.randint(1, 3)) for v in names if rng.random() < 0.7}
            lp.add(coeffs or {"a": 1}, rng.choice(["<=", ">=", "=="]), F(rng.randint(-4, 4), 2))
        a = minimize_slacks(lp, ["z"], "delta").status
        b = minimize_slacks(lp, ["z"], "maxmin").status
        assert (a is LPStatus.INFEASIBLE) == (b is LPStatus.INFEASIBLE)


def test_unknown_method():
    with pytest.raises(ValueError):
        minimize_slacks(LinearProgram(), [], "simplex")
