"""Exact linear programming.

A :class:`LinearProgram` is a list of constraints ``term REL bound`` with
``REL`` one of ``<=, <, ==, >=, >`` and an optional objective to
minimise.  :func:`solve` answers with an :class:`LPResult` whose
assignment has been substituted back into every constraint before it is
returned, so a wrong answer surfaces as an ``AssertionError`` rather
than as a silently bad verdict.

Strict constraints never lose precision: they are solved over
rationals extended by an infinitesimal, and a concrete positive value
for the infinitesimal is chosen afterwards.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Sequence

from ._simplex import ZERO, Delta, Q, Simplex, delta_part, real_part, to_q
from .core import LinearTerm, to_rational

__all__ = [
    "Relation",
    "LPStatus",
    "LinearProgram",
    "LPResult",
    "solve",
    "minimize_slacks",
]


class Relation(str, enum.Enum):
    LE = "<="
    LT = "<"
    EQ = "=="
    GE = ">="
    GT = ">"

    @classmethod
    def parse(cls, rel) -> "Relation":
        if isinstance(rel, cls):
            return rel
        if rel == "=":
            return cls.EQ
        return cls(rel)


class LPStatus(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    OPTIMAL = "optimal"
    UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    """Constraints over named variables, optionally with an objective.

    Variables mentioned in constraints but missing from ``variables`` are
    added automatically; ``variables`` only fixes their order.
    """

    variables: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    objective: LinearTerm | None = None

    def add(self, term, rel, bound) -> None:
        if not isinstance(term, LinearTerm):
            term = LinearTerm(term)
        self.constraints.append((term, Relation.parse(rel), to_rational(bound)))

    def all_variables(self) -> list:
        seen = dict.fromkeys(self.variables)
        for term, _, _ in self.constraints:
            for v in term.variables():
                seen.setdefault(v)
        if self.objective is not None:
            for v in self.objective.variables():
                seen.setdefault(v)
        return list(seen)

    @property
    def has_strict(self) -> bool:
        return any(rel in (Relation.LT, Relation.GT) for _, rel, _ in self.constraints)

    def satisfied_by(self, assignment) -> bool:
        for term, rel, bound in self.constraints:
            lhs = sum((c * assignment[v] for v, c in term.items()), Fraction(0))
            if not _holds(lhs, rel, bound):
                return False
        return True


def _holds(lhs, rel, bound) -> bool:
    if rel is Relation.LE:
        return lhs <= bound
    if rel is Relation.LT:
        return lhs < bound
    if rel is Relation.EQ:
        return lhs == bound
    if rel is Relation.GE:
        return lhs >= bound
    return lhs > bound


@dataclass
class LPResult:
    status: LPStatus
    assignment: dict = field(default_factory=dict)
    value: Fraction | None = None

    @property
    def feasible(self) -> bool:
        return self.status in (LPStatus.FEASIBLE, LPStatus.OPTIMAL, LPStatus.UNBOUNDED)


def _fraction(q) -> Fraction:
    return Fraction(int(q.numerator), int(q.denominator))


def _assert_bound(sx: Simplex, v: int, rel: Relation, bound) -> bool:
    if rel is Relation.LE:
        return sx.assert_upper(v, bound)
    if rel is Relation.LT:
        return sx.assert_upper(v, Delta(bound, Q(-1)))
    if rel is Relation.GE:
        return sx.assert_lower(v, bound)
    if rel is Relation.GT:
        return sx.assert_lower(v, Delta(bound, Q(1)))
    return sx.assert_lower(v, bound) and sx.assert_upper(v, bound)


_FLIP = {
    Relation.LE: Relation.GE,
    Relation.LT: Relation.GT,
    Relation.GE: Relation.LE,
    Relation.GT: Relation.LT,
    Relation.EQ: Relation.EQ,
}


def solve(lp: LinearProgram) -> LPResult:
    """Decide feasibility, or minimise the objective when one is given.

    With an objective and strict constraints the minimum may only be an
    infimum; in that case a ``ValueError`` is raised instead of returning
    a point that does not attain it.
    """
    names = lp.all_variables()
    sx = Simplex()
    index = {name: sx.add_var() for name in names}
    ok = True
    for term, rel, bound in lp.constraints:
        b = to_q(bound)
        if len(term) == 0:
            if not _holds(Fraction(0), rel, bound):
                ok = False
            continue
        if len(term) == 1:
            (v, c), = term.items()
            c = to_q(c)
            r = rel if c > 0 else _FLIP[rel]
            if not _assert_bound(sx, index[v], r, b / c):
                ok = False
            continue
        row = sx.add_row((index[v], to_q(c)) for v, c in term.items())
        if not _assert_bound(sx, row, rel, b):
            ok = False
    if not ok or not sx.check():
        return LPResult(LPStatus.INFEASIBLE)

    value = None
    status = LPStatus.FEASIBLE
    if lp.objective is not None:
        objective = {index[v]: to_q(c) for v, c in lp.objective.items()}
        outcome, opt = sx.minimize(objective)
        if outcome == "unbounded":
            status = LPStatus.UNBOUNDED
        else:
            if delta_part(opt) != 0:
                raise ValueError("the minimum is not attained under strict constraints")
            status = LPStatus.OPTIMAL
            value = _fraction(real_part(opt))
    model = sx.model()
    assignment = {name: _fraction(model[index[name]]) for name in names}
    if not lp.satisfied_by(assignment):  # pragma: no cover - would be a solver bug
        raise AssertionError("LP solution failed exact re-verification")
    if value is not None:
        assert lp.objective.evaluate(assignment) == value
    return LPResult(status, assignment, value)


def minimize_slacks(lp: LinearProgram, slacks: Sequence[Hashable], method: str = "delta") -> LPResult:
    """Is there an assignment with every slack strictly negative?

    ``method="delta"`` asserts ``z < 0`` directly.  ``method="maxmin"``
    instead maximises ``t`` subject to ``z + t <= 0`` and ``t <= 1`` and
    accepts when the optimum is positive.  Both answer the same question,
    which makes them useful as cross-checks of each other.
    """
    if method == "delta":
        strict = LinearProgram(list(lp.variables), list(lp.constraints))
        for z in slacks:
            strict.add({z: 1}, Relation.LT, 0)
        result = solve(strict)
        if result.status is LPStatus.INFEASIBLE:
            return result
        return LPResult(LPStatus.FEASIBLE, result.assignment)
    if method == "maxmin":
        t = ("__margin__",)
        relaxed = LinearProgram(list(lp.variables) + [t], list(lp.constraints))
        for z in slacks:
            relaxed.add({z: 1, t: 1}, Relation.LE, 0)
        relaxed.add({t: 1}, Relation.LE, 1)
        relaxed.objective = LinearTerm({t: -1})
        result = solve(relaxed)
        if result.status is LPStatus.INFEASIBLE or (result.value is not None and result.value >= 0):
            return LPResult(LPStatus.INFEASIBLE)
        assignment = {k: v for k, v in result.assignment.items() if k != t}
        return LPResult(LPStatus.FEASIBLE, assignment)
    raise ValueError(f"unknown method {method!r}")


def lp_from_rows(rows: Iterable[tuple[dict, str, object]]) -> LinearProgram:
    """Convenience builder: ``[({var: coef}, rel, bound), ...]``."""
    lp = LinearProgram()
    for coeffs, rel, bound in rows:
        lp.add(coeffs, rel, bound)
    return lp
