"""PWL-linear programs and their phase-fixed linear relaxations.

A reachability instance unfolds into one variable per input and per
node, the specification conjuncts as linear constraints, and one
PWL-equality ``y = f(term + constant)`` per node.  Choosing a piece for
every equality (a *phase vector*) turns the program into a plain LP.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .core import LinearTerm, Network, PWLFunction, Specification
from .lp import LinearProgram, LPResult, LPStatus, Relation, minimize_slacks, solve

__all__ = [
    "PWLEquality",
    "PWLProgram",
    "input_var",
    "node_var",
    "build_program",
    "fix_phases",
    "check_phase",
    "phase_space_size",
    "encode_phase",
    "decode_phase",
    "enumerate_phases",
]


def input_var(i: int) -> str:
    return f"x{i}"


def node_var(layer: int, index: int) -> str:
    return f"y{layer}_{index}"


@dataclass(frozen=True)
class PWLEquality:
    """``result = activation(term + constant)``."""

    activation: PWLFunction
    term: LinearTerm
    constant: Fraction
    result: str


@dataclass
class PWLProgram:
    variables: list[str]
    linear: list[tuple[LinearTerm, Relation, Fraction]]  # always "<="
    equalities: list[PWLEquality]
    input_vars: list[str] = field(default_factory=list)
    output_vars: list[str] = field(default_factory=list)

    @property
    def strict_needed(self) -> bool:
        return any(not eq.activation.continuous for eq in self.equalities)

    def holds(self, assignment) -> bool:
        """Exact check of every constraint under a full assignment."""
        for term, rel, bound in self.linear:
            if not term.evaluate(assignment) <= bound:
                return False
        for eq in self.equalities:
            arg = eq.term.evaluate(assignment) + eq.constant
            if assignment[eq.result] != eq.activation(arg):
                return False
        return True


def build_program(net: Network, phi_in: Specification, phi_out: Specification) -> PWLProgram:
    inputs = [input_var(i) for i in range(net.input_dim)]
    last = len(net.layers)
    outputs = [node_var(last, j) for j in range(net.output_dim)]
    linear = []
    for c in phi_in.conjuncts:
        linear.append((c.term.rename(lambda i: inputs[i]), Relation.LE, c.bound))
    for c in phi_out.conjuncts:
        linear.append((c.term.rename(lambda j: outputs[j]), Relation.LE, c.bound))
    equalities = []
    variables = list(inputs)
    prev = inputs
    for li, layer in enumerate(net.layers, start=1):
        cur = []
        for ni, node in enumerate(layer):
            name = node_var(li, ni)
            term = LinearTerm(zip(prev, node.weights))
            equalities.append(PWLEquality(node.activation, term, node.bias, name))
            cur.append(name)
        variables.extend(cur)
        prev = cur
    return PWLProgram(variables, linear, equalities, inputs, outputs)


def fix_phases(prog: PWLProgram, phases: Sequence[int], strict: bool | None = None):
    """The linear program ``Phi_w`` and the slack variables it introduces.

    Each equality ``y = f(s)`` with chosen piece ``w`` contributes
    ``y = a_w s + b_w`` together with ``s >= t_w`` and ``s < t_{w+1}``.
    When ``strict`` is False (the default for continuous activations) the
    upper bound is closed, which loses nothing because neighbouring pieces
    agree at the breakpoint.  When ``strict`` is True the upper bound is
    written as ``s - z <= t_{w+1}`` with a fresh slack ``z`` that has to be
    made negative; the slacks are returned alongside the LP.
    """
    if len(phases) != len(prog.equalities):
        raise ValueError(f"expected {len(prog.equalities)} phases, got {len(phases)}")
    if strict is None:
        strict = prog.strict_needed
    lp = LinearProgram(list(prog.variables), list(prog.linear))
    slacks = []
    for h, (eq, w) in enumerate(zip(prog.equalities, phases)):
        f = eq.activation
        if not 0 <= w < f.num_pieces:
            raise ValueError(f"phase {w} out of range for equality {h}")
        a, b = f.pieces[w]
        arg = eq.term
        # y - a*term = a*constant + b
        lp.add(LinearTerm({eq.result: 1}) - arg.scale(a), Relation.EQ, a * eq.constant + b)
        lo, hi = f.interval(w)
        if lo is not None:
            lp.add(arg, Relation.GE, lo - eq.constant)
        if hi is not None:
            if strict:
                z = f"z{h}"
                lp.variables.append(z)
                lp.add(arg - LinearTerm({z: 1}), Relation.LE, hi - eq.constant)
                slacks.append(z)
            else:
                lp.add(arg, Relation.LE, hi - eq.constant)
    return lp, slacks


def check_phase(prog: PWLProgram, phases: Sequence[int], strict: bool | None = None,
                method: str = "delta") -> LPResult:
    """Feasibility of ``Phi_w``.  A feasible answer is re-checked on the PWL program."""
    if strict is None:
        strict = prog.strict_needed
    lp, slacks = fix_phases(prog, phases, strict)
    result = minimize_slacks(lp, slacks, method) if slacks else solve(lp)
    if result.status is LPStatus.INFEASIBLE:
        return result
    point = {v: result.assignment[v] for v in prog.variables}
    # closed phases are only exact when every activation is continuous
    if (strict or not prog.strict_needed) and not prog.holds(point):  # pragma: no cover
        raise AssertionError("phase LP solution violates the PWL program")
    return LPResult(LPStatus.FEASIBLE, point)


def phase_space_size(prog: PWLProgram) -> int:
    size = 1
    for eq in prog.equalities:
        size *= eq.activation.num_pieces
    return size


def encode_phase(prog: PWLProgram, phases: Sequence[int]) -> int:
    """Mixed-radix integer for a phase vector (first equality is most significant)."""
    code = 0
    for eq, w in zip(prog.equalities, phases):
        code = code * eq.activation.num_pieces + w
    return code


def decode_phase(prog: PWLProgram, code: int) -> list[int]:
    out = []
    for eq in reversed(prog.equalities):
        k = eq.activation.num_pieces
        out.append(code % k)
        code //= k
    if code:
        raise ValueError("phase code out of range")
    return out[::-1]


def enumerate_phases(prog: PWLProgram):
    return itertools.product(*(range(eq.activation.num_pieces) for eq in prog.equalities))


# single-piece activations are always "fixed"; handy for callers that only
# want to branch on real choices
def branching_equalities(prog: PWLProgram) -> list[int]:
    return [h for h, eq in enumerate(prog.equalities) if eq.activation.num_pieces > 1]

