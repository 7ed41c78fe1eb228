"""Independent reference procedures used to test everything else.

None of these share code with the branch-and-bound verifier: satisfiability
is decided by enumerating assignments, reachability by enumerating every
phase vector of the PWL program and solving each phase LP, and the Boolean
grid check simply evaluates a generated network on canonical encodings.
All of them refuse inputs above a size cap instead of running forever.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .core import eval_network
from .lp import LPStatus
from .pwlprog import build_program, check_phase, phase_space_size

__all__ = [
    "OracleCapExceeded",
    "SAT_CAP",
    "PHASE_CAP",
    "sat_bruteforce",
    "reach_bruteforce",
    "GridReport",
    "boolean_grid_check",
    "satisfies",
]

SAT_CAP = 20
PHASE_CAP = 1 << 16


class OracleCapExceeded(ValueError):
    """The input is larger than the oracle is willing to enumerate."""


def satisfies(formula, assignment: Sequence[bool]) -> bool:
    """``formula.clauses`` holds DIMACS-style literals (1-based, signed)."""
    return all(any((lit > 0) == bool(assignment[abs(lit) - 1]) for lit in clause)
               for clause in formula.clauses)


def sat_bruteforce(formula, cap: int = SAT_CAP):
    """A satisfying assignment (tuple of bools) or None."""
    n = formula.num_vars
    if n > cap:
        raise OracleCapExceeded(f"{n} variables exceed the brute-force cap of {cap}")
    for bits in itertools.product((False, True), repeat=n):
        if satisfies(formula, bits):
            return bits
    return None


@dataclass
class BruteResult:
    reachable: bool
    witness: list[Fraction] | None
    phases_checked: int


def reach_bruteforce(instance, cap: int = PHASE_CAP, method: str = "delta") -> BruteResult:
    """Decide reachability by trying every phase vector.

    Discontinuous activations are handled through the strict phase LPs of
    :mod:`reachkit.pwlprog`; ``method`` selects how the strict slack
    constraints are solved.
    """
    prog = build_program(instance.network, instance.phi_in, instance.phi_out)
    size = phase_space_size(prog)
    if size > cap:
        raise OracleCapExceeded(f"phase space of {size} exceeds the cap of {cap}")
    count = 0
    for phases in itertools.product(*(range(eq.activation.num_pieces) for eq in prog.equalities)):
        count += 1
        result = check_phase(prog, phases, method=method)
        if result.status is not LPStatus.INFEASIBLE:
            witness = [result.assignment[v] for v in prog.input_vars]
            return BruteResult(True, witness, count)
    return BruteResult(False, None, count)


@dataclass
class GridReport:
    total: int = 0
    agree: int = 0
    mismatches: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.total == self.agree


def boolean_grid_check(generated, cap: int = 16) -> GridReport:
    """Evaluate a generated instance on every canonical Boolean encoding.

    For each assignment the output specification must hold exactly when
    the assignment satisfies the source formula, and the input
    specification must hold throughout.
    """
    formula = generated.formula
    n = formula.num_vars
    if n > cap:
        raise OracleCapExceeded(f"{n} variables exceed the grid cap of {cap}")
    inst = generated.instance
    report = GridReport()
    for bits in itertools.product((False, True), repeat=n):
        x = generated.encode(bits)
        out = eval_network(inst.network, x)
        expected = satisfies(formula, bits)
        got = inst.phi_in.holds(x) and inst.phi_out.holds(out)
        report.total += 1
        if got == expected:
            report.agree += 1
        else:
            report.mismatches.append((bits, expected, got))
    return report
