from fractions import Fraction as F

import pytest

from reachkit.core import OUTPUT, RELU, Network, Node, Specification
from reachkit.oracle import (
    OracleCapExceeded,
    boolean_grid_check,
    reach_bruteforce,
    sat_bruteforce,
    satisfies,
)
from reachkit.reductions import CnfFormula, generate
from reachkit.verifier import ReachInstance


def test_sat_bruteforce():
    f = CnfFormula(2, ((1, 1, 2), (-1, -1, -1)))
    model = sat_bruteforce(f)
    assert tuple(model) == (False, True)
    assert satisfies(f, model)
    assert sat_bruteforce(CnfFormula(1, ((1, 1, 1), (-1, -1, -1)))) is None
    with pytest.raises(OracleCapExceeded):
        sat_bruteforce(CnfFormula(30, ((1, 2, 3),)))


def test_reach_bruteforce_methods():
    net = Network(1, [[Node((1,), 0, RELU), Node((-1,), 0, RELU)], [Node((1, 1), -2, RELU)]])
    inst = ReachInstance(net, Specification.box({0: (-1, 3)}), Specification.box({0: (1, None)}, OUTPUT))
    a = reach_bruteforce(inst)
    b = reach_bruteforce(inst, method="maxmin")
    assert a.reachable and b.reachable
    assert a.witness[0] >= 3
    with pytest.raises(OracleCapExceeded):
        reach_bruteforce(inst, cap=2)


def test_grid_check_detects_mismatch():
    f = CnfFormula(2, ((1, 2, 2),))
    gen = generate(f, "general")
    assert boolean_grid_check(gen).ok
    broken = type(gen)(gen.instance, gen.tag, CnfFormula(2, ((-1, -2, -2),)), gen.params,
                       gen.input_names, gen.output_names)
    rep = boolean_grid_check(broken)
    assert not rep.ok and rep.mismatches
    assert rep.total == 4 and rep.agree == 4 - len(rep.mismatches)
    assert F(rep.agree, rep.total) < 1
