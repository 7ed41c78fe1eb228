from fractions import Fraction as F

import pytest

from randnets import corpus
from reachkit.core import IDENTITY, INPUT, OUTPUT, RELU, Network, Node, PWLFunction, Specification
from reachkit.oracle import reach_bruteforce
from reachkit.reductions import CnfFormula, generate
from reachkit.verifier import (
    BUDGET_ENV,
    BudgetExceeded,
    ReachInstance,
    Verdict,
    VerifierConfig,
    check_witness,
    decide,
    instance_bits,
    rational_bits,
    witness_bits,
    witness_size_report,
)

STEP = PWLFunction(((0, 0), (0, 1)), (0,))


def _inst(net, box, out):
    return ReachInstance(net, Specification.box(box), Specification.box(out, OUTPUT))


def test_relu_abs_value():
    # |x| = ReLU(x) + ReLU(-x) reaches 3 on [-4, 1] only at x = -3
    net = Network(1, [[Node((1,), 0, RELU), Node((-1,), 0, RELU)], [Node((1, 1), 0, IDENTITY)]])
    res = decide(_inst(net, {0: (-4, 1)}, {0: (3, 3)}))
    assert res.verdict is Verdict.REACHABLE
    assert res.witness == [-3]
    assert not decide(_inst(net, {0: (-2, 1)}, {0: (3, None)})).reachable


def test_strict_breakpoint():
    # STEP(x) = 0 needs x < 0, impossible on [0, 1]
    net = Network(1, [[Node((1,), 0, STEP)]])
    assert not decide(_inst(net, {0: (0, 1)}, {0: (0, 0)})).reachable
    res = decide(_inst(net, {0: (-1, 0)}, {0: (0, 0)}))
    assert res.reachable and res.witness[0] < 0


def test_strict_option_on_continuous_network():
    # ReLU(x) = 0 on [0, 1] only at the breakpoint x = 0
    net = Network(1, [[Node((1,), 0, RELU)]])
    inst = _inst(net, {0: (0, 1)}, {0: (0, 0)})
    for strict in (None, True, False):
        res = decide(inst, VerifierConfig(strict=strict))
        assert res.reachable and res.witness == [0]


def test_empty_input_spec():
    net = Network(1, [[Node((1,), 0, RELU)]])
    inst = ReachInstance(net, Specification.bottom(INPUT), Specification.top(OUTPUT))
    assert not decide(inst).reachable


def test_budgets():
    formula = CnfFormula(4, ((1, 2, 3), (-1, -2, 4), (2, -3, -4), (-2, 3, 1), (-1, -4, -3)))
    inst = generate(formula, "general", relu_only=True).instance
    with pytest.raises(BudgetExceeded) as err:
        decide(inst, VerifierConfig(node_budget=1, tighten="off"))
    assert err.value.stats.nodes_explored >= 1
    with pytest.raises(BudgetExceeded):
        decide(inst, VerifierConfig(time_budget_ms=1))


def test_env_budget(monkeypatch):
    monkeypatch.setenv(BUDGET_ENV, "1234")
    assert VerifierConfig().with_env().time_budget_ms == 1234
    assert VerifierConfig(time_budget_ms=5).with_env().time_budget_ms == 5


def test_sizes():
    assert rational_bits(F(3, 4)) == 2 + 3
    assert witness_bits([F(0), F(1)]) == rational_bits(0) + rational_bits(1)
    net = Network(1, [[Node((1,), 0, RELU)]])
    inst = _inst(net, {0: (0, 1)}, {0: (F(1, 2), None)})
    res = decide(inst)
    report = witness_size_report(inst, res)
    assert report["verdict"] == "reachable"
    assert report["instance_bits"] == instance_bits(inst) > 0
    assert check_witness(inst, res.witness)


CORPUS = corpus(seed=11, count=60)


@pytest.mark.parametrize("config", [
    VerifierConfig(),
    VerifierConfig(strict=True),
    VerifierConfig(relaxation="phases", order="layer", propagate=False),
    VerifierConfig(tighten="lp"),
    VerifierConfig(tighten="off", order="layer"),
], ids=["default", "strict", "plain", "tighten-lp", "tighten-off"])
def test_configs_agree_with_bruteforce(config):
    for inst in CORPUS:
        expected = reach_bruteforce(inst).reachable
        res = decide(inst, config)
        assert res.reachable == expected
        if res.reachable:
            assert check_witness(inst, res.witness)


def test_parallel_matches_serial():
    for inst in CORPUS[:12]:
        a = decide(inst)
        b = decide(inst, VerifierConfig(workers=2))
        assert a.reachable == b.reachable
