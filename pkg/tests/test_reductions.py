import itertools
from fractions import Fraction as F

import pytest

from reachkit.core import IDENTITY, RELU, Network, Node, PWLFunction, eval_network
from reachkit.reductions import (
    REDUCTIONS,
    CnfFormula,
    DimacsError,
    GadgetKind,
    format_dimacs,
    generate,
    load_generated,
    make_gadget,
    parse_dimacs,
    reduce_fanin1,
    save_generated,
    to_relu_only,
)
from reachkit.verifier import decide

PSI = CnfFormula(4, ((1, 2, 3), (-1, 2, -3), (-2, 3, 4)))
PARAMS = {"weights": dict(c=F(3, 2), d=2), "nozero": dict(c=1)}


def test_dimacs_roundtrip_and_padding():
    f = parse_dimacs("c demo\np cnf 3 2\n1 -2 0\n-3 2 1 0\n")
    assert f.clauses == ((1, -2, -2), (-3, 2, 1))
    assert parse_dimacs(format_dimacs(f)) == f


@pytest.mark.parametrize("text", [
    "p cnf 2 1\n1 2 -1 2 0\n",  # four literals
    "p cnf 2 1\n0\n",           # empty clause
    "p cnf 2 1\n1 3 0\n",       # variable out of range
    "p cnf 2 2\n1 2 0\n",       # clause count mismatch
    "1 2 0\n",                  # no header
])
def test_dimacs_errors(text):
    with pytest.raises(DimacsError):
        parse_dimacs(text)


def test_gadget_parameter_errors():
    with pytest.raises(ValueError):
        make_gadget(GadgetKind.DISCRETE, c=0, d=1)
    with pytest.raises(ValueError):
        make_gadget(GadgetKind.NORM, c=1)
    with pytest.raises(ValueError):
        make_gadget(GadgetKind.AND, n=0)
    with pytest.raises(ValueError):
        generate(PSI, "bogus")


def test_relu_only_identity_example():
    net = make_gadget(GadgetKind.NOT)
    deep = Network(1, [[Node((1,), 0, IDENTITY)], [Node((-1,), 1, IDENTITY)]])
    new = to_relu_only(deep)
    assert new.depth == deep.depth
    assert all(n.activation == RELU for n in new.layers[0])
    for x in (F(-5), F(0), F(7, 2)):
        assert eval_network(new, [x]) == eval_network(deep, [x])
    assert eval_network(net, [F(0)]) == [1]


def test_relu_only_rejects_other_activations():
    step = PWLFunction(((0, 0), (0, 1)), (0,))
    with pytest.raises(ValueError):
        to_relu_only(Network(1, [[Node((1,), 0, step)], [Node((1,), 0)]]))


@pytest.mark.parametrize("reduction", REDUCTIONS)
def test_file_roundtrip(reduction, tmp_path):
    gen = generate(PSI, reduction, **PARAMS.get(reduction, {}))
    save_generated(gen, tmp_path / "psi")
    assert load_generated(tmp_path / "psi") == gen


def test_general_example_formula():
    gen = generate(PSI, "general")
    assert gen.instance.network.input_dim == 4
    assert gen.output_names[-1] == "y"
    y = gen.output_index()["y"]
    values = [c.bound for c in gen.instance.phi_out.conjuncts if set(c.term.variables()) == {y}]
    assert F(3) in values
    assert decide(gen.instance).reachable


def test_single_layer_interior_input_misses():
    gen = generate(PSI, "single-layer")
    y_target = F(PSI.num_vars, 2)
    for bits in itertools.product((0, 1), repeat=4):
        x = [F(b) for b in bits]
        x[2] = F(1, 3)
        assert eval_network(gen.instance.network, x)[0] < y_target


def test_fanin1_witness_is_boolean():
    res = decide(reduce_fanin1(PSI).instance)
    assert res.reachable and set(res.witness) <= {0, 1}


def test_unsat_formula_unreachable_everywhere():
    f = CnfFormula(1, ((1, 1, 1), (-1, -1, -1)))
    for reduction in REDUCTIONS:
        assert not decide(generate(f, reduction, **PARAMS.get(reduction, {})).instance).reachable


def test_size_grows_linearly():
    sizes = {r: [] for r in REDUCTIONS}
    for k in range(1, 6):
        f = CnfFormula(k + 2, tuple((i + 1, -(i + 2), i + 3) for i in range(k)))
        for r in REDUCTIONS:
            sizes[r].append(generate(f, r, **PARAMS.get(r, {})).instance.network.num_nodes)
    for r, s in sizes.items():
        diffs = [b - a for a, b in zip(s, s[1:])]
        assert all(d > 0 for d in diffs), r
        # linear growth: the per-step increment does not keep growing
        assert max(diffs) <= 2 * min(diffs), (r, s)


def test_simplicity():
    for r in REDUCTIONS:
        gen = generate(PSI, r, **PARAMS.get(r, {}))
        assert gen.instance.phi_out.is_simple
        assert gen.instance.phi_in.is_simple == (r != "nozero")


def test_fanin1_unboxed_is_unsound():
    # the repair terms of x0 = 1/2 and x1 = 3/2 cancel, so z = 0 off the Boolean grid
    f = CnfFormula(2, ((1, 1, 1), (-1, -1, -1)))
    assert decide(reduce_fanin1(f, box_inputs=False).instance).reachable
    assert not decide(reduce_fanin1(f).instance).reachable
