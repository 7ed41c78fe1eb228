from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reachkit.core import (
    IDENTITY,
    INPUT,
    OUTPUT,
    RELU,
    LinearTerm,
    Network,
    Node,
    PWLFunction,
    ShapeError,
    Specification,
    eval_layers,
    eval_network,
    eval_pwl,
    to_rational,
)
from reachkit.formats import (
    ParseError,
    format_spec,
    network_from_json,
    network_to_json,
    parse_spec,
    parse_vector,
)

rationals = st.fractions(max_denominator=50).filter(lambda q: abs(q) < 100)

STEP = PWLFunction(((0, 0), (0, 1)), (0,))


def test_to_rational_rejects_floats():
    with pytest.raises(TypeError):
        to_rational(0.5)
    assert to_rational("3/2") == F(3, 2)
    assert to_rational(-4) == -4


def test_breakpoint_belongs_to_upper_piece():
    assert STEP(F(0)) == 1
    assert STEP(F(-1, 1000)) == 0
    assert RELU(F(0)) == 0
    assert RELU.piece_index(F(0)) == 1
    assert not STEP.continuous
    assert RELU.continuous


def test_pwl_validation():
    with pytest.raises(ValueError):
        PWLFunction(((1, 0), (2, 0)), ())
    with pytest.raises(ValueError):
        PWLFunction(((1, 0), (2, 0), (3, 0)), (1, 1))


@given(rationals)
def test_relu_and_identity(x):
    assert eval_pwl(RELU, x) == max(x, 0)
    assert eval_pwl(IDENTITY, x) == x


def test_network_shape_checks():
    with pytest.raises(ShapeError):
        Network(2, [[Node((1,), 0)]])
    with pytest.raises(ValueError):
        Network(1, [])


def test_eval_small_network():
    net = Network(2, [[Node((1, -1), 0, RELU), Node((1, 1), F(-1, 2), IDENTITY)],
                      [Node((2, 1), 0, IDENTITY)]])
    assert net.depth == 3
    assert net.widths == [2, 1]
    layers = eval_layers(net, [F(3), F(1)])
    assert layers[0] == [3, 1]
    assert layers[1] == [2, F(7, 2)]
    assert eval_network(net, [F(3), F(1)]) == [F(15, 2)]
    assert net.weight_alphabet() == {F(-1), F(0), F(1), F(-1, 2), F(2)}


@settings(max_examples=50)
@given(st.lists(rationals, min_size=2, max_size=2))
def test_eval_matches_manual(x):
    net = Network(2, [[Node((1, -1), 0, RELU)], [Node((3,), 1, STEP)]])
    s = max(x[0] - x[1], 0) * 3 + 1
    assert eval_network(net, x) == [1 if s >= 0 else 0]


def test_spec_helpers():
    box = Specification.box({0: (0, 1), 1: (None, F(1, 2))})
    assert box.holds([F(1, 2), F(1, 2)])
    assert not box.holds([F(3, 2), 0])
    assert box.is_simple
    eq = Specification.equalities({0: 2}, OUTPUT)
    assert eq.holds([2]) and not eq.holds([3])
    assert Specification.top().holds([5])
    assert not Specification.bottom().holds([5])
    with pytest.raises(ValueError):
        box & eq


def test_linear_term_arithmetic():
    t = LinearTerm({0: 1, 1: -2})
    assert (t - t).coeffs == {}
    assert t.scale(F(1, 2))[1] == -1
    assert t.evaluate([F(1), F(1)]) == -1


def test_spec_text_roundtrip():
    spec = parse_spec("# box\n2*x0 - 1/3*x1 <= 5\nx1 >= -1\n\nx0 == 1/2\n")
    assert spec.namespace == INPUT
    again = parse_spec(format_spec(spec))
    assert again == spec
    assert not spec.is_simple


def test_spec_names_and_errors():
    spec = parse_spec("y == 3\nz0 <= 0", OUTPUT, {"z0": 0, "y": 1})
    assert spec.holds([0, 3])
    with pytest.raises(ParseError) as err:
        parse_spec("x0 <= 1\nx0 <== 2")
    assert err.value.line == 2
    with pytest.raises(ParseError):
        parse_spec("w3 <= 1")
    with pytest.raises(ParseError):
        parse_vector("1, one")
    assert parse_vector("1 0.5") == [1, F(1, 2)]


def test_network_json_roundtrip():
    net = Network(1, [[Node((F(1, 3),), F(-2), STEP), Node((1,), 0, RELU)],
                      [Node((1, 1), 0, IDENTITY)]])
    assert network_from_json(network_to_json(net)) == net
    with pytest.raises(ValueError):
        network_from_json({"input_dim": 1, "layers": [[{"weights": [0.5], "bias": "0", "activation": "id"}]]})
