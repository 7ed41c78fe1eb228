"""3SAT to reachability: gadgets, the reduction families and a ReLU-only rewrite.

Every generator takes a 3-CNF formula and returns a
:class:`GeneratedInstance`, a reachability instance that is reachable
exactly when the formula is satisfiable, together with names for its
inputs and outputs and the canonical Boolean encoding used by the
reduction.  The families differ in which syntactic restriction they
respect:

``general``        ReLU and identity nodes, simple specifications
``single-layer``   one hidden ReLU layer, box input specification
``fanin1``         every ReLU node reads exactly one value
``fanin2``         pure ReLU network, every node reads at most two values
``weights``        every weight and bias in ``{-c, 0, d}``
``nozero``         every weight and bias in ``{-c, c}``
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .core import (
    IDENTITY,
    INPUT,
    OUTPUT,
    RELU,
    Conjunct,
    LinearTerm,
    Network,
    Node,
    Specification,
    equality,
    to_rational,
)
from .formats import load_network, load_spec, save_network, save_spec
from .verifier import ReachInstance

__all__ = [
    "CnfFormula",
    "DimacsError",
    "parse_dimacs",
    "load_dimacs",
    "format_dimacs",
    "GadgetKind",
    "make_gadget",
    "GeneratedInstance",
    "REDUCTIONS",
    "reduce_general",
    "reduce_single_layer",
    "reduce_fanin1",
    "reduce_fanin2",
    "reduce_restricted_weights",
    "reduce_no_zero",
    "to_relu_only",
    "relu_only_instance",
    "generate",
    "bias_chain_value",
    "save_generated",
    "load_generated",
]


# ---------------------------------------------------------------------------
# CNF formulas


class DimacsError(ValueError):
    pass


@dataclass(frozen=True)
class CnfFormula:
    """A 3-CNF formula; literals are DIMACS integers (``-2`` is "not X2")."""

    num_vars: int
    clauses: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        clauses = tuple(tuple(int(l) for l in c) for c in self.clauses)
        for c in clauses:
            if len(c) != 3:
                raise ValueError(f"clause {c} does not have exactly three literals")
            for lit in c:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise ValueError(f"literal {lit} out of range for {self.num_vars} variables")
        object.__setattr__(self, "clauses", clauses)

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    def satisfied_by(self, assignment: Sequence[bool]) -> bool:
        return all(any((l > 0) == bool(assignment[abs(l) - 1]) for l in c) for c in self.clauses)


def parse_dimacs(text: str) -> CnfFormula:
    """Parse DIMACS CNF.  Short clauses are padded by repeating their last literal."""
    header = None
    literals: list[int] = []
    clauses: list[tuple[int, ...]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            m = re.fullmatch(r"p\s+cnf\s+(\d+)\s+(\d+)", line)
            if not m or header is not None:
                raise DimacsError(f"line {lineno}: bad problem line {line!r}")
            header = (int(m.group(1)), int(m.group(2)))
            continue
        if header is None:
            raise DimacsError(f"line {lineno}: clause before the problem line")
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(f"line {lineno}: not a literal: {tok!r}") from None
            if lit == 0:
                clauses.append(_pad(literals, lineno))
                literals = []
            else:
                if abs(lit) > header[0]:
                    raise DimacsError(f"line {lineno}: literal {lit} exceeds {header[0]} variables")
                literals.append(lit)
    if header is None:
        raise DimacsError("missing 'p cnf' problem line")
    if literals:
        clauses.append(_pad(literals, None))
    if len(clauses) != header[1]:
        raise DimacsError(f"header announces {header[1]} clauses, found {len(clauses)}")
    return CnfFormula(header[0], tuple(clauses))


def _pad(literals: list[int], lineno) -> tuple[int, int, int]:
    where = f"line {lineno}: " if lineno else ""
    if not literals:
        raise DimacsError(where + "empty clause")
    if len(literals) > 3:
        raise DimacsError(where + f"clause with {len(literals)} literals; only 3-CNF is supported")
    while len(literals) < 3:
        literals = literals + [literals[-1]]
    return tuple(literals)


def load_dimacs(path) -> CnfFormula:
    return parse_dimacs(Path(path).read_text())


def format_dimacs(formula: CnfFormula) -> str:
    lines = [f"p cnf {formula.num_vars} {formula.num_clauses}"]
    lines += [" ".join(str(l) for l in c) + " 0" for c in formula.clauses]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# a small layered builder


Ref = tuple  # (layer, index); layer 0 holds the inputs


class _Builder:
    def __init__(self, num_inputs: int):
        self.num_inputs = num_inputs
        self.layers: dict[int, list] = {}

    def input(self, i: int) -> Ref:
        return (0, i)

    def node(self, layer: int, edges, bias=0, act=IDENTITY) -> Ref:
        acc: dict[Ref, Fraction] = {}
        for ref, w in (edges.items() if isinstance(edges, dict) else edges):
            if ref[0] != layer - 1:
                raise ValueError(f"edge from layer {ref[0]} into layer {layer}")
            acc[ref] = acc.get(ref, Fraction(0)) + to_rational(w)
        nodes = self.layers.setdefault(layer, [])
        nodes.append((acc, to_rational(bias), act))
        return (layer, len(nodes) - 1)

    def carry(self, ref: Ref, to_layer: int, weight=1, act=IDENTITY) -> Ref:
        while ref[0] < to_layer:
            ref = self.node(ref[0] + 1, {ref: weight}, 0, act)
        return ref

    def build(self, outputs: Sequence[Ref]) -> tuple[Network, dict]:
        top = max(self.layers)
        if any(r[0] != top for r in outputs):
            raise ValueError("all outputs must sit in the last layer")
        if sorted(r[1] for r in outputs) != list(range(len(self.layers[top]))):
            raise ValueError("the last layer must consist of exactly the outputs")
        perm = {r: k for k, r in enumerate(outputs)}
        layers = []
        width = self.num_inputs
        position: dict[Ref, int] = {(0, i): i for i in range(self.num_inputs)}
        for li in range(1, top + 1):
            raw = self.layers.get(li, [])
            order = list(range(len(raw)))
            if li == top:
                order.sort(key=lambda k: perm[(li, k)])
            nodes = []
            for pos, k in enumerate(order):
                edges, bias, act = raw[k]
                weights = [Fraction(0)] * width
                for ref, w in edges.items():
                    weights[position[ref]] += w
                nodes.append(Node(tuple(weights), bias, act))
            for pos, k in enumerate(order):
                position[(li, k)] = pos
            layers.append(tuple(nodes))
            width = len(nodes)
        return Network(self.num_inputs, tuple(layers)), position


# ---------------------------------------------------------------------------
# gadgets


class GadgetKind(str, enum.Enum):
    NOT = "not"
    OR3 = "or3"
    AND = "and"
    BOOL_EPS = "bool-eps"
    BOOL_REPAIRED = "bool-repaired"
    DISCRETE = "discrete"
    INVERSE_EQ = "inverse-eq"
    NORM = "norm"
    NORM_NOT = "norm-not"
    OR_LE_ONE = "or-le-one"
    OR_GE_ONE = "or-ge-one"
    AND_D = "and-d"
    OR_PRIME = "or-prime"


def _not(b: _Builder, x: Ref) -> Ref:
    return b.node(x[0] + 1, {x: -1}, 1)


def _or3(b: _Builder, xs: Sequence[Ref]) -> Ref:
    layer = xs[0][0]
    r = b.node(layer + 1, [(x, -1) for x in xs], 1, RELU)
    return b.node(layer + 2, {r: -1}, 1)


def _and(b: _Builder, xs: Sequence[Ref], weight=1) -> Ref:
    return b.node(xs[0][0] + 1, [(x, weight) for x in xs], 0)


def _bool_eps(b: _Builder, x: Ref, eps) -> Ref:
    eps = to_rational(eps)
    r1 = b.node(x[0] + 1, {x: -1}, eps, RELU)
    r2 = b.node(x[0] + 1, {x: 1}, eps - 1, RELU)
    return b.node(x[0] + 2, {r1: 1, r2: 1}, 0)


def _bool_repaired(b: _Builder, x: Ref) -> Ref:
    half = Fraction(1, 2)
    r1 = b.node(x[0] + 1, {x: -1}, half, RELU)
    r2 = b.node(x[0] + 1, {x: 1}, -half, RELU)
    return b.node(x[0] + 2, {r1: 1, r2: 1}, -half)


def _discrete(b: _Builder, x: Ref, c, d) -> Ref:
    r1 = b.node(x[0] + 1, {x: -c}, 0, RELU)
    r2 = b.node(x[0] + 1, {x: d}, 0, RELU)
    return b.node(x[0] + 2, {r1: -c, r2: -c}, d)


def _inverse_eq(b: _Builder, x1: Ref, x2: Ref, c) -> Ref:
    return b.node(x1[0] + 1, [(x1, -c), (x2, -c)], 0)


def _norm(b: _Builder, x: Ref, c, d) -> Ref:
    r = b.node(x[0] + 1, {x: -c}, 0, RELU)
    m = b.node(x[0] + 2, {r: -c}, d)
    return b.node(x[0] + 3, {m: -c}, 0)


def _norm_not(b: _Builder, x: Ref, c, d) -> Ref:
    m = b.node(x[0] + 1, {x: -c}, 0)
    r = b.node(x[0] + 2, {m: -c}, 0, RELU)
    return b.node(x[0] + 3, {r: -c}, 0)


def _const(b: _Builder, consumer_layer: int, k: int, c, d):
    """Edge that delivers ``d * c**k`` into a node of ``consumer_layer``.

    The constant is produced by a chain of ``k`` identity nodes: the first
    has bias ``d`` and no inputs, every further one multiplies by ``-c``,
    and so does the edge into the consumer.  Only even ``k`` give a
    positive sign, which is all the gadgets need.
    """
    if k % 2:
        raise ValueError("constant chains need an even length")
    if consumer_layer - k < 1:
        raise ValueError(f"a chain of length {k} cannot feed layer {consumer_layer}")
    ref = b.node(consumer_layer - k, {}, d)
    for layer in range(consumer_layer - k + 1, consumer_layer):
        ref = b.node(layer, {ref: -c}, 0)
    return ref, -c


def _or_restricted(b: _Builder, xs: Sequence[Ref], c, d, inner: int) -> Ref:
    """``id([dc^4] - c ReLU([dc^inner] + sum -c id(-c x_i)))``."""
    layer = xs[0][0]
    wrapped = [b.node(layer + 1, {x: -c}, 0) for x in xs]
    ref, w = _const(b, layer + 2, inner, c, d)
    r = b.node(layer + 2, [(v, -c) for v in wrapped] + [(ref, w)], 0, RELU)
    ref, w = _const(b, layer + 3, 4, c, d)
    return b.node(layer + 3, [(r, -c), (ref, w)], 0)


_ARITY = {
    GadgetKind.NOT: 1,
    GadgetKind.OR3: 3,
    GadgetKind.BOOL_EPS: 1,
    GadgetKind.BOOL_REPAIRED: 1,
    GadgetKind.DISCRETE: 1,
    GadgetKind.INVERSE_EQ: 2,
    GadgetKind.NORM: 1,
    GadgetKind.NORM_NOT: 1,
    GadgetKind.OR_LE_ONE: 3,
    GadgetKind.OR_GE_ONE: 3,
    GadgetKind.OR_PRIME: 3,
}

# restricted-weight or gadgets need four layers of constant chain in front of
# their ReLU; a stand-alone copy therefore passes its inputs through identity
# "ports" first.  These port nodes are the only nodes outside {-c, 0, d}.
_PORT_DELAY = 3


def make_gadget(kind: GadgetKind | str, *, n: int | None = None, eps=None, c=None, d=None) -> Network:
    """The stand-alone network of a gadget.

    ``n`` is the arity of the and gadgets, ``eps`` the parameter of
    ``bool-eps`` and ``c, d`` those of the restricted-weight gadgets.
    """
    kind = GadgetKind(kind)
    if kind in (GadgetKind.AND, GadgetKind.AND_D):
        if not n or n < 1:
            raise ValueError("and gadgets need n >= 1")
        arity = n
    else:
        arity = _ARITY[kind]
    restricted = kind in (GadgetKind.DISCRETE, GadgetKind.INVERSE_EQ, GadgetKind.NORM,
                          GadgetKind.NORM_NOT, GadgetKind.OR_LE_ONE, GadgetKind.OR_GE_ONE,
                          GadgetKind.AND_D)
    if restricted:
        if c is None or d is None:
            raise ValueError(f"{kind.value} needs parameters c and d")
        c, d = to_rational(c), to_rational(d)
        if c <= 0 or d <= 0:
            raise ValueError("c and d must be positive")
    b = _Builder(arity)
    xs = [b.input(i) for i in range(arity)]
    if kind is GadgetKind.NOT:
        out = _not(b, xs[0])
    elif kind is GadgetKind.OR3:
        out = _or3(b, xs)
    elif kind is GadgetKind.AND:
        out = _and(b, xs)
    elif kind is GadgetKind.BOOL_EPS:
        if eps is None:
            raise ValueError("bool-eps needs eps")
        out = _bool_eps(b, xs[0], eps)
    elif kind is GadgetKind.BOOL_REPAIRED:
        out = _bool_repaired(b, xs[0])
    elif kind is GadgetKind.DISCRETE:
        out = _discrete(b, xs[0], c, d)
    elif kind is GadgetKind.INVERSE_EQ:
        out = _inverse_eq(b, xs[0], xs[1], c)
    elif kind is GadgetKind.NORM:
        out = _norm(b, xs[0], c, d)
    elif kind is GadgetKind.NORM_NOT:
        out = _norm_not(b, xs[0], c, d)
    elif kind is GadgetKind.OR_PRIME:
        out = _or_fanin2(b, xs)
    elif kind in (GadgetKind.OR_LE_ONE, GadgetKind.OR_GE_ONE):
        ports = [b.carry(x, _PORT_DELAY) for x in xs]
        out = _or_restricted(b, ports, c, d, 4 if kind is GadgetKind.OR_LE_ONE else 2)
    else:
        out = _and(b, xs, d)
    net, _ = b.build([out])
    if restricted:
        skip = _PORT_DELAY if kind in (GadgetKind.OR_LE_ONE, GadgetKind.OR_GE_ONE) else 0
        allowed = {-c, Fraction(0), d}
        for li, layer in enumerate(net.layers, start=1):
            if li <= skip:
                continue
            for node in layer:
                assert set(node.weights) | {node.bias} <= allowed, "gadget weight outside {-c, 0, d}"
    return net


# ---------------------------------------------------------------------------
# generated instances


@dataclass(frozen=True)
class GeneratedInstance:
    instance: ReachInstance
    tag: str
    formula: CnfFormula
    params: dict = field(default_factory=dict)
    input_names: tuple[str, ...] = ()
    output_names: tuple[str, ...] = ()

    def encode(self, assignment: Sequence[bool]) -> list[Fraction]:
        """The canonical input vector of a Boolean assignment."""
        n = self.formula.num_vars
        if len(assignment) != n:
            raise ValueError(f"expected {n} truth values")
        bits = [bool(a) for a in assignment]
        base = self.tag.split("+")[0]
        if base in ("weights", "nozero"):
            c, d = self.params["c"], self.params["d"]
            xs = [1 / c if a else -d / (c * c) for a in bits]
            vec = xs + [-x for x in xs]
            if base == "nozero":
                for name in self.input_names[2 * n:]:
                    vec.append(_chain_input_value(name, c))
            return vec
        return [Fraction(int(a)) for a in bits]

    def input_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.input_names)}

    def output_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.output_names)}

    def name_map(self) -> dict:
        return {
            "reduction": self.tag,
            "parameters": {k: str(v) for k, v in sorted(self.params.items())},
            "inputs": list(self.input_names),
            "outputs": list(self.output_names),
            "formula": {"num_vars": self.formula.num_vars,
                        "clauses": [list(c) for c in self.formula.clauses]},
        }


def _var_names(n: int) -> tuple[str, ...]:
    return tuple(f"x{i}" for i in range(n))


def _eq(index: int, value) -> tuple[Conjunct, Conjunct]:
    return equality(LinearTerm({index: 1}), value)


def _out_spec(pairs) -> Specification:
    conj = []
    for index, value in pairs:
        conj.extend(_eq(index, value))
    return Specification(tuple(conj), OUTPUT)


def _literal_refs(b: _Builder, formula: CnfFormula, xs, positive, negative):
    """One literal node per clause occurrence."""
    out = []
    for clause in formula.clauses:
        out.append([positive(b, xs[l - 1]) if l > 0 else negative(b, xs[-l - 1]) for l in clause])
    return out


def reduce_general(formula: CnfFormula) -> GeneratedInstance:
    """Repaired Boolean gadgets, not/or per clause and one and gadget.

    Outputs are ``z_0..z_{n-1}`` (zero exactly on {0, 1}) followed by ``y``
    (the number of satisfied clauses).  Both specifications are simple;
    the input one is true.
    """
    n, m = formula.num_vars, formula.num_clauses
    b = _Builder(n)
    xs = [b.input(i) for i in range(n)]
    zs = [_bool_repaired(b, x) for x in xs]
    lits = _literal_refs(b, formula, xs,
                         lambda b_, x: b_.node(1, {x: 1}, 0),
                         lambda b_, x: _not(b_, x))
    ors = [_or3(b, clause) for clause in lits]
    y = _and(b, ors)
    zs = [b.carry(z, y[0]) for z in zs]
    net, _ = b.build(zs + [y])
    phi_out = _out_spec([(i, 0) for i in range(n)] + [(n, m)])
    inst = ReachInstance(net, Specification.top(INPUT), phi_out)
    return GeneratedInstance(inst, "general", formula, {}, _var_names(n),
                             tuple(f"z{i}" for i in range(n)) + ("y",))


def reduce_single_layer(formula: CnfFormula) -> GeneratedInstance:
    """One hidden ReLU layer; inputs are boxed to [0, 1].

    ``y = sum |x_i - 1/2| - sum_j ReLU(1 - clause_j)`` is at most ``n/2``
    on the box, with equality exactly at satisfying 0/1 points.
    """
    n, m = formula.num_vars, formula.num_clauses
    half = Fraction(1, 2)
    b = _Builder(n)
    xs = [b.input(i) for i in range(n)]
    bools = []
    for x in xs:
        bools.append(b.node(1, {x: -1}, half, RELU))
        bools.append(b.node(1, {x: 1}, -half, RELU))
    clauses = []
    for clause in formula.clauses:
        edges = []
        bias = Fraction(1)
        for l in clause:
            if l > 0:
                edges.append((xs[l - 1], -1))
            else:
                edges.append((xs[-l - 1], 1))
                bias -= 1
        clauses.append(b.node(1, edges, bias, RELU))
    y = b.node(2, [(r, 1) for r in bools] + [(r, -1) for r in clauses], 0)
    net, _ = b.build([y])
    phi_in = Specification.box({i: (0, 1) for i in range(n)})
    inst = ReachInstance(net, phi_in, _out_spec([(0, Fraction(n, 2))]))
    return GeneratedInstance(inst, "single-layer", formula, {}, _var_names(n), ("y",))


def reduce_fanin1(formula: CnfFormula, box_inputs: bool = True) -> GeneratedInstance:
    """Every ReLU reads a single value.

    Outputs are the clause sums ``y_0..y_{m-1}`` and ``z``, the sum of the
    repaired Boolean gadgets.  ``z = 0`` only pins the inputs to {0, 1}
    when they are confined to [0, 1], which ``box_inputs`` (the default)
    adds; with ``box_inputs=False`` values of the Boolean gadgets of
    different variables can cancel.
    """
    n, m = formula.num_vars, formula.num_clauses
    half = Fraction(1, 2)
    b = _Builder(n)
    xs = [b.input(i) for i in range(n)]
    rs = []
    for x in xs:
        rs.append(b.node(1, {x: -1}, half, RELU))
        rs.append(b.node(1, {x: 1}, -half, RELU))
    lits = _literal_refs(b, formula, xs,
                         lambda b_, x: b_.node(1, {x: 1}, 0),
                         lambda b_, x: _not(b_, x))
    ys = [b.node(2, [(l, 1) for l in clause], 0) for clause in lits]
    z = b.node(2, [(r, 1) for r in rs], -half * n)
    net, _ = b.build(ys + [z])
    conj = []
    for j in range(m):
        conj.append(Conjunct(LinearTerm({j: -1}), Fraction(-1)))
    conj.extend(_eq(m, 0))
    phi_out = Specification(tuple(conj), OUTPUT)
    phi_in = Specification.box({i: (0, 1) for i in range(n)}) if box_inputs else Specification.top(INPUT)
    inst = ReachInstance(net, phi_in, phi_out)
    return GeneratedInstance(inst, "fanin1", formula, {"box": int(box_inputs)}, _var_names(n),
                             tuple(f"y{j}" for j in range(m)) + ("z",))


def _or_fanin2(b: _Builder, lits: Sequence[Ref]) -> Ref:
    """``ReLU(1 - ReLU(ReLU(1 - l1 - l2) - l3))``: or on {0,1} with fan-in two."""
    l1, l2, l3 = lits
    layer = l1[0]
    a = b.node(layer + 1, [(l1, -1), (l2, -1)], 1, RELU)
    p = b.carry(l3, layer + 1, 1, RELU)
    u = b.node(layer + 2, [(a, 1), (p, -1)], 0, RELU)
    return b.node(layer + 3, {u: -1}, 1, RELU)


def reduce_fanin2(formula: CnfFormula) -> GeneratedInstance:
    """A pure ReLU network in which every node has at most two inputs.

    For each variable the two ReLUs ``z+_i, z-_i`` of ``+-(bool(x_i))``
    must both vanish; ``y`` sums the clause disjunctions with a binary
    tree of ReLU adders.
    """
    n, m = formula.num_vars, formula.num_clauses
    half = Fraction(1, 2)
    b = _Builder(n)
    xs = [b.input(i) for i in range(n)]
    zp, zn = [], []
    for x in xs:
        r1 = b.node(1, {x: -1}, half, RELU)
        r2 = b.node(1, {x: 1}, -half, RELU)
        zp.append(b.node(2, [(r1, 1), (r2, 1)], -half, RELU))
        zn.append(b.node(2, [(r1, -1), (r2, -1)], half, RELU))
    lits = _literal_refs(b, formula, xs,
                         lambda b_, x: b_.node(1, {x: 1}, 0, RELU),
                         lambda b_, x: b_.node(1, {x: -1}, 1, RELU))
    level = [_or_fanin2(b, clause) for clause in lits]
    while len(level) > 1:
        nxt = []
        for k in range(0, len(level) - 1, 2):
            nxt.append(b.node(level[k][0] + 1, [(level[k], 1), (level[k + 1], 1)], 0, RELU))
        if len(level) % 2:
            nxt.append(b.carry(level[-1], level[-1][0] + 1, 1, RELU))
        level = nxt
    y = level[0]
    zp = [b.carry(z, y[0], 1, RELU) for z in zp]
    zn = [b.carry(z, y[0], 1, RELU) for z in zn]
    net, _ = b.build(zp + zn + [y])
    phi_out = _out_spec([(i, 0) for i in range(2 * n)] + [(2 * n, m)])
    inst = ReachInstance(net, Specification.top(INPUT), phi_out)
    names = tuple(f"zp{i}" for i in range(n)) + tuple(f"zn{i}" for i in range(n)) + ("y",)
    return GeneratedInstance(inst, "fanin2", formula, {}, _var_names(n), names)


def _restricted_network(formula: CnfFormula, c, d, with_inverse: bool):
    """The eight-layer network over ``x_i`` and ``xbar_i`` with weights in {-c, 0, d}."""
    n = formula.num_vars
    b = _Builder(2 * n)
    xs = [b.input(i) for i in range(n)]
    xbars = [b.input(n + i) for i in range(n)]
    disc = [_discrete(b, x, c, d) for x in xs]
    inv = [_inverse_eq(b, xs[i], xbars[i], c) for i in range(n)] if with_inverse else []
    lits = []
    for clause in formula.clauses:
        lits.append([_norm(b, xs[l - 1], c, d) if l > 0 else _norm_not(b, xbars[-l - 1], c, d)
                     for l in clause])
    inner = 4 if c < 1 else 2
    ors = [_or_restricted(b, clause, c, d, inner) for clause in lits]
    y = _and(b, ors, d)
    top = y[0]
    zs = [b.carry(z, top, -c) for z in disc]
    es = [b.carry(e, top, -c) for e in inv]
    return b, zs, es, y


def reduce_restricted_weights(formula: CnfFormula, c=1, d=1) -> GeneratedInstance:
    """All weights and biases in ``{-c, 0, d}``; eight layers including the input.

    A variable is encoded by the pair ``(x_i, xbar_i)``; ``z_i = 0`` forces
    ``x_i`` to ``1/c`` (true) or ``-d/c^2`` (false), ``e_i = 0`` forces
    ``xbar_i = -x_i`` and ``y = m d^2 c^4`` asks for every clause.
    """
    c, d = to_rational(c), to_rational(d)
    if c <= 0 or d <= 0:
        raise ValueError("c and d must be positive")
    n, m = formula.num_vars, formula.num_clauses
    b, zs, es, y = _restricted_network(formula, c, d, True)
    net, _ = b.build(zs + es + [y])
    phi_out = _out_spec([(i, 0) for i in range(2 * n)] + [(2 * n, m * d * d * c ** 4)])
    inst = ReachInstance(net, Specification.top(INPUT), phi_out)
    names = _var_names(n) + tuple(f"xbar{i}" for i in range(n))
    outs = tuple(f"z{i}" for i in range(n)) + tuple(f"e{i}" for i in range(n)) + ("y",)
    return GeneratedInstance(inst, "weights", formula, {"c": c, "d": d}, names, outs)


# -- no zero weights ----------------------------------------------------------


def _chain_start(c: Fraction, end: Fraction, length: int) -> Fraction:
    """Input value that makes ``v -> 2c v + c`` reach ``end`` after ``length`` steps."""
    v = end
    for _ in range(length):
        v = (v - c) / (2 * c)
    return v


def bias_chain_value(layer: int, c) -> Fraction:
    """Input value of the chain that cancels the bias ``c`` in ``layer``."""
    return _chain_start(to_rational(c), Fraction(-1, 2), layer - 1)


def scale_chain_value(layer: int, c) -> Fraction:
    """Input value of the chain that lifts the bias ``c`` to ``2**layer * c``."""
    return _chain_start(to_rational(c), Fraction(2 ** layer - 1, 2), layer - 1)


def _chain_input_value(name: str, c: Fraction) -> Fraction:
    m = re.fullmatch(r"x(bar)?(bias|scale)(\d+)", name)
    if not m:
        raise ValueError(f"not a chain input: {name}")
    layer = int(m.group(3))
    v = bias_chain_value(layer, c) if m.group(2) == "bias" else scale_chain_value(layer, c)
    return -v if m.group(1) else v


def reduce_no_zero(formula: CnfFormula, c=1) -> GeneratedInstance:
    """All weights and biases in ``{-c, c}``.

    Starts from the restricted-weight network with ``d = c`` (without the
    ``e_i`` outputs) and removes zeros:

    * every hidden node gets an identical copy; a zero weight out of a
      node becomes ``c`` on the node and ``-c`` on its copy, any other
      weight is placed on both, which doubles the signal per layer;
    * each input comes with a partner constrained to its negation, so on
      the first layer ``(c, c)`` cancels and ``(c, -c)`` doubles;
    * every bias becomes ``c``; chains of constant nodes (fed by extra
      inputs fixed by the input specification) add ``-c`` where the bias
      was zero and ``(2**l - 1) c`` where it was ``c``.

    The result computes exactly ``2**l`` times the original in layer ``l``,
    so the output condition becomes ``y = 2**7 m c**6``.
    """
    c = to_rational(c)
    if c <= 0:
        raise ValueError("c must be positive")
    n, m = formula.num_vars, formula.num_clauses
    b, zs, _, y = _restricted_network(formula, c, c, False)
    base, _ = b.build(zs + [y])
    net, input_names = _eliminate_zeros(base, n, c)
    depth = len(base.layers)
    # x_i + xbar_i = 0 for every pair, and chain inputs pinned to their values
    conj = []
    index = {name: k for k, name in enumerate(input_names)}
    for name in input_names:
        if name.startswith("xbar"):
            continue
        partner = "xbar" + name[1:]
        conj.extend(equality(LinearTerm({index[name]: 1, index[partner]: 1}), 0))
        if name.startswith(("xbias", "xscale")):
            conj.extend(_eq(index[name], _chain_input_value(name, c)))
    phi_in = Specification(tuple(conj), INPUT)
    phi_out = _out_spec([(i, 0) for i in range(n)] + [(n, 2 ** depth * m * c ** 6)])
    inst = ReachInstance(net, phi_in, phi_out)
    outs = tuple(f"z{i}" for i in range(n)) + ("y",)
    return GeneratedInstance(inst, "nozero", formula, {"c": c, "d": c}, tuple(input_names), outs)


def _eliminate_zeros(net: Network, n: int, c: Fraction):
    """Rewrite a network over ``(x, xbar)`` pairs into one with weights in {-c, c}."""
    L = len(net.layers)
    nc = -c  # one shared object keeps the compiled network small
    weights = {id(w): w for _, _, node in net.nodes() for w in node.weights}
    biases = {id(node.bias): node.bias for _, _, node in net.nodes()}
    if not set(weights.values()) <= {nc, Fraction(0), c} or not set(biases.values()) <= {0, c}:
        raise ValueError("source network must have weights in {-c, 0, c} and biases in {0, c}")
    for _, _, node in net.nodes():
        if node.activation not in (RELU, IDENTITY):
            raise ValueError("only ReLU and identity nodes are positively homogeneous")
    bias_layers = sorted({li for li, _, node in net.nodes() if node.bias == 0})
    scale_layers = sorted({li for li, _, node in net.nodes() if node.bias == c})
    # inputs: x_i, xbar_i, then chain inputs with partners
    names = [f"x{i}" for i in range(n)] + [f"xbar{i}" for i in range(n)]
    chains = []  # (kind, layer, input index, partner index)
    for kind, layers in (("bias", bias_layers), ("scale", scale_layers)):
        for layer in layers:
            chains.append((kind, layer, len(names), len(names) + 1))
            names += [f"x{kind}{layer}", f"xbar{kind}{layer}"]
    dim = len(names)

    # chain nodes per layer: chain k occupies layers 1..layer-1
    # node layout per layer l < L: [main..., chain..., copies of both...]
    main_width = [len(layer) for layer in net.layers]
    chain_at = {l: [k for k, ch in enumerate(chains) if ch[1] > l] for l in range(1, L + 1)}
    layers_out = []
    prev_pos = None  # mapping for previous layer
    for l in range(1, L + 1):
        last = l == L
        mains = net.layers[l - 1]
        chain_ids = chain_at[l] if not last else []
        originals = []  # list of (weights, bias, act)
        for node in mains:
            bias_kind = "bias" if node.bias == 0 else "scale"
            designated = next(k for k, ch in enumerate(chains) if ch[0] == bias_kind and ch[1] == l)
            w = [None] * (dim if l == 1 else prev_pos["width"])
            if l == 1:
                for i in range(n):
                    a, abar = node.weights[i], node.weights[n + i]
                    eff = a - abar
                    if eff == 0:
                        w[i], w[n + i] = c, c
                    elif eff == c:
                        w[i], w[n + i] = c, nc
                    elif eff == nc:
                        w[i], w[n + i] = nc, c
                    else:
                        raise ValueError("input pair weights cannot be doubled within {-c, c}")
                for k, (_, _, xi, xbi) in enumerate(chains):
                    w[xi], w[xbi] = (c, nc) if k == designated else (c, c)
            else:
                for v, orig in enumerate(node.weights):
                    p, q = prev_pos["main"][v], prev_pos["main_copy"][v]
                    if orig == 0:
                        w[p], w[q] = c, nc
                    else:
                        w[p], w[q] = orig, orig
                for k, (p, q) in prev_pos["chain"].items():
                    w[p], w[q] = (c, c) if k == designated else (c, nc)
            originals.append((tuple(w), c, node.activation))
        chain_nodes = {}
        for k in chain_ids:
            _, _, xi, xbi = chains[k]
            if l == 1:
                # every other input pair cancels through (c, c)
                w = [c] * dim
                w[xbi] = nc
            else:
                w = [None] * prev_pos["width"]
                for v in range(main_width[l - 2]):
                    p, q = prev_pos["main"][v], prev_pos["main_copy"][v]
                    w[p], w[q] = c, nc
                for kk, (p, q) in prev_pos["chain"].items():
                    w[p], w[q] = (c, c) if kk == k else (c, nc)
            chain_nodes[k] = len(originals)
            originals.append((tuple(w), c, IDENTITY))
        nodes = [Node(w, bb, act) for w, bb, act in originals]
        if not last:
            count = len(nodes)
            nodes = nodes + list(nodes)
            pos = {
                "width": len(nodes),
                "main": list(range(len(mains))),
                "main_copy": [count + v for v in range(len(mains))],
                "chain": {k: (chain_nodes[k], count + chain_nodes[k]) for k in chain_ids},
            }
            prev_pos = pos
        layers_out.append(tuple(nodes))
    result = Network(dim, tuple(layers_out))
    # nodes and numbers are heavily shared, so check each object once
    distinct = {id(v): v for node in {id(nd): nd for _, _, nd in result.nodes()}.values()
                for v in (*node.weights, node.bias)}
    assert set(distinct.values()) <= {-c, c}
    return result, names


# ---------------------------------------------------------------------------
# ReLU-only rewriting


def to_relu_only(net: Network) -> Network:
    """Replace each hidden identity node by a ReLU pair.

    ``v = id(s)`` becomes ``v+ = ReLU(s)`` and ``v- = ReLU(-s)`` placed
    right after each other; consumers read ``v+ - v-``.  Depth is
    unchanged and every hidden layer at most doubles in width.  The
    output layer is left as it is.
    """
    for _, _, node in net.nodes():
        if node.activation not in (RELU, IDENTITY):
            raise ValueError("to_relu_only needs ReLU and identity activations only")
    layers = []
    # expansion of the previous layer: list of (new index, sign) per old node
    expand = [[(i, 1)] for i in range(net.input_dim)]
    for li, layer in enumerate(net.layers, start=1):
        hidden = li < len(net.layers)
        width = sum(len(e) for e in expand)
        nodes = []
        new_expand = []
        for node in layer:
            w = [Fraction(0)] * width
            for old, weight in enumerate(node.weights):
                if weight:
                    for k, sign in expand[old]:
                        w[k] = w[k] + weight if sign > 0 else w[k] - weight
            if hidden and node.activation == IDENTITY:
                new_expand.append([(len(nodes), 1), (len(nodes) + 1, -1)])
                nodes.append(Node(tuple(w), node.bias, RELU))
                nodes.append(Node(tuple(-x for x in w), -node.bias, RELU))
            else:
                new_expand.append([(len(nodes), 1)])
                nodes.append(Node(tuple(w), node.bias, node.activation))
        layers.append(tuple(nodes))
        expand = new_expand
    return Network(net.input_dim, tuple(layers))


def relu_only_instance(gen: GeneratedInstance) -> GeneratedInstance:
    inst = gen.instance
    new = ReachInstance(to_relu_only(inst.network), inst.phi_in, inst.phi_out)
    return GeneratedInstance(new, gen.tag + "+relu", gen.formula, dict(gen.params),
                             gen.input_names, gen.output_names)


# ---------------------------------------------------------------------------
# dispatch


REDUCTIONS = ("general", "single-layer", "fanin1", "fanin2", "weights", "nozero")


def generate(formula: CnfFormula, reduction: str, c=None, d=None, relu_only: bool = False) -> GeneratedInstance:
    if reduction == "general":
        gen = reduce_general(formula)
    elif reduction == "single-layer":
        gen = reduce_single_layer(formula)
    elif reduction == "fanin1":
        gen = reduce_fanin1(formula)
    elif reduction == "fanin2":
        gen = reduce_fanin2(formula)
    elif reduction == "weights":
        gen = reduce_restricted_weights(formula, c if c is not None else 1, d if d is not None else 1)
    elif reduction == "nozero":
        gen = reduce_no_zero(formula, c if c is not None else 1)
    else:
        raise ValueError(f"unknown reduction {reduction!r}; choose from {', '.join(REDUCTIONS)}")
    return relu_only_instance(gen) if relu_only else gen


# ---------------------------------------------------------------------------
# files


def generated_paths(prefix) -> dict[str, Path]:
    prefix = str(prefix)
    return {
        "network": Path(prefix + ".net.json"),
        "phi_in": Path(prefix + ".in.spec"),
        "phi_out": Path(prefix + ".out.spec"),
        "names": Path(prefix + ".names.json"),
    }


def save_generated(gen: GeneratedInstance, prefix) -> dict[str, Path]:
    """Network JSON, both specifications (written with role names) and the name map."""
    paths = generated_paths(prefix)
    inst = gen.instance
    save_network(inst.network, paths["network"])
    save_spec(inst.phi_in, paths["phi_in"], gen.input_names)
    save_spec(inst.phi_out, paths["phi_out"], gen.output_names)
    paths["names"].write_text(json.dumps(gen.name_map(), indent=2) + "\n")
    return paths


def load_names(path) -> dict:
    return json.loads(Path(path).read_text())


def load_generated(prefix) -> GeneratedInstance:
    paths = generated_paths(prefix)
    meta = load_names(paths["names"])
    inputs = {name: i for i, name in enumerate(meta["inputs"])}
    outputs = {name: i for i, name in enumerate(meta["outputs"])}
    inst = ReachInstance(
        load_network(paths["network"]),
        load_spec(paths["phi_in"], INPUT, inputs),
        load_spec(paths["phi_out"], OUTPUT, outputs),
    )
    formula = CnfFormula(meta["formula"]["num_vars"],
                         tuple(tuple(c) for c in meta["formula"]["clauses"]))
    params = {k: Fraction(v) for k, v in meta["parameters"].items()}
    return GeneratedInstance(inst, meta["reduction"], formula, params,
                             tuple(meta["inputs"]), tuple(meta["outputs"]))
