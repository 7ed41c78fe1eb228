"""On-disk formats: network JSON and the line-oriented specification text.

Network JSON::

    {"input_dim": 2,
     "layers": [[{"weights": ["1", "-1/2"], "bias": "0", "activation": "relu"}]]}

``activation`` is ``"relu"``, ``"id"`` or an explicit
``{"pieces": [["a", "b"], ...], "breakpoints": ["t", ...]}``.

Specification text has one conjunct per line::

    # comments and blank lines are ignored
    2*x0 - 1/3*x1 <= 5
    x2 >= -1
    z0 == 0
    true

Variables are ``x<i>`` for inputs and ``y<i>`` for outputs unless a name
map is supplied, in which case names are looked up there first.
"""

from __future__ import annotations

import json
import re
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from .core import (
    INPUT,
    OUTPUT,
    Conjunct,
    LinearTerm,
    Network,
    Node,
    PWLFunction,
    Specification,
    equality,
    to_rational,
)

__all__ = [
    "ParseError",
    "network_to_json",
    "network_from_json",
    "load_network",
    "save_network",
    "parse_spec",
    "format_spec",
    "load_spec",
    "save_spec",
    "parse_vector",
]


class ParseError(ValueError):
    """Malformed input, with a 1-based line and column when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


# ---------------------------------------------------------------------------
# networks


def network_to_json(net: Network) -> dict:
    return {
        "input_dim": net.input_dim,
        "layers": [
            [
                {
                    "weights": [str(w) for w in node.weights],
                    "bias": str(node.bias),
                    "activation": node.activation.to_json(),
                }
                for node in layer
            ]
            for layer in net.layers
        ],
    }


def network_from_json(obj) -> Network:
    if not isinstance(obj, Mapping):
        raise ParseError("network JSON must be an object")
    try:
        n = obj["input_dim"]
        raw_layers = obj["layers"]
    except KeyError as exc:
        raise ParseError(f"missing key {exc.args[0]!r}") from exc
    if not isinstance(n, int) or isinstance(n, bool):
        raise ParseError("input_dim must be an integer")
    layers = []
    for li, raw in enumerate(raw_layers, start=1):
        layer = []
        for ni, node in enumerate(raw):
            try:
                weights = tuple(_json_rational(w) for w in node["weights"])
                bias = _json_rational(node.get("bias", "0"))
                act = PWLFunction.from_json(node.get("activation", "relu"))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"layer {li}, node {ni}: {exc}") from exc
            layer.append(Node(weights, bias, act))
        layers.append(tuple(layer))
    try:
        return Network(n, tuple(layers))
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def _json_rational(value) -> Fraction:
    if isinstance(value, float):
        raise ValueError(f"floating point literal {value!r}; write rationals as strings")
    return to_rational(value)


def load_network(path) -> Network:
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
    return network_from_json(obj)


def save_network(net: Network, path) -> None:
    Path(path).write_text(json.dumps(network_to_json(net), indent=1) + "\n")


# ---------------------------------------------------------------------------
# specifications

_TOKEN = re.compile(
    r"\s*(?:(?P<rel><=|>=|==|=)|(?P<sign>[+-])|(?P<star>\*)"
    r"|(?P<num>\d+(?:/\d+|\.\d+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*))"
)
_DEFAULT_PREFIX = {INPUT: "x", OUTPUT: "y"}
_TRUE = {"true", "⊤", "top"}
_FALSE = {"false", "⊥", "bottom"}


def _resolve(name: str, namespace: str, names: Mapping[str, int] | None, line: int, col: int) -> int:
    if names is not None and name in names:
        return names[name]
    m = re.fullmatch(r"([a-z]+)(\d+)", name)
    if m and m.group(1) == _DEFAULT_PREFIX[namespace]:
        return int(m.group(2))
    raise ParseError(f"unknown {namespace} variable {name!r}", line, col)


def _parse_side(tokens, namespace, names, line):
    """Parse ``[sign] [num [*]] [name] ...`` into (term items, constant)."""
    items: list[tuple[int, Fraction]] = []
    const = Fraction(0)
    i = 0
    expect_term = True
    while i < len(tokens):
        kind, val, col = tokens[i]
        sign = 1
        if kind == "sign":
            sign = -1 if val == "-" else 1
            i += 1
            if i >= len(tokens):
                raise ParseError("dangling sign", line, col)
            kind, val, col = tokens[i]
        elif not expect_term:
            raise ParseError(f"expected '+' or '-' before {val!r}", line, col)
        coef = None
        if kind == "num":
            coef = Fraction(val)
            i += 1
            if i < len(tokens) and tokens[i][0] == "star":
                i += 1
                if i >= len(tokens) or tokens[i][0] != "name":
                    raise ParseError("expected variable after '*'", line, tokens[i - 1][2])
        if i < len(tokens) and tokens[i][0] == "name":
            _, name, ncol = tokens[i]
            idx = _resolve(name, namespace, names, line, ncol)
            items.append((idx, sign * (coef if coef is not None else 1)))
            i += 1
        elif coef is not None:
            const += sign * coef
        else:
            raise ParseError(f"unexpected {val!r}", line, col)
        expect_term = False
    return items, const


def parse_spec(text: str, namespace: str = INPUT, names: Mapping[str, int] | None = None) -> Specification:
    """Parse specification text; ``names`` maps variable names to indices."""
    conjuncts: list[Conjunct] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        word = line.lower()
        if word in _TRUE:
            conjuncts.extend(Specification.top(namespace).conjuncts)
            continue
        if word in _FALSE:
            conjuncts.extend(Specification.bottom(namespace).conjuncts)
            continue
        tokens = []
        pos = 0
        while pos < len(line):
            m = _TOKEN.match(line, pos)
            if not m or m.end() == pos:
                raise ParseError(f"unexpected character {line[pos]!r}", lineno, pos + 1)
            kind = m.lastgroup
            tokens.append((kind, m.group(kind), m.start(kind) + 1))
            pos = m.end()
            while pos < len(line) and line[pos].isspace():
                pos += 1
        rels = [k for k, t in enumerate(tokens) if t[0] == "rel"]
        if len(rels) != 1:
            raise ParseError("expected exactly one of <=, >=, ==", lineno)
        r = rels[0]
        lhs, lconst = _parse_side(tokens[:r], namespace, names, lineno)
        rhs, rconst = _parse_side(tokens[r + 1:], namespace, names, lineno)
        if not tokens[:r] or not tokens[r + 1:]:
            raise ParseError("both sides of a constraint must be non-empty", lineno)
        term = LinearTerm(lhs + [(v, -c) for v, c in rhs])
        bound = rconst - lconst
        rel = tokens[r][1]
        if rel == "<=":
            conjuncts.append(Conjunct(term, bound))
        elif rel == ">=":
            conjuncts.append(Conjunct(-term, -bound))
        else:
            conjuncts.extend(equality(term, bound))
    return Specification(tuple(conjuncts), namespace)


def _format_term(term: LinearTerm, label) -> str:
    if not len(term):
        return "0"
    parts = []
    for k, (v, c) in enumerate(term.items()):
        mag = abs(c)
        body = label(v) if mag == 1 else f"{mag}*{label(v)}"
        if k == 0:
            parts.append(("-" if c < 0 else "") + body)
        else:
            parts.append(("- " if c < 0 else "+ ") + body)
    return " ".join(parts)


def format_spec(spec: Specification, names: Sequence[str] | None = None) -> str:
    """Render a specification so that :func:`parse_spec` reads it back exactly.

    Adjacent pairs ``t <= b, -t <= -b`` are written as ``t == b``.
    """
    prefix = "x" if spec.namespace == INPUT else "y"

    def label(v):
        return names[v] if names is not None else f"{prefix}{v}"

    lines = []
    cs = spec.conjuncts
    i = 0
    while i < len(cs):
        c = cs[i]
        nxt = cs[i + 1] if i + 1 < len(cs) else None
        paired = nxt is not None and nxt.term == -c.term and nxt.bound == -c.bound
        if paired and not len(c.term):
            lines.append("true" if c.bound == 0 else ("false" if c.bound == 1 else f"0 == {c.bound}"))
            i += 2
            continue
        if paired:
            lines.append(f"{_format_term(c.term, label)} == {c.bound}")
            i += 2
            continue
        lines.append(f"{_format_term(c.term, label)} <= {c.bound}")
        i += 1
    return "\n".join(lines) + ("\n" if lines else "")


def load_spec(path, namespace: str = INPUT, names: Mapping[str, int] | None = None) -> Specification:
    return parse_spec(Path(path).read_text(), namespace, names)


def save_spec(spec: Specification, path, names: Sequence[str] | None = None) -> None:
    Path(path).write_text(format_spec(spec, names))


def parse_vector(text: str) -> list[Fraction]:
    """``"1, -1/2, 3"`` -> rationals.  Accepts commas or whitespace."""
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    try:
        return [to_rational(p) for p in parts]
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc)) from exc
