"""Exact rational networks with piece-wise linear activations.

Everything here works over :class:`fractions.Fraction`.  A network is a
stack of fully connected layers; node ``j`` in layer ``l`` computes
``f(b + sum_i w_i * v_i)`` where the ``v_i`` are the outputs of layer
``l - 1`` (layer 0 being the input vector).
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Iterable, Iterator, Mapping, Sequence

from ._simplex import Q

Rational = Fraction

__all__ = [
    "Rational",
    "to_rational",
    "PWLFunction",
    "RELU",
    "IDENTITY",
    "Node",
    "Network",
    "LinearTerm",
    "Conjunct",
    "Specification",
    "INPUT",
    "OUTPUT",
    "eval_pwl",
    "eval_network",
    "eval_layers",
    "check_spec",
    "ShapeError",
]

INPUT = "input"
OUTPUT = "output"


class ShapeError(ValueError):
    """Raised when a vector does not match the dimension it is used with."""


def to_rational(value) -> Fraction:
    """Convert ``value`` to a Fraction, refusing floats.

    Strings such as ``"3/2"`` or ``"-4"`` and ints are accepted.  Floats
    are rejected outright because silently rounding them would defeat the
    whole point of exact arithmetic.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        raise TypeError(f"refusing float {value!r}; pass a string such as '1/3'")
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a rational literal: {value!r}") from exc
    # gmpy2.mpq and friends expose numerator/denominator
    num = getattr(value, "numerator", None)
    den = getattr(value, "denominator", None)
    if num is not None and den is not None:
        return Fraction(int(num), int(den))
    raise TypeError(f"cannot interpret {value!r} as a rational")


# ---------------------------------------------------------------------------
# piece-wise linear functions


@dataclass(frozen=True)
class PWLFunction:
    """A piece-wise linear function on the reals.

    ``pieces[i] = (a_i, b_i)`` is the affine map used on the half-open
    interval ``[t_i, t_{i+1})`` with ``t_0 = -inf`` and ``t_k = +inf``.
    A breakpoint therefore belongs to the piece on its right.
    """

    pieces: tuple[tuple[Fraction, Fraction], ...]
    breakpoints: tuple[Fraction, ...] = ()

    def __post_init__(self):
        pieces = tuple((to_rational(a), to_rational(b)) for a, b in self.pieces)
        bps = tuple(to_rational(t) for t in self.breakpoints)
        if not pieces:
            raise ValueError("a PWL function needs at least one piece")
        if len(bps) != len(pieces) - 1:
            raise ValueError(
                f"{len(pieces)} pieces need {len(pieces) - 1} breakpoints, got {len(bps)}"
            )
        if any(s >= t for s, t in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "breakpoints", bps)
        # activations are dictionary keys all over the place; hashing the
        # Fractions every time is surprisingly expensive
        object.__setattr__(self, "_hash", hash((pieces, bps)))

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, PWLFunction):
            return NotImplemented
        return (self._hash == other._hash and self.pieces == other.pieces
                and self.breakpoints == other.breakpoints)

    def __hash__(self):
        return self._hash

    @property
    def num_pieces(self) -> int:
        return len(self.pieces)

    def piece_index(self, x: Fraction) -> int:
        return bisect_right(self.breakpoints, x)

    def __call__(self, x) -> Fraction:
        a, b = self.pieces[self.piece_index(x)]
        return a * x + b

    def left_limit(self, i: int) -> Fraction:
        """Value of piece ``i`` at its right end ``t_{i+1}``."""
        a, b = self.pieces[i]
        return a * self.breakpoints[i] + b

    def continuous_at(self, i: int) -> bool:
        """Whether the function is continuous at breakpoint ``t_{i+1}``."""
        t = self.breakpoints[i]
        a0, b0 = self.pieces[i]
        a1, b1 = self.pieces[i + 1]
        return a0 * t + b0 == a1 * t + b1

    @property
    def continuous(self) -> bool:
        return all(self.continuous_at(i) for i in range(len(self.breakpoints)))

    @property
    def is_relu(self) -> bool:
        return self == RELU

    @property
    def is_identity(self) -> bool:
        return self == IDENTITY

    def interval(self, i: int) -> tuple[Fraction | None, Fraction | None]:
        """Closed hull ``[t_i, t_{i+1}]`` of piece ``i`` (None marks infinity)."""
        lo = self.breakpoints[i - 1] if i > 0 else None
        hi = self.breakpoints[i] if i < len(self.breakpoints) else None
        return lo, hi

    def to_json(self):
        if self.is_relu:
            return "relu"
        if self.is_identity:
            return "id"
        return {
            "pieces": [[_fmt(a), _fmt(b)] for a, b in self.pieces],
            "breakpoints": [_fmt(t) for t in self.breakpoints],
        }

    @classmethod
    def from_json(cls, obj) -> "PWLFunction":
        if obj == "relu":
            return RELU
        if obj in ("id", "identity"):
            return IDENTITY
        if isinstance(obj, Mapping):
            try:
                pieces = [(to_rational(a), to_rational(b)) for a, b in obj["pieces"]]
                bps = [to_rational(t) for t in obj.get("breakpoints", [])]
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"malformed activation {obj!r}: {exc}") from exc
            return cls(tuple(pieces), tuple(bps))
        raise ValueError(f"unknown activation {obj!r}")


RELU = PWLFunction(((Fraction(0), Fraction(0)), (Fraction(1), Fraction(0))), (Fraction(0),))
IDENTITY = PWLFunction(((Fraction(1), Fraction(0)),), ())


def eval_pwl(f: PWLFunction, x) -> Fraction:
    return f(to_rational(x))


def _fmt(q: Fraction) -> str:
    return str(q)


# ---------------------------------------------------------------------------
# networks


@dataclass(frozen=True)
class Node:
    weights: tuple[Fraction, ...]
    bias: Fraction
    activation: PWLFunction = RELU

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(
            w if type(w) is Fraction else to_rational(w) for w in self.weights))
        object.__setattr__(self, "bias", to_rational(self.bias))

    def pre_activation(self, values: Sequence[Fraction]) -> Fraction:
        acc = self.bias
        for w, v in zip(self.weights, values):
            if w:
                acc += w * v
        return acc


@dataclass(frozen=True)
class Network:
    """A layered PWL network.

    ``layers`` holds the stored layers (the input layer is implicit), so
    ``depth`` counts one more than ``len(layers)``.
    """

    input_dim: int
    layers: tuple[tuple[Node, ...], ...]

    def __post_init__(self):
        layers = tuple(tuple(layer) for layer in self.layers)
        object.__setattr__(self, "layers", layers)
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not layers:
            raise ValueError("a network needs at least one stored layer")
        width = self.input_dim
        for li, layer in enumerate(layers, start=1):
            if not layer:
                raise ValueError(f"layer {li} is empty")
            for ni, node in enumerate(layer):
                if len(node.weights) != width:
                    raise ShapeError(
                        f"node {ni} of layer {li} has {len(node.weights)} weights, "
                        f"expected {width}"
                    )
            width = len(layer)

    @property
    def depth(self) -> int:
        return len(self.layers) + 1

    @property
    def output_dim(self) -> int:
        return len(self.layers[-1])

    @property
    def widths(self) -> list[int]:
        return [len(layer) for layer in self.layers]

    def nodes(self) -> Iterator[tuple[int, int, Node]]:
        """Yield ``(layer, index, node)`` with layers numbered from 1."""
        for li, layer in enumerate(self.layers, start=1):
            for ni, node in enumerate(layer):
                yield li, ni, node

    @property
    def num_nodes(self) -> int:
        return sum(self.widths)

    def weight_alphabet(self) -> set[Fraction]:
        """All weights and biases occurring in the network."""
        out: set[Fraction] = set()
        for _, _, node in self.nodes():
            out.update(node.weights)
            out.add(node.bias)
        return out

    def activations(self) -> set[PWLFunction]:
        return {node.activation for _, _, node in self.nodes()}

    def __call__(self, x: Sequence) -> list[Fraction]:
        return eval_network(self, x)


def _compiled_pwl(f: PWLFunction):
    cached = f.__dict__.get("_mpq")
    if cached is None:
        cached = ([Q(t.numerator, t.denominator) for t in f.breakpoints],
                  [(Q(a.numerator, a.denominator), Q(b.numerator, b.denominator)) for a, b in f.pieces])
        object.__setattr__(f, "_mpq", cached)
    return cached


def _compiled_layers(net: Network):
    # the same numbers in gmpy2's rational type, which is much faster than
    # Fraction on dense layers; results are converted back afterwards.
    # Generated networks reuse Node and Fraction objects a lot, so both are
    # converted once per object.
    cached = net.__dict__.get("_mpq")
    if cached is None:
        cached = []
        numbers: dict[int, object] = {}
        rows_of: dict[int, tuple] = {}

        def q(v: Fraction):
            out = numbers.get(id(v))
            if out is None:
                out = numbers[id(v)] = Q(v.numerator, v.denominator)
            return out

        for layer in net.layers:
            rows = []
            for node in layer:
                row = rows_of.get(id(node))
                if row is None:
                    ws = [(j, w) for j, w in enumerate(map(q, node.weights)) if w]
                    row = rows_of[id(node)] = (ws, q(node.bias), _compiled_pwl(node.activation))
                rows.append(row)
            cached.append(rows)
        object.__setattr__(net, "_mpq", cached)
    return cached


def eval_layers(net: Network, x: Sequence) -> list[list[Fraction]]:
    """All layer values, starting with the input vector itself."""
    if len(x) != net.input_dim:
        raise ShapeError(f"input has length {len(x)}, network expects {net.input_dim}")
    inputs = [to_rational(v) for v in x]
    values = [Q(v.numerator, v.denominator) for v in inputs]
    trace = [inputs]
    for layer in _compiled_layers(net):
        out = []
        for ws, acc, (bps, pieces) in layer:
            for j, w in ws:
                acc = acc + w * values[j]
            a, b = pieces[bisect_right(bps, acc)]
            out.append(a * acc + b)
        values = out
        trace.append([Fraction(int(v.numerator), int(v.denominator)) for v in values])
    return trace


def eval_network(net: Network, x: Sequence) -> list[Fraction]:
    return eval_layers(net, x)[-1]


# ---------------------------------------------------------------------------
# linear terms and specifications


def _var_key(v):
    return (0, v, "") if isinstance(v, int) else (1, 0, str(v))


class LinearTerm:
    """Sparse linear form ``sum c_v * v`` with exact coefficients.

    Variables are any hashable keys: integer indices inside
    specifications, string names inside PWL programs and MILPs.
    Zero coefficients are never stored.
    """

    __slots__ = ("_coeffs", "_hash")

    def __init__(self, coeffs: Mapping[Hashable, object] | Iterable = ()):
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        acc: dict = {}
        for var, c in items:
            c = to_rational(c)
            if c:
                acc[var] = acc.get(var, 0) + c
        self._coeffs = {v: acc[v] for v in sorted(acc, key=_var_key) if acc[v]}
        self._hash = None

    @property
    def coeffs(self) -> Mapping[Hashable, Fraction]:
        return self._coeffs

    def variables(self):
        return self._coeffs.keys()

    def items(self):
        return self._coeffs.items()

    def __len__(self):
        return len(self._coeffs)

    def __iter__(self):
        return iter(self._coeffs)

    def __getitem__(self, var) -> Fraction:
        return self._coeffs.get(var, Fraction(0))

    def __eq__(self, other):
        return isinstance(other, LinearTerm) and self._coeffs == other._coeffs

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple(self._coeffs.items()))
        return self._hash

    def __neg__(self) -> "LinearTerm":
        return LinearTerm({v: -c for v, c in self._coeffs.items()})

    def __add__(self, other: "LinearTerm") -> "LinearTerm":
        return LinearTerm(list(self._coeffs.items()) + list(other._coeffs.items()))

    def __sub__(self, other: "LinearTerm") -> "LinearTerm":
        return self + (-other)

    def scale(self, k) -> "LinearTerm":
        k = to_rational(k)
        return LinearTerm({v: k * c for v, c in self._coeffs.items()})

    def rename(self, mapping) -> "LinearTerm":
        return LinearTerm([(mapping(v) if callable(mapping) else mapping[v], c)
                           for v, c in self._coeffs.items()])

    def evaluate(self, values) -> Fraction:
        """``values`` is a sequence (integer variables) or a mapping."""
        total = Fraction(0)
        for v, c in self._coeffs.items():
            total += c * values[v]
        return total

    def __repr__(self):
        if not self._coeffs:
            return "LinearTerm(0)"
        body = " + ".join(f"{c}*{v}" for v, c in self._coeffs.items())
        return f"LinearTerm({body})"


@dataclass(frozen=True)
class Conjunct:
    """The constraint ``term <= bound``."""

    term: LinearTerm
    bound: Fraction

    def __post_init__(self):
        object.__setattr__(self, "bound", to_rational(self.bound))

    def holds(self, values) -> bool:
        return self.term.evaluate(values) <= self.bound


@dataclass(frozen=True)
class Specification:
    """A conjunction of linear constraints over inputs or outputs."""

    conjuncts: tuple[Conjunct, ...] = ()
    namespace: str = INPUT

    def __post_init__(self):
        if self.namespace not in (INPUT, OUTPUT):
            raise ValueError(f"namespace must be {INPUT!r} or {OUTPUT!r}")
        object.__setattr__(self, "conjuncts", tuple(self.conjuncts))

    # constructors -------------------------------------------------------
    @classmethod
    def top(cls, namespace: str = INPUT) -> "Specification":
        # x + (-x) = 0 collapses to the empty term on both sides
        zero = LinearTerm()
        return cls((Conjunct(zero, Fraction(0)), Conjunct(zero, Fraction(0))), namespace)

    @classmethod
    def bottom(cls, namespace: str = INPUT) -> "Specification":
        zero = LinearTerm()
        return cls((Conjunct(zero, Fraction(1)), Conjunct(zero, Fraction(-1))), namespace)

    @classmethod
    def box(cls, bounds: Mapping[int, tuple], namespace: str = INPUT) -> "Specification":
        """``bounds[i] = (lo, hi)``; either side may be None."""
        out = []
        for i in sorted(bounds):
            lo, hi = bounds[i]
            if lo is not None:
                out.append(Conjunct(LinearTerm({i: -1}), -to_rational(lo)))
            if hi is not None:
                out.append(Conjunct(LinearTerm({i: 1}), to_rational(hi)))
        return cls(tuple(out), namespace)

    @classmethod
    def equalities(cls, values: Mapping[int, object], namespace: str = INPUT) -> "Specification":
        out = []
        for i in sorted(values):
            out.extend(equality(LinearTerm({i: 1}), values[i]))
        return cls(tuple(out), namespace)

    # queries ------------------------------------------------------------
    def holds(self, values: Sequence) -> bool:
        return all(c.holds(values) for c in self.conjuncts)

    def variables(self) -> set:
        out = set()
        for c in self.conjuncts:
            out.update(c.term.variables())
        return out

    @property
    def is_simple(self) -> bool:
        # terms that cancel to nothing (the lowered forms of true/false)
        # count as simple, like a single variable with coefficient zero
        return all(len(c.term) <= 1 for c in self.conjuncts)

    def __and__(self, other: "Specification") -> "Specification":
        if other.namespace != self.namespace:
            raise ValueError("cannot conjoin specifications over different namespaces")
        return Specification(self.conjuncts + other.conjuncts, self.namespace)

    def __len__(self):
        return len(self.conjuncts)

    def __iter__(self):
        return iter(self.conjuncts)


def equality(term: LinearTerm, value) -> tuple[Conjunct, Conjunct]:
    """``term = value`` as the pair ``term <= value`` and ``-term <= -value``."""
    value = to_rational(value)
    return Conjunct(term, value), Conjunct(-term, -value)


def check_spec(spec: Specification, values: Sequence) -> bool:
    return spec.holds([to_rational(v) for v in values])

