"""Big-M mixed-integer encoding of reachability instances.

Each ReLU node ``y = ReLU(arg)`` with pre-activation range ``[lo, hi]``
is written with a positive part ``y``, a negative part ``s`` and a switch
``z``::

    arg = y - s,   y >= 0,   s >= 0,   y <= M+ (1 - z),   s <= M- z

with ``M+ = max(0, hi)`` and ``M- = max(0, -lo)``.  ``z = 0`` leaves the
node active, ``z = 1`` switches it off.  Identity and other affine nodes
are plain equalities.  A PWL node with more pieces gets one indicator
per piece, an exactly-one row, and for every piece big-M relaxed copies
of its interval and of its line.

The ranges come from interval arithmetic starting at the box that the
input specification implies, so encoding needs every input dimension to
be bounded.

LP files use the usual ``Minimize / Subject To / Bounds / Binary / End``
layout.  Rows whose rationals all have terminating decimal expansions
are written in decimals; any other row is multiplied by the least common
multiple of its denominators and written with integers, so the file is
always exact.  :func:`parse_lp` reads the format back.
"""

from __future__ import annotations

import enum
import itertools
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .core import LinearTerm, Network, PWLFunction, Specification, eval_layers
from .lp import LinearProgram, LPStatus, Relation, solve
from .pwlprog import input_var, node_var

__all__ = [
    "UnboundedInput",
    "MILPCapExceeded",
    "IntervalBounds",
    "Row",
    "MILP",
    "MILPStatus",
    "MILPResult",
    "compute_bounds",
    "encode",
    "export_lp",
    "format_lp",
    "parse_lp",
    "check_milp",
    "same_rows",
    "MILP_CAP",
]

MILP_CAP = 1 << 16


class UnboundedInput(ValueError):
    def __init__(self, dimension: int, side: str = "both"):
        super().__init__(f"input dimension {dimension} is unbounded ({side}) under phi_in")
        self.dimension = dimension
        self.side = side


class MILPCapExceeded(ValueError):
    pass


# ---------------------------------------------------------------------------
# interval bounds


@dataclass
class IntervalBounds:
    """Input boxes and per-node pre/post-activation intervals.

    ``empty`` is set when the input specification has no solution at
    all; every interval is then ``[0, 0]``, so all big-M constants vanish
    and the input rows alone make the MILP infeasible.
    """

    inputs: list[tuple[Fraction, Fraction]]
    pre: dict[tuple[int, int], tuple[Fraction, Fraction]] = field(default_factory=dict)
    post: dict[tuple[int, int], tuple[Fraction, Fraction]] = field(default_factory=dict)
    empty: bool = False

    def contains(self, net: Network, x: Sequence) -> bool:
        """Do the exact pre-activations at ``x`` lie inside the intervals?"""
        layers = eval_layers(net, x)
        for li, ni, node in net.nodes():
            lo, hi = self.pre[(li, ni)]
            if not lo <= node.pre_activation(layers[li - 1]) <= hi:
                return False
        return True


def _input_box(phi_in: Specification, n: int):
    lp = LinearProgram([input_var(i) for i in range(n)])
    for c in phi_in.conjuncts:
        lp.add(c.term.rename(input_var), Relation.LE, c.bound)
    if solve(lp).status is LPStatus.INFEASIBLE:
        return None
    box = []
    for i in range(n):
        ends = []
        for sign, side in ((1, "below"), (-1, "above")):
            lp.objective = LinearTerm({input_var(i): sign})
            res = solve(lp)
            if res.status is LPStatus.UNBOUNDED:
                raise UnboundedInput(i, side)
            ends.append(sign * res.value)
        box.append((ends[0], ends[1]))
    return box


def _image(f: PWLFunction, lo: Fraction, hi: Fraction) -> tuple[Fraction, Fraction]:
    """Closed hull of ``f([lo, hi])``: values at the ends, breakpoints and their left limits."""
    values = [f(lo), f(hi)]
    for i, t in enumerate(f.breakpoints):
        if lo < t <= hi:
            values.append(f.left_limit(i))
            values.append(f(t))
    return min(values), max(values)


def compute_bounds(net: Network, phi_in: Specification) -> IntervalBounds:
    box = _input_box(phi_in, net.input_dim)
    if box is None:
        zero = (Fraction(0), Fraction(0))
        bounds = IntervalBounds([zero] * net.input_dim, empty=True)
        for li, ni, _ in net.nodes():
            bounds.pre[(li, ni)] = zero
            bounds.post[(li, ni)] = zero
        return bounds
    bounds = IntervalBounds(box)
    prev = box
    for li, layer in enumerate(net.layers, start=1):
        cur = []
        for ni, node in enumerate(layer):
            lo = hi = node.bias
            for w, (a, b) in zip(node.weights, prev):
                if w > 0:
                    lo += w * a
                    hi += w * b
                elif w < 0:
                    lo += w * b
                    hi += w * a
            bounds.pre[(li, ni)] = (lo, hi)
            post = _image(node.activation, lo, hi)
            bounds.post[(li, ni)] = post
            cur.append(post)
        prev = cur
    return bounds


# ---------------------------------------------------------------------------
# the MILP


@dataclass(frozen=True)
class Row:
    name: str
    term: LinearTerm
    rel: Relation
    rhs: Fraction

    def holds(self, values) -> bool:
        lhs = self.term.evaluate(values)
        return {
            Relation.LE: lhs <= self.rhs,
            Relation.LT: lhs < self.rhs,
            Relation.EQ: lhs == self.rhs,
            Relation.GE: lhs >= self.rhs,
            Relation.GT: lhs > self.rhs,
        }[self.rel]


@dataclass
class MILP:
    continuous: list[str] = field(default_factory=list)
    binaries: list[str] = field(default_factory=list)
    rows: list[Row] = field(default_factory=list)
    # binaries that form an exactly-one group (nodes with three or more pieces)
    groups: list[list[str]] = field(default_factory=list)
    input_vars: list[str] = field(default_factory=list)
    output_vars: list[str] = field(default_factory=list)
    bounds: IntervalBounds | None = None

    def add(self, name: str, coeffs, rel, rhs) -> None:
        term = coeffs if isinstance(coeffs, LinearTerm) else LinearTerm(coeffs)
        self.rows.append(Row(name, term, Relation.parse(rel), Fraction(rhs)))

    def row(self, name: str) -> Row:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def has_strict(self) -> bool:
        return any(r.rel in (Relation.LT, Relation.GT) for r in self.rows)


def _relu_rows(m: MILP, arg: LinearTerm, const: Fraction, tag: str, pre) -> None:
    y, s, z = f"y{tag}", f"s{tag}", f"z{tag}"
    lo, hi = pre
    mp, mn = max(Fraction(0), hi), max(Fraction(0), -lo)
    m.continuous += [y, s]
    m.binaries.append(z)
    # arg = y - s
    m.add(f"arg{tag}", arg - LinearTerm({y: 1, s: -1}), "==", -const)
    m.add(f"ypos{tag}", {y: 1}, ">=", 0)
    m.add(f"spos{tag}", {s: 1}, ">=", 0)
    m.add(f"yup{tag}", {y: 1, z: mp}, "<=", mp)
    m.add(f"sup{tag}", {s: 1, z: -mn}, "<=", 0)


def _pwl_rows(m: MILP, f: PWLFunction, arg: LinearTerm, const: Fraction, tag: str, pre, post) -> None:
    y = f"y{tag}"
    m.continuous.append(y)
    lo, hi = pre
    ylo, yhi = post
    k = f.num_pieces
    if k == 2:
        z = f"z{tag}"
        m.binaries.append(z)
        # z = 1 selects the lower piece, as for ReLU
        off = [LinearTerm({z: -1}), LinearTerm({z: 1})]  # 1 - indicator, minus the constant 1
        off_const = [Fraction(1), Fraction(0)]
    else:
        zs = [f"z{tag}_{w}" for w in range(k)]
        m.binaries += zs
        m.groups.append(zs)
        m.add(f"one{tag}", {z: 1 for z in zs}, "==", 1)
        off = [LinearTerm({z: -1}) for z in zs]
        off_const = [Fraction(1)] * k
    for w in range(k):
        # "1 - indicator_w" is off[w] + off_const[w]
        a, b = f.pieces[w]
        t_lo, t_hi = f.interval(w)
        if t_lo is not None:
            # arg + const >= t_lo - M (1 - ind)
            big = max(Fraction(0), t_lo - lo)
            m.add(f"plo{tag}_{w}", arg + off[w].scale(big), ">=",
                  t_lo - const - big * off_const[w])
        if t_hi is not None:
            strict = not f.continuous_at(w)
            big = max(Fraction(0), hi - t_hi) + (1 if strict else 0)
            m.add(f"phi{tag}_{w}", arg - off[w].scale(big), "<" if strict else "<=",
                  t_hi - const + big * off_const[w])
        # |y - a (arg + const) - b| <= M (1 - ind)
        line_lo = min(a * lo, a * hi) + b
        line_hi = max(a * lo, a * hi) + b
        up = max(Fraction(0), yhi - line_lo)
        dn = max(Fraction(0), line_hi - ylo)
        diff = LinearTerm({y: 1}) - arg.scale(a)
        m.add(f"vup{tag}_{w}", diff - off[w].scale(up), "<=", a * const + b + up * off_const[w])
        m.add(f"vdn{tag}_{w}", diff + off[w].scale(dn), ">=", a * const + b - dn * off_const[w])


def encode(instance, bounds: IntervalBounds | None = None) -> MILP:
    """The MILP of a reachability instance (raises :class:`UnboundedInput`)."""
    net = instance.network
    if bounds is None:
        bounds = compute_bounds(net, instance.phi_in)
    m = MILP(bounds=bounds)
    inputs = [input_var(i) for i in range(net.input_dim)]
    m.continuous += inputs
    m.input_vars = inputs
    for k, c in enumerate(instance.phi_in.conjuncts):
        m.add(f"in{k}", c.term.rename(lambda i: inputs[i]), "<=", c.bound)
    prev = inputs
    for li, layer in enumerate(net.layers, start=1):
        cur = []
        for ni, node in enumerate(layer):
            tag = f"{li}_{ni}"
            arg = LinearTerm(zip(prev, node.weights))
            f = node.activation
            y = node_var(li, ni)
            if f.num_pieces == 1:
                a, b = f.pieces[0]
                m.continuous.append(y)
                m.add(f"arg{tag}", LinearTerm({y: 1}) - arg.scale(a), "==", a * node.bias + b)
            elif f.is_relu:
                _relu_rows(m, arg, node.bias, tag, bounds.pre[(li, ni)])
            else:
                _pwl_rows(m, f, arg, node.bias, tag, bounds.pre[(li, ni)], bounds.post[(li, ni)])
            cur.append(y)
        prev = cur
    m.output_vars = list(prev)
    for k, c in enumerate(instance.phi_out.conjuncts):
        m.add(f"out{k}", c.term.rename(lambda j: prev[j]), "<=", c.bound)
    return m


# ---------------------------------------------------------------------------
# LP text format


_SYMBOL = {Relation.LE: "<=", Relation.GE: ">=", Relation.EQ: "="}


def _terminates(q: Fraction) -> bool:
    d = q.denominator
    for p in (2, 5):
        while d % p == 0:
            d //= p
    return d == 1


def _decimal(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    # smallest k with 10**k divisible by the denominator
    k = 0
    while (10 ** k) % q.denominator:
        k += 1
    scaled = q.numerator * (10 ** k // q.denominator)
    sign = "-" if scaled < 0 else ""
    body = str(abs(scaled)).rjust(k + 1, "0")
    return f"{sign}{body[:-k]}.{body[-k:]}"


def _scaled(row: Row) -> tuple[list[tuple[str, Fraction]], Fraction]:
    items = list(row.term.items())
    values = [c for _, c in items] + [row.rhs]
    if all(_terminates(v) for v in values):
        return items, row.rhs
    lcm = 1
    for v in values:
        lcm = lcm * v.denominator // math.gcd(lcm, v.denominator)
    return [(v, c * lcm) for v, c in items], row.rhs * lcm


def format_lp(m: MILP) -> str:
    if m.has_strict:
        raise ValueError("strict rows (from discontinuous activations) have no LP-format equivalent")
    out = ["\\ exact MILP encoding written by reachkit", "Minimize", " obj: 0", "Subject To"]
    for row in m.rows:
        items, rhs = _scaled(row)
        parts = []
        for k, (v, c) in enumerate(items):
            sign = "-" if c < 0 else "+"
            mag = _decimal(abs(c))
            if k == 0:
                parts.append(("-" if c < 0 else "") + f"{mag} {v}")
            else:
                parts.append(f"{sign} {mag} {v}")
        lhs = " ".join(parts) if parts else "0 " + (m.continuous[0] if m.continuous else "x_dummy")
        out.append(f" {row.name}: {lhs} {_SYMBOL[row.rel]} {_decimal(rhs)}")
    out.append("Bounds")
    for v in m.continuous:
        out.append(f" {v} free")
    if m.binaries:
        out.append("Binary")
        out.extend(f" {z}" for z in m.binaries)
    out.append("End")
    return "\n".join(out) + "\n"


def export_lp(m: MILP, path) -> Path:
    path = Path(path)
    path.write_text(format_lp(m))
    return path


_ROW_RE = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*:\s*(.*?)\s*(<=|>=|=<|=>|=|<|>)\s*(\S+)\s*$")
_TERM_RE = re.compile(r"([+-])?\s*([0-9]*\.?[0-9]+(?:/[0-9]+)?)?\s*([A-Za-z_][\w.]*)")
_REL = {"<=": Relation.LE, "=<": Relation.LE, "<": Relation.LE,
        ">=": Relation.GE, "=>": Relation.GE, ">": Relation.GE, "=": Relation.EQ}


def _parse_terms(text: str) -> LinearTerm:
    acc: dict[str, Fraction] = {}
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TERM_RE.match(text, pos)
        if not m:
            raise ValueError(f"cannot parse LP expression near {text[pos:]!r}")
        sign, coef, var = m.groups()
        value = Fraction(coef) if coef else Fraction(1)
        if sign == "-":
            value = -value
        acc[var] = acc.get(var, Fraction(0)) + value
        pos = m.end()
        while pos < len(text) and text[pos] == " ":
            pos += 1
    return LinearTerm(acc)


def parse_lp(text: str) -> MILP:
    """Read a file written by :func:`format_lp` (a small subset of the LP format)."""
    m = MILP()
    section = None
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        low = line.lower()
        if low in ("minimize", "minimum", "min", "maximize", "max"):
            section = "objective"
            continue
        if low in ("subject to", "such that", "st", "s.t."):
            section = "rows"
            continue
        if low in ("bounds", "bound"):
            section = "bounds"
            continue
        if low in ("binary", "binaries", "bin"):
            section = "binary"
            continue
        if low == "end":
            break
        if section == "rows":
            match = _ROW_RE.match(line)
            if not match:
                raise ValueError(f"cannot parse constraint {line!r}")
            name, lhs, rel, rhs = match.groups()
            m.rows.append(Row(name, _parse_terms(lhs), _REL[rel], Fraction(rhs)))
        elif section == "bounds":
            parts = line.split()
            if len(parts) == 2 and parts[1].lower() == "free":
                m.continuous.append(parts[0])
            else:
                raise ValueError(f"unsupported bound line {line!r}")
        elif section == "binary":
            m.binaries.extend(line.split())
    return m


def _normal(row: Row):
    """A row up to positive scaling (and a flip for ``>=``)."""
    items = dict(row.term.items())
    rhs = row.rhs
    rel = row.rel
    if rel is Relation.GE:
        items = {v: -c for v, c in items.items()}
        rhs, rel = -rhs, Relation.LE
    scale = None
    for v in sorted(items):
        if items[v]:
            scale = abs(items[v])
            break
    if scale is None:
        scale = abs(rhs) or Fraction(1)
    key = tuple(sorted((v, c / scale) for v, c in items.items() if c))
    if rel is Relation.EQ and key and key[0][1] < 0:
        key = tuple((v, -c) for v, c in key)
        rhs = -rhs
    return rel, key, rhs / scale


def same_rows(a: MILP, b: MILP) -> bool:
    """Do two MILPs have the same rows up to names, scaling and orientation?"""
    na = sorted(_normal(r) for r in a.rows)
    nb = sorted(_normal(r) for r in b.rows)
    return na == nb and sorted(a.binaries) == sorted(b.binaries)


# ---------------------------------------------------------------------------
# reference feasibility check


class MILPStatus(str, enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"


@dataclass
class MILPResult:
    status: MILPStatus
    assignment: dict | None = None
    lp_calls: int = 0

    @property
    def feasible(self) -> bool:
        return self.status is MILPStatus.FEASIBLE


def _choices(m: MILP):
    grouped = {z for g in m.groups for z in g}
    axes = []
    for g in m.groups:
        axes.append([{z: int(z == hot) for z in g} for hot in g])
    for z in m.binaries:
        if z not in grouped:
            axes.append([{z: 0}, {z: 1}])
    return axes


def check_milp(m: MILP, cap: int = MILP_CAP) -> MILPResult:
    """Feasibility by enumerating the binaries and solving one LP per choice.

    Exactly-one groups only contribute their one-hot assignments; any
    other pattern violates the group's row anyway.
    """
    axes = _choices(m)
    total = math.prod(len(a) for a in axes)
    if total > cap:
        raise MILPCapExceeded(f"{total} binary assignments exceed the cap of {cap}")
    calls = 0
    for combo in itertools.product(*axes):
        fixed: dict[str, int] = {}
        for part in combo:
            fixed.update(part)
        lp = LinearProgram(list(m.continuous))
        for row in m.rows:
            rest = {}
            rhs = row.rhs
            for v, c in row.term.items():
                if v in fixed:
                    rhs -= c * fixed[v]
                else:
                    rest[v] = c
            lp.add(LinearTerm(rest), row.rel, rhs)
        calls += 1
        res = solve(lp)
        if res.status is not LPStatus.INFEASIBLE:
            assignment = dict(res.assignment)
            assignment.update({z: Fraction(v) for z, v in fixed.items()})
            return MILPResult(MILPStatus.FEASIBLE, assignment, calls)
    return MILPResult(MILPStatus.INFEASIBLE, None, calls)
