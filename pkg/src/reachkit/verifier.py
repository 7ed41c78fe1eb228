"""Sound and complete reachability decisions by branch-and-bound.

Given a network ``N`` with input specification ``phi_in`` and output
specification ``phi_out``, :func:`decide` either produces an input ``x``
with ``phi_in(x)`` and ``phi_out(N(x))`` or proves that none exists.

The search works on a compiled form of the instance:

* equalities implied by ``phi_in`` are solved for, so the search runs
  over the free parameters of the input space only;
* nodes with a single piece are composed away, constant nodes are folded
  and nodes computing the same function of the same arguments are shared;
* a node whose pre-activation interval lies inside one piece is replaced
  by that piece.

What remains is a set of *units*, multi-piece equalities ``y = f(arg)``
with ``arg`` affine in the parameters and earlier units.  The search fixes
the piece of one unit at a time in a depth-first order on top of an
incremental simplex.  Units that are not fixed yet are represented by
valid linear bounds (the convex hull of ``f`` on the unit's interval when
that is finite).  Every LP point is pushed through the compiled network
and returned as soon as it satisfies both specifications, and values that
the fixed pieces determine exactly are propagated so that implied pieces
are fixed without branching.
"""

from __future__ import annotations

import enum
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

from ._simplex import ONE, ZERO, Delta, Q, Simplex, real_part, to_q
from .core import (
    INPUT,
    OUTPUT,
    Network,
    PWLFunction,
    Specification,
    _compiled_layers,
    eval_network,
    to_rational,
)

__all__ = [
    "ReachInstance",
    "Verdict",
    "ReachResult",
    "SearchStats",
    "VerifierConfig",
    "BudgetExceeded",
    "decide",
    "check_witness",
    "witness_bits",
    "instance_bits",
    "witness_size_report",
]

BUDGET_ENV = "REACHKIT_BUDGET_MS"
CONST = -1  # key of the constant term inside affine forms


# ---------------------------------------------------------------------------
# public types


@dataclass(frozen=True)
class ReachInstance:
    network: Network
    phi_in: Specification
    phi_out: Specification

    def __post_init__(self):
        if self.phi_in.namespace != INPUT:
            raise ValueError("phi_in must be an input specification")
        if self.phi_out.namespace != OUTPUT:
            raise ValueError("phi_out must be an output specification")
        for v in self.phi_in.variables():
            if not 0 <= v < self.network.input_dim:
                raise ValueError(f"phi_in mentions input {v} outside 0..{self.network.input_dim - 1}")
        for v in self.phi_out.variables():
            if not 0 <= v < self.network.output_dim:
                raise ValueError(f"phi_out mentions output {v} outside 0..{self.network.output_dim - 1}")


class Verdict(str, enum.Enum):
    REACHABLE = "reachable"
    UNREACHABLE = "unreachable"


@dataclass
class SearchStats:
    nodes_explored: int = 0
    lp_checks: int = 0
    pivots: int = 0
    wall_time_ms: float = 0.0
    units: int = 0
    parameters: int = 0
    pinned_leaves: int = 0

    def as_dict(self) -> dict:
        return {
            "nodes_explored": self.nodes_explored,
            "lp_checks": self.lp_checks,
            "pivots": self.pivots,
            "wall_time_ms": round(self.wall_time_ms, 3),
            "units": self.units,
            "parameters": self.parameters,
            "pinned_leaves": self.pinned_leaves,
        }


@dataclass
class ReachResult:
    verdict: Verdict
    witness: list[Fraction] | None
    stats: SearchStats = field(default_factory=SearchStats)

    @property
    def reachable(self) -> bool:
        return self.verdict is Verdict.REACHABLE


@dataclass(frozen=True)
class VerifierConfig:
    """Knobs for :func:`decide`.

    ``relaxation`` is ``"hull"`` (default) or ``"phases"``; the latter
    leaves unfixed units completely unconstrained.  ``order`` is
    ``"cone"`` (units grouped by the first output constraint that depends
    on them, then by layer) or ``"layer"`` (plain layer order).
    ``strict=None`` chooses strict piece bounds exactly when some
    activation is discontinuous.  ``tighten`` controls the root bound
    tightening under the hull relaxation: ``"auto"`` solves LPs only for
    ranges that interval arithmetic leaves unbounded, ``"lp"`` solves them
    for every unit and ``"off"`` skips the step.
    """

    node_budget: int | None = None
    time_budget_ms: int | None = None
    workers: int = 1
    strict: bool | None = None
    relaxation: str = "hull"
    order: str = "cone"
    propagate: bool = True
    tighten: str = "auto"

    def with_env(self) -> "VerifierConfig":
        raw = os.environ.get(BUDGET_ENV)
        if raw and self.time_budget_ms is None:
            return replace(self, time_budget_ms=int(raw))
        return self


class BudgetExceeded(RuntimeError):
    """The search hit its node or time budget before reaching a verdict."""

    def __init__(self, message: str, stats: SearchStats):
        super().__init__(message)
        self.stats = stats


# ---------------------------------------------------------------------------
# size accounting


def _bits(k: int) -> int:
    return max(1, abs(int(k)).bit_length())


def rational_bits(q) -> int:
    q = to_rational(q)
    return _bits(q.numerator) + _bits(q.denominator)


def witness_bits(x: Sequence) -> int:
    """Total bit-length of the numerators and denominators of ``x``."""
    return sum(rational_bits(v) for v in x)


def instance_bits(instance: ReachInstance) -> int:
    """Bit-size of all rationals that describe the instance."""
    total = 0
    for _, _, node in instance.network.nodes():
        total += sum(rational_bits(w) for w in node.weights) + rational_bits(node.bias)
        for a, b in node.activation.pieces:
            total += rational_bits(a) + rational_bits(b)
        total += sum(rational_bits(t) for t in node.activation.breakpoints)
    for spec in (instance.phi_in, instance.phi_out):
        for c in spec.conjuncts:
            total += sum(rational_bits(v) for _, v in c.term.items()) + rational_bits(c.bound)
    return total


def witness_size_report(instance: ReachInstance, result: ReachResult) -> dict:
    report = {
        "verdict": result.verdict.value,
        "instance_bits": instance_bits(instance),
        "input_dim": instance.network.input_dim,
        "num_nodes": instance.network.num_nodes,
        "depth": instance.network.depth,
    }
    if result.witness is not None:
        report["witness_bits"] = witness_bits(result.witness)
        report["max_entry_bits"] = max((rational_bits(v) for v in result.witness), default=0)
    return report


def check_witness(instance: ReachInstance, x: Sequence) -> bool:
    """Exact check of ``phi_in(x)`` and ``phi_out(N(x))``."""
    if len(x) != instance.network.input_dim:
        return False
    x = [to_rational(v) for v in x]
    if not instance.phi_in.holds(x):
        return False
    return instance.phi_out.holds(eval_network(instance.network, x))


# ---------------------------------------------------------------------------
# small exact helpers


def _frac(q) -> Fraction:
    return Fraction(int(q.numerator), int(q.denominator))


def _form_add(acc: dict, form: dict, k) -> None:
    for v, c in form.items():
        nv = acc.get(v, ZERO) + k * c
        if nv:
            acc[v] = nv
        else:
            acc.pop(v, None)


def _form_key(form: dict) -> tuple:
    return tuple(sorted(form.items()))


def _form_eval(form: dict, values) -> object:
    total = form.get(CONST, ZERO)
    for v, c in form.items():
        if v != CONST:
            total = total + c * values[v]
    return total


def _is_const(form: dict) -> bool:
    return all(v == CONST for v in form)


def _iv_scale(iv, k):
    lo, hi = iv
    if k > 0:
        return (None if lo is None else lo * k, None if hi is None else hi * k)
    return (None if hi is None else hi * k, None if lo is None else lo * k)


def _form_interval(form: dict, box) -> tuple:
    lo = hi = form.get(CONST, ZERO)
    for v, c in form.items():
        if v == CONST:
            continue
        a, b = _iv_scale(box[v], c)
        lo = None if lo is None or a is None else lo + a
        hi = None if hi is None or b is None else hi + b
    return lo, hi


def _meet(a, b) -> tuple:
    """Intersection of two intervals with ``None`` for infinite ends."""
    lo = a[0] if b[0] is None or (a[0] is not None and a[0] >= b[0]) else b[0]
    hi = a[1] if b[1] is None or (a[1] is not None and a[1] <= b[1]) else b[1]
    return lo, hi


class _Act:
    """Activation data converted to the internal rational type."""

    __slots__ = ("f", "pieces", "bps", "continuous")

    def __init__(self, f: PWLFunction):
        self.f = f
        self.pieces = [(to_q(a), to_q(b)) for a, b in f.pieces]
        self.bps = [to_q(t) for t in f.breakpoints]
        self.continuous = f.continuous

    def piece(self, x) -> int:
        # breakpoints belong to the upper piece
        i = 0
        for t in self.bps:
            if x >= t:
                i += 1
            else:
                break
        return i

    def __call__(self, x):
        a, b = self.pieces[self.piece(x)]
        return a * x + b

    def line(self, i, x):
        a, b = self.pieces[i]
        return a * x + b

    def span(self, i):
        return (self.bps[i - 1] if i > 0 else None, self.bps[i] if i < len(self.bps) else None)

    def single_piece(self, lo, hi):
        """Index of the piece that covers ``[lo, hi]`` exactly, if any."""
        for i in range(len(self.pieces)):
            a, b = self.span(i)
            if a is not None and (lo is None or lo < a):
                continue
            if b is None:
                return i
            if hi is None:
                continue
            if hi < b or (hi == b and self.continuous):
                return i
        return None

    def closure_points(self, lo, hi):
        """Graph points of the closure of ``f`` restricted to ``[lo, hi]``."""
        pts = []
        if lo is not None:
            pts.append((lo, self(lo)))
        if hi is not None:
            pts.append((hi, self(hi)))
        for i, t in enumerate(self.bps):
            if (lo is None or lo < t) and (hi is None or t <= hi):
                pts.append((t, self.line(i, t)))
            if (lo is None or lo <= t) and (hi is None or t <= hi):
                pts.append((t, self.line(i + 1, t)))
        # anchors on unbounded end pieces
        if lo is None:
            cands = [v for v in (self.bps[0] if self.bps else None, hi) if v is not None]
            xa = min(cands) if cands else ZERO
            pts.append((xa, self.line(0, xa)))
        if hi is None:
            cands = [v for v in (self.bps[-1] if self.bps else None, lo) if v is not None]
            xb = max(cands) if cands else ZERO
            pts.append((xb, self.line(len(self.pieces) - 1, xb)))
        return pts

    def image(self, lo, hi):
        pts = self.closure_points(lo, hi)
        vlo = min(p[1] for p in pts)
        vhi = max(p[1] for p in pts)
        first = self.pieces[0][0]
        last = self.pieces[-1][0]
        if lo is None and first != 0:
            if first > 0:
                vlo = None
            else:
                vhi = None
        if hi is None and last != 0:
            if last > 0:
                vhi = None
            else:
                vlo = None
        return vlo, vhi

    def valid_lines(self, lo, hi):
        """Piece lines that bound ``f`` from below / above on ``[lo, hi]``."""
        pts = self.closure_points(lo, hi)
        first = self.pieces[0][0]
        last = self.pieces[-1][0]
        lower, upper = [], []
        for a, b in self.pieces:
            ok_lo = all(y >= a * x + b for x, y in pts)
            ok_hi = all(y <= a * x + b for x, y in pts)
            if lo is None:
                ok_lo = ok_lo and first <= a
                ok_hi = ok_hi and first >= a
            if hi is None:
                ok_lo = ok_lo and last >= a
                ok_hi = ok_hi and last <= a
            if ok_lo:
                lower.append((a, b))
            if ok_hi:
                upper.append((a, b))
        return lower, upper


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _hull_lines(points):
    """Lower and upper hull edges of a finite point set as (slope, intercept)."""
    pts = sorted(set(points))
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)

    def edges(chain):
        out = []
        for (x0, y0), (x1, y1) in zip(chain, chain[1:]):
            if x0 != x1:
                s = (y1 - y0) / (x1 - x0)
                out.append((s, y0 - s * x0))
        return out

    return edges(lower), edges(upper)


# ---------------------------------------------------------------------------
# compilation


class _Infeasible(Exception):
    """The instance is unreachable for a reason found before any search."""


@dataclass
class _Unit:
    var: int
    act: _Act
    arg: dict
    layer: int
    index: int
    interval: tuple
    group: int = 0


class _Compiled:
    """The instance reduced to parameters, units and affine rows."""

    def __init__(self, instance: ReachInstance):
        self.instance = instance
        net = instance.network
        self._reparametrise(instance.phi_in, net.input_dim)
        self._input_box()
        self._forward(net)
        self._output_rows(instance.phi_out)
        self._liveness()

    # inputs --------------------------------------------------------------
    def _reparametrise(self, phi_in: Specification, n: int):
        bounds: dict[tuple, list] = {}
        order: list[tuple] = []
        for c in phi_in.conjuncts:
            items = [(v, to_q(k)) for v, k in c.term.items()]
            b = to_q(c.bound)
            if not items:
                if ZERO > b:
                    raise _Infeasible("phi_in contains a false constraint")
                continue
            lead = items[0][1]
            key = tuple((v, k / lead) for v, k in items)
            if key not in bounds:
                bounds[key] = [None, None]
                order.append(key)
            lo_hi = bounds[key]
            val = b / lead
            if lead > 0:
                lo_hi[1] = val if lo_hi[1] is None else min(lo_hi[1], val)
            else:
                lo_hi[0] = val if lo_hi[0] is None else max(lo_hi[0], val)
        equalities = []
        ranges = []
        for key in order:
            lo, hi = bounds[key]
            if lo is not None and hi is not None:
                if lo > hi:
                    raise _Infeasible("phi_in is empty")
                if lo == hi:
                    equalities.append((dict(key), lo))
                    continue
            ranges.append((dict(key), lo, hi))
        # Gauss-Jordan over the inputs
        pivots: dict[int, dict] = {}  # input -> {CONST: c, input: coef ...} meaning x = form
        rows = []
        for form, rhs in equalities:
            row = dict(form)
            row[CONST] = -rhs  # row(x) = 0
            rows.append(row)
        reduced: list[tuple[int, dict]] = []
        for row in rows:
            for p, prow in reduced:
                if p in row:
                    _form_add(row, prow, -row[p])
            var = next((v for v in sorted(row) if v != CONST), None)
            if var is None:
                if row.get(CONST, ZERO) != 0:
                    raise _Infeasible("phi_in equalities are inconsistent")
                continue
            k = row[var]
            row = {v: c / k for v, c in row.items()}
            for idx, (p, prow) in enumerate(reduced):
                if var in prow:
                    _form_add(prow, row, -prow[var])
            reduced.append((var, row))
        for p, prow in reduced:
            # x_p = -(rest)
            pivots[p] = {v: -c for v, c in prow.items() if v != p}
        free = [i for i in range(n) if i not in pivots]
        self.num_params = len(free)
        param_of = {x: k for k, x in enumerate(free)}
        self.input_forms: list[dict] = []
        for i in range(n):
            if i in pivots:
                form = {}
                for v, c in pivots[i].items():
                    if v == CONST:
                        _form_add(form, {CONST: ONE}, c)
                    else:
                        _form_add(form, {param_of[v]: ONE}, c)
                self.input_forms.append(form)
            else:
                self.input_forms.append({param_of[i]: ONE})
        self.input_rows: list[tuple[dict, object, object]] = []  # (form, lo, hi)
        for form, lo, hi in ranges:
            sub: dict = {}
            for v, c in form.items():
                _form_add(sub, self.input_forms[v], c)
            if _is_const(sub):
                val = sub.get(CONST, ZERO)
                if (lo is not None and val < lo) or (hi is not None and val > hi):
                    raise _Infeasible("phi_in is empty")
                continue
            self.input_rows.append((sub, lo, hi))

    def _input_box(self):
        from .lp import LinearProgram, LPStatus, solve
        from .core import LinearTerm

        k = self.num_params
        self.box: list[tuple] = [(None, None)] * k
        if not self.input_rows:
            return
        lp = LinearProgram(list(range(k)))
        for form, lo, hi in self.input_rows:
            term = LinearTerm({v: _frac(c) for v, c in form.items() if v != CONST})
            const = _frac(form.get(CONST, ZERO))
            if lo is not None:
                lp.add(term, ">=", _frac(lo) - const)
            if hi is not None:
                lp.add(term, "<=", _frac(hi) - const)
        if solve(lp).status is LPStatus.INFEASIBLE:
            raise _Infeasible("phi_in is empty")
        box = []
        for v in range(k):
            ends = []
            for sign in (1, -1):
                lp.objective = LinearTerm({v: sign})
                res = solve(lp)
                ends.append(None if res.status is LPStatus.UNBOUNDED else to_q(res.value) * sign)
            box.append((ends[0], ends[1]))
        self.box = box

    # network -------------------------------------------------------------
    def _forward(self, net: Network):
        self.units: list[_Unit] = []
        self.var_box: list[tuple] = list(self.box)
        shared: dict[tuple, int] = {}
        values = self.input_forms
        acts: dict[PWLFunction, _Act] = {}
        relu_pairs = any(f.is_relu for f in net.activations())
        for li, (layer, fast) in enumerate(zip(net.layers, _compiled_layers(net)), start=1):
            # group identical predecessor values so dense layers stay cheap
            classes: dict[tuple, int] = {}
            class_forms: list[dict] = []
            class_of = []
            for form in values:
                key = _form_key(form)
                cid = classes.get(key)
                if cid is None:
                    cid = classes[key] = len(class_forms)
                    class_forms.append(form)
                class_of.append(cid)
            new_values = []
            # copies of a node share their compiled row and hence their value
            done: dict[int, dict] = {}
            for ni, (node, row) in enumerate(zip(layer, fast)):
                known = done.get(id(row))
                if known is not None:
                    new_values.append(known)
                    continue
                weights, bias, _ = row
                acc: dict[int, object] = {}
                for j, w in weights:
                    cid = class_of[j]
                    acc[cid] = acc.get(cid, ZERO) + w
                arg: dict = {}
                if bias:
                    arg[CONST] = bias
                for cid, w in acc.items():
                    if w:
                        _form_add(arg, class_forms[cid], w)
                act = acts.get(node.activation)
                if act is None:
                    act = acts[node.activation] = _Act(node.activation)
                if relu_pairs:
                    arg = self._fold_pairs(arg, shared)
                done[id(row)] = value = self._apply(act, arg, li, ni, shared)
                new_values.append(value)
            values = new_values
        self.output_forms = values

    def _fold_pairs(self, arg: dict, shared: dict) -> dict:
        """Use ``ReLU(s) - ReLU(-s) = s`` wherever a sum reads such a pair."""
        k = self.num_params
        for var in [v for v in arg if v >= k]:
            c = arg.get(var)
            if c is None:
                continue
            u = self.units[var - k]
            if not u.act.f.is_relu:
                continue
            neg = {v: -w for v, w in u.arg.items()}
            partner = shared.get((u.act.f, _form_key(neg)))
            if partner is None or arg.get(partner) != -c:
                continue
            del arg[var]
            del arg[partner]
            _form_add(arg, u.arg, c)
        return arg

    def _apply(self, act: _Act, arg: dict, li: int, ni: int, shared: dict) -> dict:
        if len(act.pieces) == 1:
            a, b = act.pieces[0]
            out: dict = {CONST: b} if b else {}
            _form_add(out, arg, a)
            return out
        if _is_const(arg):
            v = act(arg.get(CONST, ZERO))
            return {CONST: v} if v else {}
        lo, hi = _form_interval(arg, self.var_box)
        w = act.single_piece(lo, hi)
        if w is not None:
            a, b = act.pieces[w]
            out = {CONST: b} if b else {}
            _form_add(out, arg, a)
            return out
        key = (act.f, _form_key(arg))
        var = shared.get(key)
        if var is None:
            var = self.num_params + len(self.units)
            shared[key] = var
            self.units.append(_Unit(var, act, arg, li, ni, (lo, hi)))
            self.var_box.append(act.image(lo, hi))
        return {var: ONE}

    def _output_rows(self, phi_out: Specification):
        self.output_rows: list[tuple[dict, object]] = []  # form <= bound
        for c in phi_out.conjuncts:
            form: dict = {}
            for j, k in c.term.items():
                _form_add(form, self.output_forms[j], to_q(k))
            bound = to_q(c.bound)
            if _is_const(form):
                if form.get(CONST, ZERO) > bound:
                    raise _Infeasible("phi_out is violated by a constant output")
                continue
            self.output_rows.append((form, bound))

    def _liveness(self):
        k = self.num_params
        live: set[int] = set()
        stack = []
        for form, _ in self.output_rows:
            stack.extend(v for v in form if v >= k)
        for form, _, _ in self.input_rows:
            stack.extend(v for v in form if v >= k)
        while stack:
            v = stack.pop()
            if v in live:
                continue
            live.add(v)
            stack.extend(u for u in self.units[v - k].arg if u >= k)
        self.live = [u for u in self.units if u.var in live]
        relevant: set[int] = set()
        for form, _ in self.output_rows:
            relevant.update(v for v in form if 0 <= v < k)
        for form, _, _ in self.input_rows:
            relevant.update(v for v in form if 0 <= v < k)
        for u in self.live:
            relevant.update(v for v in u.arg if 0 <= v < k)
        self.relevant_params = sorted(relevant)
        # cone groups: first output constraint whose value depends on the unit
        group = {u.var: len(self.output_rows) for u in self.live}
        for gi, (form, _) in enumerate(self.output_rows):
            stack = [v for v in form if v >= k]
            seen = set()
            while stack:
                v = stack.pop()
                if v in seen:
                    continue
                seen.add(v)
                if group.get(v, -1) > gi:
                    group[v] = gi
                stack.extend(u for u in self.units[v - k].arg if u >= k)
        for u in self.live:
            u.group = group[u.var]

    # evaluation ----------------------------------------------------------
    def evaluate(self, params) -> dict:
        """Values of all live units for a parameter vector."""
        vals = {v: params[v] for v in range(self.num_params)}
        for u in self.live:
            vals[u.var] = u.act(_form_eval(u.arg, vals))
        return vals

    def rows_hold(self, vals) -> bool:
        for form, bound in self.output_rows:
            if _form_eval(form, vals) > bound:
                return False
        for form, lo, hi in self.input_rows:
            v = _form_eval(form, vals)
            if (lo is not None and v < lo) or (hi is not None and v > hi):
                return False
        return True

    def inputs_from(self, params) -> list[Fraction]:
        return [_frac(_form_eval(form, params)) for form in self.input_forms]


# ---------------------------------------------------------------------------
# search


class _Search:
    def __init__(self, comp: _Compiled, config: VerifierConfig, stats: SearchStats, deadline):
        self.comp = comp
        self.config = config
        self.stats = stats
        self.deadline = deadline
        k = comp.num_params
        self.k = k
        live = comp.live
        self.strict = (
            config.strict if config.strict is not None
            else any(not u.act.continuous for u in live)
        )
        if config.order == "layer":
            key = lambda u: (u.layer, u.index)  # noqa: E731
        else:
            key = lambda u: (u.group, u.layer, u.index)  # noqa: E731
        self.order = sorted(live, key=key)
        self.unit_of = {u.var: u for u in live}

        sx = self.sx = Simplex()
        self.col: dict[int, int] = {}
        for v in range(k):
            self.col[v] = sx.add_var()
        for u in live:
            self.col[u.var] = sx.add_var()
        self.arg_row: dict[int, tuple[int, object]] = {}
        for u in live:
            self.arg_row[u.var] = self._row(u.arg)
        # units whose arguments are proportional (ReLU(s) next to ReLU(-s),
        # say) share bounds: arg_u = lead_u * S + const_u for a common S
        self.direction: dict[int, tuple] = {}
        family: dict[tuple, list] = {}
        for u in live:
            items = sorted((v, c) for v, c in u.arg.items() if v != CONST)
            if not items:
                continue
            lead = items[0][1]
            key = tuple((v, c / lead) for v, c in items)
            family.setdefault(key, []).append(u)
            self.direction[u.var] = (key, lead)
        self.siblings = {u.var: family[self.direction[u.var][0]]
                         for u in live if u.var in self.direction}
        self.piece_rows: dict[tuple[int, int], tuple[int, object] | None] = {}
        # rows of the specifications are permanent
        for form, bound in comp.output_rows:
            r, c = self._row(form)
            self._bound(r, None, bound - c)
        for form, lo, hi in comp.input_rows:
            r, c = self._row(form)
            self._bound(r, None if lo is None else lo - c, None if hi is None else hi - c)
        for v in range(k):
            lo, hi = comp.box[v]
            self._bound(self.col[v], lo, hi)
        # equalities among output rows feed the propagation of known values
        self.static_eqs = self._paired(comp.output_rows)
        self.fixed: dict[int, int] = {}
        if config.relaxation == "hull":
            for u in live:
                self._hull(u)
            if not sx.check():
                raise _Infeasible("root relaxation is infeasible")
            if config.tighten != "off":
                self._tighten()
            self.order = [u for u in self.order if u.var not in self.fixed]

    # tableau helpers -------------------------------------------------------
    def _row(self, form: dict):
        items = [(self.col[v], c) for v, c in form.items() if v != CONST]
        const = form.get(CONST, ZERO)
        if len(items) == 1 and items[0][1] == ONE:
            return items[0][0], const
        return self.sx.add_row(items), const

    def _bound(self, var, lo, hi) -> bool:
        ok = True
        if lo is not None:
            ok = self.sx.assert_lower(var, lo) and ok
        if hi is not None:
            ok = self.sx.assert_upper(var, hi) and ok
        if not ok:
            raise _Infeasible("bounds conflict at the root")
        return ok

    def _hull(self, u: _Unit):
        lo, hi = u.interval
        r, c = self.arg_row[u.var]
        y = self.col[u.var]
        if lo is not None:
            self.sx.assert_lower(r, lo - c)
        if hi is not None:
            self.sx.assert_upper(r, hi - c)
        vlo, vhi = self.comp.var_box[u.var]
        if vlo is not None:
            self.sx.assert_lower(y, vlo)
        if vhi is not None:
            self.sx.assert_upper(y, vhi)
        if lo is not None and hi is not None:
            if lo == hi:
                return
            lower, upper = _hull_lines(u.act.closure_points(lo, hi))
        else:
            lower, upper = u.act.valid_lines(lo, hi)
        for a, b in lower:
            row = self._line_row(u, a)
            if row is not None:
                rv, rc = row
                self.sx.assert_lower(rv, b - rc)
        for a, b in upper:
            row = self._line_row(u, a)
            if row is not None:
                rv, rc = row
                self.sx.assert_upper(rv, b - rc)

    def _lp_range(self, r, c):
        ends = []
        for sign in (ONE, -ONE):
            outcome, value = self.sx.minimize({r: sign})
            ends.append(None if outcome == "unbounded" else sign * real_part(value) + c)
        return ends

    def _tighten(self):
        """Shrink parameter boxes and unit intervals under the root relaxation.

        Parameters get their LP range first.  Units are then visited in
        network order: interval arithmetic over the current boxes comes
        first, and an LP range is only computed while an end is still
        unbounded (``config.tighten == "lp"`` asks for it on every unit).
        Units whose range falls inside one piece are fixed for the search.
        """
        sx = self.sx
        box = self.comp.var_box
        for v in range(self.comp.num_params):
            lo, hi = _meet(box[v], self._lp_range(self.col[v], ZERO))
            if (lo, hi) != tuple(box[v]):
                box[v] = (lo, hi)
                self._bound(self.col[v], lo, hi)
        always = self.config.tighten == "lp"
        for u in self.comp.live:
            lo, hi = _meet(u.interval, _form_interval(u.arg, box))
            if always or lo is None or hi is None:
                r, c = self.arg_row[u.var]
                lo, hi = _meet((lo, hi), self._lp_range(r, c))
            if (lo, hi) == tuple(u.interval):
                continue
            u.interval = (lo, hi)
            box[u.var] = _meet(box[u.var], u.act.image(lo, hi))
            self._hull(u)
            w = u.act.single_piece(lo, hi)
            if w is not None:
                # the line is exact on the closed range, so no strict bound is needed
                self.fixed[u.var] = w
                a, b = u.act.pieces[w]
                rv, rc = self._line_row(u, a)
                if not (sx.assert_lower(rv, b - rc) and sx.assert_upper(rv, b - rc)):
                    raise _Infeasible("root relaxation is infeasible")
            if not sx.check():
                raise _Infeasible("root relaxation is infeasible")

    def _line_row(self, u: _Unit, a):
        """Row for ``y - a*arg`` (returned with its constant offset)."""
        if a == 0:
            return self.col[u.var], ZERO
        form = {u.var: ONE}
        _form_add(form, u.arg, -a)
        return self._row(form)

    def _paired(self, rows):
        seen = {}
        eqs = []
        for form, bound in rows:
            items = tuple(sorted((v, c) for v, c in form.items() if v != CONST))
            const = form.get(CONST, ZERO)
            neg = tuple((v, -c) for v, c in items)
            if neg in seen and seen[neg] == -(bound - const):
                eqs.append((dict(items), bound - const))
            seen[items] = bound - const
        return eqs

    # fixing ---------------------------------------------------------------
    def _fix(self, u: _Unit, w: int) -> bool:
        self.fixed[u.var] = w
        r, c = self.arg_row[u.var]
        lo, hi = u.act.span(w)
        sx = self.sx
        if lo is not None and not sx.assert_lower(r, lo - c):
            return False
        if hi is not None:
            bound = hi - c
            # a closed bound is exact wherever f is continuous
            if self.config.strict or (self.strict and not u.act.f.continuous_at(w)):
                bound = Delta(bound, Q(-1))
            if not sx.assert_upper(r, bound):
                return False
        a, b = u.act.pieces[w]
        key = (u.var, w)
        row = self.piece_rows.get(key)
        if row is None:
            row = self.piece_rows[key] = self._line_row(u, a)
        rv, rc = row
        return sx.assert_lower(rv, b - rc) and sx.assert_upper(rv, b - rc)

    # propagation ------------------------------------------------------------
    def _propagate(self):
        """Values forced by fixed pieces and equalities; implied pieces."""
        known: dict[int, object] = {}
        eqs = list(self.static_eqs)
        for var, w in self.fixed.items():
            u = self.unit_of[var]
            a, b = u.act.pieces[w]
            form = {var: ONE}
            _form_add(form, u.arg, -a)
            c = form.pop(CONST, ZERO)
            eqs.append((form, b - c))
        implied = []
        pending = [u for u in self.order if u.var not in self.fixed]
        changed = True
        while changed:
            changed = False
            for form, rhs in eqs:
                unknown = None
                acc = rhs
                skip = False
                for v, c in form.items():
                    if v in known:
                        acc = acc - c * known[v]
                    elif unknown is None:
                        unknown = (v, c)
                    else:
                        skip = True
                        break
                if skip or unknown is None:
                    continue
                v, c = unknown
                known[v] = acc / c
                changed = True
            rest = []
            for u in pending:
                if all(v == CONST or v in known for v in u.arg):
                    x = _form_eval(u.arg, known)
                    w = u.act.piece(x)
                    implied.append((u, w))
                    known[u.var] = u.act(x)
                    changed = True
                else:
                    rest.append(u)
            pending = rest
        return known, implied

    def _piece_within(self, u: _Unit, lo, hi):
        """The piece that fixing would not cut anything from ``[lo, hi]``."""
        if lo is None:
            return None
        w = u.act.piece(real_part(lo) if isinstance(lo, Delta) else lo)
        a, b = u.act.span(w)
        if a is not None and lo < a:
            return None
        if b is not None:
            if hi is None or hi > b:
                return None
            if hi == b and (self.config.strict or not u.act.f.continuous_at(w)):
                return None
        return w

    def _implied_by_siblings(self, skip):
        """Pieces forced by the current bounds on proportional arguments."""
        sx = self.sx
        implied = []
        for u in self.order:
            if u.var in self.fixed or u.var in skip or u.var not in self.siblings:
                continue
            lo = hi = None
            for v in self.siblings[u.var]:
                r, _ = self.arg_row[v.var]
                k = self.direction[v.var][1]
                a, b = sx.lo[r], sx.hi[r]
                if k < 0:
                    a, b = b, a
                inv = ONE / k
                if a is not None:
                    a = a * inv
                    lo = a if lo is None or a > lo else lo
                if b is not None:
                    b = b * inv
                    hi = b if hi is None or b < hi else hi
            k = self.direction[u.var][1]
            c = u.arg.get(CONST, ZERO)
            if k < 0:
                lo, hi = hi, lo
            lo = None if lo is None else lo * k + c
            hi = None if hi is None else hi * k + c
            w = self._piece_within(u, lo, hi)
            if w is not None:
                implied.append((u, w))
        return implied

    # main loop --------------------------------------------------------------
    def _tick(self):
        st = self.stats
        st.nodes_explored += 1
        budget = self.config.node_budget
        if budget is not None and st.nodes_explored > budget:
            raise BudgetExceeded(f"node budget {budget} exhausted", st)
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise BudgetExceeded(f"time budget {self.config.time_budget_ms} ms exhausted", st)

    def _check(self) -> bool:
        self.stats.lp_checks += 1
        return self.sx.check()

    def _params_from_model(self):
        model = self.sx.model()
        return [model[self.col[v]] for v in range(self.k)]

    def _try(self, params):
        vals = self.comp.evaluate(params)
        if self.comp.rows_hold(vals):
            return params
        return None

    def run(self, prefix=()):
        for var, w in prefix:
            if not self._fix(self.unit_of[var], w):
                return None
        return self._node()

    def _node(self):
        self._tick()
        if not self._check():
            return None
        found = self._try(self._params_from_model())
        if found is not None:
            return found
        implied = []
        if self.config.propagate:
            known, implied = self._propagate()
            if all(v in known for v in self.comp.relevant_params):
                self.stats.pinned_leaves += 1
                params = [known.get(v, ZERO) for v in range(self.k)]
                return self._try(params)
            seen = {u.var for u, _ in implied}
            implied = implied + self._implied_by_siblings(seen)
        if implied:
            self.sx.push()
            try:
                for u, w in implied:
                    if not self._fix(u, w):
                        return None
                return self._node()
            finally:
                for u, _ in implied:
                    self.fixed.pop(u.var, None)
                self.sx.pop()
        unit = next((u for u in self.order if u.var not in self.fixed), None)
        if unit is None:
            # every live unit is fixed and the LP is feasible, so the LP
            # point is an exact solution; reaching here means a bug
            raise AssertionError("fully fixed feasible node without a witness")
        r, c = self.arg_row[unit.var]
        current = real_part(self.sx.val[r]) + c
        first = unit.act.piece(current)
        children = [first] + [w for w in reversed(range(len(unit.act.pieces))) if w != first]
        for w in children:
            self.sx.push()
            try:
                if self._fix(unit, w):
                    found = self._node()
                    if found is not None:
                        return found
            finally:
                self.fixed.pop(unit.var, None)
                self.sx.pop()
        return None

    def frontier(self, depth: int):
        """Piece prefixes over the first ``depth`` units in search order."""
        prefixes = [()]
        for u in self.order[:depth]:
            prefixes = [p + ((u.var, w),) for p in prefixes for w in range(len(u.act.pieces))]
        return prefixes


# ---------------------------------------------------------------------------
# entry points


def _solve_subtree(instance: ReachInstance, config: VerifierConfig, prefix, deadline):
    stats = SearchStats()
    comp = _Compiled(instance)
    try:
        search = _Search(comp, config, stats, deadline)
    except _Infeasible:
        return None, stats
    params = search.run(prefix)
    stats.pivots = search.sx.pivots
    witness = None if params is None else comp.inputs_from(
        [params[v] if v < len(params) else ZERO for v in range(comp.num_params)])
    return witness, stats


def decide(instance: ReachInstance, config: VerifierConfig | None = None) -> ReachResult:
    """Decide reachability exactly.  Raises :class:`BudgetExceeded` on budget exhaustion."""
    config = (config or VerifierConfig()).with_env()
    start = time.monotonic()
    deadline = None if config.time_budget_ms is None else start + config.time_budget_ms / 1000
    stats = SearchStats()
    try:
        comp = _Compiled(instance)
    except _Infeasible:
        stats.wall_time_ms = (time.monotonic() - start) * 1000
        return ReachResult(Verdict.UNREACHABLE, None, stats)
    stats.units = len(comp.live)
    stats.parameters = comp.num_params
    try:
        if config.workers > 1 and len(comp.live) > 1:
            witness = _decide_parallel(instance, comp, config, stats, deadline)
        else:
            try:
                search = _Search(comp, config, stats, deadline)
            except _Infeasible:
                witness = None
            else:
                params = search.run()
                stats.pivots = search.sx.pivots
                witness = None if params is None else comp.inputs_from(params)
    finally:
        stats.wall_time_ms = (time.monotonic() - start) * 1000
    if witness is None:
        return ReachResult(Verdict.UNREACHABLE, None, stats)
    if not check_witness(instance, witness):  # pragma: no cover - soundness guard
        raise AssertionError("internal error: witness failed exact verification")
    return ReachResult(Verdict.REACHABLE, witness, stats)


def _decide_parallel(instance, comp, config, stats, deadline):
    try:
        search = _Search(comp, config, SearchStats(), deadline)
    except _Infeasible:
        return None
    depth = 0
    size = 1
    while size < 2 * config.workers and depth < len(search.order):
        size *= len(search.order[depth].act.pieces)
        depth += 1
    prefixes = search.frontier(depth)
    sub_config = replace(config, workers=1)
    results: list = [None] * len(prefixes)
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        futures = [pool.submit(_solve_subtree, instance, sub_config, p, deadline) for p in prefixes]
        try:
            for i, fut in enumerate(futures):
                witness, sub = fut.result()
                stats.nodes_explored += sub.nodes_explored
                stats.lp_checks += sub.lp_checks
                stats.pivots += sub.pivots
                stats.pinned_leaves += sub.pinned_leaves
                results[i] = witness
                # subtrees are merged in order, so the lowest index wins
                if witness is not None:
                    for f in futures[i + 1:]:
                        f.cancel()
                    return witness
        except BudgetExceeded as exc:
            for f in futures:
                f.cancel()
            raise BudgetExceeded(str(exc), stats) from None
    return None
