"""Incremental bounded simplex over exact rationals.

This is the general-simplex layout used by SMT solvers: every constraint
row introduces a basic variable ``s = sum a_j x_j`` and all inequalities
become bounds on variables.  Feasibility is restored with Bland's rule,
which terminates without any perturbation.  Bounds can be pushed and
popped, so a branch-and-bound search keeps its tableau (and therefore its
basis) from one node to the next.

Strict bounds are handled symbolically: a value is either a plain
rational or a :class:`Delta` ``r + s*delta`` for an infinitesimal
``delta > 0``.  Values only become :class:`Delta` once a strict bound has
been asserted, so the non-strict path never pays for it.
"""

from __future__ import annotations

from typing import Iterable

try:  # pragma: no cover - exercised implicitly
    from gmpy2 import mpq as Q
except ImportError:  # pragma: no cover
    from fractions import Fraction as Q

ZERO = Q(0)
ONE = Q(1)


def to_q(x):
    if isinstance(x, Delta):
        return x
    return Q(x.numerator, x.denominator) if not isinstance(x, int) else Q(x)


class Delta:
    """``r + s*delta`` ordered lexicographically."""

    __slots__ = ("r", "s")

    def __init__(self, r, s=ZERO):
        self.r = r
        self.s = s

    @staticmethod
    def _parts(x):
        if isinstance(x, Delta):
            return x.r, x.s
        return x, ZERO

    def __add__(self, o):
        r, s = Delta._parts(o)
        return Delta(self.r + r, self.s + s)

    __radd__ = __add__

    def __sub__(self, o):
        r, s = Delta._parts(o)
        return Delta(self.r - r, self.s - s)

    def __rsub__(self, o):
        r, s = Delta._parts(o)
        return Delta(r - self.r, s - self.s)

    def __neg__(self):
        return Delta(-self.r, -self.s)

    def __mul__(self, k):
        if isinstance(k, Delta):
            raise TypeError("cannot multiply two delta-rationals")
        return Delta(self.r * k, self.s * k)

    __rmul__ = __mul__

    def __truediv__(self, k):
        if isinstance(k, Delta):
            # only used for ratio tests where both sides share the infinitesimal
            raise TypeError("cannot divide by a delta-rational")
        return Delta(self.r / k, self.s / k)

    def _cmp(self, o):
        r, s = Delta._parts(o)
        if self.r != r:
            return -1 if self.r < r else 1
        if self.s != s:
            return -1 if self.s < s else 1
        return 0

    def __lt__(self, o):
        return self._cmp(o) < 0

    def __le__(self, o):
        return self._cmp(o) <= 0

    def __gt__(self, o):
        return self._cmp(o) > 0

    def __ge__(self, o):
        return self._cmp(o) >= 0

    def __eq__(self, o):
        return self._cmp(o) == 0

    def __hash__(self):
        return hash((self.r, self.s))

    def __repr__(self):
        return f"Delta({self.r}, {self.s})"


def real_part(x):
    return x.r if isinstance(x, Delta) else x


def delta_part(x):
    return x.s if isinstance(x, Delta) else ZERO


class Infeasible(Exception):
    pass


class Simplex:
    """Tableau with push/pop of variable bounds.

    Variables are integers ``0..n-1``.  ``add_var`` creates a structural
    variable, ``add_row`` a basic variable defined as a linear combination
    of existing ones.
    """

    def __init__(self):
        self.rows: dict[int, dict[int, object]] = {}
        self.cols: list[set[int]] = []
        self.val: list = []
        self.lo: list = []
        self.hi: list = []
        self._trail: list = []
        self._marks: list[int] = []
        self.pivots = 0

    # construction ------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.val)

    def add_var(self, lo=None, hi=None) -> int:
        v = len(self.val)
        self.cols.append(set())
        self.val.append(ZERO)
        self.lo.append(None)
        self.hi.append(None)
        if lo is not None:
            self.lo[v] = lo
        if hi is not None:
            self.hi[v] = hi
        if lo is not None:
            self.val[v] = lo
        elif hi is not None:
            self.val[v] = hi
        return v

    def add_row(self, coeffs: Iterable[tuple[int, object]]) -> int:
        """New basic variable equal to ``sum c * x`` over existing variables."""
        row: dict[int, object] = {}
        for x, c in coeffs:
            if not c:
                continue
            if x in self.rows:
                for y, d in self.rows[x].items():
                    nv = row.get(y, ZERO) + c * d
                    if nv:
                        row[y] = nv
                    else:
                        row.pop(y, None)
            else:
                nv = row.get(x, ZERO) + c
                if nv:
                    row[x] = nv
                else:
                    row.pop(x, None)
        s = len(self.val)
        self.cols.append(set())
        self.lo.append(None)
        self.hi.append(None)
        value = ZERO
        for y, c in row.items():
            value = value + c * self.val[y]
            self.cols[y].add(s)
        self.val.append(value)
        self.rows[s] = row
        return s

    # bounds --------------------------------------------------------------
    def push(self):
        self._marks.append(len(self._trail))

    def pop(self):
        mark = self._marks.pop()
        trail = self._trail
        lo, hi = self.lo, self.hi
        while len(trail) > mark:
            v, old_lo, old_hi = trail.pop()
            lo[v] = old_lo
            hi[v] = old_hi

    def _record(self, v):
        if self._marks:
            self._trail.append((v, self.lo[v], self.hi[v]))

    def assert_lower(self, v, bound) -> bool:
        """Tighten the lower bound; returns False on an immediate conflict."""
        cur = self.lo[v]
        if cur is not None and bound <= cur:
            return True
        hi = self.hi[v]
        if hi is not None and bound > hi:
            return False
        self._record(v)
        self.lo[v] = bound
        if v not in self.rows and self.val[v] < bound:
            self._update(v, bound)
        return True

    def assert_upper(self, v, bound) -> bool:
        cur = self.hi[v]
        if cur is not None and bound >= cur:
            return True
        lo = self.lo[v]
        if lo is not None and bound < lo:
            return False
        self._record(v)
        self.hi[v] = bound
        if v not in self.rows and self.val[v] > bound:
            self._update(v, bound)
        return True

    # core ------------------------------------------------------------------
    def _update(self, j, v):
        theta = v - self.val[j]
        val = self.val
        rows = self.rows
        for r in self.cols[j]:
            val[r] = val[r] + rows[r][j] * theta
        val[j] = v

    def _pivot(self, i, j):
        """Make basic ``i`` nonbasic and nonbasic ``j`` basic."""
        self.pivots += 1
        rows, cols = self.rows, self.cols
        row_i = rows.pop(i)
        a = row_i.pop(j)
        inv = ONE / a
        # x_j = (x_i - sum_{k != j} a_k x_k) / a
        new_row = {i: inv}
        for k, c in row_i.items():
            new_row[k] = -c * inv
            cols[k].discard(i)
        cols[j].discard(i)
        for r in list(cols[j]):
            row_r = rows[r]
            c = row_r.pop(j)
            for k, d in new_row.items():
                nv = row_r.get(k, ZERO) + c * d
                if nv:
                    row_r[k] = nv
                    cols[k].add(r)
                else:
                    if k in row_r:
                        del row_r[k]
                    cols[k].discard(r)
        cols[j] = set()
        rows[j] = new_row
        for k in new_row:
            cols[k].add(j)

    def _pivot_and_update(self, i, j, v):
        a = self.rows[i][j]
        theta = (v - self.val[i]) / a
        val = self.val
        val[i] = v
        val[j] = val[j] + theta
        rows = self.rows
        for r in self.cols[j]:
            if r != i:
                val[r] = val[r] + rows[r][j] * theta
        self._pivot(i, j)

    def check(self, max_pivots: int | None = None) -> bool:
        """Restore feasibility of all bounds; False iff they are unsatisfiable."""
        rows, val, lo, hi = self.rows, self.val, self.lo, self.hi
        start = self.pivots
        while True:
            bad = None
            for b in sorted(rows):
                x = val[b]
                l = lo[b]
                if l is not None and x < l:
                    bad = (b, l, True)
                    break
                h = hi[b]
                if h is not None and x > h:
                    bad = (b, h, False)
                    break
            if bad is None:
                return True
            b, target, increase = bad
            row = rows[b]
            pick = None
            for j in sorted(row):
                a = row[j]
                if (a > 0) == increase:
                    if hi[j] is None or val[j] < hi[j]:
                        pick = j
                        break
                else:
                    if lo[j] is None or val[j] > lo[j]:
                        pick = j
                        break
            if pick is None:
                return False
            self._pivot_and_update(b, pick, target)
            if max_pivots is not None and self.pivots - start > max_pivots:
                raise RuntimeError("simplex pivot limit exceeded")

    # optimisation -------------------------------------------------------
    def minimize(self, objective: dict[int, object], max_iter: int = 1_000_000):
        """Minimise ``sum c_v v`` from a feasible tableau.

        Returns ``("optimal", value)`` or ``("unbounded", None)``.  Uses
        the bounded primal simplex with Bland's rule for both the entering
        and the leaving variable.
        """
        rows, cols, val, lo, hi = self.rows, self.cols, self.val, self.lo, self.hi
        obj: dict[int, object] = {}
        for v, c in objective.items():
            if not c:
                continue
            if v in rows:
                for k, d in rows[v].items():
                    nv = obj.get(k, ZERO) + c * d
                    if nv:
                        obj[k] = nv
                    else:
                        obj.pop(k, None)
            else:
                nv = obj.get(v, ZERO) + c
                if nv:
                    obj[v] = nv
                else:
                    obj.pop(v, None)
        for _ in range(max_iter):
            enter = None
            for j in sorted(obj):
                d = obj[j]
                if d < 0 and (hi[j] is None or val[j] < hi[j]):
                    enter, step = j, 1
                    break
                if d > 0 and (lo[j] is None or val[j] > lo[j]):
                    enter, step = j, -1
                    break
            if enter is None:
                total = ZERO
                for v, c in objective.items():
                    total = total + c * val[v]
                return "optimal", total
            j = enter
            # ratio test; candidates are (theta, index)
            best = None
            if step > 0 and hi[j] is not None:
                best = (hi[j] - val[j], j)
            elif step < 0 and lo[j] is not None:
                best = (val[j] - lo[j], j)
            for r in cols[j]:
                a = rows[r][j] * step
                if a > 0:
                    bound = hi[r]
                    if bound is None:
                        continue
                    theta = (bound - val[r]) / a
                elif a < 0:
                    bound = lo[r]
                    if bound is None:
                        continue
                    theta = (bound - val[r]) / a
                else:  # pragma: no cover - zero entries are never stored
                    continue
                if best is None or theta < best[0] or (theta == best[0] and r < best[1]):
                    best = (theta, r)
            if best is None:
                return "unbounded", None
            theta, leave = best
            if leave == j:
                self._update(j, val[j] + theta if step > 0 else val[j] - theta)
                continue
            target = hi[leave] if rows[leave][j] * step > 0 else lo[leave]
            self._pivot_and_update(leave, j, target)
            # substitute x_j in the objective row
            c = obj.pop(j, None)
            if c is not None:
                for k, d in rows[j].items():
                    nv = obj.get(k, ZERO) + c * d
                    if nv:
                        obj[k] = nv
                    else:
                        obj.pop(k, None)
        raise RuntimeError("simplex iteration limit exceeded")

    # models ---------------------------------------------------------------
    def concrete_delta(self):
        """A positive rational small enough to realise every symbolic value."""
        delta = ONE
        for v in range(len(self.val)):
            x = self.val[v]
            xr, xs = real_part(x), delta_part(x)
            l = self.lo[v]
            if l is not None:
                lr, ls = real_part(l), delta_part(l)
                # need xr + xs*d >= lr + ls*d
                if ls > xs and xr > lr:
                    delta = min(delta, (xr - lr) / (ls - xs))
            h = self.hi[v]
            if h is not None:
                hr, hs = real_part(h), delta_part(h)
                if xs > hs and hr > xr:
                    delta = min(delta, (hr - xr) / (xs - hs))
        return delta

    def model(self):
        """Concrete rational values for all variables."""
        if not any(isinstance(x, Delta) for x in self.val):
            return list(self.val)
        d = self.concrete_delta()
        return [real_part(x) + delta_part(x) * d for x in self.val]
