"""Formula corpora for the round-trip tests."""

from __future__ import annotations

import itertools
import random

from reachkit.reductions import CnfFormula


def _canonical(n: int, clauses) -> tuple:
    best = None
    for perm in itertools.permutations(range(1, n + 1)):
        mapped = sorted(
            tuple(sorted((perm[abs(l) - 1] if l > 0 else -perm[abs(l) - 1]) for l in c))
            for c in clauses
        )
        key = tuple(mapped)
        if best is None or key < best:
            best = key
    return best


def exhaustive(max_n: int = 3, max_m: int = 3) -> list[CnfFormula]:
    """Every 3-CNF with at most ``max_n`` variables and ``max_m`` clauses.

    Clauses are multisets of literals (so "1 1 2" is a clause with a
    repeated literal) and formulas are multisets of clauses, taken up to
    renaming the variables.  Only formulas that mention every one of
    their ``n`` variables are kept, so each shape is counted once.
    """
    out = []
    for n in range(1, max_n + 1):
        lits = [v for i in range(1, n + 1) for v in (i, -i)]
        clauses = list(itertools.combinations_with_replacement(sorted(lits), 3))
        seen = set()
        for m in range(1, max_m + 1):
            for combo in itertools.combinations_with_replacement(clauses, m):
                used = {abs(l) for c in combo for l in c}
                if len(used) != n:
                    continue
                key = _canonical(n, combo)
                if key in seen:
                    continue
                seen.add(key)
                out.append(CnfFormula(n, key))
    return out


def random_formulas(count: int = 200, seed: int = 3, max_n: int = 6, max_m: int = 10) -> list[CnfFormula]:
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        n = rng.randint(1, max_n)
        m = rng.randint(1, max_m)
        clauses = tuple(
            tuple(rng.choice((1, -1)) * rng.randint(1, n) for _ in range(3)) for _ in range(m)
        )
        out.append(CnfFormula(n, clauses))
    return out
