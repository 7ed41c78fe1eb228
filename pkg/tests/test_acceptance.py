"""Acceptance suite: one test per criterion.

Every test is marked with ``criterion`` so that ``conftest.py`` can print
a PASS/FAIL line per criterion at the end of the run.  All checks use
exact rational arithmetic; nothing here has a tolerance.
"""

import itertools
import math
import random
import time
from fractions import Fraction as F

import pytest

from cnfcorpus import exhaustive, random_formulas
from randnets import corpus, random_relu_network
from reachkit.core import IDENTITY, RELU, eval_network
from reachkit.milp import check_milp, encode
from reachkit.oracle import reach_bruteforce, sat_bruteforce
from reachkit.reductions import CnfFormula, GadgetKind, generate, make_gadget, to_relu_only
from reachkit.verifier import check_witness, decide, instance_bits, witness_bits

GADGET_PARAMS = [(F(1), F(1)), (F(3, 2), F(2)), (F(1, 2), F(1, 3))]


def ev(net, *xs):
    (out,) = eval_network(net, [F(x) for x in xs])
    return out


def fan_in(node):
    return sum(1 for w in node.weights if w)


# ---------------------------------------------------------------------------


@pytest.mark.criterion(1, "gadget lemma suite")
def test_criterion_1_gadgets(detail):
    start = time.perf_counter()
    checked = 0
    bits = list(itertools.product((0, 1), repeat=3))

    not_g = make_gadget(GadgetKind.NOT)
    assert ev(not_g, 1) == 0 and ev(not_g, 0) == 1
    or_g = make_gadget(GadgetKind.OR3)
    assert ev(or_g, 0, 0, 0) == 0
    for r in bits:
        assert (ev(or_g, *r) == 1) == any(r)
    for n in range(1, 6):
        and_g = make_gadget(GadgetKind.AND, n=n)
        for r in itertools.product((0, 1), repeat=n):
            assert (ev(and_g, *r) == n) == all(r)
            checked += 1
    checked += 2 + 1 + len(bits)

    # the repaired bool gadget vanishes exactly on {0, 1}
    fix = make_gadget(GadgetKind.BOOL_REPAIRED)
    grid = [F(k, 16) for k in range(-32, 49)] + [F(1, 3), F(-1, 7), F(99, 100), F(101, 100)]
    for x in grid:
        assert (ev(fix, x) == 0) == (x in (0, 1)), x
        checked += 1
    assert ev(fix, F(1, 4)) == F(-1, 4)

    for c, d in GADGET_PARAMS:
        disc = make_gadget(GadgetKind.DISCRETE, c=c, d=d)
        zeros = {-d / c**2, 1 / c}
        probe = sorted(zeros | {F(0), -1 / c, d / c**2, 2 / c, -2 * d / c**2, F(1, 7), F(-3, 5)}
                       | {z + F(1, 97) for z in zeros} | {z - F(1, 89) for z in zeros})
        for x in probe:
            assert (ev(disc, x) == 0) == (x in zeros), (c, d, x)
        assert ev(disc, 0) == d

        inv = make_gadget(GadgetKind.INVERSE_EQ, c=c, d=d)
        vals = [F(-2), F(-1, 3), F(0), F(1, 3), F(5, 4)]
        for r1, r2 in itertools.product(vals, repeat=2):
            assert (ev(inv, r1, r2) == 0) == (r1 == -r2)

        norm = make_gadget(GadgetKind.NORM, c=c, d=d)
        assert ev(norm, -d / c**2) == 0 and ev(norm, 1 / c) == -d * c
        norm_not = make_gadget(GadgetKind.NORM_NOT, c=c, d=d)
        assert ev(norm_not, d / c**2) == -d * c and ev(norm_not, -1 / c) == 0

        or_le = make_gadget(GadgetKind.OR_LE_ONE, c=c, d=d)
        or_ge = make_gadget(GadgetKind.OR_GE_ONE, c=c, d=d)
        assert ev(or_le, 0, 0, 0) == d * c**4 - d * c**5
        assert ev(or_ge, 0, 0, 0) == d * c**4 - d * c**3
        for pattern in bits:
            if not any(pattern):
                continue
            r = [-d * c if p else F(0) for p in pattern]
            if c < 1:
                assert ev(or_le, *r) == d * c**4
            else:
                assert ev(or_ge, *r) == d * c**4
        checked += len(probe) + len(vals) ** 2 + 4 + 2 + 7

    prime = make_gadget(GadgetKind.OR_PRIME)
    for r in bits:
        assert ev(prime, *r) == ev(or_g, *r)
    elapsed = time.perf_counter() - start
    detail(f"{checked} exact cases in {elapsed:.2f}s")
    assert elapsed < 1


@pytest.mark.criterion(2, "bool-eps flaw reproduction")
def test_criterion_2_bool_eps(detail):
    start = time.perf_counter()
    eps = F(1, 10)
    g = make_gadget(GadgetKind.BOOL_EPS, eps=eps)
    outs = [ev(g, F(k, 100)) for k in range(101)]
    assert all(0 <= z <= eps for z in outs)
    assert ev(g, 2 * eps) == 0
    elapsed = time.perf_counter() - start
    detail(f"max output {max(outs)} on 101 grid points, z(2 eps) = 0, {elapsed:.2f}s")
    assert elapsed < 1


ROUND_TRIP = [
    ("general", {}, False),
    ("general", {}, True),
    ("single-layer", {}, False),
    ("fanin1", {}, False),
    ("fanin2", {}, False),
    ("weights", {"c": F(3, 2), "d": F(2)}, False),
    ("nozero", {"c": F(1)}, False),
]


@pytest.mark.criterion(3, "3SAT round trip for every generator")
def test_criterion_3_round_trip(detail):
    formulas = exhaustive() + random_formulas()
    sat = [sat_bruteforce(f) is not None for f in formulas]
    start = time.perf_counter()
    timings = []
    mismatches = []
    for name, params, relu in ROUND_TRIP:
        t = time.perf_counter()
        for f, expected in zip(formulas, sat):
            gen = generate(f, name, relu_only=relu, **params)
            res = decide(gen.instance)
            if res.reachable != expected:
                mismatches.append((name, relu, f))
            elif res.reachable:
                assert check_witness(gen.instance, res.witness)
        label = name + ("+relu" if relu else "")
        timings.append(f"{label} {time.perf_counter() - t:.0f}s")
    total = time.perf_counter() - start
    detail(f"{len(formulas)} formulas ({sum(sat)} SAT) x {len(ROUND_TRIP)} generators, "
           f"{len(mismatches)} disagreements, {total:.0f}s [{', '.join(timings)}]")
    assert not mismatches, mismatches[:5]
    assert total < 600


@pytest.mark.criterion(4, "verifier agrees with the brute-force oracle")
def test_criterion_4_oracle(detail):
    instances = corpus()
    start = time.perf_counter()
    reachable = 0
    for inst in instances:
        expected = reach_bruteforce(inst)
        res = decide(inst)
        assert res.reachable == expected.reachable
        if res.reachable:
            reachable += 1
            assert check_witness(inst, res.witness)
    elapsed = time.perf_counter() - start
    detail(f"{len(instances)} networks, {reachable} reachable, {elapsed:.1f}s")
    assert elapsed < 120


@pytest.mark.criterion(5, "MILP encoding matches the verifier")
def test_criterion_5_milp(detail):
    instances = corpus()
    start = time.perf_counter()
    relu_nodes = 0
    for inst in instances:
        m = encode(inst)
        assert check_milp(m).feasible == decide(inst).reachable
        for li, ni, node in inst.network.nodes():
            if not node.activation.is_relu:
                continue
            relu_nodes += 1
            tag = f"{li}_{ni}"
            lo, hi = m.bounds.pre[(li, ni)]
            mp, mn = max(F(0), hi), max(F(0), -lo)
            # y <= M+ (1 - z)  and  s <= M- z
            yup, sup = m.row(f"yup{tag}"), m.row(f"sup{tag}")
            assert dict(yup.term.items()) == ({f"y{tag}": 1, f"z{tag}": mp} if mp else {f"y{tag}": 1})
            assert yup.rel.value == "<=" and yup.rhs == mp
            assert dict(sup.term.items()) == ({f"s{tag}": 1, f"z{tag}": -mn} if mn else {f"s{tag}": 1})
            assert sup.rel.value == "<=" and sup.rhs == 0
    elapsed = time.perf_counter() - start
    detail(f"{len(instances)} bounded instances, {relu_nodes} ReLU row pairs checked, {elapsed:.1f}s")
    assert elapsed < 120


@pytest.mark.criterion(6, "identity-to-ReLU transform")
def test_criterion_6_relu_only(detail):
    rng = random.Random(6)
    nets = [random_relu_network(rng) for _ in range(30)]
    for k in range(1, 6):
        f = CnfFormula(k + 1, tuple((i + 1, -(i + 2), i + 1) for i in range(k)))
        nets.append(generate(f, "general").instance.network)
    points = 0
    for net in nets:
        new = to_relu_only(net)
        assert new.depth == net.depth
        for old_layer, layer in zip(net.layers[:-1], new.layers[:-1]):
            assert all(node.activation == RELU for node in layer)
            assert len(layer) <= 2 * len(old_layer)
        assert [n.activation for n in new.layers[-1]] == [n.activation for n in net.layers[-1]]
        for _ in range(100):
            x = [F(rng.randint(-60, 60), rng.randint(1, 12)) for _ in range(net.input_dim)]
            assert eval_network(new, x) == eval_network(net, x)
            points += 1
    assert any(n.activation == IDENTITY for net in nets for layer in net.layers[:-1] for n in layer)
    detail(f"{len(nets)} networks, {points} exact evaluations")


@pytest.mark.criterion(7, "structural theorem checks")
def test_criterion_7_structure(detail):
    formulas = random_formulas(count=60, seed=7) + [CnfFormula(4, ((1, 2, 3), (-1, 2, -3), (-2, 3, 4)))]
    for f in formulas:
        n, m = f.num_vars, f.num_clauses

        net = generate(f, "single-layer").instance.network
        assert net.depth == 3 and net.widths == [2 * n + m, 1]
        assert all(node.activation == RELU for node in net.layers[0])

        net = generate(f, "fanin1").instance.network
        assert all(fan_in(node) <= 1 for _, _, node in net.nodes() if node.activation == RELU)

        net = generate(f, "fanin2").instance.network
        assert all(node.activation == RELU and fan_in(node) <= 2 for _, _, node in net.nodes())

        for c, d in GADGET_PARAMS:
            gen = generate(f, "weights", c=c, d=d)
            assert gen.instance.network.weight_alphabet() == {-c, F(0), d}
            assert gen.instance.network.depth == 8
            assert gen.instance.phi_in.is_simple and gen.instance.phi_out.is_simple

        for c in (F(1), F(2), F(1, 2)):
            gen = generate(f, "nozero", c=c)
            assert gen.instance.network.weight_alphabet() == {-c, c}
            assert not gen.instance.phi_in.is_simple
    detail(f"{len(formulas)} formulas x 5 reductions, weights depth 8 counting the input layer")


@pytest.mark.criterion(8, "witness size stays polynomial")
def test_criterion_8_witness_bits(detail):
    rng = random.Random(8)
    rows = []
    for n in range(1, 9):
        while True:
            m = rng.randint(n, 2 * n + 1)
            clauses = tuple(tuple(rng.choice((1, -1)) * rng.randint(1, n) for _ in range(3))
                            for _ in range(m))
            f = CnfFormula(n, clauses)
            if sat_bruteforce(f) is not None:
                break
        inst = generate(f, "general").instance
        res = decide(inst)
        assert res.reachable
        assert check_witness(inst, res.witness)
        rows.append((n, instance_bits(inst), witness_bits(res.witness)))
    # log-log least squares: witness_bits ~ size^k
    xs = [math.log(s) for _, s, _ in rows]
    ys = [math.log(w) for _, _, w in rows]
    mx, my = sum(xs) / len(xs), sum(ys) / len(ys)
    k = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sum((x - mx) ** 2 for x in xs)
    a = math.exp(my - k * mx)
    print("\n  n  instance_bits  witness_bits")
    for n, s, w in rows:
        print(f"  {n}  {s:13d}  {w:12d}")
    assert k <= 2
    # every point lies below the fitted curve inflated by a factor of two
    assert all(w <= 2 * a * s**k for _, s, w in rows)
    assert all(w <= s for _, s, w in rows)
    detail(f"fitted exponent {k:.2f}, max witness/instance ratio "
           f"{max(w / s for _, s, w in rows):.3f}")
