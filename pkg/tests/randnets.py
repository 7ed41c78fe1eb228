"""Seeded random networks and box specifications for differential tests."""

from __future__ import annotations

import random
from fractions import Fraction

from reachkit.core import IDENTITY, OUTPUT, RELU, Network, Node, PWLFunction, Specification
from reachkit.verifier import ReachInstance

_SMALL = [Fraction(k, d) for k in range(-3, 4) for d in (1, 2)]


def random_pwl(rng: random.Random, continuous: bool = True) -> PWLFunction:
    k = rng.choice([2, 3])
    bps = sorted(rng.sample([Fraction(t, 2) for t in range(-4, 5)], k - 1))
    a0, b0 = rng.choice(_SMALL), rng.choice(_SMALL)
    pieces = [(a0, b0)]
    for t in bps:
        a = rng.choice(_SMALL)
        pa, pb = pieces[-1]
        b = pa * t + pb - a * t if continuous else rng.choice(_SMALL)
        pieces.append((a, b))
    return PWLFunction(tuple(pieces), tuple(bps))


def random_instance(rng: random.Random, max_pwl: int = 8, max_inputs: int = 4,
                    discontinuous: bool = True, phase_cap: int = 256) -> ReachInstance:
    n = rng.randint(1, max_inputs)
    depth = rng.randint(1, 3)
    layers = []
    width = n
    budget = max_pwl
    space = 1
    for li in range(depth):
        last = li == depth - 1
        w = rng.randint(1, 3)
        layer = []
        for _ in range(w):
            weights = tuple(rng.choice(_SMALL) if rng.random() < 0.8 else Fraction(0) for _ in range(width))
            bias = rng.choice(_SMALL)
            roll = rng.random()
            act = IDENTITY
            if budget > 0 and roll < 0.85:
                if roll < 0.55:
                    act = RELU
                else:
                    act = random_pwl(rng, continuous=not (discontinuous and roll > 0.78))
                if space * act.num_pieces > phase_cap:
                    act = IDENTITY
                else:
                    space *= act.num_pieces
                    budget -= 1
            if last and rng.random() < 0.3:
                act = IDENTITY
            layer.append(Node(weights, bias, act))
        layers.append(tuple(layer))
        width = w
    net = Network(n, tuple(layers))
    box = {}
    for i in range(n):
        lo = Fraction(rng.randint(-4, 2), rng.choice([1, 2]))
        box[i] = (lo, lo + Fraction(rng.randint(0, 6), rng.choice([1, 2])))
    phi_in = Specification.box(box)
    out = {}
    for j in range(net.output_dim):
        if rng.random() < 0.7:
            lo = Fraction(rng.randint(-6, 6), rng.choice([1, 2, 4]))
            hi = lo + Fraction(rng.randint(0, 4), rng.choice([1, 2, 4]))
            r = rng.random()
            out[j] = (lo, None) if r < 0.3 else ((None, hi) if r < 0.5 else (lo, hi))
    phi_out = Specification.box(out, OUTPUT)
    return ReachInstance(net, phi_in, phi_out)


def corpus(seed: int = 2024, count: int = 200, **kw) -> list[ReachInstance]:
    rng = random.Random(seed)
    return [random_instance(rng, **kw) for _ in range(count)]


def random_relu_network(rng: random.Random, max_inputs: int = 4, max_depth: int = 4) -> Network:
    """ReLU and identity nodes only, as accepted by ``to_relu_only``."""
    n = rng.randint(1, max_inputs)
    layers = []
    width = n
    for _ in range(rng.randint(2, max_depth)):
        w = rng.randint(1, 4)
        layer = []
        for _ in range(w):
            weights = tuple(rng.choice(_SMALL) for _ in range(width))
            layer.append(Node(weights, rng.choice(_SMALL), rng.choice([RELU, IDENTITY])))
        layers.append(tuple(layer))
        width = w
    return Network(n, tuple(layers))
