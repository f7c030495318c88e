"""Seeded random bounded polytopes for projection cross-checks."""

import random
from fractions import Fraction

from bellforge.linear import InequalitySystem, LinearInequality
from bellforge.polyhedra import enumerate_vertices


def random_projection_case(seed: int):
    """``(system, vertices, remove, keep)`` with at most 6 variables and 12 inequalities.

    The origin is strictly interior, so the polytope and every projection of it
    are full-dimensional; a floor on each coordinate plus a cap on their sum keeps
    it bounded.
    """
    rng = random.Random(seed)
    d = rng.randint(2, 6)
    names = [f"x{i}" for i in range(d)]
    M = rng.randint(2, 5)
    A, b = [], []
    for i in range(d):
        A.append([-int(j == i) for j in range(d)])
        b.append(M)
    A.append([1] * d)
    b.append(M)
    for _ in range(rng.randint(0, 12 - len(A))):
        row = [rng.randint(-3, 3) for _ in range(d)]
        if any(row):
            A.append(row)
            b.append(rng.randint(1, 6))
    system = InequalitySystem.of(names, [LinearInequality.make({n: -a for n, a in zip(names, row)}, c)
                                         for row, c in zip(A, b)])
    verts = [dict(zip(names, v)) for v in enumerate_vertices(A, [Fraction(x) for x in b])]
    k = rng.randint(1, d - 1)
    remove = sorted(rng.sample(names, k))
    keep = [n for n in names if n not in remove]
    return system, verts, remove, keep
