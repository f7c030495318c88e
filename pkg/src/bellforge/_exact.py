"""Small exact linear-algebra helpers over the rationals."""

from __future__ import annotations

from fractions import Fraction
from math import gcd
from typing import Iterable, Sequence


def to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        raise TypeError("floats are not accepted on exact code paths")
    return Fraction(value)


def parse_rational(text: str) -> Fraction:
    """Parse ``"p/q"``, ``"-3"`` or ``"0.25"`` into a Fraction."""
    text = str(text).strip()
    if not text:
        raise ValueError("empty rational literal")
    return Fraction(text)


def format_rational(value: Fraction) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def primitive_int_vector(values: Sequence[Fraction]) -> tuple[list[int], Fraction]:
    """Scale ``values`` by a positive factor to coprime integers.

    Returns the integer vector and the (positive) factor used.
    """
    lcm = 1
    for v in values:
        d = Fraction(v).denominator
        lcm = lcm * d // gcd(lcm, d)
    ints = [int(Fraction(v) * lcm) for v in values]
    g = 0
    for x in ints:
        g = gcd(g, x)
    if g == 0:
        return ints, Fraction(1)
    return [x // g for x in ints], Fraction(lcm, g)


def primitive(ints: Iterable[int]) -> list[int]:
    ints = list(ints)
    g = 0
    for x in ints:
        g = gcd(g, x)
    if g in (0, 1):
        return ints
    return [x // g for x in ints]


def rref(rows: Sequence[Sequence], ncols: int | None = None):
    """Reduced row echelon form. Returns (matrix, pivot column list)."""
    m = [[to_fraction(x) for x in row] for row in rows]
    if not m:
        return [], []
    ncols = len(m[0]) if ncols is None else ncols
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = 1 / m[r][c]
        m[r] = [x * inv for x in m[r]]
        prow = m[r]
        nz = [j for j in range(ncols) if prow[j] != 0]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                row = m[i]
                for j in nz:
                    row[j] -= f * prow[j]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m[:r], pivots


def rank(rows: Sequence[Sequence]) -> int:
    if not rows:
        return 0
    return len(rref(rows)[1])


def nullspace(rows: Sequence[Sequence], ncols: int) -> list[list[Fraction]]:
    """Basis of ``{x : rows @ x = 0}``."""
    if not rows:
        return [[Fraction(int(i == j)) for j in range(ncols)] for i in range(ncols)]
    red, pivots = rref(rows, ncols)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for row, p in zip(red, pivots):
            v[p] = -row[f]
        basis.append(v)
    return basis


def solve(rows: Sequence[Sequence], rhs: Sequence) -> list[Fraction] | None:
    """One solution of ``rows @ x = rhs`` (free variables set to zero), or None."""
    n = len(rows[0]) if rows else 0
    aug = [list(r) + [rhs[i]] for i, r in enumerate(rows)]
    red, pivots = rref(aug, n + 1)
    if n in pivots:
        return None
    x = [Fraction(0)] * n
    for row, p in zip(red, pivots):
        x[p] = row[n]
    return x


def inverse(rows: Sequence[Sequence]) -> list[list[Fraction]]:
    n = len(rows)
    aug = [list(map(to_fraction, r)) + [Fraction(int(i == j)) for j in range(n)]
           for i, r in enumerate(rows)]
    red, pivots = rref(aug, 2 * n)
    if pivots[:n] != list(range(n)) or len(red) < n:
        raise ValueError("matrix is singular")
    return [row[n:] for row in red]
