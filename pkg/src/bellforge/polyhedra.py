"""Exact double-description method for pointed polyhedral cones.

Rays are stored as primitive integer tuples; the incidence of a ray with the
processed constraints is a Python int used as a bitset, which makes the
combinatorial adjacency test cheap.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np
from typing import Sequence

from ._exact import nullspace, primitive, primitive_int_vector, rank, rref

__all__ = [
    "extreme_rays",
    "enumerate_vertices",
    "facets_of_hull",
    "affine_hull",
    "EnumerationLimit",
]


class EnumerationLimit(RuntimeError):
    """Raised when an enumeration exceeds its configured size bound."""


def _int_rows(rows: Sequence[Sequence]) -> list[list[int]]:
    return [primitive_int_vector([Fraction(v) for v in r])[0] for r in rows]


def _dot(a, b) -> int:
    return sum(x * y for x, y in zip(a, b))


def _adjacent_pairs(zero: np.ndarray, pos_: list, neg_: list, need: int, chunk: int = 4096) -> list:
    """Pairs (p, n) whose common zero set has ``need`` elements and lies in no third ray's zero set."""
    zf = zero.astype(np.float32)
    zt = zf.T.copy()
    neg = np.asarray(neg_)
    zneg = zero[neg]
    out = []
    for p in pos_:
        common = zneg & zero[p]
        size = common.sum(axis=1)
        cand = np.nonzero(size >= need)[0]
        for s in range(0, len(cand), chunk):
            c = cand[s:s + chunk]
            # rays containing each common set; p and n always do
            hits = (common[c].astype(np.float32) @ zt) == size[c][:, None]
            ok = hits.sum(axis=1) == 2
            out.extend((p, int(neg[j])) for j in c[ok])
    return out


def extreme_rays(A: Sequence[Sequence], limit: int | None = None) -> list[tuple[int, ...]]:
    """Extreme rays of the pointed cone ``{x : A @ x >= 0}``.

    ``A`` must have full column rank. Rays are primitive integer tuples in a
    deterministic (sorted) order.
    """
    rows = _int_rows(A)
    if not rows:
        raise ValueError("empty constraint matrix")
    d = len(rows[0])
    if rank(rows) < d:
        raise ValueError("cone is not pointed: constraint matrix lacks full column rank")
    # choose d independent rows greedily for the initial simplicial cone
    basis_idx: list[int] = []
    picked: list[list[int]] = []
    for i, r in enumerate(rows):
        if rank(picked + [r]) > len(picked):
            picked.append(r)
            basis_idx.append(i)
            if len(picked) == d:
                break
    from ._exact import inverse

    inv = inverse(picked)
    rays: list[tuple[int, ...]] = []
    for j in range(d):
        col = [inv[i][j] for i in range(d)]
        rays.append(tuple(primitive_int_vector(col)[0]))
    order = basis_idx + [i for i in range(len(rows)) if i not in basis_idx]
    m = len(rows)
    # zero[k, i]: ray k is tight on row i (only processed rows are ever read)
    zero = np.zeros((d, m), dtype=bool)
    for k, r in enumerate(rays):
        for i in basis_idx:
            zero[k, i] = _dot(rows[i], r) == 0
    done = np.zeros(m, dtype=bool)
    done[basis_idx] = True
    for i in order[d:]:
        row = rows[i]
        vals = [_dot(row, r) for r in rays]
        pos_ = [k for k, v in enumerate(vals) if v > 0]
        neg_ = [k for k, v in enumerate(vals) if v < 0]
        zer_ = [k for k, v in enumerate(vals) if v == 0]
        keep = pos_ + zer_
        new_rays = [rays[k] for k in keep]
        new_zero = [zero[keep]]
        new_zero[0][len(pos_):, i] = True
        if neg_ and pos_:
            pairs = _adjacent_pairs(zero[:, done], pos_, neg_, d - 2)
            if limit is not None and len(new_rays) + len(pairs) > limit:
                raise EnumerationLimit(f"more than {limit} rays")
            block = np.zeros((len(pairs), m), dtype=bool)
            for j, (p, n) in enumerate(pairs):
                vp, vn = vals[p], -vals[n]
                new_rays.append(tuple(primitive(vn * a + vp * b for a, b in zip(rays[p], rays[n]))))
                block[j] = zero[p] & zero[n]
            block[:, i] = True
            new_zero.append(block)
        rays = new_rays
        zero = np.concatenate(new_zero) if len(new_zero) > 1 else new_zero[0]
        done[i] = True
    return sorted(set(rays))


def affine_hull(points: Sequence[Sequence]) -> tuple[list[Fraction], list[list[Fraction]]]:
    """Return (origin, direction basis) of the affine hull of ``points``."""
    pts = [[Fraction(v) for v in p] for p in points]
    origin = pts[0]
    diffs = [[a - b for a, b in zip(p, origin)] for p in pts[1:]]
    red, _ = rref(diffs, len(origin)) if diffs else ([], [])
    return origin, red


def enumerate_vertices(A_ub: Sequence[Sequence], b_ub: Sequence,
                       limit: int | None = None) -> list[tuple[Fraction, ...]]:
    """Vertices of the bounded, full-dimensional polytope ``A_ub @ x <= b_ub``."""
    n = len(A_ub[0])
    # homogenize: t*b - A x >= 0, t >= 0
    cone = [[Fraction(b_ub[i])] + [-Fraction(v) for v in A_ub[i]] for i in range(len(A_ub))]
    cone.append([Fraction(1)] + [Fraction(0)] * n)
    rays = extreme_rays(cone, limit=limit)
    verts = []
    for r in rays:
        if r[0] == 0:
            raise ValueError("polyhedron is unbounded")
        if r[0] < 0:
            continue
        verts.append(tuple(Fraction(x, r[0]) for x in r[1:]))
    return sorted(set(verts))


def facets_of_hull(points: Sequence[Sequence], limit: int | None = None):
    """Facet description of ``conv(points)``.

    Returns ``(inequalities, equalities)``. Each inequality is a tuple
    ``(c0, c)`` of primitive integers meaning ``c0 + c @ x >= 0``; each
    equality ``(c0, c)`` means ``c0 + c @ x == 0``.
    """
    pts = [[Fraction(v) for v in p] for p in points]
    if not pts:
        raise ValueError("empty point list")
    d = len(pts[0])
    uniq = sorted({tuple(p) for p in pts})
    pts = [list(p) for p in uniq]
    lifted = [[Fraction(1)] + p for p in pts]
    eqs = nullspace(lifted, d + 1)
    equalities = [tuple(primitive_int_vector(e)[0]) for e in eqs]
    equalities = [(e[0], tuple(e[1:])) for e in equalities]
    origin, dirs = affine_hull(pts)
    k = len(dirs)
    if k == 0:
        return [], equalities
    # local coordinates y with x = origin + y @ dirs; dirs is in rref so the
    # pivot coordinates of x - origin read off y directly
    _, piv = rref(dirs, d)
    local = [[p[c] - origin[c] for c in piv] for p in pts]
    cone = [[Fraction(1)] + y for y in local]
    if len(local) == 1:
        return [], equalities
    rays = extreme_rays(cone, limit=limit)
    ineqs = []
    for r in rays:
        # r0 + r_y @ y >= 0 ; y_j = x[piv_j] - origin[piv_j]
        c = [Fraction(0)] * d
        for j, cidx in enumerate(piv):
            c[cidx] = Fraction(r[1 + j])
        c0 = Fraction(r[0]) - sum(Fraction(r[1 + j]) * origin[cidx] for j, cidx in enumerate(piv))
        ints, _ = primitive_int_vector([c0] + c)
        ineqs.append((ints[0], tuple(ints[1:])))
    return sorted(set(ineqs)), equalities
