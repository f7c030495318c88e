import itertools
from fractions import Fraction

import pytest

from bellforge._exact import format_rational, nullspace, parse_rational, rank, rref, solve
from bellforge.lp import implies, irredundant, linprog
from bellforge.polyhedra import EnumerationLimit, affine_hull, enumerate_vertices, extreme_rays, facets_of_hull


def test_square_vertices():
    A = [[1, 0], [-1, 0], [0, 1], [0, -1]]
    verts = enumerate_vertices(A, [1, 1, 1, 1])
    assert set(verts) == set(itertools.product((1, -1), repeat=2))


def test_simplex_with_redundant_row():
    A = [[-1, 0], [0, -1], [1, 1], [1, 1]]
    verts = enumerate_vertices(A, [0, 0, 1, 2])
    assert set(verts) == {(0, 0), (1, 0), (0, 1)}


def test_cube_facets_and_limit():
    cube = list(itertools.product((0, 1), repeat=3))
    ineqs, eqs = facets_of_hull(cube)
    assert eqs == [] and len(ineqs) == 6
    for c0, c in ineqs:
        vals = [c0 + sum(a * b for a, b in zip(c, p)) for p in cube]
        assert min(vals) == 0 and sum(v == 0 for v in vals) == 4
    with pytest.raises(EnumerationLimit):
        facets_of_hull(list(itertools.product((0, 1), repeat=5)), limit=3)


def test_lower_dimensional_hull_reports_equalities():
    pts = [(0, 0, 1), (1, 0, 1), (0, 1, 1)]
    ineqs, eqs = facets_of_hull(pts)
    assert len(eqs) == 1 and len(ineqs) == 3
    origin, dirs = affine_hull(pts)
    assert origin == [0, 0, 1] and len(dirs) == 2


def test_cone_rays():
    # positive quadrant cone in 2d
    assert sorted(extreme_rays([[1, 0], [0, 1]])) == [(0, 1), (1, 0)]
    rays = extreme_rays([[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, -1]])
    assert len(rays) == 4


def test_exact_linear_algebra():
    m, piv = rref([[2, 4], [1, 2]], 2)
    assert piv == [0] and m[0] == [1, 2]
    assert rank([[1, 2, 3], [2, 4, 6], [0, 1, 1]]) == 2
    (v,) = nullspace([[1, 1, 0], [0, 1, 1]], 3)
    assert sum(v) != 0 and v[0] + v[1] == 0 and v[1] + v[2] == 0
    assert solve([[1, 1], [1, -1]], [3, 1]) == [2, 1]
    assert parse_rational("-3/6") == Fraction(-1, 2) and format_rational(Fraction(4, 2)) == "2"


def test_exact_lp():
    r = linprog([1, 1], A_ub=[[1, 2], [3, 1]], b_ub=[4, 6], nonneg=[True, True])
    assert r.ok and r.value == Fraction(14, 5) and r.x == [Fraction(8, 5), Fraction(6, 5)]
    assert linprog([1], A_ub=[[-1]], b_ub=[0]).status == "unbounded"
    assert linprog([1], A_ub=[[1], [-1]], b_ub=[0, -1]).status == "infeasible"


def test_implication_and_redundancy():
    rows, consts = [[-1, 0], [0, -1]], [1, 1]  # x <= 1, y <= 1
    assert implies([-1, -1], 2, rows, consts)
    assert not implies([-1, -1], Fraction(19, 10), rows, consts)
    keep = irredundant([[-1, 0], [-1, -1], [0, -1], [-1, 0]], [1, 2, 1, 1])
    assert len(keep) == 2
