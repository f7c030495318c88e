import itertools
from fractions import Fraction

import pytest
from helpers import random_projection_case

from bellforge.catalog import chsh_demo
from bellforge.linear import (
    FMLimit,
    InequalitySystem,
    LinearInequality,
    deterministic_points,
    fm_eliminate,
    project_via_vertices,
    remove_redundant,
    simplex_system,
)
from bellforge.moments import FULL, FULL_CORRELATORS, build_basis, one_setting_products
from bellforge.scenario import load_scenario, parse_scenario

CHSH_OBS = ["E[A0 B0]", "E[A0 B1]", "E[A1 B0]", "E[A1 B1]"]


def le(coeffs, bound):
    """``sum coeffs <= bound``."""
    return LinearInequality.make({k: -v for k, v in coeffs.items()}, bound)


def chsh_simplex():
    sc = load_scenario("chsh").scenario
    return sc, simplex_system(sc, build_basis(sc, FULL))


def test_simplex_two_variables():
    sc = parse_scenario("[parties]\nA settings=2\n[sources]\nL -> A\n").scenario
    system = simplex_system(sc, build_basis(sc, FULL))
    assert len(system) == 4
    assert LinearInequality.make({"E[A0]": 1, "E[A1]": 1, "E[A0 A1]": 1}, 1, canonical=False) in system.inequalities


def test_simplex_needs_full_basis():
    sc = load_scenario("bilocal22").scenario
    with pytest.raises(ValueError, match="full basis"):
        simplex_system(sc, build_basis(sc, FULL_CORRELATORS))


def test_bilocal_simplex_and_deterministic_saturation():
    sc = load_scenario("bilocal22").scenario
    basis = build_basis(sc, FULL)
    system = simplex_system(sc, basis)
    assert len(system) == 64
    corrs = basis.elements[1:]
    for point in deterministic_points(sc.variables, corrs):
        vals = {str(c): x for c, x in zip(corrs, point)}
        values = [ineq.evaluate(vals) for ineq in system]
        assert all(v >= 0 for v in values)
        assert sum(1 for v in values if v == 0) == 63


def test_fm_small_example():
    system = InequalitySystem.of(["x", "y"], [le({"x": 1, "y": 1}, 1), le({"x": -1, "y": 1}, 1)])
    out = fm_eliminate(system, ["x"])
    assert set(out.inequalities) == {le({"y": 1}, 1)}


def test_fm_rejects_unit_and_unknown():
    _, system = chsh_simplex()
    with pytest.raises(ValueError, match="unit"):
        fm_eliminate(system, ["E[]"])
    with pytest.raises(ValueError, match="not a system variable"):
        fm_eliminate(system, ["E[Z0]"])


def test_fm_pair_limit():
    _, system = chsh_simplex()
    with pytest.raises(FMLimit):
        fm_eliminate(system, [v for v in system.variables if v not in CHSH_OBS], pair_limit=4)


def chsh_facets():
    out = set()
    for signs in itertools.product((1, -1), repeat=4):
        if signs.count(-1) % 2 == 1:
            out.add(le(dict(zip(CHSH_OBS, signs)), 2))
    for o in CHSH_OBS:
        out.add(le({o: 1}, 1))
        out.add(le({o: -1}, 1))
    return out


def test_chsh_projection_both_routes():
    sc, system = chsh_simplex()
    fm = fm_eliminate(system, [v for v in system.variables if v not in CHSH_OBS])
    expected = chsh_facets()
    assert len(expected) == 16
    assert set(fm.inequalities) == expected
    corrs = [c for c in build_basis(sc, FULL).elements[1:]]
    verts = [{str(c): x for c, x in zip(corrs, p)} for p in deterministic_points(sc.variables, corrs)]
    assert len(verts) == 16
    assert set(project_via_vertices(verts, CHSH_OBS).inequalities) == expected


def test_fm_certificates_replay():
    _, system = chsh_simplex()
    out = fm_eliminate(system, [v for v in system.variables if v not in CHSH_OBS])
    for ineq in out:
        total: dict = {}
        const = Fraction(0)
        for idx, mult in ineq.certificate:
            assert mult > 0
            src = system.inequalities[idx]
            const += mult * src.const
            for k, v in src.terms:
                total[k] = total.get(k, 0) + mult * v
        total = {k: v for k, v in total.items() if v}
        assert LinearInequality.make(total, const) == ineq


def test_chsh_intermediate_rows():
    demo = chsh_demo()
    inter = set(demo.intermediate.inequalities)
    first = le({"E[A0 B0]": 1, "E[A1 B0]": 1, "E[A0 A1]": -1}, 1)
    second = le({"E[A0 B1]": 1, "E[A1 B1]": -1, "E[A0 A1]": 1}, 1)
    assert first in inter and second in inter
    assert le({"E[A0 B0]": 1, "E[A0 B1]": 1, "E[A1 B0]": 1, "E[A1 B1]": -1}, 2) in set(demo.final.inequalities)


def test_remove_redundant_examples():
    x = InequalitySystem.of(["x"], [le({"x": 1}, 1), le({"x": 1}, 2)])
    assert set(remove_redundant(x).inequalities) == {le({"x": 1}, 1)}
    xy = InequalitySystem.of(["x", "y"], [le({"x": 1, "y": 1}, 2), le({"x": 1}, 1), le({"y": 1}, 1),
                                          le({"x": 1, "y": 1}, 2)])
    once = remove_redundant(xy)
    assert set(once.inequalities) == {le({"x": 1}, 1), le({"y": 1}, 1)}
    assert remove_redundant(once) == once


def test_remove_redundant_keeps_chsh_facets():
    system = InequalitySystem.of(CHSH_OBS, sorted(chsh_facets(), key=str))
    assert set(remove_redundant(system).inequalities) == chsh_facets()


def test_project_square_and_errors():
    square = [{"x": a, "y": b} for a in (1, -1) for b in (1, -1)]
    out = project_via_vertices(square, ["x"])
    assert set(out.inequalities) == {le({"x": 1}, 1), le({"x": -1}, 1)}
    with pytest.raises(ValueError, match="empty"):
        project_via_vertices([], ["x"])


def test_bilocal_vertex_projection_contains_linear_pair():
    sc = load_scenario("bilocal22").scenario
    parsed = load_scenario("bilocal22")
    corrs = build_basis(sc, FULL).elements[1:]
    verts = [{str(c): x for c, x in zip(corrs, p)} for p in deterministic_points(sc.variables, corrs)]
    support = [str(c) for c in one_setting_products(sc)] + ["E[A0 A1]", "E[C0 C1]", "E[A0 A1 C0 C1]"]
    facets = set(project_via_vertices(verts, support).inequalities)
    I = {str(k): v for k, v in parsed.functionals["I"].items()}
    J = {str(k): v for k, v in parsed.functionals["J"].items()}
    for s in (1, -1):
        # s*I - E[A0 A1] - E[C0 C1] - E[A0 A1 C0 C1] <= 1
        a = {k: s * v for k, v in I.items()}
        a.update({"E[A0 A1]": -1, "E[C0 C1]": -1, "E[A0 A1 C0 C1]": -1})
        assert le(a, 1) in facets
        # s*J + E[A0 A1] + E[C0 C1] - E[A0 A1 C0 C1] <= 1
        b = {k: s * v for k, v in J.items()}
        b.update({"E[A0 A1]": 1, "E[C0 C1]": 1, "E[A0 A1 C0 C1]": -1})
        assert le(b, 1) in facets


@pytest.mark.parametrize("seed", range(25))
def test_fm_matches_vertex_route_on_random_systems(seed):
    system, verts, remove, keep = random_projection_case(seed)
    assert len(system.variables) <= 6 and len(system) <= 12
    fm = fm_eliminate(system, remove)
    dual = project_via_vertices(verts, keep)
    assert fm.canonical_set() == dual.canonical_set()


def test_serialization_round_trip():
    ineq = le({"E[A0 B1]": Fraction(1, 3), "E[A1 B0]": -2}, Fraction(5, 7))
    js = ineq.to_json()
    assert js["sense"] == ">=0" and set(js) == {"const", "terms", "sense"}
    assert LinearInequality.from_json(js) == ineq
