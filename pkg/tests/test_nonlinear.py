import random
from fractions import Fraction

import pytest

from bellforge.catalog import family
from bellforge.linear import InequalitySystem, LinearInequality
from bellforge.moments import FULL_CORRELATORS, FUNCTIONALS, ParamSymbol, build_basis, classify_components, \
    one_setting_products
from bellforge.nonlinear import (
    RELAX,
    Condition,
    EliminationError,
    NoJointCIError,
    NonConvexError,
    ParametricInequality,
    PolynomialInequality,
    derive,
    eliminate_quadratic_param,
    express_in_functionals,
    linearize,
    parametric_fm,
    replay_certificate,
)
from bellforge.polynomial import Polynomial
from bellforge.scenario import derive_independencies, load_scenario

U, C, Q = "E[A0 A1]", "E[C0 C1]", "E[A0 A1 C0 C1]"
I, J, u, x = (Polynomial.variable(n) for n in ("I", "J", U, "x"))
PARAM = ParamSymbol(U, -1, 1, U)


def _bilocal_pieces():
    sc = load_scenario("bilocal22").scenario
    cis = derive_independencies(sc)
    basis = build_basis(sc, FULL_CORRELATORS, cis)
    return cis, classify_components(basis, cis, one_setting_products(sc))


def _quadratic_pair_system():
    # s*I - u - c - q <= 1 and s*J + u + c - q <= 1
    rows = []
    for s in (1, -1):
        rows.append(LinearInequality.make({"I": -s, U: 1, C: 1, Q: 1}, 1))
        rows.append(LinearInequality.make({"J": -s, U: -1, C: -1, Q: 1}, 1))
    return InequalitySystem.of(["I", "J", U, C, Q], rows)


def test_linearize_rows_are_the_factorization_pair():
    cis, part = _bilocal_pieces()
    lin = linearize(cis, part)
    prod = Polynomial.variable(Q) - u * Polynomial.variable(C)
    assert set(lin.rows) == {prod, -prod}
    assert set(lin.side) == {u + 1, 1 - u}
    assert lin.parameters == (PARAM,)


def test_linearize_symbolic_relaxation():
    cis, part = _bilocal_pieces()
    lin = linearize(cis, part, relax=True)
    prod = Polynomial.variable(Q) - u * Polynomial.variable(C)
    R = Polynomial.variable(RELAX)
    assert set(lin.rows) == {prod + R, -prod + R}


def test_linearize_probability_form():
    sc = load_scenario("bilocal22").scenario
    cis = derive_independencies(sc)
    from bellforge.moments import FULL

    part = classify_components(build_basis(sc, FULL, cis), cis, one_setting_products(sc), form="probability")
    lin = linearize(cis, part)
    assert len(lin.parameters) == 3
    # one side row per outcome of the two-variable block
    assert len(lin.side) == 4
    assert all(r.degree_in(r.variables) <= 2 for r in lin.rows)


def test_parametric_fm_gives_the_four_quadratics():
    cis, part = _bilocal_pieces()
    out = parametric_fm(_quadratic_pair_system(), linearize(cis, part), [C, Q])
    uncond = {p.poly for p in out if not p.cases}
    expected = set()
    for s in (1, -1):
        for t in (1, -1):
            expected.add(u * u * 2 + u * (J * t - I * s) + I * s + J * t - 2)
    assert uncond == expected
    # the leftovers are degenerate edges of the parameter box
    for p in out:
        if p.cases:
            assert any(c.rel == "=0" for c in p.cases)
            assert p.poly in {I, -I, J, -J}


def test_parametric_fm_refuses_parameter():
    cis, part = _bilocal_pieces()
    with pytest.raises(ValueError, match="parameter"):
        parametric_fm(_quadratic_pair_system(), linearize(cis, part), [U])


def test_vertex_elimination_gives_the_bilocal_form():
    pineq = ParametricInequality(u * u * 2 + u * (I - J) - I - J - 2, (U,))
    out = eliminate_quadratic_param(pineq, PARAM)
    first = out[0]
    assert first.guard is None
    assert first.poly == (I - J) ** 2 * Fraction(-1, 8) - (I + J + 2)
    # clamp variants only apply where the vertex leaves [-1, 1]
    assert [q.guard.rel for q in out[1:]] == [">0", ">0"]
    assert out[1].poly == pineq.poly.substitute({U: -1})


def test_vertex_elimination_three_setting_form():
    pineq = ParametricInequality(u * u * 2 - u * (I - J + 16) + I * 8, (U,))
    first = eliminate_quadratic_param(pineq, PARAM)[0]
    assert first.poly == (I - J + 16) ** 2 * Fraction(-1, 8) + I * 8
    assert first.poly == family("bilocal-33")[0].poly


def test_constant_vertex_outside_domain_clamps():
    pineq = ParametricInequality(u * u - u * 4 + I, (U,))
    (only,) = eliminate_quadratic_param(pineq, PARAM)
    assert only.poly == I - 3 and only.guard is None


@pytest.mark.parametrize("c1, expected", [(3, I - 3), (-3, I - 3), (0, I)])
def test_linear_in_parameter(c1, expected):
    (only,) = eliminate_quadratic_param(ParametricInequality(u * c1 + I, (U,)), PARAM)
    assert only.poly == expected


def test_linear_with_symbolic_slope_is_split():
    out = eliminate_quadratic_param(ParametricInequality(u * J + I, (U,)), PARAM)
    assert {(q.poly, q.guard.rel) for q in out} == {(I - J, ">=0"), (I + J, "<0")}


@pytest.mark.parametrize("poly, exc", [
    (-u * u + I, NonConvexError),
    (I * u * u + J, NonConvexError),
    (u ** 3 + I, EliminationError),
])
def test_elimination_errors(poly, exc):
    with pytest.raises(exc):
        eliminate_quadratic_param(ParametricInequality(poly, (U,)), PARAM)


def test_other_parameters_must_go_first():
    with pytest.raises(EliminationError, match="before"):
        eliminate_quadratic_param(ParametricInequality(u * x + I, (U, "x")), PARAM)


def _exists_by_minimum(a, b, c, lo, hi) -> bool:
    # min over [lo, hi] of a*t^2 + b*t + c, a >= 0
    cands = [lo, hi]
    if a > 0:
        cands.append(min(max(-b / (2 * a), lo), hi))
    return min(a * t * t + b * t + c for t in cands) <= 0


def test_existential_elimination_is_exact_on_random_instances():
    rng = random.Random(2024)
    rat = lambda: Fraction(rng.randint(-12, 12), rng.randint(1, 4))  # noqa: E731
    for _ in range(1000):
        a = Fraction(rng.choice([0, 0, 1, 2, 3]), rng.randint(1, 3))
        b1, b0, c1, c0 = rat(), rat(), rat(), rat()
        lo = Fraction(rng.randint(-3, 0))
        hi = lo + rng.randint(1, 3)
        poly = u * u * a + u * (x * b1 + b0) + x * c1 + c0
        out = eliminate_quadratic_param(ParametricInequality(poly, (U,)), ParamSymbol(U, lo, hi))
        for _ in range(3):
            xv = rat()
            truth = _exists_by_minimum(a, b1 * xv + b0, c1 * xv + c0, lo, hi)
            got = all(q.evaluate({"x": xv})[1] for q in out)
            assert got == truth


def test_guarded_evaluation():
    q = PolynomialInequality.make(I - 3, guard=Condition(J, ">0"))
    assert q.evaluate({"I": 5, "J": -1}) == (2, True)
    assert q.evaluate({"I": 5, "J": 1}) == (2, False)


def test_relax_terms_move_to_the_right():
    q = PolynomialInequality.make(I - Polynomial.variable(RELAX) * 2)
    assert q.relax == 2 and q.poly == I
    assert q.evaluate({"I": 2}, C=1)[1]
    assert not q.evaluate({"I": 3}, C=1)[1]


def test_json_round_trip():
    q = PolynomialInequality.make(I * J - 1, relax=Fraction(1, 2), guard=Condition(I, "<=0"))
    assert PolynomialInequality.from_json(q.to_json()) == q


def test_express_in_functionals():
    parsed = load_scenario("bilocal22")
    Ipoly = Polynomial.linear({str(k): v for k, v in parsed.functionals["I"].items()})
    assert express_in_functionals(Ipoly * Ipoly, parsed.functionals) == I * I
    assert express_in_functionals(u, parsed.functionals) is None


def test_derive_bilocal22_matches_family(derived):
    r = derived("bilocal22")
    assert set(r.inequalities) == set(family("bilocal-22"))
    assert len(r.inequalities) == 4


def test_derive_relaxed(derived):
    r = derived("bilocal22", relax=True)
    assert set(r.inequalities) == set(family("bilocal-22-relaxed"))


def test_derive_bilocal33_contains_family(derived):
    r = derived("bilocal33", FUNCTIONALS)
    unguarded = {q for q in r.inequalities if q.guard is None}
    assert unguarded == set(family("bilocal-33"))


def test_derive_fourparty_in_its_own_functionals(derived):
    r = derived("fourparty", FUNCTIONALS)
    assert set(r.inequalities) == set(family("bilocal-22"))


@pytest.mark.parametrize("name, restriction, kw", [
    ("bilocal22", FULL_CORRELATORS, {}),
    ("bilocal22", FULL_CORRELATORS, {"relax": True}),
    ("bilocal33", FUNCTIONALS, {}),
    ("fourparty", FUNCTIONALS, {}),
])
def test_certificates_replay(derived, name, restriction, kw):
    r = derived(name, restriction, **kw)
    assert r.all_inequalities
    for q in r.all_inequalities:
        assert replay_certificate(q, r.sources), str(q)


def test_tampered_certificate_fails(derived):
    r = derived("bilocal22")
    q = r.inequalities[0]
    bad = PolynomialInequality(q.poly + 1, q.relax, q.guard, q.certificate)
    assert not replay_certificate(bad, r.sources)


def test_plain_bell_scenario_needs_opt_in():
    with pytest.raises(NoJointCIError):
        derive("chsh")


def test_chsh_with_lhv_allowed(derived):
    r = derived("chsh", allow_lhv=True)
    CHSH = Polynomial.variable("CHSH")
    assert set(r.inequalities) == {PolynomialInequality.make(CHSH - 2), PolynomialInequality.make(-CHSH - 2)}


def test_derive_is_deterministic(derived):
    a = derived("bilocal22")
    b = derive("bilocal22")
    assert [str(q) for q in a.all_inequalities] == [str(q) for q in b.all_inequalities]
