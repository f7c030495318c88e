import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellforge.correlators import UNIT, Correlator
from bellforge.moments import (
    FULL,
    FULL_CORRELATORS,
    MomentVector,
    ProbabilityVector,
    build_basis,
    classify_components,
    corr_to_prob,
    one_setting_products,
    prob_to_corr,
)
from bellforge.scenario import derive_independencies, load_scenario, parse_scenario

A01 = (("A", 0), ("A", 1))


def test_full_basis_sizes():
    sc = load_scenario("bilocal22").scenario
    assert len(build_basis(sc, FULL)) == 64
    one = parse_scenario("[parties]\nA settings=1\n[sources]\nL -> A\n").scenario
    assert [str(c) for c in build_basis(one, FULL)] == ["E[]", "E[A0]"]


def test_full_correlator_basis_for_bilocal():
    sc = load_scenario("bilocal22").scenario
    basis = build_basis(sc, FULL_CORRELATORS)
    triples = {str(c) for c in one_setting_products(sc)}
    assert len(triples) == 8
    assert basis.elements[0] == UNIT
    assert set(basis.symbols) == triples | {"E[A0 A1]", "E[C0 C1]", "E[A0 A1 C0 C1]"}


def _signed_sum(p: ProbabilityVector, corr: Correlator) -> Fraction:
    pos = [p.variables.index(v) for v in corr.vars]
    return sum(((-1) ** sum(o[i] for i in pos)) * q for o, q in p.items())


@pytest.mark.parametrize("probs, expected", [
    ((1, 0, 0, 0), (1, 1, 1, 1)),
    ((Fraction(1, 4),) * 4, (1, 0, 0, 0)),
    ((Fraction(1, 2), Fraction(1, 2), 0, 0), (1, 1, 0, 0)),
])
def test_prob_to_corr_two_variables(probs, expected):
    p = ProbabilityVector(A01, tuple(Fraction(x) for x in probs))
    E = prob_to_corr(p)
    order = [UNIT, Correlator((("A", 0),)), Correlator((("A", 1),)), Correlator(A01)]
    assert tuple(E[c] for c in order) == tuple(Fraction(x) for x in expected)
    assert corr_to_prob(E, A01) == p


def test_prob_to_corr_rejects_invalid():
    with pytest.raises(ValueError, match="normalized"):
        prob_to_corr(ProbabilityVector(A01, (Fraction(1, 2), 0, 0, 0)))
    with pytest.raises(ValueError, match="negative"):
        prob_to_corr(ProbabilityVector(A01, (Fraction(3, 2), Fraction(-1, 2), 0, 0)))
    with pytest.raises(ValueError, match="full basis"):
        corr_to_prob(MomentVector({UNIT: 1, Correlator((("A", 0),)): 0}), A01)


weights = st.lists(st.integers(0, 20), min_size=8, max_size=8).filter(any)


@given(weights)
@settings(max_examples=60, deadline=None)
def test_round_trip_and_signed_sums(ws):
    variables = (("A", 0), ("B", 0), ("B", 1))
    total = sum(ws)
    p = ProbabilityVector(variables, tuple(Fraction(w, total) for w in ws))
    E = prob_to_corr(p)
    for r in range(4):
        for vs in itertools.combinations(variables, r):
            c = Correlator(vs)
            assert E[c] == _signed_sum(p, c)
            assert -1 <= E[c] <= 1
    assert corr_to_prob(E, variables) == p


def _bilocal_partition(**kw):
    sc = load_scenario("bilocal22").scenario
    cis = derive_independencies(sc)
    basis = build_basis(sc, FULL if kw.get("form") == "probability" else FULL_CORRELATORS, cis)
    return classify_components(basis, cis, one_setting_products(sc), **kw)


def test_bilocal_parameter_is_a0a1():
    part = _bilocal_partition()
    assert part.parameter_names == ("E[A0 A1]",)
    assert {str(c) for c in part.nonlinear} == {"E[A0 A1]", "E[C0 C1]", "E[A0 A1 C0 C1]"}
    assert part.tie_broken
    covered = set(part.observables) | set(part.eliminable) | set(part.nonlinear)
    assert len(covered) == len(part.observables) + len(part.eliminable) + len(part.nonlinear)


def test_no_constraints_means_no_parameters():
    sc = load_scenario("bilocal22").scenario
    basis = build_basis(sc, FULL)
    part = classify_components(basis, [], one_setting_products(sc))
    assert part.parameters == () and part.nonlinear == ()
    assert len(part.eliminable) == 63 - 8


def test_parameter_side_override():
    assert _bilocal_partition(param_side="right").parameter_names == ("E[C0 C1]",)


def test_probability_form_has_three_free_reals():
    part = _bilocal_partition(form="probability")
    assert len(part.parameters) == 3
    assert all(p.lo == 0 and p.hi == 1 for p in part.parameters)


def test_observable_outside_basis_is_rejected():
    sc = load_scenario("bilocal22").scenario
    basis = build_basis(sc, FULL_CORRELATORS)
    with pytest.raises(ValueError, match="not in the basis"):
        classify_components(basis, [], [Correlator((("A", 0), ("B", 0)))])


def test_moment_vector_range_checked():
    with pytest.raises(ValueError):
        MomentVector({"E[A0]": 2})
    with pytest.raises(ValueError):
        MomentVector({"E[]": Fraction(1, 2)})
