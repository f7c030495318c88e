import itertools
import math
import random
from fractions import Fraction

import numpy as np
import pytest

from bellforge.catalog import family
from bellforge.correlators import Correlator
from bellforge.nonlinear import AffineObservable, PolynomialInequality
from bellforge.oracle import (
    CorrelationData,
    GlhvModel,
    check_equivalence_sqrt_form,
    check_soundness,
    deterministic_model,
    evaluate,
    local_bound,
    max_over_glhv,
    min_relaxation,
    model_to_correlations,
    parse_objective,
    random_model,
    sqrt_form_holds,
)
from bellforge.polynomial import Polynomial
from bellforge.scenario import load_scenario

I, J = Polynomial.variable("I"), Polynomial.variable("J")


def test_deterministic_model_correlators():
    model = deterministic_model("bilocal22", {"A1": 1, "C0": 1})
    data = model_to_correlations(model, "bilocal22")
    assert data["E[A0]"] == 1 and data["E[A1]"] == -1
    assert data["E[A1 B0 C0]"] == 1
    assert data["E[A0 B0 C0]"] == -1
    # functionals are filled in when their correlators are present
    assert data["I"] == 0 and data["J"] == -4


def test_all_plus_model_is_the_i4_witness():
    data = model_to_correlations(deterministic_model("bilocal22", {}), "bilocal22")
    assert (data["I"], data["J"]) == (4, 0)


def test_shared_coin_correlates_two_parties():
    sc = load_scenario("chsh").scenario
    model = GlhvModel(("L",), ((Fraction(1, 2), Fraction(1, 2)),),
                      {"A": ((0, 1), (0, 0)), "B": ((0, 1), (1, 0))})
    data = model_to_correlations(model, sc)
    assert data["E[A0 B0]"] == 1
    assert data["E[A0 B1]"] == -1
    assert data["E[A1 B0]"] == 0
    assert data["E[A0]"] == 0 and data["E[A1]"] == 1


def test_bilocal_models_factorize():
    rng = np.random.default_rng(5)
    for _ in range(30):
        data = model_to_correlations(random_model("bilocal22", rng), "bilocal22")
        assert data["E[A0 A1 C0 C1]"] == data["E[A0 A1]"] * data["E[C0 C1]"]
        assert data["E[A0 C1]"] == data["E[A0]"] * data["E[C1]"]


def test_model_validation_and_json():
    with pytest.raises(ValueError, match="sum to 1"):
        GlhvModel(("L",), ((Fraction(1, 2),),), {})
    with pytest.raises(ValueError, match="negative"):
        GlhvModel(("L",), ((Fraction(3, 2), Fraction(-1, 2)),), {})
    model = random_model("bilocal22", np.random.default_rng(1))
    assert GlhvModel.from_json(model.to_json()) == model
    with pytest.raises(ValueError, match="sources"):
        model_to_correlations(model, "chsh")


def test_correlation_data_parsing():
    d = CorrelationData.parse("E[A0 B0]=1/2, I=3")
    assert d["E[A0 B0]"] == Fraction(1, 2) and d["I"] == 3
    with pytest.raises(ValueError, match="outside"):
        CorrelationData.parse("E[A0]=2")
    with pytest.raises(ValueError, match="NAME=VALUE"):
        CorrelationData.parse("I")
    assert CorrelationData.from_json(d.to_json()) == d


def test_local_bounds():
    assert local_bound("CHSH", "chsh") == 2
    assert local_bound("absI+absJ", "bilocal33") == 10
    assert local_bound(AffineObservable.make({}, 5), "chsh") == 5


def test_parse_objective_expands_abs():
    objs = parse_objective("absI+absJ", {"I": {}, "J": {}})
    assert len(objs) == 4


def test_local_bound_matches_brute_force():
    sc = load_scenario("chsh").scenario
    rng = random.Random(3)
    corrs = ["E[A0 B0]", "E[A0 B1]", "E[A1 B0]", "E[A1 B1]", "E[A0]", "E[B1]"]
    for _ in range(20):
        coeffs = {c: Fraction(rng.randint(-5, 5), rng.randint(1, 3)) for c in corrs}
        obj = AffineObservable.make(coeffs, Fraction(rng.randint(-2, 2)))
        best = None
        for bits in itertools.product((1, -1), repeat=4):
            val = dict(zip(sc.variables, bits))
            tot = obj.const
            for c, k in coeffs.items():
                tot += k * math.prod(val[v] for v in Correlator.parse(c).vars)
            best = tot if best is None else max(best, tot)
        assert local_bound(obj, sc) == best


def test_max_over_glhv_reaches_zero_but_not_above():
    for q in family("bilocal-22"):
        r = max_over_glhv(q, "bilocal22", budget=500)
        assert r.value == 0
        assert abs(r.data["I"]) == 4 and r.data["J"] == 0


def test_max_over_glhv_finds_violation_of_false_claim():
    r = max_over_glhv(PolynomialInequality.make(I - 3), "bilocal22", budget=200)
    assert r.value == 1


def test_evaluate_three_setting_member():
    q = family("bilocal-33")[0]
    for v in (Fraction(0), Fraction(4, 9), Fraction(1, 2), Fraction(1)):
        value, ok = evaluate(q, {"I": 9 * v, "J": 9 * v})
        assert value == -32 + 72 * v
        assert ok == (v <= Fraction(4, 9))


def test_evaluate_missing_value():
    with pytest.raises(KeyError, match="J"):
        evaluate(family("bilocal-22")[0], {"I": 1})


def test_min_relaxation():
    assert min_relaxation(family("bilocal-22-relaxed"), {"I": 2, "J": 2}) == 1
    assert min_relaxation(family("bilocal-22-relaxed"), {"I": 1, "J": 0}) == 0
    with pytest.raises(ValueError, match="no finite relaxation"):
        min_relaxation(family("bilocal-22"), {"I": 2, "J": 2})


def test_sqrt_form_against_floats():
    rng = random.Random(9)
    for _ in range(2000):
        a, b = Fraction(rng.randint(-400, 400), 100), Fraction(rng.randint(-400, 400), 100)
        f = math.sqrt(abs(a)) + math.sqrt(abs(b)) - 2
        if abs(f) > 1e-9:
            assert sqrt_form_holds(a, b) == (f < 0)
    assert sqrt_form_holds(1, 1) and sqrt_form_holds(4, 0) and not sqrt_form_holds(2, 2)


def test_sqrt_equivalence_small_grid():
    report = check_equivalence_sqrt_form(family("bilocal-22"), n=17)
    assert report.ok and report.points == 17 * 17 and report.boundary > 0


def test_soundness_independent_of_worker_count(derived):
    ineqs = derived("bilocal22").all_inequalities
    one = check_soundness(ineqs, "bilocal22", n=600, seed=4, workers=1, chunk=200)
    two = check_soundness(ineqs, "bilocal22", n=600, seed=4, workers=2, chunk=200)
    assert one.ok and two.ok
    assert one.max_value == two.max_value


def test_soundness_catches_false_inequality():
    report = check_soundness([PolynomialInequality.make(I - 3)], "bilocal22", n=300, seed=0, workers=1)
    assert not report.ok
    idx, j, value, model = report.violations[0]
    assert value > 0
    assert model_to_correlations(model, "bilocal22")["I"] - 3 == value
