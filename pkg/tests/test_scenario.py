import itertools
import random
import warnings

import networkx as nx
import pytest

from bellforge.scenario import (
    BellScenario,
    DagModel,
    NoJointCIWarning,
    ScenarioError,
    d_separated,
    derive_independencies,
    load_scenario,
    parse_scenario,
)

BILOCAL = """
# two sources, B in the middle
[parties]
A settings=2
B settings=2
C settings=2
[sources]
L1 -> A,B
L2 -> B, C
"""


def test_bilocal_file_parses():
    parsed = parse_scenario(BILOCAL)
    sc = parsed.scenario
    assert sc.parties == ("A", "B", "C")
    assert sc.settings == (2, 2, 2)
    assert sc.source_map() == {"L1": frozenset("AB"), "L2": frozenset("BC")}
    assert set(parsed.dag.edges) == {("L1", "A"), ("L1", "B"), ("L2", "B"), ("L2", "C")}


def test_single_source_is_plain_bell_scenario():
    sc = parse_scenario("[parties]\nA settings=2\nB settings=2\n[sources]\nL -> A,B\n").scenario
    assert len(sc.sources) == 1
    with pytest.warns(NoJointCIWarning):
        assert derive_independencies(sc) == []


def test_source_feeding_source_is_rejected():
    with pytest.raises(ScenarioError, match="hidden node"):
        parse_scenario("[parties]\nA settings=2\n[sources]\nL1 -> L2\nL2 -> A\n")


def test_cycle_is_rejected():
    with pytest.raises(ScenarioError, match="cycle"):
        DagModel((("L", "hidden"), ("A", "observed"), ("B", "observed")),
                 (("L", "A"), ("A", "B"), ("B", "A")))


@pytest.mark.parametrize("text, match", [
    ("[parties]\nA settings=2\n[sources]\nL -> A\n[functionals]\nI = E[A0 Z0]\n", "Z"),
    ("[parties]\nA settings=2\n[sources]\nL -> A,Q\n", "unknown party"),
    ("A settings=2\n", "outside any section"),
    ("[parties]\nA settings=2\nB settings=1\n[sources]\nL -> A\n", "B"),
    ("[parties]\nA settings=0\n[sources]\nL -> A\n", "at least one setting"),
    ("[weird]\n", "unknown section"),
])
def test_schema_errors(text, match):
    with pytest.raises(ScenarioError, match=match):
        parse_scenario(text)


def test_functionals_are_parsed_with_rational_coefficients():
    parsed = parse_scenario(BILOCAL + "[functionals]\nK = 1/2*E[A0 B0 C0] - E[A1 B1 C1]\n")
    terms = {str(k): v for k, v in parsed.functionals["K"].items()}
    assert terms == {"E[A0 B0 C0]": pytest.approx(0.5), "E[A1 B1 C1]": -1}


def test_d_separation_examples():
    dag = parse_scenario(BILOCAL).dag
    assert d_separated(dag, {"A"}, {"C"}, set())
    assert not d_separated(dag, {"A"}, {"B"}, set())
    assert not d_separated(dag, {"A"}, {"C"}, {"B"})
    with pytest.raises(KeyError, match="nope"):
        d_separated(dag, {"A"}, {"nope"}, set())


def _nx_d_separated(dag, X, Y, Z):
    g = nx.DiGraph()
    g.add_nodes_from(n for n, _ in dag.nodes)
    g.add_edges_from(dag.edges)
    test = getattr(nx, "is_d_separator", None) or nx.d_separated
    return test(g, set(X), set(Y), set(Z))


def _random_scenario(rng):
    n = rng.randint(2, 4)
    parties = [chr(ord("A") + i) for i in range(n)]
    sources = []
    for k in range(rng.randint(1, 3)):
        sources.append((f"L{k}", frozenset(rng.sample(parties, rng.randint(1, n)))))
    for p in parties:
        if not any(p in ps for _, ps in sources):
            sources.append((f"S{p}", frozenset(p)))
    return BellScenario(tuple(parties), tuple(rng.randint(1, 2) for _ in parties), tuple(sources))


def test_d_separation_matches_networkx_on_random_networks():
    rng = random.Random(7)
    for _ in range(60):
        dag = _random_scenario(rng).dag()
        names = [n for n, _ in dag.nodes]
        for _ in range(10):
            pool = names[:]
            rng.shuffle(pool)
            a, b = rng.randint(1, 2), rng.randint(1, 2)
            X, Y = pool[:a], pool[a:a + b]
            Z = [z for z in pool[a + b:] if rng.random() < 0.4]
            if not Y:
                continue
            assert d_separated(dag, X, Y, Z) == _nx_d_separated(dag, X, Y, Z)


def test_bilocal_independencies():
    cis = derive_independencies(parse_scenario(BILOCAL).scenario)
    assert [str(c) for c in cis] == ["{A0,A1} _|_ {C0,C1}"]


def test_fourparty_contains_b_d_block():
    cis = derive_independencies(load_scenario("fourparty").scenario)
    assert "{B0,B1} _|_ {D0,D1}" in [str(c) for c in cis]


def test_independencies_are_sound_on_random_networks():
    rng = random.Random(11)
    for _ in range(80):
        sc = _random_scenario(rng)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cis = derive_independencies(sc)
        dag = sc.dag()
        for ci in cis:
            L, R = ci.left_parties, ci.right_parties
            assert not (set().union(*map(sc.hidden_parents, L)) & set().union(*map(sc.hidden_parents, R)))
            assert d_separated(dag, L, R, ())
            assert ci.left < ci.right
        # maximality: parties with disjoint source sets are always covered by some block pair
        for p, q in itertools.combinations(sc.parties, 2):
            if not sc.hidden_parents(p) & sc.hidden_parents(q) and d_separated(dag, {p}, {q}, ()):
                assert any((p in c.left_parties and q in c.right_parties)
                           or (q in c.left_parties and p in c.right_parties) for c in cis)


def test_bundled_scenarios_load():
    for name in ("chsh", "bilocal22", "bilocal33", "fourparty"):
        parsed = load_scenario(name)
        assert parsed.functionals
    with pytest.raises(FileNotFoundError):
        load_scenario("no-such-scenario")
