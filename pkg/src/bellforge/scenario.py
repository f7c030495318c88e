"""Bell scenarios as causal DAGs with independent hidden sources."""

from __future__ import annotations

import itertools
import re
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Mapping

from ._exact import parse_rational
from .correlators import Correlator, format_var

__all__ = [
    "ScenarioError",
    "NoJointCIWarning",
    "DagModel",
    "BellScenario",
    "IndependenceConstraint",
    "Symmetry",
    "ParsedScenario",
    "parse_scenario",
    "load_scenario",
    "d_separated",
    "derive_independencies",
]

OBSERVED = "observed"
HIDDEN = "hidden"


class ScenarioError(ValueError):
    """Invalid scenario text or structure."""


class NoJointCIWarning(UserWarning):
    """The scenario has no independence between parties at the joint level."""


@dataclass(frozen=True)
class DagModel:
    nodes: tuple  # ((name, kind), ...)
    edges: tuple  # ((parent, child), ...)

    def __post_init__(self):
        kinds = dict(self.nodes)
        if len(kinds) != len(self.nodes):
            raise ScenarioError("duplicate node name")
        for p, c in self.edges:
            for n in (p, c):
                if n not in kinds:
                    raise ScenarioError(f"edge references unknown node {n!r}")
        ts = TopologicalSorter({n: set() for n in kinds})
        for p, c in self.edges:
            ts.add(c, p)
        try:
            tuple(ts.static_order())
        except CycleError as exc:
            cyc = " -> ".join(exc.args[1])
            raise ScenarioError(f"graph has a cycle: {cyc}") from None
        for p, c in self.edges:
            if kinds[c] == HIDDEN:
                raise ScenarioError(f"hidden node {c!r} has a parent {p!r}")
        for n, k in self.nodes:
            if k == OBSERVED and not any(kinds[p] == HIDDEN for p in self.parents(n)):
                raise ScenarioError(f"observed node {n!r} has no hidden parent")

    @property
    def kinds(self) -> dict:
        return dict(self.nodes)

    def parents(self, node: str) -> frozenset:
        return frozenset(p for p, c in self.edges if c == node)

    def children(self, node: str) -> frozenset:
        return frozenset(c for p, c in self.edges if p == node)

    def ancestors(self, nodes: Iterable[str]) -> set:
        seen = set(nodes)
        stack = list(seen)
        while stack:
            n = stack.pop()
            for p in self.parents(n):
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen


@dataclass(frozen=True)
class BellScenario:
    parties: tuple  # ordered labels
    settings: tuple  # settings count per party, aligned with ``parties``
    sources: tuple  # ((source name, frozenset of parties), ...)
    outcomes: int = 2

    def __post_init__(self):
        if self.outcomes != 2:
            raise ScenarioError("only dichotomic outcomes are supported")
        if len(set(self.parties)) != len(self.parties):
            raise ScenarioError("duplicate party label")
        if len(self.settings) != len(self.parties):
            raise ScenarioError("settings do not match parties")
        for p, k in zip(self.parties, self.settings):
            if k < 1:
                raise ScenarioError(f"party {p!r} needs at least one setting")
        fed = set()
        for name, parties in self.sources:
            for p in parties:
                if p not in self.parties:
                    raise ScenarioError(f"source {name!r} feeds unknown party {p!r}")
            fed |= set(parties)
        for p in self.parties:
            if p not in fed:
                raise ScenarioError(f"party {p!r} is not fed by any source")

    def n_settings(self, party: str) -> int:
        return self.settings[self.parties.index(party)]

    @property
    def variables(self) -> tuple:
        """Measurement variables in canonical order."""
        out = []
        for p, k in zip(self.parties, self.settings):
            out.extend((p, i) for i in range(k))
        return tuple(sorted(out))

    def hidden_parents(self, party: str) -> frozenset:
        return frozenset(n for n, ps in self.sources if party in ps)

    def source_map(self) -> dict:
        return {n: ps for n, ps in self.sources}

    def dag(self) -> DagModel:
        nodes = tuple((n, HIDDEN) for n, _ in self.sources) + tuple((p, OBSERVED) for p in self.parties)
        edges = tuple((n, p) for n, ps in self.sources for p in sorted(ps, key=self.parties.index))
        return DagModel(nodes, edges)


@dataclass(frozen=True)
class IndependenceConstraint:
    left: tuple  # measurement variables
    right: tuple

    def __post_init__(self):
        left = tuple(sorted(self.left))
        right = tuple(sorted(self.right))
        if not left or not right:
            raise ValueError("independence blocks must be nonempty")
        if set(left) & set(right):
            raise ValueError("independence blocks overlap")
        if right < left:
            left, right = right, left
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def left_parties(self) -> frozenset:
        return frozenset(v[0] for v in self.left)

    @property
    def right_parties(self) -> frozenset:
        return frozenset(v[0] for v in self.right)

    def products(self):
        """All factorizations ``E[U+V] = E[U] * E[V]`` with nonempty U, V."""
        for r in range(1, len(self.left) + 1):
            for U in itertools.combinations(self.left, r):
                for s in range(1, len(self.right) + 1):
                    for V in itertools.combinations(self.right, s):
                        cu, cv = Correlator(U), Correlator(V)
                        yield cu.union(cv), cu, cv

    def __str__(self) -> str:
        fmt = lambda b: "{" + ",".join(format_var(v) for v in b) + "}"
        return f"{fmt(self.left)} _|_ {fmt(self.right)}"


@dataclass(frozen=True)
class Symmetry:
    """A relabeling: outcome flip of one variable, or a setting/party swap."""

    kind: str  # "flip" | "swap-settings" | "swap-parties"
    args: tuple

    def __str__(self) -> str:
        return f"{self.kind} {' '.join(map(str, self.args))}"


@dataclass(frozen=True)
class ParsedScenario:
    scenario: BellScenario
    dag: DagModel
    functionals: Mapping = field(default_factory=dict)  # name -> {symbol: Fraction}
    symmetries: tuple = ()
    name: str = ""


# == parsing ==

_SECTION_RE = re.compile(r"^\[(\w+)\]$")
_PARTY_RE = re.compile(r"^([A-Za-z_][A-Za-z_]*?)\s+settings\s*=\s*(\d+)$")
_TERM_RE = re.compile(
    r"\s*(?P<sign>[+-])?\s*(?:(?P<coef>\d+(?:/\d+)?|\d*\.\d+)\s*\*?\s*)?(?P<corr>E\[[^\]]*\])\s*"
)


def _parse_functional(expr: str, parties: set, variables: set, lineno: int) -> dict:
    coeffs: dict[str, Fraction] = {}
    pos = 0
    first = True
    while pos < len(expr):
        m = _TERM_RE.match(expr, pos)
        if not m or (not first and m.group("sign") is None):
            raise ScenarioError(f"line {lineno}: cannot parse functional near {expr[pos:]!r}")
        first = False
        pos = m.end()
        coef = parse_rational(m.group("coef")) if m.group("coef") else Fraction(1)
        if m.group("sign") == "-":
            coef = -coef
        try:
            corr = Correlator.parse(m.group("corr"))
        except ValueError as exc:
            raise ScenarioError(f"line {lineno}: {exc}") from None
        for v in corr.vars:
            if v[0] not in parties:
                raise ScenarioError(f"line {lineno}: unknown party {v[0]!r} in {corr}")
            if v not in variables:
                raise ScenarioError(f"line {lineno}: unknown setting {format_var(v)} in {corr}")
        key = str(corr)
        coeffs[key] = coeffs.get(key, Fraction(0)) + coef
    if first:
        raise ScenarioError(f"line {lineno}: empty functional")
    return {k: v for k, v in coeffs.items() if v != 0}


def parse_scenario(text: str, name: str = "") -> ParsedScenario:
    """Parse scenario-file text into a validated scenario, DAG and functionals."""
    section = None
    parties: list[str] = []
    settings: list[int] = []
    edges: list[tuple[str, str, int]] = []
    raw_functionals: list[tuple[str, str, int]] = []
    raw_symmetries: list[tuple[list[str], int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).lower()
            if section not in ("parties", "sources", "functionals", "symmetries"):
                raise ScenarioError(f"line {lineno}: unknown section [{m.group(1)}]")
            continue
        if section is None:
            raise ScenarioError(f"line {lineno}: content outside any section")
        if section == "parties":
            m = _PARTY_RE.match(line)
            if not m:
                raise ScenarioError(f"line {lineno}: expected 'LABEL settings=K', got {line!r}")
            parties.append(m.group(1))
            settings.append(int(m.group(2)))
        elif section == "sources":
            if "->" not in line:
                raise ScenarioError(f"line {lineno}: expected 'NAME -> LABEL,...'")
            lhs, rhs = (s.strip() for s in line.split("->", 1))
            targets = [t.strip() for t in rhs.split(",") if t.strip()]
            if not lhs or not targets:
                raise ScenarioError(f"line {lineno}: empty source entry")
            for t in targets:
                edges.append((lhs, t, lineno))
        elif section == "functionals":
            if "=" not in line:
                raise ScenarioError(f"line {lineno}: expected 'NAME = expression'")
            fname, expr = (s.strip() for s in line.split("=", 1))
            if not re.match(r"^[A-Za-z_]\w*$", fname):
                raise ScenarioError(f"line {lineno}: bad functional name {fname!r}")
            raw_functionals.append((fname, expr, lineno))
        else:
            raw_symmetries.append((line.split(), lineno))
    if not parties:
        raise ScenarioError("no [parties] declared")
    party_set = set(parties)
    sources = []
    seen = set()
    for lhs, _, lineno in edges:
        if lhs in party_set:
            raise ScenarioError(f"line {lineno}: observed party {lhs!r} cannot act as a source")
        if lhs not in seen:
            seen.add(lhs)
            sources.append(lhs)
    for lhs, t, lineno in edges:
        if t not in party_set and t not in seen:
            raise ScenarioError(f"line {lineno}: unknown party {t!r}")
    nodes = tuple((s, HIDDEN) for s in sources) + tuple((p, OBSERVED) for p in parties)
    dag = DagModel(nodes, tuple((lhs, t) for lhs, t, _ in edges))
    share = []
    for s in sources:
        share.append((s, frozenset(t for lhs, t, _ in edges if lhs == s)))
    scenario = BellScenario(tuple(parties), tuple(settings), tuple(share))
    variables = set(scenario.variables)
    functionals = {}
    for fname, expr, lineno in raw_functionals:
        if fname in functionals:
            raise ScenarioError(f"line {lineno}: functional {fname!r} declared twice")
        functionals[fname] = _parse_functional(expr, party_set, variables, lineno)
    symmetries = tuple(_parse_symmetry(tok, lineno, scenario) for tok, lineno in raw_symmetries)
    return ParsedScenario(scenario, dag, functionals, symmetries, name)


def _parse_symmetry(tokens: list[str], lineno: int, scenario: BellScenario) -> Symmetry:
    from .correlators import parse_var

    if len(tokens) == 2 and tokens[0] == "flip":
        v = parse_var(tokens[1])
        if v not in scenario.variables:
            raise ScenarioError(f"line {lineno}: unknown variable {tokens[1]!r}")
        return Symmetry("flip", (v,))
    if len(tokens) == 3 and tokens[0] == "swap":
        a, b = tokens[1], tokens[2]
        if a in scenario.parties and b in scenario.parties:
            if scenario.n_settings(a) != scenario.n_settings(b):
                raise ScenarioError(f"line {lineno}: parties {a}, {b} differ in settings")
            return Symmetry("swap-parties", (a, b))
        va, vb = parse_var(a), parse_var(b)
        if va[0] != vb[0] or va not in scenario.variables or vb not in scenario.variables:
            raise ScenarioError(f"line {lineno}: bad setting swap {a} {b}")
        return Symmetry("swap-settings", (va, vb))
    raise ScenarioError(f"line {lineno}: unknown symmetry {' '.join(tokens)!r}")


def load_scenario(name_or_path: str) -> ParsedScenario:
    """Load a bundled scenario by name, or a scenario file by path."""
    from importlib import resources
    from pathlib import Path

    path = Path(name_or_path)
    if path.exists():
        return parse_scenario(path.read_text(encoding="utf-8"), name=path.stem)
    res = resources.files("bellforge.scenarios").joinpath(f"{name_or_path}.scn")
    if res.is_file():
        return parse_scenario(res.read_text(encoding="utf-8"), name=name_or_path)
    raise FileNotFoundError(f"no scenario file or bundled scenario named {name_or_path!r}")


# == graph queries ==

def d_separated(dag: DagModel, X: Iterable[str], Y: Iterable[str], Z: Iterable[str] = ()) -> bool:
    """Standard d-separation via the moralized ancestral graph."""
    X, Y, Z = set(X), set(Y), set(Z)
    kinds = dag.kinds
    for n in X | Y | Z:
        if n not in kinds:
            raise KeyError(f"unknown node {n!r}")
    if X & Y or X & Z or Y & Z:
        raise ValueError("node sets must be pairwise disjoint")
    anc = dag.ancestors(X | Y | Z)
    adj: dict[str, set] = {n: set() for n in anc}
    for p, c in dag.edges:
        if p in anc and c in anc:
            adj[p].add(c)
            adj[c].add(p)
    for c in anc:
        ps = [p for p in dag.parents(c) if p in anc]
        for a, b in itertools.combinations(ps, 2):
            adj[a].add(b)
            adj[b].add(a)
    seen = set(X)
    stack = list(X)
    while stack:
        n = stack.pop()
        for m in adj[n]:
            if m in Z or m in seen:
                continue
            if m in Y:
                return False
            seen.add(m)
            stack.append(m)
    return True


def derive_independencies(scenario: BellScenario) -> list[IndependenceConstraint]:
    """Maximal block factorizations between party groups sharing no source."""
    parties = scenario.parties
    hp = {p: scenario.hidden_parents(p) for p in parties}
    pairs = set()
    n = len(parties)
    for mask_l in range(1, 1 << n):
        L = [parties[i] for i in range(n) if mask_l >> i & 1]
        hl = frozenset().union(*(hp[p] for p in L))
        rest = [p for p in parties if p not in L and not (hp[p] & hl)]
        if not rest:
            continue
        # the largest partner group for L is everything sharing no source with it
        pairs.add((frozenset(L), frozenset(rest)))
    cands = set()
    for L, R in pairs:
        cands.add(frozenset((L, R)))
    maximal = []
    for c in cands:
        L, R = tuple(c)
        dominated = False
        for d in cands:
            if d == c:
                continue
            L2, R2 = tuple(d)
            if (L <= L2 and R <= R2) or (L <= R2 and R <= L2):
                dominated = True
                break
        if not dominated:
            maximal.append((L, R))
    out = []
    for L, R in maximal:
        lv = tuple(v for v in scenario.variables if v[0] in L)
        rv = tuple(v for v in scenario.variables if v[0] in R)
        out.append(IndependenceConstraint(lv, rv))
    out.sort(key=lambda c: (c.left, c.right))
    if not out:
        warnings.warn("scenario has no joint-level independencies", NoJointCIWarning, stacklevel=2)
    return out
