"""Correlator bases, the probability/correlator transform, component classes."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .correlators import UNIT, Correlator, format_var
from .scenario import BellScenario, IndependenceConstraint

__all__ = [
    "FULL",
    "FULL_CORRELATORS",
    "FUNCTIONALS",
    "CUSTOM",
    "CorrelatorBasis",
    "MomentVector",
    "ProbabilityVector",
    "ParamSymbol",
    "ComponentPartition",
    "build_basis",
    "prob_to_corr",
    "corr_to_prob",
    "classify_components",
    "one_setting_products",
]

FULL = "full"
FULL_CORRELATORS = "full-correlators"
FUNCTIONALS = "functionals"
CUSTOM = "custom"


@dataclass(frozen=True)
class CorrelatorBasis:
    elements: tuple  # Correlators, unit first
    restriction: str = CUSTOM

    def __post_init__(self):
        els = tuple(self.elements)
        if len(set(els)) != len(els):
            raise ValueError("duplicate correlator in basis")
        if not els or els[0] != UNIT:
            raise ValueError("basis must start with the unit correlator")
        object.__setattr__(self, "elements", els)

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __contains__(self, c) -> bool:
        return c in set(self.elements)

    @property
    def variables(self) -> tuple:
        return tuple(sorted({v for c in self.elements for v in c.vars}))

    @property
    def symbols(self) -> tuple:
        """Symbols of the non-unit elements."""
        return tuple(str(c) for c in self.elements[1:])

    @property
    def is_full(self) -> bool:
        return len(self.elements) == 2 ** len(self.variables)


class MomentVector(Mapping):
    """Exact correlator values, keyed by Correlator."""

    def __init__(self, values: Mapping, check: bool = True):
        self._v = {(Correlator.parse(k) if isinstance(k, str) else k): Fraction(v)
                   for k, v in values.items()}
        if check:
            if UNIT in self._v and self._v[UNIT] != 1:
                raise ValueError("unit component must equal 1")
            for k, v in self._v.items():
                if not -1 <= v <= 1:
                    raise ValueError(f"{k} = {v} lies outside [-1, 1]")

    def __getitem__(self, k):
        if isinstance(k, str):
            k = Correlator.parse(k)
        return self._v[k]

    def __iter__(self):
        return iter(sorted(self._v))

    def __len__(self):
        return len(self._v)

    def by_symbol(self) -> dict:
        return {str(k): v for k, v in self._v.items()}

    def __repr__(self):
        body = ", ".join(f"{k}: {v}" for k, v in sorted(self._v.items()))
        return f"MomentVector({{{body}}})"


@dataclass(frozen=True)
class ProbabilityVector:
    """Joint distribution over outcome assignments of ordered variables."""

    variables: tuple
    probs: tuple  # length 2**n, index bit (n-1-i) is the outcome of variables[i]

    @classmethod
    def from_mapping(cls, variables: Sequence, mapping: Mapping) -> "ProbabilityVector":
        n = len(variables)
        probs = [Fraction(0)] * (2 ** n)
        for outcome, p in mapping.items():
            probs[_index(outcome)] = Fraction(p)
        return cls(tuple(variables), tuple(probs))

    def __getitem__(self, outcome) -> Fraction:
        return self.probs[_index(outcome)]

    def items(self):
        n = len(self.variables)
        for idx, p in enumerate(self.probs):
            yield tuple((idx >> (n - 1 - i)) & 1 for i in range(n)), p


def _index(outcome) -> int:
    idx = 0
    for o in outcome:
        idx = (idx << 1) | int(o)
    return idx


@dataclass(frozen=True)
class ParamSymbol:
    name: str
    lo: Fraction
    hi: Fraction
    origin: str = ""

    def __post_init__(self):
        object.__setattr__(self, "lo", Fraction(self.lo))
        object.__setattr__(self, "hi", Fraction(self.hi))
        if self.lo > self.hi:
            raise ValueError(f"empty domain for parameter {self.name}")


@dataclass(frozen=True)
class ComponentPartition:
    """Observables, linearly eliminable, nonlinear; parameters lie within nonlinear."""

    observables: tuple
    eliminable: tuple
    nonlinear: tuple
    parameters: tuple  # ParamSymbol
    tie_broken: bool = False
    form: str = "correlator"
    products: tuple = ()  # ((E[U+V], E[U], E[V]), ...) used in the constraints

    @property
    def parameter_names(self) -> tuple:
        return tuple(p.name for p in self.parameters)


# == bases ==

def one_setting_products(scenario: BellScenario) -> list[Correlator]:
    per_party = [[(p, i) for i in range(k)] for p, k in zip(scenario.parties, scenario.settings)]
    return sorted(Correlator(vs) for vs in itertools.product(*per_party))


def _support_correlators(constraints: Iterable[IndependenceConstraint]) -> list[Correlator]:
    """Block-parity correlators of each constraint.

    Only subsets with an even number of variables from every party are kept;
    flipping all outcomes of a party through a shared source leaves full
    correlators unchanged and zeroes the odd ones.
    """
    out = set()
    for c in constraints:
        for uv, u, v in c.products():
            if all(len([x for x in f.vars if x[0] == p]) % 2 == 0
                   for f in (u, v) for p in f.parties):
                out.update((uv, u, v))
    return sorted(out)


def build_basis(scenario: BellScenario, restriction: str = FULL,
                constraints: Sequence[IndependenceConstraint] | None = None) -> CorrelatorBasis:
    """Correlator basis under the given restriction tag."""
    variables = scenario.variables
    if restriction == FULL:
        els = [Correlator(vs) for r in range(len(variables) + 1)
               for vs in itertools.combinations(variables, r)]
        return CorrelatorBasis(tuple(sorted(els)), FULL)
    if restriction in (FULL_CORRELATORS, FUNCTIONALS):
        if constraints is None:
            from .scenario import derive_independencies
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                constraints = derive_independencies(scenario)
        els = set(one_setting_products(scenario)) | set(_support_correlators(constraints))
        els.discard(UNIT)
        return CorrelatorBasis((UNIT,) + tuple(sorted(els)), FULL_CORRELATORS)
    raise ValueError(f"unknown restriction {restriction!r}")


# == transforms ==

def _wht(vec: list) -> list:
    """In-place unnormalized Walsh-Hadamard transform (Sylvester ordering)."""
    n = len(vec)
    h = 1
    while h < n:
        for i in range(0, n, 2 * h):
            for j in range(i, i + h):
                a, b = vec[j], vec[j + h]
                vec[j], vec[j + h] = a + b, a - b
        h *= 2
    return vec


def _subset_index(corr: Correlator, variables: Sequence) -> int:
    n = len(variables)
    pos = {v: i for i, v in enumerate(variables)}
    idx = 0
    for v in corr.vars:
        idx |= 1 << (n - 1 - pos[v])
    return idx


def prob_to_corr(p: ProbabilityVector) -> MomentVector:
    """Signed sums ``E_S = sum_o (-1)^(sum of o over S) p(o)`` for every subset S."""
    for _, v in p.items():
        if v < 0:
            raise ValueError("probability vector has a negative entry")
    if sum(p.probs) != 1:
        raise ValueError("probability vector is not normalized")
    vals = _wht(list(p.probs))
    n = len(p.variables)
    out = {}
    for r in range(n + 1):
        for vs in itertools.combinations(p.variables, r):
            c = Correlator(vs)
            out[c] = vals[_subset_index(c, p.variables)]
    return MomentVector(out)


def corr_to_prob(E: MomentVector | Mapping, variables: Sequence | None = None) -> ProbabilityVector:
    """Inverse transform; ``E`` must be given on the full basis."""
    E = E if isinstance(E, MomentVector) else MomentVector(E, check=False)
    if variables is None:
        variables = sorted({v for c in E for v in c.vars})
    variables = tuple(variables)
    n = len(variables)
    if len(E) != 2 ** n:
        raise ValueError(f"correlation vector has {len(E)} components; full basis needs {2 ** n}")
    vec = [Fraction(0)] * (2 ** n)
    for c in E:
        if any(v not in variables for v in c.vars):
            raise ValueError(f"{c} is not over the given variables")
        vec[_subset_index(c, variables)] = E[c]
    vals = _wht(vec)
    scale = Fraction(1, 2 ** n)
    return ProbabilityVector(variables, tuple(v * scale for v in vals))


# == classification ==

def classify_components(basis: CorrelatorBasis, constraints: Sequence[IndependenceConstraint],
                        observables: Iterable, form: str = "correlator",
                        param_side: str | None = None) -> ComponentPartition:
    """Split non-unit basis elements into observable, eliminable and nonlinear sets.

    ``param_side`` may be ``"left"`` or ``"right"`` to override the rule that
    the smaller factor block supplies the parameters.
    """
    obs = {Correlator.parse(o) if isinstance(o, str) else o for o in observables}
    els = set(basis.elements)
    missing = obs - els
    if missing:
        raise ValueError(f"observable {min(missing)} is not in the basis")
    if form == "probability":
        return _classify_probability(basis, constraints, obs)
    nonlinear: set = set()
    params: set = set()
    products = []
    tie = False
    for c in constraints:
        left_f: set = set()
        right_f: set = set()
        for uv, u, v in c.products():
            if uv not in els:
                continue
            for f in (u, v):
                if f not in els:
                    raise ValueError(f"constraint {c} references {f}, which is outside the basis")
            products.append((uv, u, v))
            for f in (uv, u, v):
                if f not in obs:
                    nonlinear.add(f)
            if u not in obs:
                left_f.add(u)
            if v not in obs:
                right_f.add(v)
        if not left_f and not right_f:
            continue
        if param_side == "left":
            side = left_f
        elif param_side == "right":
            side = right_f
        else:
            if len(left_f) == len(right_f):
                tie = True
            # canonical ordering makes ``left`` the lexicographically first block
            side = left_f if len(left_f) <= len(right_f) else right_f
        params |= side
    others = els - obs - {UNIT}
    eliminable = others - nonlinear
    ps = tuple(ParamSymbol(str(c), -1, 1, origin=str(c)) for c in sorted(params))
    return ComponentPartition(
        observables=tuple(sorted(obs - {UNIT})),
        eliminable=tuple(sorted(eliminable)),
        nonlinear=tuple(sorted(nonlinear)),
        parameters=ps,
        tie_broken=tie,
        form="correlator",
        products=tuple(sorted(set(products))),
    )


def _classify_probability(basis, constraints, obs) -> ComponentPartition:
    """Probability-level factorizations ``p(s,t) = p(s) p(t)`` with ``p(s)`` free."""
    els = set(basis.elements)
    nonlinear: set = set()
    params = []
    for c in constraints:
        left, right = c.left, c.right
        if len(right) < len(left):
            left, right = right, left
        for r in range(1, len(right) + 1):
            for vs in itertools.combinations(right, r):
                cc = Correlator(vs)
                if cc in els and cc not in obs:
                    nonlinear.add(cc)
        outcomes = list(itertools.product((0, 1), repeat=len(left)))
        label = "".join(format_var(v) for v in left)
        # the last outcome's probability is fixed by normalization
        for o in outcomes[:-1]:
            bits = "".join(map(str, o))
            params.append(ParamSymbol(f"v[{label}={bits}]", 0, 1, origin=f"p({label}={bits})"))
    others = els - obs - {UNIT}
    return ComponentPartition(
        observables=tuple(sorted(obs - {UNIT})),
        eliminable=tuple(sorted(others - nonlinear)),
        nonlinear=tuple(sorted(nonlinear)),
        parameters=tuple(params),
        form="probability",
    )
