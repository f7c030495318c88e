"""Affine inequality systems over correlator symbols, FM elimination and
vertex-route projection."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from ._exact import format_rational, parse_rational, primitive_int_vector
from .correlators import UNIT, Correlator, symbol_key
from .lp import implies, irredundant, is_feasible_ge
from .moments import CorrelatorBasis, MomentVector
from .polyhedra import facets_of_hull
from .scenario import BellScenario

__all__ = [
    "LinearInequality",
    "InequalitySystem",
    "FMLimit",
    "simplex_system",
    "fm_eliminate",
    "remove_redundant",
    "project_via_vertices",
    "deterministic_points",
]

log = logging.getLogger(__name__)


class FMLimit(RuntimeError):
    """Raised when an elimination round exceeds the configured pair limit."""


def _sym(x) -> str:
    return str(x) if isinstance(x, Correlator) else x


@dataclass(frozen=True)
class LinearInequality:
    """``const + sum(coeffs[s] * s) >= 0`` in canonical integer scaling."""

    terms: tuple  # ((symbol, Fraction), ...) sorted, nonzero
    const: Fraction = Fraction(0)
    certificate: tuple = field(default=(), compare=False, hash=False)

    @classmethod
    def make(cls, coeffs: Mapping, const=0, certificate: Mapping | None = None,
             canonical: bool = True) -> "LinearInequality":
        items = [(_sym(k), Fraction(v)) for k, v in coeffs.items() if v != 0]
        agg: dict[str, Fraction] = {}
        for k, v in items:
            if k == str(UNIT):
                const = Fraction(const) + v
                continue
            agg[k] = agg.get(k, Fraction(0)) + v
        agg = {k: v for k, v in agg.items() if v != 0}
        const = Fraction(const)
        cert = dict(certificate or {})
        if canonical:
            keys = sorted(agg, key=symbol_key)
            ints, scale = primitive_int_vector([const] + [agg[k] for k in keys])
            const = Fraction(ints[0])
            agg = {k: Fraction(i) for k, i in zip(keys, ints[1:])}
            cert = {k: v * scale for k, v in cert.items()}
        terms = tuple(sorted(agg.items(), key=lambda kv: symbol_key(kv[0])))
        return cls(terms, const, tuple(sorted(cert.items())))

    @property
    def coeffs(self) -> dict:
        return dict(self.terms)

    @property
    def variables(self) -> tuple:
        return tuple(k for k, _ in self.terms)

    def coefficient(self, sym) -> Fraction:
        return self.coeffs.get(_sym(sym), Fraction(0))

    def evaluate(self, values: Mapping) -> Fraction:
        vals = {_sym(k): Fraction(v) for k, v in values.items()}
        return self.const + sum(c * vals[k] for k, c in self.terms)

    def is_trivial(self) -> bool:
        return not self.terms and self.const >= 0

    def is_infeasible(self) -> bool:
        return not self.terms and self.const < 0

    def negated_le(self) -> str:
        """Render as ``expr <= bound`` with the variables on the left."""
        lhs = _render({k: -v for k, v in self.terms}) or "0"
        return f"{lhs} <= {format_rational(self.const)}"

    def __str__(self) -> str:
        body = _render(dict(self.terms), self.const)
        return f"{body} >= 0"

    def to_json(self) -> dict:
        return {
            "const": format_rational(self.const),
            "terms": {k: format_rational(v) for k, v in self.terms},
            "sense": ">=0",
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "LinearInequality":
        if obj.get("sense", ">=0") != ">=0":
            raise ValueError(f"unsupported sense {obj.get('sense')!r}")
        return cls.make({k: parse_rational(v) for k, v in obj["terms"].items()},
                        parse_rational(obj.get("const", "0")))


def _render(terms: Mapping, const: Fraction = Fraction(0)) -> str:
    parts = []
    if const:
        parts.append(format_rational(const))
    for k in sorted(terms, key=symbol_key):
        v = terms[k]
        mag = abs(v)
        coef = "" if mag == 1 else format_rational(mag) + "*"
        sign = "-" if v < 0 else "+"
        if not parts:
            parts.append(("-" if v < 0 else "") + coef + k)
        else:
            parts.append(f"{sign} {coef}{k}")
    return " ".join(parts) if parts else "0"


@dataclass(frozen=True)
class InequalitySystem:
    variables: tuple  # symbols, unit excluded
    inequalities: tuple

    def __post_init__(self):
        vs = set(self.variables)
        for ineq in self.inequalities:
            for k in ineq.variables:
                if k not in vs:
                    raise ValueError(f"inequality uses {k}, which is not a system variable")

    @classmethod
    def of(cls, variables: Iterable, inequalities: Iterable) -> "InequalitySystem":
        vs = tuple(sorted({_sym(v) for v in variables}, key=symbol_key))
        return cls(vs, tuple(inequalities))

    def __len__(self) -> int:
        return len(self.inequalities)

    def __iter__(self):
        return iter(self.inequalities)

    def canonical_set(self) -> frozenset:
        return frozenset(self.inequalities)

    def is_satisfied(self, values: Mapping) -> bool:
        return all(i.evaluate(values) >= 0 for i in self.inequalities)

    def matrix(self, order: Sequence | None = None):
        """Rows ``(a, c)`` with ``a @ x + c >= 0`` over ``order`` (default: variables)."""
        order = list(order or self.variables)
        rows = []
        for ineq in self.inequalities:
            co = ineq.coeffs
            rows.append(([co.get(v, Fraction(0)) for v in order], ineq.const))
        return rows

    def to_json(self) -> dict:
        return {"variables": list(self.variables),
                "inequalities": [i.to_json() for i in self.inequalities]}


# == construction ==

def simplex_system(scenario: BellScenario | None, basis: CorrelatorBasis) -> InequalitySystem:
    """``p(o) >= 0`` for each outcome assignment, in correlator coordinates.

    The pinned unit correlator becomes the constant term; each row is scaled
    by ``2**n``.
    """
    if not basis.is_full:
        raise ValueError("simplex_system needs the full basis")
    variables = basis.variables
    ineqs = []
    for outcome in itertools.product((0, 1), repeat=len(variables)):
        sign = {v: (-1) ** o for v, o in zip(variables, outcome)}
        coeffs = {}
        for c in basis.elements[1:]:
            s = 1
            for v in c.vars:
                s *= sign[v]
            coeffs[str(c)] = s
        ineqs.append(LinearInequality.make(coeffs, 1, canonical=False))
    return InequalitySystem.of(basis.symbols, ineqs)


def deterministic_points(variables: Sequence, correlators: Sequence[Correlator]) -> list[tuple]:
    """Correlator values of every deterministic outcome assignment."""
    pts = []
    for outcome in itertools.product((1, -1), repeat=len(variables)):
        val = dict(zip(variables, outcome))
        row = []
        for c in correlators:
            s = 1
            for v in c.vars:
                s *= val[v]
            row.append(s)
        pts.append(tuple(row))
    return pts


# == redundancy ==

def _implied(target: LinearInequality, others: Sequence[LinearInequality], order: Sequence) -> bool:
    """Whether ``target`` holds on the polyhedron cut out by ``others``."""
    if not order:
        return target.const >= 0 or any(o.const < 0 for o in others)
    co = target.coeffs
    rows = []
    for o in others:
        oc = o.coeffs
        rows.append([oc.get(v, 0) for v in order])
    return implies([co.get(v, 0) for v in order], target.const, rows, [o.const for o in others])


def _feasible(ineqs: Sequence[LinearInequality], order: Sequence) -> bool:
    rows = [[i.coeffs.get(v, 0) for v in order] for i in ineqs]
    return is_feasible_ge(rows, [i.const for i in ineqs])


def remove_redundant(system: InequalitySystem) -> InequalitySystem:
    """Drop every inequality implied by the remaining ones (exact LP test)."""
    uniq: dict = {}
    for ineq in system.inequalities:
        if ineq.is_trivial():
            continue
        if ineq not in uniq:
            uniq[ineq] = ineq
    kept = sorted(uniq.values(), key=_ineq_key)
    order = list(system.variables)
    if not _feasible(kept, order):
        return InequalitySystem(system.variables, (LinearInequality.make({}, -1),))
    rows = [[i.coeffs.get(v, 0) for v in order] for i in kept]
    keep_idx = irredundant(rows, [i.const for i in kept])
    kept = [kept[j] for j in keep_idx]
    return InequalitySystem(system.variables, tuple(kept))


def _ineq_key(ineq: LinearInequality):
    # more specific (denser) inequalities first so that implied sparse ones
    # are tested against them; deterministic otherwise
    return (len(ineq.terms), [(symbol_key(k), v) for k, v in ineq.terms], ineq.const)


# == Fourier-Motzkin ==

def fm_eliminate(system: InequalitySystem, remove: Iterable, pair_limit: int | None = None,
                 prune: bool = True) -> InequalitySystem:
    """Project out ``remove`` by Fourier-Motzkin elimination.

    Each round eliminates the variable with the fewest (positive x negative)
    pairs, filters combinations with Chernikov's ancestor bound and then
    removes redundant rows exactly. Output inequalities carry certificates:
    multipliers of the input rows (by index) whose sum equals them.
    """
    remove = {_sym(r) for r in remove}
    if str(UNIT) in remove:
        raise ValueError("cannot eliminate the unit correlator")
    unknown = remove - set(system.variables)
    if unknown:
        raise ValueError(f"cannot eliminate {min(unknown)}: not a system variable")
    rows = []
    for idx, ineq in enumerate(system.inequalities):
        rows.append(LinearInequality.make(ineq.coeffs, ineq.const, {idx: Fraction(1)}))
    remaining = [v for v in system.variables if v not in remove]
    pending = set(remove)
    eliminated = 0
    while pending:
        def cost(v):
            p = sum(1 for r in rows if r.coefficient(v) > 0)
            n = sum(1 for r in rows if r.coefficient(v) < 0)
            return (p * n - p - n, symbol_key(v))
        var = min(pending, key=cost)
        pending.discard(var)
        eliminated += 1
        pos = [r for r in rows if r.coefficient(var) > 0]
        neg = [r for r in rows if r.coefficient(var) < 0]
        keep = [r for r in rows if r.coefficient(var) == 0]
        if pair_limit is not None and len(pos) * len(neg) > pair_limit:
            raise FMLimit(f"eliminating {var} needs {len(pos) * len(neg)} pairs (limit {pair_limit})")
        bound = eliminated + 1
        new = {}
        for r in keep:
            new.setdefault(r, r)
        for p in pos:
            cp = p.coefficient(var)
            anc_p = {k for k, _ in p.certificate}
            for n in neg:
                anc = anc_p | {k for k, _ in n.certificate}
                if prune and len(anc) > bound:
                    continue
                cn = -n.coefficient(var)
                coeffs = {}
                for k, v in p.terms:
                    coeffs[k] = coeffs.get(k, 0) + cn * v
                for k, v in n.terms:
                    coeffs[k] = coeffs.get(k, 0) + cp * v
                coeffs.pop(var, None)
                cert = {}
                for k, v in p.certificate:
                    cert[k] = cert.get(k, 0) + cn * v
                for k, v in n.certificate:
                    cert[k] = cert.get(k, 0) + cp * v
                comb = LinearInequality.make(coeffs, cn * p.const + cp * n.const, cert)
                if comb.is_trivial():
                    continue
                old = new.get(comb)
                if old is None or len(comb.certificate) < len(old.certificate):
                    new.pop(comb, None)
                    new[comb] = comb
        rows = sorted(new.values(), key=_ineq_key)
        cur_vars = [v for v in system.variables if v in set(remaining) | pending]
        if prune:
            rows = list(_prune(rows, cur_vars))
        log.debug("eliminated %s: %d rows", var, len(rows))
    return InequalitySystem.of(remaining, rows)


def _prune(rows, order):
    sub = remove_redundant(InequalitySystem(tuple(order), tuple(rows)))
    return sub.inequalities


# == vertex route ==

def project_via_vertices(vertices: Sequence, support: Iterable, limit: int | None = None) -> InequalitySystem:
    """Facets of the convex hull of ``vertices`` restricted to ``support``.

    ``vertices`` are MomentVectors or symbol-keyed mappings. Affine equalities
    of a lower-dimensional hull are returned as pairs of opposite inequalities.
    """
    if not vertices:
        raise ValueError("empty vertex list")
    order = sorted({_sym(s) for s in support} - {str(UNIT)}, key=symbol_key)
    pts = []
    for v in vertices:
        vals = {_sym(k): Fraction(x) for k, x in v.items()}
        pts.append(tuple(vals[s] for s in order))
    ineqs, eqs = facets_of_hull(pts, limit=limit)
    out = []
    for c0, c in ineqs:
        out.append(LinearInequality.make(dict(zip(order, c)), c0))
    for c0, c in eqs:
        out.append(LinearInequality.make(dict(zip(order, c)), c0))
        out.append(LinearInequality.make({k: -x for k, x in zip(order, c)}, -c0))
    return InequalitySystem.of(order, sorted(set(out), key=_ineq_key))
