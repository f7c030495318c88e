"""Linearized independence constraints, parametric elimination, parameter removal.

Rows inside the elimination engine are polynomials ``P >= 0`` over observable
symbols, parameter symbols, the symbols still to be eliminated and the
relaxation symbol ``C_relax``. Reported inequalities use the opposite sense,
``poly <= relax * C_relax``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd, lcm
from typing import Iterable, Mapping, Sequence

from ._exact import format_rational, nullspace, parse_rational, rank, solve
from .correlators import UNIT, Correlator, symbol_key
from .linear import InequalitySystem, LinearInequality, deterministic_points, fm_eliminate, \
    project_via_vertices, simplex_system
from .lp import linprog
from .moments import FULL, FULL_CORRELATORS, FUNCTIONALS, ComponentPartition, CorrelatorBasis, \
    ParamSymbol, build_basis, classify_components, one_setting_products
from .polyhedra import EnumerationLimit, facets_of_hull
from .polynomial import Polynomial
from .scenario import BellScenario, IndependenceConstraint, ParsedScenario, ScenarioError, \
    derive_independencies, load_scenario

__all__ = [
    "RELAX",
    "ParamSymbol",
    "AffineObservable",
    "Condition",
    "ParametricInequality",
    "PolynomialInequality",
    "Linearization",
    "DeriveOptions",
    "DerivationResult",
    "NoJointCIError",
    "EliminationError",
    "NonConvexError",
    "CaseLimit",
    "linearize",
    "parametric_fm",
    "eliminate_quadratic_param",
    "derive",
    "express_in_functionals",
    "replay_certificate",
]

log = logging.getLogger(__name__)

RELAX = "C_relax"


class NoJointCIError(ScenarioError):
    """The scenario has no conditional independence among observed variables."""


class EliminationError(ValueError):
    pass


class NonConvexError(EliminationError):
    pass


class CaseLimit(RuntimeError):
    """Too many sign cases in parametric elimination."""


# == value types ==

@dataclass(frozen=True)
class AffineObservable:
    """``const + sum coeff * symbol`` over observable correlators or functionals."""

    terms: tuple  # ((symbol, Fraction), ...)
    const: Fraction = Fraction(0)

    @classmethod
    def make(cls, coeffs: Mapping, const=0) -> "AffineObservable":
        items = tuple(sorted(((str(k), Fraction(v)) for k, v in coeffs.items() if v),
                             key=lambda kv: symbol_key(kv[0])))
        return cls(items, Fraction(const))

    def to_polynomial(self) -> Polynomial:
        return Polynomial.linear(dict(self.terms), self.const)

    def evaluate(self, values: Mapping) -> Fraction:
        return self.to_polynomial().evaluate(values)

    def __str__(self) -> str:
        return str(self.to_polynomial())


_RELS = (">0", "=0", "<0", ">=0", "<=0")


@dataclass(frozen=True)
class Condition:
    """Sign condition ``expr rel 0`` on an affine expression."""

    expr: Polynomial
    rel: str

    def __post_init__(self):
        if self.rel not in _RELS:
            raise ValueError(f"unknown relation {self.rel!r}")

    def holds(self, values: Mapping) -> bool:
        v = self.expr.evaluate(values)
        return {">0": v > 0, "=0": v == 0, "<0": v < 0, ">=0": v >= 0, "<=0": v <= 0}[self.rel]

    def region_form(self) -> tuple:
        """``(expr, op)`` with ``op`` in ``>``, ``>=``, ``=``."""
        return {
            ">0": (self.expr, ">"),
            "<0": (-self.expr, ">"),
            "=0": (self.expr, "="),
            ">=0": (self.expr, ">="),
            "<=0": (-self.expr, ">="),
        }[self.rel]

    def __str__(self) -> str:
        return f"{self.expr} {self.rel[:-1]} 0"

    def to_json(self) -> dict:
        return {"expr": self.expr.to_json(), "rel": self.rel}

    @classmethod
    def from_json(cls, obj: Mapping) -> "Condition":
        return cls(Polynomial.from_json(obj["expr"]), obj["rel"])


@dataclass(frozen=True)
class ParametricInequality:
    """``poly <= 0`` where ``poly`` may contain parameter symbols; valid under ``cases``."""

    poly: Polynomial
    params: tuple = ()
    cases: tuple = ()
    certificate: dict | None = field(default=None, compare=False, hash=False)

    def param_degree(self) -> int:
        return self.poly.degree_in(self.params)

    def __str__(self) -> str:
        s = f"{self.poly} <= 0"
        if self.cases:
            s += "  if " + ", ".join(str(c) for c in self.cases)
        return s

    def to_json(self) -> dict:
        return {
            "monomials": self.poly.to_json(),
            "sense": "<=0",
            "params": list(self.params),
            "cases": [c.to_json() for c in self.cases],
            "certificate": self.certificate or {},
        }


@dataclass(frozen=True)
class PolynomialInequality:
    """``poly <= relax * C_relax`` over observables; applies only where ``guard`` holds."""

    poly: Polynomial
    relax: Fraction = Fraction(0)
    guard: Condition | None = None
    certificate: dict | None = field(default=None, compare=False, hash=False)

    @classmethod
    def make(cls, poly: Polynomial, relax=0, guard: Condition | None = None,
             certificate: dict | None = None) -> "PolynomialInequality":
        """Move linear ``C_relax`` terms with constant coefficients into ``relax``."""
        relax = Fraction(relax)
        if RELAX in poly.variables:
            parts = poly.coefficients_in(RELAX)
            lin = parts.get(1)
            if set(parts) <= {0, 1} and lin is not None and lin.is_constant():
                relax -= lin.constant_value()
                poly = parts.get(0, Polynomial())
        return cls(poly, relax, guard, certificate)

    @property
    def variables(self) -> frozenset:
        vs = set(self.poly.variables)
        if self.guard is not None:
            vs |= self.guard.expr.variables
        return frozenset(vs)

    def full_poly(self) -> Polynomial:
        """``poly - relax * C_relax`` (sense ``<= 0``)."""
        return self.poly - Polynomial.variable(RELAX) * self.relax

    def canonical(self) -> tuple:
        g = None
        if self.guard is not None:
            g = (self.guard.expr.primitive(), self.guard.rel)
        return (self.full_poly().primitive(), g)

    def is_linear(self) -> bool:
        return self.poly.degree_in(self.poly.variables) <= 1

    def evaluate(self, values: Mapping, C=0) -> tuple:
        """``(value, satisfied)``; inactive guards count as satisfied."""
        vals = dict(values)
        value = self.poly.evaluate(vals)
        if self.guard is not None and not self.guard.holds(vals):
            return value, True
        return value, value <= self.relax * Fraction(C)

    def __str__(self) -> str:
        rhs = "0" if not self.relax else (f"{format_rational(self.relax)}*{RELAX}")
        s = f"{self.poly} <= {rhs}"
        if self.guard is not None:
            s += f"  if {self.guard}"
        return s

    def __hash__(self):
        return hash(self.canonical())

    def __eq__(self, other):
        if not isinstance(other, PolynomialInequality):
            return NotImplemented
        return self.canonical() == other.canonical()

    def to_json(self) -> dict:
        out = {"monomials": self.poly.to_json(), "sense": "<=0"}
        if self.relax:
            out["relax"] = format_rational(self.relax)
        out["cases"] = [] if self.guard is None else [self.guard.to_json()]
        out["certificate"] = self.certificate or {}
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "PolynomialInequality":
        from ._exact import parse_rational

        if obj.get("sense", "<=0") != "<=0":
            raise ValueError(f"unsupported sense {obj.get('sense')!r}")
        cases = obj.get("cases") or []
        if len(cases) > 1:
            raise ValueError("at most one guard condition is supported")
        guard = Condition.from_json(cases[0]) if cases else None
        return cls(Polynomial.from_json(obj["monomials"]), parse_rational(obj.get("relax", "0")),
                   guard, obj.get("certificate") or None)


# == regions: convex hulls of points, used for exact sign decisions ==

class _Region:
    """``conv(points) x [0, inf)^rays`` over ``names + rays``."""

    def __init__(self, names: Sequence[str], points: Iterable, rays: Sequence[str] = ()):
        self.names = tuple(names)
        self.rays = tuple(rays)
        self.points = sorted({tuple(Fraction(x) for x in p) for p in points})
        if not self.points:
            raise ValueError("empty region")
        self._pos = {n: i for i, n in enumerate(self.names)}
        self._cache: dict = {}

    def _affine(self, expr: Polynomial) -> tuple:
        if expr.degree_in(expr.variables) > 1:
            raise EliminationError(f"sign of non-affine expression {expr} requested")
        unknown = expr.variables - set(self.names) - set(self.rays)
        if unknown:
            raise EliminationError(f"expression {expr} uses {sorted(unknown)[0]}, which is not a region coordinate")
        c0 = expr.constant_value()
        lin = [(self._pos[v], expr.coefficient(v).constant_value()) for v in expr.variables
               if v in self._pos]
        vals = [c0 + sum((c * p[i] for i, c in lin), Fraction(0)) for p in self.points]
        ray = [expr.coefficient(r).constant_value() for r in self.rays]
        return vals, ray

    def range(self, expr: Polynomial) -> tuple:
        """Exact ``(min, max)``; ``None`` marks an unbounded side."""
        vals, ray = self._affine(expr)
        lo = None if any(r < 0 for r in ray) else min(vals)
        hi = None if any(r > 0 for r in ray) else max(vals)
        return lo, hi

    def feasible(self, conds: Sequence[tuple]) -> bool:
        """Whether some region point meets all ``(expr, op)`` conditions."""
        key = tuple(sorted((c.to_json().__repr__(), op) for c, op in conds))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        res = self._solve(conds)
        self._cache[key] = res
        return res

    def _solve(self, conds) -> bool:
        npt = len(self.points)
        nr = len(self.rays)
        strict = any(op == ">" for _, op in conds)
        nv = npt + nr + 1  # weights, ray amounts, slack t
        A_ub, b_ub, A_eq, b_eq = [], [], [], []
        A_eq.append([1] * npt + [0] * (nr + 1))
        b_eq.append(1)
        for expr, op in conds:
            vals, ray = self._affine(expr)
            row = list(vals) + list(ray)
            if op == "=":
                A_eq.append(row + [0])
                b_eq.append(0)
            else:
                # -(row . w) + t <= 0 for strict, -(row . w) <= 0 otherwise
                A_ub.append([-v for v in row] + [1 if op == ">" else 0])
                b_ub.append(0)
        A_ub.append([0] * (nv - 1) + [1])
        b_ub.append(1)
        c = [0] * (nv - 1) + [1 if strict else 0]
        res = linprog(c, A_ub, b_ub, A_eq, b_eq, maximize=True, nonneg=[True] * nv)
        if not res.ok:
            return False
        return (not strict) or res.value > 0

    def signs(self, conds: Sequence[tuple], atom: Polynomial) -> tuple:
        """Feasible signs of ``atom`` on the cell, as a subset of ``('<', '=', '>')``."""
        out = []
        for rel, extra in (("<", (-atom, ">")), ("=", (atom, "=")), (">", (atom, ">"))):
            if self.feasible(tuple(conds) + (extra,)):
                out.append(rel)
        return tuple(out)

    def project(self, mapping: Mapping[str, Polynomial], names: Sequence[str]) -> "_Region":
        """Image region under affine coordinate maps ``name -> expr``."""
        pts = []
        for p in self.points:
            vals = dict(zip(self.names, p))
            pts.append(tuple(mapping[n].evaluate({**vals, **{r: 0 for r in self.rays}}) for n in names))
        return _Region(names, pts, self.rays)


# == factorization of pivot coefficients into affine atoms ==

_FACTOR_CACHE: dict = {}


def _normalize_atom(p: Polynomial) -> tuple:
    """``(scale, atom)`` with ``p == scale * atom``, atom primitive with positive leading term."""
    s = p.content_scale()
    q = p * s
    lead = q.items()[0][1]
    if lead < 0:
        q = -q
        s = -s
    return 1 / s, q


def _factor(poly: Polynomial) -> tuple:
    """``(constant, ((atom, multiplicity), ...))`` with non-constant atoms."""
    if poly.is_constant():
        return poly.constant_value(), ()
    hit = _FACTOR_CACHE.get(poly)
    if hit is not None:
        return hit
    if poly.degree_in(poly.variables) == 1:
        k, atom = _normalize_atom(poly)
        out = (k, ((atom, 1),))
    else:
        import sympy

        c, facs = sympy.factor_list(poly.to_sympy())
        k = Fraction(int(sympy.Rational(c).p), int(sympy.Rational(c).q))
        atoms: dict = {}
        for f, m in facs:
            fp = Polynomial.from_sympy(f)
            s, atom = _normalize_atom(fp)
            k *= s ** m
            atoms[atom] = atoms.get(atom, 0) + m
        out = (k, tuple(sorted(atoms.items(), key=lambda am: _poly_key(am[0]))))
    _FACTOR_CACHE[poly] = out
    return out


def _poly_key(p: Polynomial):
    return [([(symbol_key(v), e) for v, e in m], c) for m, c in p.items()]


def _prod(factors: Iterable, k=1) -> Polynomial:
    out = Polynomial.constant(k)
    for atom, m in factors:
        out = out * atom ** m
    return out


def _frac_gcd(a: Fraction, b: Fraction) -> Fraction:
    a, b = abs(Fraction(a)), abs(Fraction(b))
    return Fraction(gcd(a.numerator, b.numerator), lcm(a.denominator, b.denominator))


# == parametric Fourier-Motzkin ==

@dataclass
class _Row:
    poly: Polynomial  # >= 0
    cert: dict  # source index -> multiplier polynomial
    divisor: Polynomial
    anc: frozenset
    side: bool = False
    uncond: bool = True


@dataclass(frozen=True)
class _Cell:
    conds: tuple = ()  # Condition
    subs: tuple = ()  # ((var, Polynomial), ...)

    def region_conds(self) -> tuple:
        return tuple(c.region_form() for c in self.conds)

    def with_condition(self, cond: Condition, sub=None) -> "_Cell":
        return _Cell(self.conds + (cond,), self.subs + ((sub,) if sub else ()))


class _Engine:
    """Fourier-Motzkin over polynomial rows with sign-case splitting."""

    def __init__(self, region: _Region, elim: Iterable[str], case_limit: int = 256,
                 prefer_subst: Iterable[str] = (), prune: bool = True):
        self.region = region
        self.elim = set(elim)
        self.case_limit = case_limit
        self.prefer = set(prefer_subst)
        self.prune = prune
        self.cells = 1
        self.atoms: dict = {}  # atom -> first variable it was a pivot factor for
        self._root_signs: dict = {}

    # -- sign helpers --
    def cell_signs(self, cell: _Cell, atom: Polynomial) -> tuple:
        return self.region.signs(cell.region_conds(), atom)

    def root_signs(self, atom: Polynomial) -> tuple:
        s = self._root_signs.get(atom)
        if s is None:
            s = self.region.signs((), atom)
            self._root_signs[atom] = s
        return s

    def is_generic(self, cell: _Cell) -> bool:
        """Open cell whose strict signs match every atom's sign inside the root region.

        Correlation sets are compact images of product distributions, so such
        a cell is dense in the feasible set and its rows extend by continuity.
        """
        for c in cell.conds:
            if c.rel not in (">0", "<0"):
                return False
            want = ">" if c.rel == ">0" else "<"
            s = set(self.root_signs(c.expr))
            if want not in s or not s <= {want, "="}:
                return False
        return True

    def weakly_nonneg_on_root(self, poly: Polynomial) -> bool:
        k, facs = _factor(poly)
        neg = k < 0
        for atom, m in facs:
            s = set(self.root_signs(atom))
            if s <= {">", "="}:
                continue
            if s <= {"<", "="}:
                neg ^= (m % 2 == 1)
                continue
            if m % 2 == 0:
                continue
            return False
        return not neg or k == 0

    # -- main loop --
    def run(self, rows: list, pending: Iterable[str]) -> list:
        return self._eliminate(list(rows), sorted(set(pending), key=symbol_key), _Cell(), 0)

    def _choose(self, rows, pending, cell):
        best = None
        for v in pending:
            p = n = 0
            for r in rows:
                c = r.poly.coefficient(v)
                if c.is_zero():
                    continue
                if c.is_constant():
                    if c.constant_value() > 0:
                        p += 1
                    else:
                        n += 1
                else:
                    p += 1
                    n += 1
            cost = (p * n - p - n, symbol_key(v))
            if best is None or cost < best[0]:
                best = (cost, v)
        return best[1]

    def _eliminate(self, rows, pending, cell: _Cell, depth: int) -> list:
        pending = [v for v in pending if any(v in r.poly.variables for r in rows)]
        if not pending:
            return [(rows, cell)]
        eq = self._find_equality(rows, pending)
        if eq is not None:
            var, e, partner = eq
            out = self._substitute_equality(rows, var, e, partner)
            log.debug("substituted %s: %d rows (cell %s)", var, len(out),
                      ", ".join(str(c) for c in cell.conds) or "root")
            return self._eliminate(out, [v for v in pending if v != var], cell, depth)
        var = self._choose(rows, pending, cell)
        signs = {}
        for r in rows:
            c = r.poly.coefficient(var)
            if c.is_zero():
                continue
            k, facs = _factor(c)
            for atom, _m in facs:
                if atom.variables & self.elim:
                    raise EliminationError(
                        f"pivot coefficient {c} of {var} involves another eliminated symbol")
                self.atoms.setdefault(atom, var)
                if atom in signs:
                    continue
                s = self.cell_signs(cell, atom)
                if not s:
                    return []  # empty cell
                if s in (("<",), (">",)):
                    signs[atom] = s[0]
                    continue
                return self._split(rows, pending, cell, depth, var, atom, s)
        return self._pivot(rows, pending, cell, depth, var, signs)

    @staticmethod
    def _find_equality(rows, pending):
        """A row pair ``e >= 0``, ``-e >= 0`` with a constant coefficient on an eliminated symbol."""
        index = {r.poly: r for r in rows if not r.side}
        for v in pending:
            for r in rows:
                if r.side:
                    continue
                c = r.poly.coefficient(v)
                if c.is_zero() or not c.is_constant():
                    continue
                partner = index.get(-r.poly)
                if partner is not None:
                    return v, r, partner
        return None

    @staticmethod
    def _substitute_equality(rows, var, e: _Row, partner: _Row) -> list:
        """Gaussian step: equivalent system without ``var``; ancestry is kept for the Chernikov bound."""
        ce = e.poly.coefficient(var).constant_value()
        new: dict = {}
        for r in rows:
            if r is e or r is partner:
                continue
            cr = r.poly.coefficient(var)
            if cr.is_zero():
                new.setdefault(r.poly, r)
                continue
            m = cr * (-1 / ce)
            poly = r.poly + m * e.poly
            if poly.is_constant() and poly.constant_value() >= 0:
                continue
            cert: dict = {}
            for k, v in r.cert.items():
                cert[k] = cert.get(k, Polynomial()) + e.divisor * v
            for k, v in e.cert.items():
                cert[k] = cert.get(k, Polynomial()) + m * r.divisor * v
            divisor = r.divisor * e.divisor
            sc = poly.content_scale()
            row = _Row(poly * sc, cert, divisor * (1 / sc), r.anc, r.side, r.uncond and e.uncond and partner.uncond)
            old = new.get(row.poly)
            if old is None or (row.uncond and not old.uncond):
                new[row.poly] = row
        return sorted(new.values(), key=lambda r: _poly_key(r.poly))

    def _split(self, rows, pending, cell, depth, var, atom, s) -> list:
        self.cells += len(s) - 1
        if self.cells > self.case_limit:
            raise CaseLimit(f"case limit {self.case_limit} exceeded at pivot {var} (sign of {atom})")
        log.debug("split on %s for %s: %s", atom, var, s)
        out = []
        for rel in s:
            if rel == "=":
                sub = self._solve_atom(atom)
                cond = Condition(atom, "=0")
                new_cell = cell.with_condition(cond, sub)
                x, expr = sub
                new_rows = [self._substitute(r, {x: expr}) for r in rows]
            else:
                new_cell = cell.with_condition(Condition(atom, ">0" if rel == ">" else "<0"))
                new_rows = rows
            out.extend(self._eliminate(new_rows, pending, new_cell, depth))
        return out

    def _solve_atom(self, atom: Polynomial) -> tuple:
        cands = sorted(atom.variables, key=lambda v: (v not in self.prefer, symbol_key(v)))
        x = cands[0]
        cx = atom.coefficient(x).constant_value()
        rest = atom - Polynomial.variable(x) * cx
        return x, rest * (-1 / cx)

    @staticmethod
    def _substitute(r: _Row, mapping) -> _Row:
        return _Row(r.poly.substitute(mapping), {k: v.substitute(mapping) for k, v in r.cert.items()},
                    r.divisor.substitute(mapping), r.anc, r.side, False)

    def _pivot(self, rows, pending, cell, depth, var, signs) -> list:
        pos, neg, keep = [], [], []
        for r in rows:
            c = r.poly.coefficient(var)
            if c.is_zero():
                keep.append(r)
                continue
            k, facs = _factor(c)
            sg = 1 if k > 0 else -1
            for atom, m in facs:
                if signs[atom] == "<" and m % 2:
                    sg = -sg
            (pos if sg > 0 else neg).append((r, k, dict(facs)))
        bound = depth + 2
        new: dict = {}
        for r in keep:
            new.setdefault(r.poly.primitive(), r)
        for p, kp, fp in pos:
            for n, kn, fn in neg:
                if p.side and n.side:
                    continue
                anc = p.anc | n.anc
                if self.prune and len(anc) > bound:
                    continue
                row = self._combine(p, kp, fp, n, kn, fn, var, signs, cell)
                if row is None:
                    continue
                key = row.poly
                old = new.get(key)
                if old is None or (row.uncond and not old.uncond) or \
                        (row.uncond == old.uncond and len(row.anc) < len(old.anc)):
                    new[key] = row
        out_rows = sorted(new.values(), key=lambda r: _poly_key(r.poly))
        log.debug("eliminated %s: %d rows (cell %s)", var, len(out_rows),
                  ", ".join(str(c) for c in cell.conds) or "root")
        return self._eliminate(out_rows, [v for v in pending if v != var], cell, depth + 1)

    def _combine(self, p, kp, fp, n, kn, fn, var, signs, cell) -> _Row | None:
        common = {a: min(m, fn[a]) for a, m in fp.items() if a in fn}
        sg = 1
        for a, m in common.items():
            if signs[a] == "<" and m % 2:
                sg = -sg
        g = _frac_gcd(kp, kn)
        mult_p = _prod(((a, m - common.get(a, 0)) for a, m in fn.items()), -kn / g * sg)
        mult_n = _prod(((a, m - common.get(a, 0)) for a, m in fp.items()), kp / g * sg)
        poly = mult_p * p.poly + mult_n * n.poly
        if not poly.coefficient(var).is_zero():
            raise AssertionError(f"elimination of {var} failed to cancel")
        if poly.is_zero():
            return None
        uncond = (p.uncond and n.uncond and self.weakly_nonneg_on_root(mult_p)
                  and self.weakly_nonneg_on_root(mult_n))
        divisor = p.divisor * n.divisor
        cert: dict = {}
        for k, v in p.cert.items():
            cert[k] = cert.get(k, Polynomial()) + mult_p * n.divisor * v
        for k, v in n.cert.items():
            cert[k] = cert.get(k, Polynomial()) + mult_n * p.divisor * v
        if not mult_p.is_constant() or not mult_n.is_constant():
            cands = sorted(set(fp) | set(fn) | {c.expr for c in cell.conds if c.rel != "=0"},
                           key=_poly_key)
            poly, h, strict_root = self._reduce(poly, cell, cands)
            if not h.is_constant():
                divisor = divisor * h
                uncond = uncond and strict_root
        if poly.is_constant():
            if poly.constant_value() >= 0:
                return None
        s = poly.content_scale()
        poly = poly * s
        divisor = divisor * (1 / s)
        return _Row(poly, cert, divisor, p.anc | n.anc, False, uncond)

    def _reduce(self, poly: Polynomial, cell: _Cell, cands: Iterable) -> tuple:
        """Divide out candidate affine atoms of fixed strict sign on the cell.

        Returns ``(reduced, divisor, strict_on_root)`` with ``reduced * divisor == poly``.
        """
        h = Polynomial.constant(1)
        strict_root = True
        region_vars = set(self.region.names) | set(self.region.rays)
        for atom in cands:
            if not atom.variables <= region_vars:
                continue
            q = _divide_affine(poly, atom)
            if q is None:
                continue
            s = self.cell_signs(cell, atom)
            if s not in ((">",), ("<",)):
                continue
            if self.root_signs(atom) not in ((">",), ("<",)):
                strict_root = False
            sgn = 1 if s == (">",) else -1
            while q is not None:
                poly = q * sgn
                h = h * atom * sgn
                q = _divide_affine(poly, atom)
        return poly, h, strict_root


def _divide_affine(poly: Polynomial, atom: Polynomial) -> Polynomial | None:
    """Exact quotient ``poly / atom`` for an affine ``atom``, or ``None``."""
    x = min(atom.variables, key=symbol_key)
    a = atom.coefficient(x).constant_value()
    r = atom - Polynomial.variable(x) * a
    parts = poly.coefficients_in(x)
    n = max(parts)
    if n == 0:
        return None
    X = Polynomial.variable(x)
    quot = Polynomial()
    cur = {k: v for k, v in parts.items()}
    for k in range(n, 0, -1):
        c = cur.get(k)
        if c is None or c.is_zero():
            continue
        qk = c * (1 / a)
        quot = quot + qk * X ** (k - 1)
        cur[k - 1] = cur.get(k - 1, Polynomial()) - qk * r
    if not cur.get(0, Polynomial()).is_zero():
        return None
    return quot


# == linearization ==

@dataclass(frozen=True)
class Linearization:
    """Rows ``>= 0`` that encode the factorizations, and parameter domain rows."""

    rows: tuple  # Polynomial
    side: tuple  # Polynomial
    parameters: tuple  # ParamSymbol


def linearize(constraints: Sequence[IndependenceConstraint], partition: ComponentPartition,
              relax=None) -> Linearization:
    """Turn each factorization ``E[UV] = E[U] E[V]`` into polynomial rows.

    The parameter factor becomes a coefficient; the result is linear in the
    non-parameter symbols. ``relax`` may be a rational or ``True`` for the
    symbolic relaxation ``C_relax``.
    """
    if partition.form == "probability":
        return _linearize_probability(constraints, partition, relax)
    params = set(partition.parameter_names)
    obs = {str(o) for o in partition.observables}
    wanted = set()
    for c in constraints:
        for uv, u, v in c.products():
            wanted.add((uv, u, v))
    products = [t for t in partition.products if t in wanted] or list(partition.products)
    if relax is True:
        C = Polynomial.variable(RELAX)
    elif relax is None:
        C = Polynomial()
    else:
        C = Polynomial.constant(relax)
    rows = []
    for uv, u, v in products:
        su, sv = str(u), str(v)
        if su not in params and sv not in params and not (su in obs and sv in obs):
            raise EliminationError(f"factorization {uv} = {u}*{v} has no parameter factor")
        prod = Polynomial.variable(su) * Polynomial.variable(sv)
        diff = Polynomial.variable(str(uv)) - prod
        rows.append(diff + C)
        rows.append(-diff + C)
    side = []
    for p in partition.parameters:
        side.append(Polynomial.variable(p.name) - p.lo)
        side.append(Polynomial.constant(p.hi) - Polynomial.variable(p.name))
    return Linearization(tuple(rows), tuple(side), partition.parameters)


def _block_prob(block: Sequence, outcome: Sequence[int]) -> Polynomial:
    """``p(block = outcome)`` as a linear polynomial in correlators."""
    terms = {}
    n = len(block)
    for r in range(n + 1):
        for idx in itertools.combinations(range(n), r):
            sign = (-1) ** sum(outcome[i] for i in idx)
            terms[str(Correlator(tuple(block[i] for i in idx)))] = Fraction(sign, 2 ** n)
    const = terms.pop(str(UNIT), Fraction(0))
    return Polynomial.linear(terms, const)


def _linearize_probability(constraints, partition, relax) -> Linearization:
    names = {p.origin: p.name for p in partition.parameters}
    rows, side = [], []
    C = Polynomial.variable(RELAX) if relax is True else Polynomial.constant(relax or 0)
    for c in constraints:
        left, right = c.left, c.right
        if len(right) < len(left):
            left, right = right, left
        from .correlators import format_var

        label = "".join(format_var(v) for v in left)
        outs = list(itertools.product((0, 1), repeat=len(left)))
        pv = {}
        for o in outs[:-1]:
            bits = "".join(map(str, o))
            pv[o] = Polynomial.variable(names[f"p({label}={bits})"])
        pv[outs[-1]] = Polynomial.constant(1) - sum(pv.values(), Polynomial())
        for o in outs:
            # the left marginal is fixed by the parameters
            diff = _block_prob(left, o) - pv[o]
            rows.extend([diff, -diff])
            for t in itertools.product((0, 1), repeat=len(right)):
                joint = _block_prob(tuple(left) + tuple(right), tuple(o) + t)
                diff = joint - pv[o] * _block_prob(right, t)
                rows.append(diff + C)
                rows.append(-diff + C)
        for o in outs:
            side.append(pv[o])
    rows = [r.substitute({str(UNIT): 1}) for r in rows]
    return Linearization(tuple(rows), tuple(side), partition.parameters)


# == public parametric elimination ==

def parametric_fm(system: InequalitySystem, lin: Linearization, remove: Iterable,
                  region_points: Sequence | None = None, region_names: Sequence[str] | None = None,
                  case_limit: int = 256) -> list:
    """Eliminate ``remove`` from ``system`` together with the linearized rows.

    Pivot coefficients that depend on parameters are split into sign cases;
    every output carries the cases it was derived under (empty when it holds
    on the whole parameter region). Without ``region_points`` the region is
    the box of parameter domains.
    """
    remove = [str(r) for r in remove]
    param_names = [p.name for p in lin.parameters]
    origins = {p.origin for p in lin.parameters} | set(param_names)
    bad = [r for r in remove if r in origins]
    if bad:
        raise ValueError(f"cannot eliminate parameter origin {bad[0]}")
    sources = _system_rows(system) + list(lin.rows)
    if region_points is None:
        region_names = param_names
        region_points = list(itertools.product(*[(p.lo, p.hi) for p in lin.parameters]))
    rays = (RELAX,) if any(RELAX in s.variables for s in sources) else ()
    region = _Region(region_names, region_points, rays)
    engine = _Engine(region, remove, case_limit, prefer_subst=param_names)
    rows = [_Row(s, {i: Polynomial.constant(1)}, Polynomial.constant(1), frozenset([i]))
            for i, s in enumerate(sources)]
    out = []
    seen = set()
    for rs, cell in engine.run(rows, remove):
        for r in rs:
            poly = -r.poly
            params = tuple(sorted(poly.variables & set(param_names), key=symbol_key))
            cases = () if r.uncond else cell.conds
            key = (poly, cases)
            if key in seen:
                continue
            seen.add(key)
            out.append(ParametricInequality(poly, params, cases, _row_certificate(r, cell)))
    return out


def _system_rows(system: InequalitySystem) -> list:
    out = []
    for ineq in system.inequalities:
        out.append(Polynomial.linear(ineq.coeffs, ineq.const))
    return out


def _row_certificate(r: _Row, cell: _Cell) -> dict:
    out = {
        "multipliers": {str(k): v.to_json() for k, v in sorted(r.cert.items())},
        "divisor": r.divisor.to_json(),
        "substitutions": {x: e.to_json() for x, e in cell.subs},
    }
    if not r.uncond and cell.conds:
        # valid on the open cell; extended to its closure
        out["closure"] = [c.to_json() for c in cell.conds]
    return out


# == parameter elimination ==

def eliminate_quadratic_param(pineq: ParametricInequality, param: ParamSymbol,
                              region: _Region | None = None) -> list:
    """Observable conditions equivalent to ``exists param in domain: pineq``.

    The first returned inequality is the vertex condition (always valid);
    clamped variants guarded by the vertex leaving the domain follow when the
    vertex range is not known to stay inside it. Linear dependence yields the
    endpoint conditions.
    """
    return [q for q, _ in _eliminate_with_steps(pineq, param, region)]


def _eliminate_with_steps(pineq: ParametricInequality, param: ParamSymbol,
                          region: _Region | None) -> list:
    """``[(inequality, step record)]``; the step is what the certificate replays."""
    name = param.name
    others = (set(pineq.params) - {name}) & pineq.poly.variables
    if others:
        raise EliminationError(f"parameters {sorted(others)} must be eliminated before {name}")
    parts = pineq.poly.coefficients_in(name)
    deg = max(parts)
    if deg > 2:
        raise EliminationError(f"{pineq.poly} has degree {deg} in {name}")
    a = parts.get(2, Polynomial())
    b = parts.get(1, Polynomial())
    c = parts.get(0, Polynomial())
    lo, hi = Fraction(param.lo), Fraction(param.hi)
    at_lo = pineq.poly.substitute({name: lo})
    at_hi = pineq.poly.substitute({name: hi})
    lo_step = {"op": "clamp", "param": name, "value": format_rational(lo)}
    hi_step = {"op": "clamp", "param": name, "value": format_rational(hi)}
    if deg == 0:
        return [(PolynomialInequality.make(c), {"op": "drop", "param": name})]
    if deg == 1:
        if b.is_constant():
            bv = b.constant_value()
            return [(PolynomialInequality.make(at_lo), lo_step) if bv > 0
                    else (PolynomialInequality.make(at_hi), hi_step)]
        rng = region.range(b) if region is not None else (None, None)
        if rng[0] is not None and rng[0] >= 0:
            return [(PolynomialInequality.make(at_lo), lo_step)]
        if rng[1] is not None and rng[1] <= 0:
            return [(PolynomialInequality.make(at_hi), hi_step)]
        return [(PolynomialInequality.make(at_lo, guard=Condition(b, ">=0")), lo_step),
                (PolynomialInequality.make(at_hi, guard=Condition(b, "<0")), hi_step)]
    if not a.is_constant():
        raise NonConvexError(f"leading coefficient {a} of {name} is not constant")
    av = a.constant_value()
    if av < 0:
        raise NonConvexError(f"{pineq.poly} is concave in {name}; minimum over the domain is not a single condition")
    vertex = b * (-1 / (2 * av))
    value = c - b * b * (1 / (4 * av))
    if vertex.is_constant():
        v = vertex.constant_value()
        if v < lo:
            return [(PolynomialInequality.make(at_lo), lo_step)]
        if v > hi:
            return [(PolynomialInequality.make(at_hi), hi_step)]
    out = [(PolynomialInequality.make(value), {"op": "vertex", "param": name, "value": vertex.to_json()})]
    if vertex.is_constant():
        return out
    vlo, vhi = region.range(vertex) if region is not None else (None, None)
    if vlo is None or vlo < lo:
        out.append((PolynomialInequality.make(at_lo, guard=Condition(Polynomial.constant(lo) - vertex, ">0")),
                    lo_step))
    if vhi is None or vhi > hi:
        out.append((PolynomialInequality.make(at_hi, guard=Condition(vertex - hi, ">0")), hi_step))
    return out


# == functionals ==

def _functional_pivots(functionals: Mapping) -> list:
    """``[(pivot symbol, replacement polynomial)]`` solving each functional for one symbol."""
    out = []
    reduced = {}
    for name in functionals:
        expr = Polynomial.linear({str(k): v for k, v in functionals[name].items()})
        for piv, rep in out:
            expr = expr.substitute({piv: rep})
        syms = sorted((v for v in expr.variables if v not in functionals), key=symbol_key)
        if not syms:
            raise ScenarioError(f"functional {name} is linearly dependent on the others")
        piv = syms[0]
        cp = expr.coefficient(piv).constant_value()
        rep = (Polynomial.variable(name) - (expr - Polynomial.variable(piv) * cp)) * (1 / cp)
        out = [(p, r.substitute({piv: rep})) for p, r in out]
        out.append((piv, rep))
        reduced[name] = expr
    return out


def express_in_functionals(poly: Polynomial, functionals: Mapping) -> Polynomial | None:
    """Rewrite ``poly`` over functional names, or ``None`` if not possible."""
    if not functionals:
        return None
    piv = _functional_pivots(functionals)
    out = poly.substitute(dict(piv))
    allowed = set(functionals) | {RELAX}
    if out.variables <= allowed:
        return out
    return None


# == derivation pipeline ==

@dataclass(frozen=True)
class DeriveOptions:
    route: str = "auto"  # auto | fm | vertices
    relax: bool = False
    report: str = "functionals"  # functionals | all
    linearization: str = "shortcut"  # shortcut | probability
    symmetry_dedupe: bool = False
    case_limit: int = 256
    pair_limit: int | None = None
    vertex_limit: int | None = 200000
    allow_lhv: bool = False
    param_side: str | None = None
    auto_fm_rows: int = 16

    def __post_init__(self):
        if self.route not in ("auto", "fm", "vertices"):
            raise ValueError(f"unknown route {self.route!r}")
        if self.report not in ("functionals", "all"):
            raise ValueError(f"unknown report mode {self.report!r}")
        if self.linearization not in ("shortcut", "probability"):
            raise ValueError(f"unknown linearization {self.linearization!r}")
        if self.case_limit <= 0 or (self.pair_limit is not None and self.pair_limit <= 0):
            raise ValueError("limits must be positive")


@dataclass
class DerivationResult:
    """Reported inequalities plus everything needed to audit them."""

    inequalities: list
    all_inequalities: list
    conditional: list
    sources: list
    independencies: list
    partition: ComponentPartition | None
    basis: CorrelatorBasis
    diagnostics: list
    scenario_name: str = ""
    restriction: str = ""
    options: DeriveOptions = field(default_factory=DeriveOptions)

    def __iter__(self):
        return iter(self.inequalities)

    def __len__(self):
        return len(self.inequalities)

    def __getitem__(self, i):
        return self.inequalities[i]


def _as_parsed(scenario) -> ParsedScenario:
    if isinstance(scenario, ParsedScenario):
        return scenario
    if isinstance(scenario, BellScenario):
        return ParsedScenario(scenario, scenario.dag(), {}, (), "")
    return load_scenario(scenario)


def _functional_values(functionals: Mapping, values: Mapping) -> dict:
    out = {}
    for name, terms in functionals.items():
        out[name] = sum((Fraction(c) * values[str(k)] for k, c in terms.items()), Fraction(0))
    return out


def derive(scenario, restriction: str = FULL_CORRELATORS, options: DeriveOptions | None = None,
           **kw) -> DerivationResult:
    """Polynomial inequalities over observables implied by the network structure.

    Pipeline: basis, independencies, component classes, projection onto the
    observable and nonlinear symbols, linearization, parametric elimination
    of the nonlinear non-parameter symbols, removal of the parameters.
    """
    opts = options or DeriveOptions(**kw)
    if options is not None and kw:
        raise TypeError("pass either options or keyword arguments")
    parsed = _as_parsed(scenario)
    sc = parsed.scenario
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cis = derive_independencies(sc)
    if not cis and not opts.allow_lhv:
        raise NoJointCIError(f"scenario {parsed.name or sc.parties} has no joint-level conditional "
                             "independence; pass allow_lhv to derive plain Bell inequalities")
    functionals = dict(parsed.functionals)
    if restriction == FUNCTIONALS and not functionals:
        raise ScenarioError("restriction 'functionals' needs declared functionals")
    if opts.linearization == "probability":
        basis = build_basis(sc, FULL, cis)
    else:
        basis = build_basis(sc, FULL if restriction == FULL else FULL_CORRELATORS, cis)
    obs_corrs = one_setting_products(sc)
    if restriction == FUNCTIONALS:
        # correlators that feed a functional but stay outside the basis are unobservable
        obs_corrs = [c for c in obs_corrs if c in basis]
    form = "probability" if opts.linearization == "probability" else "correlator"
    partition = classify_components(basis, cis, obs_corrs, form=form, param_side=opts.param_side) \
        if cis else classify_components(basis, [], obs_corrs)
    if form == "probability":
        partition = _widen_probability_partition(partition, cis, basis)
    diagnostics: list = []
    if partition.tie_broken:
        diagnostics.append("equal-size factor blocks: parameters taken from the first block")

    obs_names = [str(c) for c in partition.observables]
    if restriction == FUNCTIONALS:
        obs_names = list(functionals)
    nonlinear = [str(c) for c in partition.nonlinear]
    param_names = list(partition.parameter_names)
    if form == "probability":
        nonlinear = [n for n in nonlinear]
    W = obs_names + [n for n in nonlinear if n not in obs_names]

    # points of the projected simplex: used for the stage-A hull and all sign decisions
    all_corrs = [c for c in basis.elements if not c.is_unit]
    det = deterministic_points(sc.variables, all_corrs)
    det_maps = []
    for p in det:
        vals = {str(c): Fraction(x) for c, x in zip(all_corrs, p)}
        vals.update(_functional_values(functionals, vals) if restriction == FUNCTIONALS else {})
        if form == "probability":
            vals.update(_probability_params(partition, vals))
        det_maps.append(vals)

    route = opts.route
    if route == "auto":
        route = "fm" if 2 ** len(sc.variables) <= opts.auto_fm_rows else "vertices"
    stage_a = _stage_a(route, sc, basis, W, det_maps, functionals if restriction == FUNCTIONALS else {},
                       opts)
    diagnostics.append(f"stage A ({route}): {len(stage_a)} inequalities over {len(W)} symbols")

    region_names = obs_names + param_names
    region_pts = [tuple(m[n] for n in region_names) for m in det_maps]

    if not cis:
        # no factorization: the stage-A facets are the answer
        outs = []
        for r in _system_rows(stage_a):
            outs.append(PolynomialInequality.make(-r, certificate={"route": route, "facet": r.to_json()}))
        # the region is the answer itself here, so it must not filter anything
        return _finish(outs, [], [], _system_rows(stage_a), cis, partition, basis, diagnostics,
                       parsed, restriction, opts, None)

    lin = linearize(cis, partition, relax=True if opts.relax else None)
    sources = _system_rows(stage_a) + list(lin.rows)
    elim = [n for n in W if n not in obs_names and n not in param_names]
    extra = set()
    for s in lin.rows:
        extra |= s.variables
    elim += sorted(extra - set(W) - set(param_names) - {RELAX} - set(obs_names), key=symbol_key)
    rays = (RELAX,) if opts.relax else ()
    region = _Region(region_names, region_pts, rays)
    engine = _Engine(region, elim, opts.case_limit, prefer_subst=param_names)
    rows = [_Row(s, {i: Polynomial.constant(1)}, Polynomial.constant(1), frozenset([i]))
            for i, s in enumerate(sources)]
    results = engine.run(rows, elim)
    diagnostics.append(f"parametric elimination: {engine.cells} sign cells")

    uncond: dict = {}
    conditional = []
    for rs, cell in results:
        generic = bool(cell.conds) and engine.is_generic(cell)
        for r in rs:
            if r.uncond or generic:
                old = uncond.get(r.poly)
                if old is None or (r.uncond and not old[0].uncond):
                    uncond[r.poly] = (r, cell)
            else:
                pi = ParametricInequality(-r.poly, tuple(sorted(r.poly.variables & set(param_names),
                                                                 key=symbol_key)),
                                          cell.conds, _row_certificate(r, cell))
                conditional.append(pi)
    outs = []
    stepper = _ParamEliminator(region, param_names, partition, engine.atoms, opts, diagnostics)
    for poly, (r, cell) in sorted(uncond.items(), key=lambda kv: _poly_key(kv[0])):
        base_cert = _row_certificate(r, cell)
        outs.extend(stepper.run(-r.poly, base_cert))
    return _finish(outs, conditional, [], sources, cis, partition, basis, diagnostics, parsed,
                   restriction, opts, region)


def _widen_probability_partition(partition, cis, basis) -> ComponentPartition:
    """Probability form: every correlator inside a constraint's variables is nonlinear."""
    els = set(basis.elements)
    obs = set(partition.observables)
    nonlinear = set(partition.nonlinear)
    for c in cis:
        vs = tuple(c.left) + tuple(c.right)
        for r in range(1, len(vs) + 1):
            for sub in itertools.combinations(vs, r):
                cc = Correlator(sub)
                if cc in els and cc not in obs:
                    nonlinear.add(cc)
    others = els - obs - {UNIT}
    return ComponentPartition(partition.observables, tuple(sorted(others - nonlinear)),
                              tuple(sorted(nonlinear)), partition.parameters, partition.tie_broken,
                              "probability", partition.products)


def _probability_params(partition, vals) -> dict:
    out = {}
    for p in partition.parameters:
        # origin "p(A0A1=01)"
        label, bits = p.origin[2:-1].split("=")
        block = [v for v in _split_label(label)]
        out[p.name] = _block_prob(block, [int(b) for b in bits]).evaluate(vals)
    return out


def _split_label(label: str) -> list:
    import re

    from .correlators import parse_var

    return [parse_var(t) for t in re.findall(r"[A-Za-z_]+\d+", label)]


def _stage_a(route, sc, basis, W, det_maps, functionals, opts) -> InequalitySystem:
    if route == "vertices":
        pts = [{n: m[n] for n in W} for m in det_maps]
        return project_via_vertices(pts, W, limit=opts.vertex_limit)
    # the simplex lives on the full basis; everything outside W is projected away
    system = simplex_system(sc, basis if basis.is_full else build_basis(sc, FULL))
    if functionals:
        ineqs = list(system.inequalities)
        for name, terms in functionals.items():
            co = {str(k): Fraction(v) for k, v in terms.items()}
            co[name] = Fraction(-1)
            ineqs.append(LinearInequality.make(co, 0, canonical=False))
            ineqs.append(LinearInequality.make({k: -v for k, v in co.items()}, 0, canonical=False))
        system = InequalitySystem.of(tuple(system.variables) + tuple(functionals), ineqs)
    remove = [v for v in system.variables if v not in set(W)]
    return fm_eliminate(system, remove, pair_limit=opts.pair_limit)


class _ParamEliminator:
    """Removes parameters from an unconditional row ``Q <= 0``."""

    def __init__(self, region, param_names, partition, atoms, opts, diagnostics):
        self.region = region
        self.params = list(param_names)
        self.domains = {p.name: p for p in partition.parameters}
        self.atoms = [a for a in atoms if a.variables and a.variables <= set(param_names)]
        self.opts = opts
        self.diagnostics = diagnostics
        self._hrep: dict = {}

    def run(self, Q: Polynomial, cert: dict) -> list:
        return self._run(Q, dict(cert, steps=[]), self.region, list(self.params), 0)

    def _run(self, Q, cert, region, params, depth) -> list:
        present = [p for p in params if p in Q.variables]
        if not present:
            return [PolynomialInequality.make(Q, certificate=cert)]
        if depth > 6:
            self.diagnostics.append(f"parameter elimination did not terminate for {Q}")
            return []
        if len(present) == 1:
            p = present[0]
            deg = Q.degree(p)
            if deg == 2:
                return self._vertex(Q, cert, region, p)
            if deg == 1:
                return self._linear(Q, cert, region, p, params, depth)
            self.diagnostics.append(f"degree {deg} in {p}: {Q} <= 0 skipped")
            return []
        # several parameters: try an affine change of coordinates first
        re = self._reparametrize(Q, present, region)
        if re is not None:
            Qn, mapping, new_region, new_params = re
            step = {"op": "reparametrize", "map": {k: v.to_json() for k, v in mapping.items()}}
            return self._run(Qn, dict(cert, steps=cert["steps"] + [step]), new_region,
                             [p for p in params if p not in present] + new_params, depth + 1)
        lin = [p for p in present if Q.degree(p) == 1]
        if lin:
            return self._linear(Q, cert, region, lin[0], params, depth)
        for p in present:
            a = Q.coefficients_in(p).get(2)
            if Q.degree(p) == 2 and a is not None and a.is_constant() and a.constant_value() > 0:
                b = Q.coefficient(p)
                vertex = b * (-1 / (2 * a.constant_value()))
                Qn = Q.substitute({p: vertex})
                step = {"op": "vertex", "param": p, "value": vertex.to_json()}
                return self._run(Qn, dict(cert, steps=cert["steps"] + [step]), region,
                                 [x for x in params if x != p], depth + 1)
        self.diagnostics.append(f"no convex parameter direction: {Q} <= 0 skipped")
        return []

    def _domain(self, region, p) -> ParamSymbol:
        lo, hi = region.range(Polynomial.variable(p))
        return ParamSymbol(p, lo, hi, origin=p)

    def _vertex(self, Q, cert, region, p) -> list:
        pi = ParametricInequality(Q, (p,))
        try:
            res = _eliminate_with_steps(pi, self._domain(region, p), region)
        except NonConvexError as exc:
            if self._vacuous(Q, region, p):
                return []
            self.diagnostics.append(f"skipped: {exc}")
            return []
        return [PolynomialInequality(q.poly, q.relax, q.guard, dict(cert, steps=cert["steps"] + [step]))
                for q, step in res]

    def _vacuous(self, Q, region, p) -> bool:
        """Concave in ``p``: vacuous when an endpoint satisfies it at every region vertex."""
        lo, hi = region.range(Polynomial.variable(p))
        for pt in region.points:
            vals = dict(zip(region.names, pt))
            vals.update({r: 0 for r in region.rays})
            ok = False
            for e in (lo, hi):
                vals[p] = e
                if Q.evaluate(vals) <= 0:
                    ok = True
            if not ok:
                return False
        # Q is linear in the observables at fixed p, so checking region vertices is not
        # sufficient in general; require Q <= 0 at both endpoints over the whole region
        for e in (lo, hi):
            expr = Q.substitute({p: e})
            if expr.degree_in(expr.variables) > 1:
                return False
            rng = region.range(expr)
            if rng[1] is None or rng[1] > 0:
                return False
        return True

    def _linear(self, Q, cert, region, p, params, depth) -> list:
        """Fourier-Motzkin on ``p`` against the facets of the region."""
        hrep = self._facets(region)
        if hrep is None:
            dom = self._domain(region, p)
            hrep = [Polynomial.variable(p) - dom.lo, Polynomial.constant(dom.hi) - Polynomial.variable(p)]
        main = _Row(-Q, {0: Polynomial.constant(1)}, Polynomial.constant(1), frozenset([0]))
        side = [_Row(h, {k + 1: Polynomial.constant(1)}, Polynomial.constant(1), frozenset(), True)
                for k, h in enumerate(hrep) if p in h.variables]
        rest = [q for q in params if q != p]
        engine = _Engine(region, [p], self.opts.case_limit, prefer_subst=rest, prune=False)
        out = []
        for rs, cell in engine.run([main] + side, [p]):
            for r in rs:
                if r.side or 0 not in r.cert:
                    continue
                if not r.uncond:
                    continue
                step = {"op": "combine", "param": p,
                        "side": [hrep[k - 1].to_json() for k in sorted(r.cert) if k > 0],
                        "multipliers": {str(k): v.to_json() for k, v in sorted(r.cert.items())},
                        "divisor": r.divisor.to_json()}
                out.extend(self._run(-r.poly, dict(cert, steps=cert["steps"] + [step]), region, rest,
                                     depth + 1))
        return out

    def _facets(self, region) -> list | None:
        key = (region.names, tuple(region.points))
        if key in self._hrep:
            return self._hrep[key]
        try:
            ineqs, eqs = facets_of_hull(region.points, limit=self.opts.vertex_limit)
        except EnumerationLimit:
            self._hrep[key] = None
            return None
        rows = []
        for c0, c in ineqs:
            rows.append(Polynomial.linear(dict(zip(region.names, c)), c0))
        for c0, c in eqs:
            e = Polynomial.linear(dict(zip(region.names, c)), c0)
            rows.extend([e, -e])
        self._hrep[key] = rows
        return rows

    def _reparametrize(self, Q, present, region):
        """Express ``Q`` through fewer affine parameter combinations from pivot coefficients."""
        cands = [a for a in self.atoms if a.variables <= set(present)]
        n = len(present)
        obs = [x for x in region.names if x not in self.params]
        for k in range(1, n):
            for combo in itertools.combinations(cands, k):
                alpha = [[a.coefficient(p).constant_value() for p in present] for a in combo]
                if rank(alpha) < k:
                    continue
                # complete to a basis with unit vectors
                rows = [list(r) for r in alpha]
                extra = []
                for j in range(n):
                    trial = rows + [[Fraction(int(i == j)) for i in range(n)]]
                    if rank(trial) == len(trial):
                        rows = trial
                        extra.append(j)
                    if len(rows) == n:
                        break
                new_names = [f"g{i + 1}" for i in range(k)]
                taken = set(Q.variables) | set(region.names)
                new_names = [_fresh(nm, taken) for nm in new_names]
                tmp = [_fresh(f"t{j}", taken | set(new_names)) for j in range(len(extra))]
                # solve p = M^{-1} (g - beta, t)
                from ._exact import inverse

                Minv = inverse(rows)
                rhs = [Polynomial.variable(new_names[i]) - combo[i].constant_value() for i in range(k)]
                rhs += [Polynomial.variable(t) for t in tmp]
                mapping = {}
                for i, p in enumerate(present):
                    e = Polynomial()
                    for j in range(n):
                        if Minv[i][j]:
                            e = e + rhs[j] * Minv[i][j]
                    mapping[p] = e
                Qn = Q.substitute(mapping)
                if Qn.variables & set(tmp):
                    continue
                gmap = {x: Polynomial.variable(x) for x in obs}
                for i, g in enumerate(new_names):
                    gmap[g] = combo[i]
                names = obs + new_names
                new_region = region.project(gmap, names)
                log.debug("reparametrized %s via %s", Q, [str(a) for a in combo])
                return Qn, {g: combo[i] for i, g in enumerate(new_names)}, new_region, new_names
        return None


def _fresh(name: str, taken: set) -> str:
    out = name
    i = 0
    while out in taken:
        i += 1
        out = f"{name}_{i}"
    return out


def _finish(outs, conditional, _unused, sources, cis, partition, basis, diagnostics, parsed,
            restriction, opts, region) -> DerivationResult:
    functionals = dict(parsed.functionals)
    uniq: dict = {}
    for ineq in outs:
        if region is not None and _implied_by_region(ineq, region):
            continue
        ineq = _express_if_possible(ineq, functionals, restriction)
        key = ineq.canonical()
        if key not in uniq:
            uniq[key] = ineq
    all_ineqs = sorted(uniq.values(), key=_ineq_order)
    if opts.symmetry_dedupe and parsed.symmetries:
        all_ineqs = _symmetry_dedupe(all_ineqs, parsed)
    if opts.report == "all" or not functionals:
        reported = list(all_ineqs)
    else:
        reported = [i for i in all_ineqs if i.variables <= set(functionals) | {RELAX}]
    return DerivationResult(reported, all_ineqs, conditional, sources, cis, partition, basis,
                            diagnostics, parsed.name, restriction, opts)


def _ineq_order(ineq: PolynomialInequality):
    p = ineq.full_poly()
    return (p.degree_in(p.variables) <= 1, len(p.variables), _poly_key(p),
            ineq.guard is not None)


def _express_if_possible(ineq, functionals, restriction):
    if restriction == FUNCTIONALS or not functionals:
        return ineq
    poly = express_in_functionals(ineq.poly, functionals)
    if poly is None:
        return ineq
    guard = ineq.guard
    if guard is not None:
        g = express_in_functionals(guard.expr, functionals)
        if g is None:
            return ineq
        guard = Condition(g, guard.rel)
    cert = dict(ineq.certificate or {})
    cert["express"] = {k: v.to_json() for k, v in _functional_pivots(functionals)}
    return PolynomialInequality(poly, ineq.relax, guard, cert)


def _implied_by_region(ineq: PolynomialInequality, region: _Region) -> bool:
    """Linear outputs that hold on the whole observable region are redundant."""
    p = ineq.full_poly()
    if ineq.guard is not None or p.degree_in(p.variables) > 1:
        return False
    if not p.variables <= set(region.names) | set(region.rays):
        return False
    hi = region.range(p)[1]
    return hi is not None and hi <= 0


def _symmetry_dedupe(ineqs, parsed):
    kept = []
    seen = set()
    for ineq in ineqs:
        key = ineq.canonical()
        if key in seen:
            continue
        kept.append(ineq)
        orbit = {key}
        frontier = [ineq]
        while frontier:
            cur = frontier.pop()
            for sym in parsed.symmetries:
                img = _apply_symmetry(sym, cur, parsed)
                if img is None:
                    continue
                k = img.canonical()
                if k not in orbit:
                    orbit.add(k)
                    frontier.append(img)
        seen |= orbit
    return kept


def _image(sym, corr: Correlator) -> tuple:
    """``(sign, image)`` of a correlator under a relabeling."""
    sign = 1
    out = []
    for v in corr.vars:
        if sym.kind == "flip":
            if v == sym.args[0]:
                sign = -sign
            out.append(v)
        elif sym.kind == "swap-settings":
            a, b = sym.args
            out.append(b if v == a else a if v == b else v)
        else:
            a, b = sym.args
            out.append((b, v[1]) if v[0] == a else (a, v[1]) if v[0] == b else v)
    return sign, Correlator(tuple(out))


def _apply_symmetry(sym, ineq: PolynomialInequality, parsed) -> PolynomialInequality | None:
    functionals = dict(parsed.functionals)
    expand = {name: Polynomial.linear({str(k): v for k, v in terms.items()})
              for name, terms in functionals.items()}
    poly = ineq.poly.substitute(expand)
    guard = ineq.guard
    mapping = {}
    for v in poly.variables | (guard.expr.substitute(expand).variables if guard else frozenset()):
        if v == RELAX:
            continue
        try:
            c = Correlator.parse(v)
        except ValueError:
            return None
        sign, img = _image(sym, c)
        mapping[v] = Polynomial.variable(str(img)) * sign
    poly = poly.substitute(mapping)
    if guard is not None:
        guard = Condition(guard.expr.substitute(expand).substitute(mapping), guard.rel)
    out = PolynomialInequality(poly, ineq.relax, guard)
    return _express_if_possible(out, functionals, "")


# == certificate replay ==

def replay_certificate(ineq: PolynomialInequality | ParametricInequality, sources: Sequence[Polynomial]) -> bool:
    """Recompute ``ineq`` from source rows and the recorded steps; exact comparison."""
    cert = ineq.certificate or {}
    if "facet" in cert:
        Q = -Polynomial.from_json(cert["facet"])
        if "express" in cert:
            Q = Q.substitute({k: Polynomial.from_json(v) for k, v in cert["express"].items()})
        return Q == ineq.full_poly()
    # cell substitutions were applied one after another
    subs = [(x, Polynomial.from_json(e)) for x, e in cert.get("substitutions", {}).items()]
    total = Polynomial()
    for k, m in cert["multipliers"].items():
        src = sources[int(k)]
        for x, e in subs:
            src = src.substitute({x: e})
        total = total + Polynomial.from_json(m) * src
    divisor = Polynomial.from_json(cert["divisor"])
    row = _exact_quotient(total, divisor)
    if row is None:
        return False
    Q = -row
    for step in cert.get("steps", []):
        op = step["op"]
        if op == "reparametrize":
            mapping = {k: Polynomial.from_json(v) for k, v in step["map"].items()}
            # Q must be a polynomial in the new coordinates: replace the old parameters
            Q = _rewrite_in(Q, mapping)
            if Q is None:
                return False
        elif op == "vertex":
            Q = Q.substitute({step["param"]: Polynomial.from_json(step["value"])})
        elif op == "clamp":
            Q = Q.substitute({step["param"]: parse_rational(step["value"])})
        elif op == "drop":
            if step["param"] in Q.variables:
                return False
        elif op == "combine":
            side = [Polynomial.from_json(s) for s in step["side"]]
            mult = {int(k): Polynomial.from_json(v) for k, v in step["multipliers"].items()}
            rows = {0: -Q}
            for j, k in enumerate(sorted(x for x in mult if x > 0)):
                rows[k] = side[j]
            tot = sum((mult[k] * rows[k] for k in mult), Polynomial())
            q = _exact_quotient(tot, Polynomial.from_json(step["divisor"]))
            if q is None or q.variables & {step["param"]}:
                return False
            Q = -q
        else:
            return False
    if "express" in cert:
        Q = Q.substitute({k: Polynomial.from_json(v) for k, v in cert["express"].items()})
    target = ineq.full_poly() if isinstance(ineq, PolynomialInequality) else ineq.poly
    return Q == target



def _exact_quotient(num: Polynomial, den: Polynomial) -> Polynomial | None:
    if den.is_constant():
        return num * (1 / den.constant_value())
    import sympy

    q, r = sympy.div(num.to_sympy(), den.to_sympy())
    if sympy.expand(r) != 0:
        return None
    return Polynomial.from_sympy(q)


def _rewrite_in(Q: Polynomial, mapping: Mapping) -> Polynomial | None:
    """Rewrite ``Q`` using new names ``g = affine(old params)``."""
    old = set()
    for e in mapping.values():
        old |= e.variables
    old = sorted(old, key=symbol_key)
    names = sorted(mapping)
    n = len(old)
    alpha = [[mapping[g].coefficient(p).constant_value() for p in old] for g in names]
    rows = [list(r) for r in alpha]
    tmp = []
    for j in range(n):
        trial = rows + [[Fraction(int(i == j)) for i in range(n)]]
        if rank(trial) == len(trial):
            rows = trial
            tmp.append(f"__t{j}")
        if len(rows) == n:
            break
    if len(rows) < n:
        return None
    from ._exact import inverse

    Minv = inverse(rows)
    rhs = [Polynomial.variable(g) - mapping[g].constant_value() for g in names]
    rhs += [Polynomial.variable(t) for t in tmp]
    sub = {}
    for i, p in enumerate(old):
        e = Polynomial()
        for j in range(n):
            if Minv[i][j]:
                e = e + rhs[j] * Minv[i][j]
        sub[p] = e
    out = Q.substitute(sub)
    if out.variables & set(tmp):
        return None
    return out
