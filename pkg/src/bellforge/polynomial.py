"""Sparse multivariate polynomials with exact rational coefficients.

Variables are plain strings (correlator symbols such as ``E[A0 A1]``,
functional names, parameter names). Monomials are sorted tuples of
``(variable, exponent)`` pairs.
"""

from __future__ import annotations

from fractions import Fraction
from math import gcd, lcm
from typing import Iterable, Mapping

from ._exact import format_rational, parse_rational
from .correlators import symbol_key

__all__ = ["Polynomial", "affine", "var", "const"]


def _mono_key(mono: tuple):
    return (-sum(e for _, e in mono), [(symbol_key(v), -e) for v, e in mono])


def _mono_mul(a: tuple, b: tuple) -> tuple:
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for v, e in b:
        d[v] = d.get(v, 0) + e
    return tuple(sorted(d.items(), key=lambda kv: symbol_key(kv[0])))


class Polynomial:
    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping | None = None):
        clean = {}
        for mono, c in (terms or {}).items():
            c = Fraction(c)
            if c:
                mono = tuple(sorted(((v, e) for v, e in mono if e), key=lambda kv: symbol_key(kv[0])))
                clean[mono] = clean.get(mono, Fraction(0)) + c
        self._terms = {m: c for m, c in clean.items() if c}
        self._hash = None

    # -- construction --
    @classmethod
    def constant(cls, c) -> "Polynomial":
        return cls({(): Fraction(c)})

    @classmethod
    def variable(cls, name: str) -> "Polynomial":
        return cls({((name, 1),): Fraction(1)})

    @classmethod
    def linear(cls, coeffs: Mapping, const=0) -> "Polynomial":
        terms = {((k, 1),): Fraction(v) for k, v in coeffs.items()}
        terms[()] = terms.get((), 0) + Fraction(const)
        return cls(terms)

    # -- inspection --
    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self):
        return sorted(self._terms.items(), key=lambda kv: _mono_key(kv[0]))

    @property
    def variables(self) -> frozenset:
        return frozenset(v for m in self._terms for v, _ in m)

    def sorted_variables(self) -> list:
        return sorted(self.variables, key=symbol_key)

    def degree(self, var: str | None = None) -> int:
        if not self._terms:
            return -1
        if var is None:
            return max(sum(e for _, e in m) for m in self._terms)
        return max(dict(m).get(var, 0) for m in self._terms)

    def degree_in(self, vars: Iterable[str]) -> int:
        vs = set(vars)
        if not self._terms:
            return -1
        return max(sum(e for v, e in m if v in vs) for m in self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(not m for m in self._terms)

    def constant_value(self) -> Fraction:
        return self._terms.get((), Fraction(0))

    def as_constant(self) -> Fraction:
        if not self.is_constant():
            raise ValueError(f"{self} is not constant")
        return self.constant_value()

    def coefficients_in(self, var: str) -> dict:
        """``{k: coefficient polynomial of var**k}``."""
        out: dict[int, dict] = {}
        for m, c in self._terms.items():
            d = dict(m)
            k = d.pop(var, 0)
            rest = tuple(sorted(d.items(), key=lambda kv: symbol_key(kv[0])))
            out.setdefault(k, {})
            out[k][rest] = out[k].get(rest, 0) + c
        return {k: Polynomial(v) for k, v in out.items()}

    def coefficient(self, var: str, k: int = 1) -> "Polynomial":
        return self.coefficients_in(var).get(k, Polynomial())

    def split(self, vars: Iterable[str]) -> dict:
        """Group by the monomial in ``vars``: ``{mono_in_vars: coefficient polynomial}``."""
        vs = set(vars)
        out: dict = {}
        for m, c in self._terms.items():
            inside = tuple((v, e) for v, e in m if v in vs)
            outside = tuple((v, e) for v, e in m if v not in vs)
            out.setdefault(inside, {})
            out[inside][outside] = out[inside].get(outside, 0) + c
        return {k: Polynomial(v) for k, v in out.items()}

    # -- arithmetic --
    def __add__(self, other) -> "Polynomial":
        other = _lift(other)
        t = dict(self._terms)
        for m, c in other._terms.items():
            t[m] = t.get(m, 0) + c
        return Polynomial(t)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial({m: -c for m, c in self._terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-_lift(other))

    def __rsub__(self, other) -> "Polynomial":
        return _lift(other) - self

    def __mul__(self, other) -> "Polynomial":
        other = _lift(other)
        t: dict = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = _mono_mul(m1, m2)
                t[m] = t.get(m, 0) + c1 * c2
        return Polynomial(t)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Polynomial":
        c = Fraction(other)
        return Polynomial({m: v / c for m, v in self._terms.items()})

    def __pow__(self, k: int) -> "Polynomial":
        out = Polynomial.constant(1)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = Polynomial.constant(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    # -- evaluation / substitution --
    def evaluate(self, values: Mapping) -> Fraction:
        total = Fraction(0)
        for m, c in self._terms.items():
            t = c
            for v, e in m:
                if v not in values:
                    raise KeyError(f"no value for {v}")
                t *= Fraction(values[v]) ** e
            total += t
        return total

    def evaluate_float(self, values: Mapping) -> float:
        total = 0.0
        for m, c in self._terms.items():
            t = float(c)
            for v, e in m:
                t *= float(values[v]) ** e
            total += t
        return total

    def substitute(self, mapping: Mapping) -> "Polynomial":
        """Replace variables by polynomials (or numbers)."""
        mapping = {k: _lift(v) for k, v in mapping.items()}
        out = Polynomial()
        cache: dict = {}
        for m, c in self._terms.items():
            t = Polynomial.constant(c)
            keep = []
            for v, e in m:
                if v in mapping:
                    key = (v, e)
                    if key not in cache:
                        cache[key] = mapping[v] ** e
                    t = t * cache[key]
                else:
                    keep.append((v, e))
            if keep:
                t = t * Polynomial({tuple(keep): 1})
            out = out + t
        return out

    def rename(self, mapping: Mapping) -> "Polynomial":
        return self.substitute({k: Polynomial.variable(v) for k, v in mapping.items()})

    # -- normalization --
    def content_scale(self) -> Fraction:
        """Positive factor ``s`` such that ``self * s`` has coprime integer coefficients."""
        if not self._terms:
            return Fraction(1)
        den = 1
        for c in self._terms.values():
            den = lcm(den, c.denominator)
        g = 0
        for c in self._terms.values():
            g = gcd(g, int(c * den))
        return Fraction(den, g)

    def primitive(self) -> "Polynomial":
        return self * self.content_scale()

    # -- interop --
    def to_sympy(self):
        import sympy

        syms = {v: sympy.Symbol(v) for v in self.variables}
        expr = sympy.Integer(0)
        for m, c in self._terms.items():
            t = sympy.Rational(c.numerator, c.denominator)
            for v, e in m:
                t *= syms[v] ** e
            expr += t
        return expr

    @classmethod
    def from_sympy(cls, expr) -> "Polynomial":
        import sympy

        expr = sympy.expand(expr)
        gens = sorted(expr.free_symbols, key=lambda s: s.name)
        if not gens:
            return cls.constant(Fraction(str(sympy.nsimplify(expr))))
        poly = sympy.Poly(expr, *gens)
        terms = {}
        for exps, coeff in poly.terms():
            mono = tuple((g.name, e) for g, e in zip(gens, exps) if e)
            r = sympy.Rational(coeff)
            terms[mono] = Fraction(int(r.p), int(r.q))
        return cls(terms)

    def to_json(self) -> list:
        out = []
        for m, c in self.items():
            vars_ = [v for v, e in m for _ in range(e)]
            out.append({"coeff": format_rational(c), "vars": vars_})
        return out

    @classmethod
    def from_json(cls, items) -> "Polynomial":
        terms: dict = {}
        for it in items:
            d: dict = {}
            for v in it["vars"]:
                d[v] = d.get(v, 0) + 1
            mono = tuple(sorted(d.items(), key=lambda kv: symbol_key(kv[0])))
            terms[mono] = terms.get(mono, 0) + parse_rational(it["coeff"])
        return cls(terms)

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for m, c in self.items():
            mono = "*".join(v if e == 1 else f"{v}^{e}" for v, e in m)
            mag = abs(c)
            if not mono:
                body = format_rational(mag)
            elif mag == 1:
                body = mono
            else:
                body = f"{format_rational(mag)}*{mono}"
            if not parts:
                parts.append(("-" if c < 0 else "") + body)
            else:
                parts.append(("- " if c < 0 else "+ ") + body)
        return " ".join(parts)

    def __repr__(self) -> str:
        return f"Polynomial({str(self)!r})"


def _lift(x) -> Polynomial:
    if isinstance(x, Polynomial):
        return x
    if isinstance(x, str):
        return Polynomial.variable(x)
    return Polynomial.constant(x)


def var(name: str) -> Polynomial:
    return Polynomial.variable(name)


def const(c) -> Polynomial:
    return Polynomial.constant(c)


def affine(coeffs: Mapping, c=0) -> Polynomial:
    return Polynomial.linear(coeffs, c)
