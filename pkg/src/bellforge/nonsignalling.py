"""Nonsignalling boxes and their network refinement.

A box is a table ``p(outcomes | settings)`` over all parties. Coordinates are
ordered by settings tuple, then outcome tuple, both lexicographic. The
network refinement adds the factorization of marginals that the sources'
independence forces on observable statistics; fixing single-party marginals
turns those factorizations into linear equalities, so the refined set becomes
a polytope whose vertices are enumerated exactly.
"""

from __future__ import annotations

import itertools
import math
import re
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ._exact import format_rational, nullspace, parse_rational, primitive_int_vector, rank, rref, solve
from .lp import linprog
from .polyhedra import EnumerationLimit, enumerate_vertices
from .scenario import (BellScenario, NoJointCIWarning, ParsedScenario, ScenarioError, derive_independencies,
                       load_scenario)

__all__ = [
    "ObservableDistribution",
    "Constraint",
    "Factorization",
    "GnsSystem",
    "GnsVertex",
    "GnsReport",
    "ns_constraints",
    "observable_independencies",
    "gns_system",
    "gns_vertices",
    "is_gns",
    "is_extremal",
    "parse_fix",
    "pr_box",
]


def _scenario(s) -> BellScenario:
    if isinstance(s, BellScenario):
        return s
    if isinstance(s, ParsedScenario):
        return s.scenario
    return load_scenario(s).scenario


def _grid(settings: Sequence[int]) -> list:
    return list(itertools.product(*[range(k) for k in settings]))


class ObservableDistribution:
    """Conditional outcome distributions, one per settings tuple."""

    def __init__(self, parties: Sequence[str], settings: Sequence[int], table: Mapping, check: bool = True):
        self.parties = tuple(parties)
        self.settings = tuple(settings)
        n = len(self.parties)
        self._p = {}
        for x in _grid(self.settings):
            row = table.get(x)
            if row is None:
                raise ValueError(f"no distribution for settings {x}")
            self._p[x] = {a: Fraction(row.get(a, 0)) for a in itertools.product((0, 1), repeat=n)}
            extra = set(row) - set(self._p[x])
            if extra:
                raise ValueError(f"outcome {sorted(extra)[0]} is not a binary tuple of length {n}")
        if check:
            for x, row in self._p.items():
                for a, v in row.items():
                    if v < 0:
                        raise ValueError(f"p({a}|{x}) = {v} is negative")
                if sum(row.values()) != 1:
                    raise ValueError(f"distribution for settings {x} sums to {sum(row.values())}")

    @classmethod
    def from_function(cls, parties, settings, f: Callable) -> "ObservableDistribution":
        """``f(outcomes, settings)`` gives each probability."""
        n = len(parties)
        table = {x: {a: Fraction(f(a, x)) for a in itertools.product((0, 1), repeat=n)}
                 for x in _grid(settings)}
        return cls(parties, settings, table)

    @classmethod
    def from_vector(cls, parties, settings, vec: Sequence, check: bool = True) -> "ObservableDistribution":
        n = len(parties)
        outs = list(itertools.product((0, 1), repeat=n))
        table = {}
        for i, x in enumerate(_grid(settings)):
            table[x] = {a: Fraction(vec[i * len(outs) + j]) for j, a in enumerate(outs)}
        return cls(parties, settings, table, check)

    def __call__(self, outcomes: tuple, settings: tuple) -> Fraction:
        return self._p[tuple(settings)][tuple(outcomes)]

    def vector(self) -> list:
        return [v for x in _grid(self.settings) for v in self._p[x].values()]

    def marginal(self, subset: Sequence[int], outcomes: tuple, settings: tuple,
                 others: tuple | None = None) -> Fraction:
        """``p(outcomes | settings)`` for the parties at ``subset``; the rest use ``others`` (default 0)."""
        comp = [i for i in range(len(self.parties)) if i not in subset]
        others = others if others is not None else (0,) * len(comp)
        x = [0] * len(self.parties)
        for i, s in zip(subset, settings):
            x[i] = s
        for i, s in zip(comp, others):
            x[i] = s
        total = Fraction(0)
        for a, v in self._p[tuple(x)].items():
            if all(a[i] == o for i, o in zip(subset, outcomes)):
                total += v
        return total

    def __eq__(self, other) -> bool:
        return (isinstance(other, ObservableDistribution) and self.parties == other.parties
                and self.settings == other.settings and self._p == other._p)

    def __hash__(self) -> int:
        return hash((self.parties, self.settings, tuple(self.vector())))

    def to_json(self) -> dict:
        key = lambda t: ",".join(map(str, t))
        return {
            "parties": list(self.parties),
            "settings": list(self.settings),
            "p": {key(x): {key(a): format_rational(v) for a, v in row.items()} for x, row in self._p.items()},
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ObservableDistribution":
        tup = lambda s: tuple(int(c) for c in s.split(",")) if s else ()
        table = {tup(x): {tup(a): parse_rational(v) for a, v in row.items()} for x, row in obj["p"].items()}
        return cls(obj["parties"], obj["settings"], table)

    def __repr__(self) -> str:
        return f"ObservableDistribution({self.parties}, {self.settings})"


def pr_box() -> ObservableDistribution:
    """``p(a, b | x, y) = 1/2`` when ``a xor b == x * y``."""
    return ObservableDistribution.from_function(
        ("A", "B"), (2, 2), lambda a, x: Fraction(1, 2) if (a[0] ^ a[1]) == x[0] * x[1] else 0)


# == linear constraints ==

@dataclass(frozen=True)
class Constraint:
    """``sum(coeffs[i] * p_i) + const`` is ``>= 0`` or ``== 0``."""

    coeffs: tuple  # ((coordinate index, Fraction), ...)
    const: Fraction
    rel: str  # ">=" or "="
    label: str

    def value(self, vec: Sequence) -> Fraction:
        return self.const + sum(c * vec[i] for i, c in self.coeffs)

    def holds(self, vec: Sequence) -> bool:
        v = self.value(vec)
        return v == 0 if self.rel == "=" else v >= 0

    def dense(self, n: int) -> list:
        row = [Fraction(0)] * n
        for i, c in self.coeffs:
            row[i] = c
        return row


class _Layout:
    def __init__(self, sc: BellScenario):
        self.parties = sc.parties
        self.settings = sc.settings
        self.n = len(sc.parties)
        self.xs = _grid(sc.settings)
        self.outs = list(itertools.product((0, 1), repeat=self.n))
        self.size = len(self.xs) * len(self.outs)

    def index(self, x: tuple, a: tuple) -> int:
        return self.xs.index(tuple(x)) * len(self.outs) + self.outs.index(tuple(a))

    def marginal_form(self, subset, outcomes, settings, others) -> dict:
        """Coordinates summed by the marginal ``p_subset(outcomes | settings)``."""
        comp = [i for i in range(self.n) if i not in subset]
        x = [0] * self.n
        for i, s in zip(subset, settings):
            x[i] = s
        for i, s in zip(comp, others):
            x[i] = s
        form = {}
        for a in self.outs:
            if all(a[i] == o for i, o in zip(subset, outcomes)):
                form[self.index(tuple(x), a)] = Fraction(1)
        return form

    def name(self, i: int) -> str:
        x = self.xs[i // len(self.outs)]
        a = self.outs[i % len(self.outs)]
        return f"p({''.join(map(str, a))}|{''.join(map(str, x))})"

    def describe(self, subset, outcomes, settings) -> str:
        body = " ".join(f"{self.parties[i]}{s}={o}" for i, s, o in zip(subset, settings, outcomes))
        return f"p({body})"


def _constraint(form: Mapping, const, rel: str, label: str) -> Constraint:
    items = tuple(sorted((i, Fraction(c)) for i, c in form.items() if c != 0))
    return Constraint(items, Fraction(const), rel, label)


def ns_constraints(scenario) -> list:
    """Positivity, normalization per settings tuple, and marginal consistency."""
    lay = _Layout(_scenario(scenario))
    out = []
    for i in range(lay.size):
        out.append(_constraint({i: 1}, 0, ">=", f"positivity of {lay.name(i)}"))
    for x in lay.xs:
        form = {lay.index(x, a): 1 for a in lay.outs}
        out.append(_constraint(form, -1, "=", f"normalization for settings {''.join(map(str, x))}"))
    for r in range(1, lay.n):
        for subset in itertools.combinations(range(lay.n), r):
            comp = [i for i in range(lay.n) if i not in subset]
            comp_grid = _grid([lay.settings[i] for i in comp])
            ref = comp_grid[0]
            for xs in _grid([lay.settings[i] for i in subset]):
                for a in itertools.product((0, 1), repeat=r):
                    base = lay.marginal_form(subset, a, xs, ref)
                    for other in comp_grid[1:]:
                        form = dict(base)
                        for k, v in lay.marginal_form(subset, a, xs, other).items():
                            form[k] = form.get(k, 0) - v
                        who = ",".join(lay.parties[i] for i in comp)
                        out.append(_constraint(form, 0, "=", f"{lay.describe(subset, a, xs)} does not depend on "
                                               f"settings of {who} ({''.join(map(str, ref))} vs "
                                               f"{''.join(map(str, other))})"))
    return out


# == observable factorizations ==

@dataclass(frozen=True)
class Factorization:
    """``p(S T) = p(S) p(T)`` for the marginals of two party blocks."""

    left: tuple  # party names
    right: tuple

    def __str__(self) -> str:
        S, T = " ".join(self.left), " ".join(self.right)
        return f"p({S} {T}) = p({S}) p({T})"


def observable_independencies(scenario) -> list:
    """Observable factorizations inherited from the source structure; empty without independencies."""
    sc = _scenario(scenario)
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoJointCIWarning)
        cis = derive_independencies(sc)
    for ci in cis:
        f = Factorization(tuple(sorted(ci.left_parties, key=sc.parties.index)),
                          tuple(sorted(ci.right_parties, key=sc.parties.index)))
        if f not in out:
            out.append(f)
    return out


def _residuals(dist: ObservableDistribution, f: Factorization):
    """``(label, p(ST) - p(S)p(T))`` over all settings and outcomes."""
    idx = {p: i for i, p in enumerate(dist.parties)}
    S = [idx[p] for p in f.left]
    T = [idx[p] for p in f.right]
    ST = S + T
    for xs in _grid([dist.settings[i] for i in S]):
        for xt in _grid([dist.settings[i] for i in T]):
            for a in itertools.product((0, 1), repeat=len(S)):
                for b in itertools.product((0, 1), repeat=len(T)):
                    joint = dist.marginal(ST, a + b, xs + xt)
                    prod = dist.marginal(S, a, xs) * dist.marginal(T, b, xt)
                    body = " ".join(f"{dist.parties[i]}{s}={o}" for i, s, o in zip(ST, xs + xt, a + b))
                    yield f"{f}: p({body})", joint - prod


# == fixed marginals ==

_FIX_RE = re.compile(r"^\s*([A-Za-z_]+?)(\d*)\s*=\s*(\S+)\s*$")


def parse_fix(text: str | Mapping) -> dict:
    """``"A=1/2,C1=1/3"`` -> ``{("A", None): 1/2, ("C", 1): 1/3}``; values are ``p(outcome 0)``."""
    if isinstance(text, Mapping):
        items = text.items()
    else:
        items = []
        for part in filter(None, (s.strip() for s in text.split(","))):
            if "=" not in part:
                raise ValueError(f"fixed marginal {part!r} must look like A=1/2 or A0=1/2")
            k, v = part.split("=", 1)
            items.append((k, v))
    out = {}
    for k, v in items:
        if isinstance(k, tuple):
            party, x = k
        else:
            m = _FIX_RE.match(f"{k}=0")
            if not m:
                raise ValueError(f"bad fixed-marginal key {k!r}")
            party, x = m.group(1), (int(m.group(2)) if m.group(2) else None)
        val = parse_rational(v) if isinstance(v, str) else Fraction(v)
        if not 0 <= val <= 1:
            raise ValueError(f"fixed marginal {party}{'' if x is None else x} = {val} is not a probability")
        out[(party, x)] = val
    return out


def _fixed_value(fixed: Mapping, party: str, x: int):
    if (party, x) in fixed:
        return fixed[(party, x)]
    return fixed.get((party, None))


@dataclass
class GnsSystem:
    """Linear part, factorizations, and the marginal fixing that linearizes them."""

    scenario: BellScenario
    ns: list  # Constraint
    factorizations: list  # Factorization
    fixed: dict
    linearized: list  # Constraint: fixed marginals and linearized factorizations

    @property
    def constraints(self) -> list:
        return self.ns + self.linearized


def gns_system(scenario, fixed: Mapping | str | None = None) -> GnsSystem:
    sc = _scenario(scenario)
    fixed = parse_fix(fixed or {})
    for party, x in fixed:
        if party not in sc.parties:
            raise ValueError(f"fixed marginal names unknown party {party!r}")
        if x is not None and not 0 <= x < sc.n_settings(party):
            raise ValueError(f"party {party} has no setting {x}")
    lay = _Layout(sc)
    facts = observable_independencies(sc)
    rows = []
    for party in sc.parties:
        i = sc.parties.index(party)
        for x in range(sc.n_settings(party)):
            v = _fixed_value(fixed, party, x)
            if v is None:
                continue
            form = lay.marginal_form([i], (0,), (x,), (0,) * (lay.n - 1))
            rows.append(_constraint(form, -v, "=", f"fixed p({party}{x}=0) = {format_rational(v)}"))
    for f in facts:
        S = [sc.parties.index(p) for p in f.left]
        T = [sc.parties.index(p) for p in f.right]
        if len(S) == 1 and all(_fixed_value(fixed, f.left[0], x) is not None for x in range(sc.settings[S[0]])):
            known, other = S, T
        elif len(T) == 1 and all(_fixed_value(fixed, f.right[0], x) is not None
                                 for x in range(sc.settings[T[0]])):
            known, other = T, S
        else:
            raise ValueError(f"factorization {f} stays nonlinear: fix every setting of a single-party block")
        kp = sc.parties[known[0]]
        for xk in range(sc.settings[known[0]]):
            v0 = _fixed_value(fixed, kp, xk)
            for ak in (0, 1):
                v = v0 if ak == 0 else 1 - v0
                for xo in _grid([sc.settings[i] for i in other]):
                    for ao in itertools.product((0, 1), repeat=len(other)):
                        subset = known + other
                        comp = [i for i in range(lay.n) if i not in subset]
                        joint = lay.marginal_form(subset, (ak,) + ao, (xk,) + xo, (0,) * len(comp))
                        comp2 = [i for i in range(lay.n) if i not in other]
                        marg = lay.marginal_form(other, ao, xo, (0,) * len(comp2))
                        form = dict(joint)
                        for k, c in marg.items():
                            form[k] = form.get(k, 0) - v * c
                        label = f"{f} at {lay.describe(subset, (ak,) + ao, (xk,) + xo)}"
                        rows.append(_constraint(form, 0, "=", label))
    return GnsSystem(sc, ns_constraints(sc), facts, fixed, rows)


# == vertices ==

@dataclass
class GnsVertex:
    distribution: ObservableDistribution
    active: tuple  # indices into GnsSystem.constraints that hold with equality


def _active(constraints: Sequence[Constraint], vec) -> tuple:
    return tuple(k for k, c in enumerate(constraints) if c.value(vec) == 0)


def is_extremal(constraints: Sequence[Constraint], vec: Sequence) -> bool:
    """Active constraints at ``vec`` have full column rank."""
    n = len(vec)
    rows = [constraints[k].dense(n) for k in _active(constraints, vec)]
    return rank(rows) == n


def gns_vertices(scenario, fixed: Mapping | str | None = None, limit: int | None = 200_000) -> list:
    """Exact vertices of the refined box polytope after marginal fixing.

    The direction space of the affine hull, in reduced row echelon form,
    splits the coordinates into blocks; positivity acts per coordinate, so
    the polytope is the product of the block polytopes.
    """
    system = gns_system(scenario, fixed)
    sc = system.scenario
    cons = system.constraints
    n = _Layout(sc).size
    eq_rows = [c.dense(n) for c in cons if c.rel == "="]
    eq_rhs = [-c.const for c in cons if c.rel == "="]
    # coordinates that every feasible point sets to zero are equalities in disguise
    zero = _forced_zero(eq_rows, eq_rhs, n)
    if zero is None:
        raise ValueError("fixed marginals are infeasible with the nonsignalling constraints")
    rows = eq_rows + [[Fraction(int(j == i)) for j in range(n)] for i in sorted(zero)]
    rhs = eq_rhs + [Fraction(0)] * len(zero)
    p0 = solve(rows, rhs)
    dirs = nullspace(rows, n)
    dirs = rref(dirs, n)[0] if dirs else []
    parts = []
    total = 1
    for block, basis in _blocks(dirs, n):
        parts.append((block, _block_vertices([p0[i] for i in block], [[z[i] for i in block] for z in basis], limit)))
        total *= len(parts[-1][1])
        if limit is not None and total > limit:
            raise EnumerationLimit(f"more than {limit} vertices")
    verts = []
    for combo in itertools.product(*[vs for _, vs in parts]):
        v = list(p0)
        for (block, _), vals in zip(parts, combo):
            for i, x in zip(block, vals):
                v[i] = x
        verts.append(tuple(v))
    verts = sorted(set(verts))
    active = _active_many(cons, verts, n)
    return [GnsVertex(ObservableDistribution.from_vector(sc.parties, sc.settings, v, check=False), act)
            for v, act in zip(verts, active)]


def _active_many(cons: Sequence[Constraint], verts: Sequence[Sequence], n: int) -> list:
    """Active constraint indices per point, by one exact integer matrix product."""
    if not verts:
        return []
    C = []
    for c in cons:
        row = [c.const] + c.dense(n)
        C.append(primitive_int_vector(row)[0] if any(row) else [0] * (n + 1))
    V = []
    for v in verts:
        den = math.lcm(*(x.denominator for x in v))
        V.append([den] + [int(x * den) for x in v])
    bound = max(map(abs, itertools.chain.from_iterable(C))) * max(map(abs, itertools.chain.from_iterable(V))) * (n + 1)
    dtype = np.int64 if bound < 2 ** 62 else object
    vals = np.array(C, dtype=dtype) @ np.array(V, dtype=dtype).T
    return [tuple(int(k) for k in np.nonzero(vals[:, j] == 0)[0]) for j in range(len(verts))]


def _blocks(dirs: Sequence[Sequence], n: int) -> list:
    """``(coordinates, direction rows)`` per connected block of direction supports."""
    r, c = [], []
    for z in dirs:
        idx = [i for i in range(n) if z[i] != 0]
        r.extend(idx[:-1])
        c.extend(idx[1:])
    _, labels = connected_components(coo_matrix(([1] * len(r), (r, c)), shape=(n, n)), directed=False)
    out = {}
    for z in dirs:
        lab = labels[next(i for i in range(n) if z[i] != 0)]
        out.setdefault(lab, [])
        out[lab].append(z)
    return sorted(([i for i in range(n) if labels[i] == lab], basis) for lab, basis in out.items())


def _block_vertices(p0: Sequence, basis: Sequence[Sequence], limit) -> list:
    """Vertices of ``{p0 + y @ basis >= 0}`` in the block's own coordinates."""
    m = len(p0)
    A_ub = [[-z[i] for z in basis] for i in range(m)]
    ys = enumerate_vertices(A_ub, p0, limit=limit)
    return [tuple(p0[i] + sum(y[k] * basis[k][i] for k in range(len(basis))) for i in range(m)) for y in ys]


def _forced_zero(eq_rows, eq_rhs, n) -> set | None:
    seen_positive: set = set()
    zero: set = set()
    nonneg = [True] * n
    for i in range(n):
        if i in seen_positive:
            continue
        c = [Fraction(int(j == i)) for j in range(n)]
        res = linprog(c, A_eq=eq_rows, b_eq=eq_rhs, nonneg=nonneg)
        if not res.ok:
            return None
        if res.value == 0:
            zero.add(i)
        seen_positive |= {j for j, v in enumerate(res.x) if v > 0}
    return zero


# == membership ==

@dataclass
class GnsReport:
    ok: bool
    violations: list  # human-readable constraint labels with residuals


def is_gns(dist: ObservableDistribution, scenario) -> GnsReport:
    """Exact check of the linear constraints and of every factorization."""
    sc = _scenario(scenario)
    if dist.parties != sc.parties or dist.settings != sc.settings:
        raise ValueError(f"distribution over {dist.parties} with settings {dist.settings} does not match "
                         f"scenario {sc.parties} with settings {sc.settings}")
    vec = dist.vector()
    bad = []
    for c in ns_constraints(sc):
        if not c.holds(vec):
            bad.append(f"{c.label}: residual {format_rational(c.value(vec))}")
    for f in observable_independencies(sc):
        for label, r in _residuals(dist, f):
            if r != 0:
                bad.append(f"{label}: residual {format_rational(r)}")
    return GnsReport(not bad, bad)
