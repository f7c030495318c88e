"""Classical network models and checks of derived inequalities against them.

A network model assigns every hidden source a finite alphabet with rational
weights and every party a deterministic response table. Correlators are
computed exactly: weights are drawn as small integers so that all sums fit in
int64 before the final division.
"""

from __future__ import annotations

import itertools
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._exact import format_rational, parse_rational
from .correlators import Correlator, format_var, symbol_key
from .nonlinear import RELAX, AffineObservable, PolynomialInequality
from .polynomial import Polynomial
from .scenario import BellScenario, ParsedScenario, load_scenario

__all__ = [
    "GlhvModel",
    "CorrelationData",
    "SoundnessReport",
    "MaxResult",
    "EquivalenceReport",
    "model_to_correlations",
    "deterministic_model",
    "random_model",
    "sample_models",
    "check_soundness",
    "local_bound",
    "parse_objective",
    "max_over_glhv",
    "evaluate",
    "min_relaxation",
    "check_equivalence_sqrt_form",
    "worker_count",
]


def worker_count(default: int | None = None) -> int:
    """Worker processes: ``BELLFORGE_WORKERS`` wins, then ``default``, then the CPU count."""
    env = os.environ.get("BELLFORGE_WORKERS")
    if env:
        n = int(env)
        if n <= 0:
            raise ValueError("BELLFORGE_WORKERS must be positive")
        return n
    if default is not None:
        return max(1, default)
    return max(1, os.cpu_count() or 1)


def _as_parsed(scenario) -> ParsedScenario:
    if isinstance(scenario, ParsedScenario):
        return scenario
    if isinstance(scenario, BellScenario):
        return ParsedScenario(scenario, scenario.dag(), {}, (), "")
    return load_scenario(scenario)


# == models ==

@dataclass(frozen=True)
class GlhvModel:
    """Finite classical network model.

    ``weights[s]`` lists the letter weights of source ``s`` (in scenario
    order). ``responses[party][x]`` is a flat table over the joint letters of
    the party's sources (mixed radix, scenario source order, last fastest).
    """

    sources: tuple  # source names
    weights: tuple  # tuple of tuples of Fraction
    responses: Mapping  # party -> tuple over settings of tuples of 0/1

    def __post_init__(self):
        if len(self.sources) != len(self.weights):
            raise ValueError("one weight vector per source is required")
        for name, w in zip(self.sources, self.weights):
            if not w:
                raise ValueError(f"source {name} has an empty alphabet")
            if any(Fraction(x) < 0 for x in w):
                raise ValueError(f"source {name} has a negative weight")
            if sum(Fraction(x) for x in w) != 1:
                raise ValueError(f"weights of source {name} do not sum to 1")

    def alphabet(self, source: str) -> int:
        return len(self.weights[self.sources.index(source)])

    def to_json(self) -> dict:
        return {
            "sources": {s: [format_rational(Fraction(x)) for x in w] for s, w in zip(self.sources, self.weights)},
            "responses": {p: [list(map(int, t)) for t in tabs] for p, tabs in sorted(self.responses.items())},
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "GlhvModel":
        names = tuple(obj["sources"])
        weights = tuple(tuple(parse_rational(x) for x in obj["sources"][s]) for s in names)
        resp = {p: tuple(tuple(int(b) for b in t) for t in tabs) for p, tabs in obj["responses"].items()}
        return cls(names, weights, resp)


def _parents(sc: BellScenario, party: str) -> list:
    return [n for n, ps in sc.sources if party in ps]


def _check_wiring(model: GlhvModel, sc: BellScenario) -> None:
    names = tuple(n for n, _ in sc.sources)
    if tuple(model.sources) != names:
        raise ValueError(f"model sources {model.sources} do not match scenario sources {names}")
    for p, k in zip(sc.parties, sc.settings):
        if p not in model.responses:
            raise ValueError(f"model has no response table for party {p}")
        tabs = model.responses[p]
        if len(tabs) != k:
            raise ValueError(f"party {p}: {len(tabs)} response tables for {k} settings")
        size = 1
        for s in _parents(sc, p):
            size *= model.alphabet(s)
        for x, t in enumerate(tabs):
            if len(t) != size:
                raise ValueError(f"party {p}, setting {x}: table of size {len(t)}, expected {size}")
    extra = set(model.responses) - set(sc.parties)
    if extra:
        raise ValueError(f"model has responses for unknown party {sorted(extra)[0]}")


class _Compiled:
    """Sign table over joint source letters for every measurement variable."""

    def __init__(self, model: GlhvModel, sc: BellScenario):
        _check_wiring(model, sc)
        self.sc = sc
        sizes = [model.alphabet(s) for s in model.sources]
        self.sizes = sizes
        grids = np.indices(sizes).reshape(len(sizes), -1) if sizes else np.zeros((0, 1), dtype=int)
        self.signs = {}
        for p in sc.parties:
            par = [model.sources.index(s) for s in _parents(sc, p)]
            idx = np.zeros(grids.shape[1], dtype=np.int64)
            for j in par:
                idx = idx * sizes[j] + grids[j]
            for x, tab in enumerate(model.responses[p]):
                bits = np.asarray(tab, dtype=np.int8)[idx]
                self.signs[(p, x)] = (1 - 2 * bits).astype(np.int64)
        # joint weights as exact fractions over a common denominator
        dens = [1] * len(sizes)
        nums = []
        for j, w in enumerate(model.weights):
            fr = [Fraction(x) for x in w]
            d = 1
            for f in fr:
                d = d * f.denominator // np.gcd(d, f.denominator)
            dens[j] = int(d)
            nums.append([int(f * d) for f in fr])
        self.den = 1
        for d in dens:
            self.den *= d
        joint = np.array([1], dtype=object)
        for n in nums:
            joint = np.multiply.outer(joint, np.array(n, dtype=object)).reshape(-1)
        self.weights = joint

    def correlator(self, corr: Correlator) -> Fraction:
        prod = np.ones(self.weights.shape[0], dtype=np.int64)
        for v in corr.vars:
            prod = prod * self.signs[v]
        return Fraction(int(np.dot(self.weights, prod.astype(object))), self.den)


class CorrelationData(Mapping):
    """Observed correlator and functional values, each in ``[-1, 1]`` for correlators."""

    def __init__(self, values: Mapping, check: bool = True):
        self._v = {str(k): Fraction(v) for k, v in values.items()}
        if check:
            for k, v in self._v.items():
                if k.startswith("E[") and not -1 <= v <= 1:
                    raise ValueError(f"{k} = {v} outside [-1, 1]")

    def __getitem__(self, k):
        return self._v[str(k)]

    def __iter__(self):
        return iter(sorted(self._v, key=symbol_key))

    def __len__(self):
        return len(self._v)

    def with_functionals(self, functionals: Mapping) -> "CorrelationData":
        """Add functional values computed from the correlators present."""
        out = dict(self._v)
        for name, terms in functionals.items():
            if name in out:
                continue
            if all(str(k) in self._v for k in terms):
                out[name] = sum((Fraction(c) * self._v[str(k)] for k, c in terms.items()), Fraction(0))
        return CorrelationData(out, check=False)

    @classmethod
    def parse(cls, text: str) -> "CorrelationData":
        """``"I=2,J=2"`` or ``"E[A0 B0]=1/2, I=3"``."""
        out = {}
        for part in re.split(r",(?![^\[]*\])", text):
            part = part.strip()
            if not part:
                continue
            if "=" not in part:
                raise ValueError(f"expected NAME=VALUE, got {part!r}")
            k, v = (s.strip() for s in part.split("=", 1))
            out[k] = parse_rational(v)
        return cls(out)

    def to_json(self) -> dict:
        return {k: format_rational(self._v[k]) for k in self}

    @classmethod
    def from_json(cls, obj: Mapping) -> "CorrelationData":
        return cls({k: parse_rational(str(v)) for k, v in obj.items()})

    def __repr__(self):
        return "CorrelationData({" + ", ".join(f"{k!r}: {format_rational(self._v[k])}" for k in self) + "})"


def model_to_correlations(model: GlhvModel, scenario, correlators: Iterable | None = None,
                          functionals: bool = True) -> CorrelationData:
    """Exact correlators of ``model``; all ``2^n - 1`` of them unless ``correlators`` is given."""
    parsed = _as_parsed(scenario)
    sc = parsed.scenario
    comp = _Compiled(model, sc)
    if correlators is None:
        vs = sc.variables
        corrs = [Correlator(c) for r in range(1, len(vs) + 1) for c in itertools.combinations(vs, r)]
    else:
        corrs = [Correlator.parse(c) if isinstance(c, str) else c for c in correlators]
    vals = {str(c): comp.correlator(c) for c in corrs}
    data = CorrelationData(vals)
    if functionals and parsed.functionals:
        data = data.with_functionals(parsed.functionals)
    return data


def deterministic_model(scenario, outcomes: Mapping) -> GlhvModel:
    """Single-letter model with fixed outcomes ``{(party, setting) or "A0": 0/1}``."""
    parsed = _as_parsed(scenario)
    sc = parsed.scenario
    outs = {}
    for k, v in outcomes.items():
        key = k if isinstance(k, tuple) else _parse_var(k)
        outs[key] = int(v)
    resp = {}
    for p, k in zip(sc.parties, sc.settings):
        resp[p] = tuple((outs.get((p, x), 0),) for x in range(k))
    return GlhvModel(tuple(n for n, _ in sc.sources), tuple((Fraction(1),) for _ in sc.sources), resp)


def _parse_var(text: str):
    from .correlators import parse_var

    return parse_var(text)


def default_alphabets(sc: BellScenario) -> dict:
    """Per source: product over attached parties of their deterministic strategy counts."""
    out = {}
    for n, ps in sc.sources:
        size = 1
        for p in ps:
            size *= 2 ** sc.n_settings(p)
        out[n] = size
    return out


def _draw(sc: BellScenario, rng: np.random.Generator, alph: Mapping, max_weight: int) -> tuple:
    """Integer weights per source and 0/1 response arrays per party."""
    weights = []
    for n, _ in sc.sources:
        size = alph[n]
        w = rng.integers(0, max_weight + 1, size=size)
        if rng.random() < 0.5:
            keep = rng.integers(1, min(size, 4) + 1)
            mask = np.zeros(size, dtype=bool)
            mask[rng.choice(size, size=keep, replace=False)] = True
            w = np.where(mask, np.maximum(w, 1), 0)
        if w.sum() == 0:
            w[rng.integers(0, size)] = 1
        weights.append(w.astype(np.int64))
    resp = {}
    for p, k in zip(sc.parties, sc.settings):
        size = 1
        for s in _parents(sc, p):
            size *= alph[s]
        resp[p] = rng.integers(0, 2, size=(k, size)).astype(np.int8)
    return weights, resp


def _model_from_draw(sc: BellScenario, draw) -> GlhvModel:
    weights, resp = draw
    ws = tuple(tuple(Fraction(int(x), int(w.sum())) for x in w) for w in weights)
    rs = {p: tuple(tuple(int(b) for b in row) for row in arr) for p, arr in resp.items()}
    return GlhvModel(tuple(n for n, _ in sc.sources), ws, rs)


class _DrawEvaluator:
    """Exact correlators of drawn models with int64 arithmetic."""

    def __init__(self, sc: BellScenario, alph: Mapping, corrs: Sequence[Correlator]):
        self.sc = sc
        self.names = [n for n, _ in sc.sources]
        self.sizes = [alph[n] for n in self.names]
        grids = np.indices(self.sizes).reshape(len(self.sizes), -1)
        self.index = {}
        for p in sc.parties:
            par = [self.names.index(s) for s in _parents(sc, p)]
            idx = np.zeros(grids.shape[1], dtype=np.int64)
            for j in par:
                idx = idx * self.sizes[j] + grids[j]
            self.index[p] = idx
        self.corrs = list(corrs)

    def values(self, draw) -> dict:
        weights, resp = draw
        joint = np.ones(1, dtype=np.int64)
        den = 1
        for w in weights:
            joint = np.multiply.outer(joint, w).reshape(-1)
            den *= int(w.sum())
        signs = {}
        for p, arr in resp.items():
            idx = self.index[p]
            for x in range(arr.shape[0]):
                signs[(p, x)] = 1 - 2 * arr[x].astype(np.int64)[idx]
        out = {}
        for c in self.corrs:
            prod = np.ones(joint.shape[0], dtype=np.int64)
            for v in c.vars:
                prod = prod * signs[v]
            out[str(c)] = Fraction(int(joint @ prod), den)
        return out


def random_model(scenario, rng: np.random.Generator, alphabets: Mapping | None = None,
                 max_weight: int = 12) -> GlhvModel:
    """Random integer-weighted model; about half the draws use sparse weights."""
    parsed = _as_parsed(scenario)
    sc = parsed.scenario
    alph = dict(default_alphabets(sc))
    alph.update(alphabets or {})
    return _model_from_draw(sc, _draw(sc, rng, alph, max_weight))


def sample_models(scenario, n: int, seed: int = 0) -> Iterable[GlhvModel]:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    for _ in range(n):
        yield random_model(scenario, rng)


# == soundness by sampling ==

@dataclass
class SoundnessReport:
    n_models: int
    n_inequalities: int
    violations: list = field(default_factory=list)  # (model index, inequality index, value, model)
    max_value: Fraction | None = None

    @property
    def ok(self) -> bool:
        return not self.violations


def _ineq_symbols(ineqs, functionals) -> list:
    need = set()
    for q in ineqs:
        for v in q.variables:
            if v == RELAX:
                continue
            if v in functionals:
                need |= {str(k) for k in functionals[v]}
            else:
                need.add(v)
    return sorted(need, key=symbol_key)


def _soundness_chunk(args) -> tuple:
    parsed, ineq_json, seed, start, count, max_weight = args
    sc = parsed.scenario
    ineqs = [PolynomialInequality.from_json(j) for j in ineq_json]
    symbols = _ineq_symbols(ineqs, parsed.functionals)
    alph = default_alphabets(sc)
    ev = _DrawEvaluator(sc, alph, [Correlator.parse(s) for s in symbols])
    rng = np.random.default_rng(np.random.SeedSequence([seed, start]))
    violations = []
    best = None
    for m in range(count):
        draw = _draw(sc, rng, alph, max_weight)
        vals = ev.values(draw)
        vals.update(_functional_values(parsed.functionals, vals))
        fvals = {k: float(v) for k, v in vals.items()}
        for j, q in enumerate(ineqs):
            if q.guard is not None and not q.guard.holds(vals):
                continue
            approx = q.poly.evaluate_float(fvals)
            if best is not None and approx < float(best) - 1e-9:
                continue
            value = q.poly.evaluate(vals)
            if best is None or value > best:
                best = value
            if value > 0:
                violations.append((start + m, j, value, _model_from_draw(sc, draw)))
    return violations, best


def _functional_values(functionals: Mapping, vals: Mapping) -> dict:
    out = {}
    for name, terms in functionals.items():
        if all(str(k) in vals for k in terms):
            out[name] = sum((Fraction(c) * vals[str(k)] for k, c in terms.items()), Fraction(0))
    return out


def check_soundness(ineqs: Sequence[PolynomialInequality], scenario, n: int = 10_000, seed: int = 0,
                    workers: int | None = None, chunk: int = 500, max_weight: int = 12) -> SoundnessReport:
    """Evaluate every inequality (unrelaxed) on ``n`` seeded random models, exactly.

    Chunks draw from independent seed streams, so the report does not depend
    on the number of workers.
    """
    parsed = _as_parsed(scenario)
    ineq_json = [q.to_json() for q in ineqs]
    for js in ineq_json:
        js["certificate"] = {}
    jobs = []
    for start in range(0, n, chunk):
        jobs.append((parsed, ineq_json, seed, start, min(chunk, n - start), max_weight))
    nw = min(worker_count(workers), len(jobs))
    if nw > 1:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            results = list(ex.map(_soundness_chunk, jobs))
    else:
        results = [_soundness_chunk(j) for j in jobs]
    report = SoundnessReport(n, len(ineqs))
    for viol, best in results:
        report.violations.extend(viol)
        if best is not None and (report.max_value is None or best > report.max_value):
            report.max_value = best
    report.violations.sort(key=lambda t: (t[0], t[1]))
    return report


# == local bounds ==

_OBJ_TERM = re.compile(r"\s*([+-])?\s*(\d+(?:/\d+)?\s*\*?)?\s*(abs)?\s*(E\[[^\]]*\]|[A-Za-z_][A-Za-z_0-9]*)\s*")


def parse_objective(text: str, functionals: Mapping | None = None) -> list:
    """Affine objective with optional ``abs`` terms, as the list of sign expansions.

    ``"absI+absJ"`` becomes ``[I+J, I-J, -I+J, -I-J]``; the bound of the
    objective is the largest bound among the expansions.
    """
    functionals = functionals or {}
    terms = []
    pos = 0
    text = text.strip()
    const = Fraction(0)
    while pos < len(text):
        m = _OBJ_TERM.match(text, pos)
        if not m or m.end() == pos:
            m2 = re.match(r"\s*([+-])?\s*(\d+(?:/\d+)?)\s*", text[pos:])
            if m2 and m2.group(2):
                c = parse_rational(m2.group(2))
                const += -c if m2.group(1) == "-" else c
                pos += m2.end()
                continue
            raise ValueError(f"cannot parse objective near {text[pos:]!r}")
        sign = -1 if m.group(1) == "-" else 1
        coef = parse_rational(m.group(2).rstrip("*").strip()) if m.group(2) else Fraction(1)
        name = m.group(4)
        if name.startswith("E["):
            name = str(Correlator.parse(name))
        elif name not in functionals:
            raise ValueError(f"unknown functional {name!r}")
        terms.append((name, sign * coef, bool(m.group(3))))
        pos = m.end()
    if not terms and not const:
        raise ValueError("empty objective")
    abs_idx = [i for i, t in enumerate(terms) if t[2]]
    out = []
    for signs in itertools.product((1, -1), repeat=len(abs_idx)):
        co: dict = {}
        s_of = dict(zip(abs_idx, signs))
        for i, (name, c, _a) in enumerate(terms):
            co[name] = co.get(name, 0) + c * s_of.get(i, 1)
        out.append(AffineObservable.make(co, const))
    return out


def _expand(obj: AffineObservable, functionals: Mapping) -> dict:
    co: dict = {}
    for name, c in obj.terms:
        if name in functionals:
            for k, v in functionals[name].items():
                co[str(k)] = co.get(str(k), 0) + c * Fraction(v)
        else:
            co[name] = co.get(name, 0) + c
    return co


def local_bound(functional, scenario, limit: int = 1 << 22) -> Fraction:
    """Exact maximum over deterministic single-source strategies.

    ``functional`` is an ``AffineObservable``, a list of them (maximum over
    all), or an objective string understood by ``parse_objective``.
    """
    parsed = _as_parsed(scenario)
    sc = parsed.scenario
    if isinstance(functional, str):
        objs = parse_objective(functional, parsed.functionals)
    elif isinstance(functional, AffineObservable):
        objs = [functional]
    else:
        objs = list(functional)
    n = len(sc.variables)
    if 2 ** n > limit:
        raise ValueError(f"deterministic enumeration of {2 ** n} strategies exceeds the limit {limit}")
    pos = {v: i for i, v in enumerate(sc.variables)}
    signs = 1 - 2 * ((np.arange(2 ** n)[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1)
    best = None
    for obj in objs:
        co = _expand(obj, parsed.functionals)
        den = 1
        for v in co.values():
            den = den * Fraction(v).denominator // np.gcd(den, Fraction(v).denominator)
        total = np.full(2 ** n, 0, dtype=object)
        for k, v in co.items():
            if not v:
                continue
            corr = Correlator.parse(k)
            col = np.ones(2 ** n, dtype=np.int64)
            for var in corr.vars:
                col = col * signs[:, pos[var]]
            total = total + col.astype(object) * int(Fraction(v) * den)
        val = Fraction(int(total.max()) if len(co) else 0, int(den)) + obj.const
        if best is None or val > best:
            best = val
    return best


# == optimization over network models ==

@dataclass
class MaxResult:
    value: Fraction
    witness: GlhvModel
    data: CorrelationData
    evaluations: int = 0


class _Objective:
    def __init__(self, ineq: PolynomialInequality, parsed: ParsedScenario, C=0):
        self.ineq = ineq
        self.parsed = parsed
        self.C = Fraction(C)
        self.symbols = _ineq_symbols([ineq], parsed.functionals)
        self.corrs = [Correlator.parse(s) for s in self.symbols]
        expand = {name: Polynomial.linear({str(k): v for k, v in terms.items()})
                  for name, terms in parsed.functionals.items()}
        self.poly = ineq.full_poly().substitute({RELAX: self.C}).substitute(expand)

    def exact(self, model: GlhvModel) -> tuple:
        data = model_to_correlations(model, self.parsed, self.corrs)
        return self.poly.evaluate(data), data

    def float_value(self, values: Mapping) -> float:
        return self.poly.evaluate_float(values)


def _float_corrs(sc, model_weights, responses, sizes, corrs):
    """Float correlators for fixed responses; weights as float arrays."""
    grids = np.indices(sizes).reshape(len(sizes), -1)
    joint = np.array([1.0])
    for w in model_weights:
        joint = np.multiply.outer(joint, w).reshape(-1)
    out = {}
    for c in corrs:
        prod = np.ones(grids.shape[1])
        for v in c.vars:
            prod = prod * responses[v]
        out[str(c)] = float(joint @ prod)
    return out


def max_over_glhv(ineq: PolynomialInequality, scenario, budget: int = 2000, seed: int = 0,
                  restarts: int = 64, C=0) -> MaxResult:
    """Largest left-hand side found over network models (a lower bound on the maximum).

    Deterministic assignments are scanned first; then seeded restarts
    alternate optimization of one source's weights (others fixed) with
    single-entry response flips. The witness value is evaluated exactly.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    parsed = _as_parsed(scenario)
    sc = parsed.scenario
    obj = _Objective(ineq, parsed, C)
    best: MaxResult | None = None
    evals = 0

    def consider(model):
        nonlocal best, evals
        evals += 1
        val, data = obj.exact(model)
        if best is None or val > best.value:
            best = MaxResult(val, model, data)

    # deterministic strategies
    n = len(sc.variables)
    for bits in itertools.product((0, 1), repeat=n):
        if evals >= budget:
            break
        consider(deterministic_model(parsed, dict(zip(sc.variables, bits))))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    sizes_default = default_alphabets(sc)
    for _r in range(restarts):
        if evals >= budget:
            break
        model = random_model(parsed, rng, {s: min(4, a) for s, a in sizes_default.items()})
        model = _alternate(model, obj, sc, rng, rounds=4)
        consider(model)
    best.evaluations = evals
    return best


def _alternate(model: GlhvModel, obj: _Objective, sc: BellScenario, rng, rounds: int) -> GlhvModel:
    """Coordinate ascent on weights (vertex moves on one simplex) and response flips."""
    sizes = [len(w) for w in model.weights]
    weights = [np.array([float(x) for x in w]) for w in model.weights]
    resp = {p: [list(t) for t in tabs] for p, tabs in model.responses.items()}

    def signs_of():
        grids = np.indices(sizes).reshape(len(sizes), -1)
        out = {}
        for p in sc.parties:
            par = [model.sources.index(s) for s in _parents(sc, p)]
            idx = np.zeros(grids.shape[1], dtype=np.int64)
            for j in par:
                idx = idx * sizes[j] + grids[j]
            for x, tab in enumerate(resp[p]):
                out[(p, x)] = 1.0 - 2.0 * np.asarray(tab, dtype=float)[idx]
        return out

    def value(ws, sg):
        return obj.float_value(_float_corrs(sc, ws, sg, sizes, obj.corrs))

    sg = signs_of()
    cur = value(weights, sg)
    for _ in range(rounds):
        improved = False
        for j in range(len(weights)):
            # try every vertex of source j and the midpoints towards the current point
            for a in range(sizes[j]):
                for t in (1.0, 0.5):
                    cand = weights[j] * (1 - t)
                    cand[a] += t
                    ws = list(weights)
                    ws[j] = cand
                    v = value(ws, sg)
                    if v > cur + 1e-12:
                        weights, cur, improved = ws, v, True
        for p in sc.parties:
            for x in range(len(resp[p])):
                for e in range(len(resp[p][x])):
                    resp[p][x][e] ^= 1
                    sg2 = signs_of()
                    v = value(weights, sg2)
                    if v > cur + 1e-12:
                        sg, cur, improved = sg2, v, True
                    else:
                        resp[p][x][e] ^= 1
        if not improved:
            break
    ws = []
    for w in weights:
        fr = [Fraction(float(x)).limit_denominator(1000) for x in w]
        fr = [max(f, Fraction(0)) for f in fr]
        tot = sum(fr)
        ws.append(tuple(f / tot for f in fr))
    return GlhvModel(model.sources, tuple(ws), {p: tuple(tuple(t) for t in tabs) for p, tabs in resp.items()})


# == evaluation at data ==

def _data_for(poly_vars, data: Mapping, functionals: Mapping | None) -> dict:
    vals = {str(k): Fraction(v) for k, v in data.items()}
    for name, terms in (functionals or {}).items():
        if name not in vals and all(str(k) in vals for k in terms):
            vals[name] = sum((Fraction(c) * vals[str(k)] for k, c in terms.items()), Fraction(0))
    missing = [v for v in poly_vars if v not in vals and v != RELAX]
    if missing:
        raise KeyError(f"missing value for {sorted(missing, key=symbol_key)[0]}")
    return vals


def evaluate(ineq: PolynomialInequality, data: Mapping, C=0, functionals: Mapping | None = None) -> tuple:
    """``(value, satisfied)``; satisfied iff value <= relax * C (guards respected)."""
    vals = _data_for(ineq.variables, data, functionals)
    return ineq.evaluate(vals, C)


def min_relaxation(family: Sequence[PolynomialInequality], data: Mapping,
                   functionals: Mapping | None = None) -> Fraction:
    """Smallest ``C >= 0`` satisfying every member at ``data``."""
    best = Fraction(0)
    for q in family:
        vals = _data_for(q.variables, data, functionals)
        if q.guard is not None and not q.guard.holds(vals):
            continue
        value = q.poly.evaluate(vals)
        if value <= 0:
            continue
        if q.relax <= 0:
            raise ValueError(f"no finite relaxation satisfies {q} (value {format_rational(value)})")
        best = max(best, value / q.relax)
    return best


# == square-root form ==

@dataclass
class EquivalenceReport:
    points: int
    mismatches: list
    boundary: int

    @property
    def ok(self) -> bool:
        return not self.mismatches


def sqrt_form_holds(I: Fraction, J: Fraction) -> bool:
    """``sqrt|I| + sqrt|J| <= 2`` decided without irrational arithmetic."""
    a, b = abs(Fraction(I)), abs(Fraction(J))
    return a + b <= 4 and (4 - a - b) ** 2 >= 4 * a * b


def check_equivalence_sqrt_form(family: Sequence[PolynomialInequality], grid: Iterable | None = None,
                                n: int = 81) -> EquivalenceReport:
    """Compare the conjunction of ``family`` (over ``I``, ``J``) with the square-root form."""
    if grid is None:
        step = Fraction(8, n - 1)
        axis = [Fraction(-4) + step * i for i in range(n)]
        grid = [(i, j) for i in axis for j in axis]
    mism = []
    boundary = 0
    count = 0
    for I, J in grid:
        count += 1
        vals = {"I": Fraction(I), "J": Fraction(J)}
        lhs = all(q.evaluate(vals)[1] for q in family)
        rhs = sqrt_form_holds(I, J)
        if lhs != rhs:
            mism.append((I, J, lhs, rhs))
        if any(q.poly.evaluate(vals) == 0 for q in family) and lhs:
            boundary += 1
    return EquivalenceReport(count, mism, boundary)
