"""Named closed-form inequality families and the CHSH elimination walk-through.

The closed forms here are written down directly, not derived, so they serve
as an independent reference for ``derive`` and as ready inputs for
``evaluate``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction

from .linear import InequalitySystem, LinearInequality, fm_eliminate, simplex_system
from .moments import FULL, build_basis
from .nonlinear import PolynomialInequality
from .polynomial import Polynomial
from .scenario import load_scenario

__all__ = ["FAMILIES", "family", "family_names", "ChshDemo", "chsh_demo"]

_I = Polynomial.variable("I")
_J = Polynomial.variable("J")
_SIGNS = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def _bilocal22(relax: int = 0) -> list:
    # -(1/8)(sI - tJ)^2 - (2 + sI + tJ) <= relax * C
    out = []
    for s, t in _SIGNS:
        lhs = (_I * s - _J * t) ** 2 * Fraction(-1, 8) - (_I * s + _J * t + 2)
        out.append(PolynomialInequality.make(lhs, relax=relax))
    return out


def _bilocal33() -> list:
    # -(1/8)(sI - tJ + 16)^2 + 8 sI <= 0; s = t = 1 is listed first
    out = []
    for s, t in _SIGNS:
        lhs = (_I * s - _J * t + 16) ** 2 * Fraction(-1, 8) + _I * (8 * s)
        out.append(PolynomialInequality.make(lhs))
    return out


def _chsh() -> list:
    names = ["E[A0 B0]", "E[A0 B1]", "E[A1 B0]", "E[A1 B1]"]
    out = []
    for minus in range(4):
        body = Polynomial()
        for k, n in enumerate(names):
            body = body + Polynomial.variable(n) * (-1 if k == minus else 1)
        for sign in (1, -1):
            out.append(PolynomialInequality.make(body * sign - 2))
    return out


FAMILIES = {
    "bilocal-22": ("bilocal network, two settings: four sign variants over I, J", lambda: _bilocal22()),
    "bilocal-22-relaxed": ("bilocal-22 with A-C correlation budget: right side 2*C_relax",
                           lambda: _bilocal22(relax=2)),
    "bilocal-33": ("bilocal network, three settings for A and C: four sign variants over I, J", _bilocal33),
    "chsh": ("the eight CHSH facets over two-party correlators", _chsh),
}


def family_names() -> list:
    return sorted(FAMILIES)


def family(name: str) -> list:
    """Members of a named family, in a fixed order."""
    try:
        return FAMILIES[name][1]()
    except KeyError:
        raise KeyError(f"unknown inequality family {name!r}; known: {', '.join(family_names())}") from None


# == CHSH by Fourier-Motzkin ==

@dataclass
class ChshDemo:
    simplex: InequalitySystem
    intermediate: InequalitySystem  # observables plus E[A0 A1]
    final: InequalitySystem
    pair: tuple  # the two intermediate rows whose sum cancels E[A0 A1]
    facet: LinearInequality
    seconds: float


def _le(coeffs: dict, bound) -> LinearInequality:
    """``sum(coeffs) <= bound`` as a canonical ``>= 0`` row."""
    return LinearInequality.make({k: -v for k, v in coeffs.items()}, bound)


def chsh_demo() -> ChshDemo:
    """Simplex of the CHSH scenario, then elimination down to E[A0 A1], then to the facets."""
    t0 = time.perf_counter()
    parsed = load_scenario("chsh")
    sc = parsed.scenario
    simplex = simplex_system(sc, build_basis(sc, FULL))
    observed = ["E[A0 B0]", "E[A0 B1]", "E[A1 B0]", "E[A1 B1]"]
    keep = set(observed) | {"E[A0 A1]"}
    intermediate = fm_eliminate(simplex, [v for v in simplex.variables if v not in keep])
    final = fm_eliminate(intermediate, ["E[A0 A1]"])
    first = _le({"E[A0 B0]": 1, "E[A1 B0]": 1, "E[A0 A1]": -1}, 1)
    second = _le({"E[A0 B1]": 1, "E[A1 B1]": -1, "E[A0 A1]": 1}, 1)
    facet = _le({"E[A0 B0]": 1, "E[A0 B1]": 1, "E[A1 B0]": 1, "E[A1 B1]": -1}, 2)
    return ChshDemo(simplex, intermediate, final, (first, second), facet, time.perf_counter() - t0)
