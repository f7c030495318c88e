"""JSON documents written and read by the command line.

Every document is rendered with sorted keys and a fixed indent so equal
inputs give byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .nonlinear import DerivationResult, PolynomialInequality
from .polynomial import Polynomial

__all__ = ["dumps", "derivation_to_json", "DerivedFile", "read_derived", "load_json"]

FORMAT = "bellforge.derivation/1"


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=True) + "\n"


def _ineq_json(q: PolynomialInequality) -> dict:
    out = q.to_json()
    out["text"] = str(q)
    return out


def derivation_to_json(result: DerivationResult, scenario: str) -> dict:
    opts = result.options
    return {
        "format": FORMAT,
        "scenario": scenario,
        "restriction": result.restriction,
        "options": {
            "route": opts.route,
            "relax": opts.relax,
            "report": opts.report,
            "linearization": opts.linearization,
            "symmetry_dedupe": opts.symmetry_dedupe,
            "case_limit": opts.case_limit,
            "pair_limit": opts.pair_limit,
            "allow_lhv": opts.allow_lhv,
        },
        "independencies": [str(c) for c in result.independencies],
        "inequalities": [_ineq_json(q) for q in result.inequalities],
        "all_inequalities": [_ineq_json(q) for q in result.all_inequalities],
        "conditional": [dict(p.to_json(), text=str(p)) for p in result.conditional],
        "sources": [s.to_json() for s in result.sources],
        "diagnostics": list(result.diagnostics),
    }


@dataclass
class DerivedFile:
    scenario: str
    inequalities: list  # PolynomialInequality, as reported
    all_inequalities: list
    sources: list  # Polynomial, indexed by certificates


def load_json(path: str | Path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: not valid JSON ({e})") from None


def read_derived(obj: Mapping | str | Path) -> DerivedFile:
    """Parse a document written by ``derive``; a bare list of inequalities is also accepted."""
    if not isinstance(obj, (Mapping, list)):
        obj = load_json(obj)
    if isinstance(obj, list):
        ineqs = [PolynomialInequality.from_json(q) for q in obj]
        return DerivedFile("", ineqs, ineqs, [])
    if obj.get("format") != FORMAT:
        raise ValueError(f"unsupported document format {obj.get('format')!r}; expected {FORMAT}")
    try:
        reported = [PolynomialInequality.from_json(q) for q in obj["inequalities"]]
        every = [PolynomialInequality.from_json(q) for q in obj.get("all_inequalities", obj["inequalities"])]
        sources = [Polynomial.from_json(s) for s in obj.get("sources", [])]
    except (KeyError, TypeError, IndexError) as e:
        raise ValueError(f"malformed derivation document ({type(e).__name__}: {e})") from None
    return DerivedFile(obj.get("scenario", ""), reported, every, sources)

