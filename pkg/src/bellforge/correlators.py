"""Measurement variables, correlator symbols and their canonical ordering."""

from __future__ import annotations

import re
from functools import lru_cache
from dataclasses import dataclass
from typing import Iterable

__all__ = ["MeasurementVar", "Correlator", "symbol_key", "parse_var", "UNIT"]

_VAR_RE = re.compile(r"^([A-Za-z_][A-Za-z_]*?)(\d+)$")

#: a measurement variable is ``(party label, setting index)``
MeasurementVar = tuple


def parse_var(text: str) -> tuple[str, int]:
    m = _VAR_RE.match(text.strip())
    if not m:
        raise ValueError(f"malformed measurement variable {text!r}")
    return (m.group(1), int(m.group(2)))


def format_var(var: tuple[str, int]) -> str:
    return f"{var[0]}{var[1]}"


@dataclass(frozen=True, order=False)
class Correlator:
    """Expectation value of a product of +/-1 outcomes; empty means the unit."""

    vars: tuple = ()

    def __post_init__(self):
        vs = tuple(sorted(set(tuple(v) for v in self.vars)))
        if len(vs) != len(self.vars):
            raise ValueError(f"repeated measurement variable in {self.vars}")
        object.__setattr__(self, "vars", vs)

    @classmethod
    def of(cls, *vars: Iterable) -> "Correlator":
        out = []
        for v in vars:
            out.append(parse_var(v) if isinstance(v, str) else tuple(v))
        return cls(tuple(out))

    @classmethod
    def parse(cls, text: str) -> "Correlator":
        text = text.strip()
        if not (text.startswith("E[") and text.endswith("]")):
            raise ValueError(f"malformed correlator {text!r}")
        body = text[2:-1].split()
        return cls(tuple(parse_var(t) for t in body))

    @property
    def is_unit(self) -> bool:
        return not self.vars

    @property
    def parties(self) -> frozenset:
        return frozenset(v[0] for v in self.vars)

    def key(self):
        return (len(self.vars), self.vars)

    def __lt__(self, other: "Correlator") -> bool:
        return self.key() < other.key()

    def __str__(self) -> str:
        return "E[" + " ".join(format_var(v) for v in self.vars) + "]"

    def __repr__(self) -> str:
        return f"Correlator({str(self)!r})"

    def union(self, other: "Correlator") -> "Correlator":
        if set(self.vars) & set(other.vars):
            raise ValueError("correlator factors overlap")
        return Correlator(self.vars + other.vars)


UNIT = Correlator(())


@lru_cache(maxsize=65536)
def symbol_key(sym: str):
    """Sort key: correlator symbols in basis order first, other names after."""
    if sym.startswith("E["):
        try:
            return (0, Correlator.parse(sym).key(), "")
        except ValueError:
            pass
    return (1, (), sym)
