"""``bellforge`` command line.

Exit status: 0 success, 1 a verification or evaluation found a violation,
2 bad input, 3 a resource limit stopped the run.
"""

from __future__ import annotations

import argparse
import itertools
import sys
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from ._exact import format_rational
from .catalog import chsh_demo, family, family_names
from .linear import FMLimit
from .moments import FULL, FULL_CORRELATORS, FUNCTIONALS
from .nonlinear import CaseLimit, DeriveOptions, derive, replay_certificate
from .nonsignalling import gns_system, gns_vertices
from .oracle import CorrelationData, check_soundness, evaluate, local_bound, min_relaxation
from .polyhedra import EnumerationLimit
from .records import derivation_to_json, dumps, load_json, read_derived
from .scenario import load_scenario

__all__ = ["RunConfig", "run", "main", "build_parser"]

OK, VIOLATED, INPUT_ERROR, LIMIT = 0, 1, 2, 3
_U64 = 2 ** 64


@dataclass
class RunConfig:
    command: str
    scenario: str | None = None
    restriction: str = FULL_CORRELATORS
    route: str = "auto"
    relax: bool = False
    report: str = "functionals"
    linearization: str = "shortcut"
    symmetry_dedupe: bool = False
    allow_lhv: bool = False
    case_limit: int = 256
    pair_limit: int | None = None
    vertex_limit: int = 200_000
    models: int = 10_000
    seed: int = 0
    workers: int | None = None
    output: str | None = None
    ineq: str | None = None
    data: str | None = None
    relax_value: str = "0"
    functional: str | None = None
    fix: str | None = None

    def __post_init__(self):
        for name in ("case_limit", "vertex_limit", "models"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name.replace('_', '-')} must be positive")
        if self.pair_limit is not None and self.pair_limit <= 0:
            raise ValueError("pair-limit must be positive")
        if self.workers is not None and self.workers <= 0:
            raise ValueError("workers must be positive")
        if not 0 <= self.seed < _U64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def _emit(cfg: RunConfig, text: str, out) -> None:
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        out.write(text)


def _need(cfg: RunConfig, name: str) -> str:
    val = getattr(cfg, name)
    if not val:
        raise ValueError(f"{cfg.command} needs --{name}")
    return val


# == commands ==

def _derive(cfg: RunConfig, out) -> int:
    parsed = load_scenario(_need(cfg, "scenario"))
    opts = DeriveOptions(route=cfg.route, relax=cfg.relax, report=cfg.report, linearization=cfg.linearization,
                         symmetry_dedupe=cfg.symmetry_dedupe, case_limit=cfg.case_limit,
                         pair_limit=cfg.pair_limit, vertex_limit=cfg.vertex_limit, allow_lhv=cfg.allow_lhv)
    result = derive(parsed, cfg.restriction, opts)
    _emit(cfg, dumps(derivation_to_json(result, cfg.scenario)), out)
    if cfg.output:
        for q in result.inequalities:
            out.write(f"{q}\n")
    return OK


def _local_bound(cfg: RunConfig, out) -> int:
    parsed = load_scenario(_need(cfg, "scenario"))
    value = local_bound(_need(cfg, "functional"), parsed)
    _emit(cfg, f"{format_rational(value)}\n", out)
    return OK


def _inequalities(cfg: RunConfig):
    """``(scenario name, members)`` from a catalog name or a derived file."""
    spec = _need(cfg, "ineq")
    if spec in family_names():
        return None, family(spec)
    path = Path(spec)
    if not path.exists():
        raise ValueError(f"--ineq {spec!r} is neither a file nor a family ({', '.join(family_names())})")
    doc = read_derived(path)
    return doc.scenario or None, doc.inequalities


def _read_data(text: str) -> CorrelationData:
    path = Path(text)
    if path.exists():
        return CorrelationData.from_json(load_json(path))
    return CorrelationData.parse(text)


def _evaluate(cfg: RunConfig, out) -> int:
    scenario_name, members = _inequalities(cfg)
    data = _read_data(_need(cfg, "data"))
    name = cfg.scenario or scenario_name
    functionals = load_scenario(name).functionals if name else {}
    C = Fraction(cfg.relax_value)
    lines = []
    status = OK
    for k, q in enumerate(members):
        value, ok = evaluate(q, data, C, functionals)
        if not ok:
            status = VIOLATED
        lines.append(f"[{k}] {format_rational(value)} {'ok' if ok else 'violated'}  {q}")
    if any(q.relax for q in members):
        lines.append(f"minimal relaxation: {format_rational(min_relaxation(members, data, functionals))}")
    _emit(cfg, "\n".join(lines) + "\n", out)
    return status


def _verify(cfg: RunConfig, out) -> int:
    doc = read_derived(_need(cfg, "ineq"))
    name = cfg.scenario or doc.scenario
    if not name:
        raise ValueError("verify needs --scenario when the file does not name one")
    parsed = load_scenario(name)
    lines = []
    status = OK
    if doc.sources:
        bad = [k for k, q in enumerate(doc.all_inequalities) if not replay_certificate(q, doc.sources)]
        lines.append(f"certificates: {len(doc.all_inequalities) - len(bad)}/{len(doc.all_inequalities)} replayed")
        for k in bad:
            lines.append(f"  certificate failed: {doc.all_inequalities[k]}")
        if bad:
            status = VIOLATED
    report = check_soundness(doc.all_inequalities, parsed, n=cfg.models, seed=cfg.seed, workers=cfg.workers)
    top = "none" if report.max_value is None else format_rational(report.max_value)
    lines.append(f"soundness: {report.n_models} models, {report.n_inequalities} inequalities, "
                 f"{len(report.violations)} violations, largest left side {top}")
    for m, k, value, _model in report.violations[:20]:
        lines.append(f"  model {m} violates {doc.all_inequalities[k]} with value {format_rational(value)}")
    if not report.ok:
        status = VIOLATED
    _emit(cfg, "\n".join(lines) + "\n", out)
    return status


def _gns(cfg: RunConfig, out) -> int:
    name = _need(cfg, "scenario")
    verts = gns_vertices(name, cfg.fix or None, limit=cfg.vertex_limit)
    system = gns_system(name, cfg.fix or None)
    doc = {
        "scenario": name,
        "fixed": {f"{p}{'' if x is None else x}": format_rational(v) for (p, x), v in system.fixed.items()},
        "constraints": [c.label for c in system.constraints],
        "coordinates": [f"p({''.join(map(str, a))}|{''.join(map(str, x))})" for x, a in _coordinates(system)],
        "vertices": [{"p": [format_rational(q) for q in v.distribution.vector()], "active": list(v.active)}
                     for v in verts],
    }
    _emit(cfg, dumps(doc), out)
    if cfg.output:
        out.write(f"{len(verts)} vertices\n")
    return OK


def _coordinates(system) -> list:
    sc = system.scenario
    outs = list(itertools.product((0, 1), repeat=len(sc.parties)))
    return [(x, a) for x in itertools.product(*[range(k) for k in sc.settings]) for a in outs]


def _chsh_demo(cfg: RunConfig, out) -> int:
    demo = chsh_demo()
    inter = set(demo.intermediate.inequalities)
    final = set(demo.final.inequalities)
    pair_ok = all(r in inter for r in demo.pair)
    facet_ok = demo.facet in final
    lines = [f"simplex: {len(demo.simplex.inequalities)} inequalities over {len(demo.simplex.variables)} correlators",
             f"after removing all but the four observables and E[A0 A1]: {len(demo.intermediate.inequalities)}"]
    lines += [f"  {r}" for r in demo.intermediate.inequalities]
    lines.append(f"pair summing to the facet: {'found' if pair_ok else 'MISSING'}")
    lines += [f"  {r}" for r in demo.pair]
    lines.append(f"after removing E[A0 A1]: {len(demo.final.inequalities)}")
    lines += [f"  {r}" for r in demo.final.inequalities]
    lines.append(f"facet {demo.facet}: {'found' if facet_ok else 'MISSING'}")
    _emit(cfg, "\n".join(lines) + "\n", out)
    return OK if pair_ok and facet_ok else VIOLATED


_COMMANDS = {
    "derive": _derive,
    "local-bound": _local_bound,
    "evaluate": _evaluate,
    "verify": _verify,
    "gns": _gns,
    "chsh-demo": _chsh_demo,
}


def run(cfg: RunConfig, out=None, err=None) -> int:
    """Execute one command; diagnostics go to ``err``."""
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return _COMMANDS[cfg.command](cfg, out)
    except (CaseLimit, EnumerationLimit, FMLimit) as e:
        err.write(f"bellforge {cfg.command}: resource limit: {e}\n")
        return LIMIT
    except (ValueError, KeyError, OSError, ZeroDivisionError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        err.write(f"bellforge {cfg.command}: {msg}\n")
        return INPUT_ERROR


# == argument parsing ==

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bellforge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", help="bundled scenario name or .scn path")
        sp.add_argument("-o", "--output", help="write the result here instead of stdout")

    d = sub.add_parser("derive", help="derive polynomial inequalities with certificates")
    common(d)
    d.add_argument("--restrict", dest="restriction", default=FULL_CORRELATORS,
                   choices=[FULL, FULL_CORRELATORS, FUNCTIONALS])
    d.add_argument("--route", default="auto", choices=["auto", "fm", "vertices"])
    d.add_argument("--relax", action="store_true", help="keep the A-C correlation budget C_relax symbolic")
    d.add_argument("--report", default="functionals", choices=["functionals", "all"])
    d.add_argument("--linearization", default="shortcut", choices=["shortcut", "probability"])
    d.add_argument("--symmetry-dedupe", action="store_true")
    d.add_argument("--allow-lhv", action="store_true", help="permit scenarios without source independence")
    d.add_argument("--case-limit", type=int, default=256)
    d.add_argument("--pair-limit", type=int)
    d.add_argument("--vertex-limit", type=int, default=200_000)

    lb = sub.add_parser("local-bound", help="exact deterministic bound of a functional")
    common(lb)
    lb.add_argument("--functional", required=True, help='e.g. "absI+absJ" or "E[A0 B0]+E[A1 B1]"')

    ev = sub.add_parser("evaluate", help="evaluate inequalities at correlation data")
    common(ev)
    ev.add_argument("--ineq", required=True, help=f"family ({', '.join(family_names())}) or derived file")
    ev.add_argument("--data", required=True, help='JSON file or inline "I=2,J=2"')
    ev.add_argument("--relax", dest="relax_value", default="0", help="value of C_relax")

    ve = sub.add_parser("verify", help="replay certificates and sample network models")
    common(ve)
    ve.add_argument("--ineq", required=True, help="file written by derive")
    ve.add_argument("--models", type=int, default=10_000)
    ve.add_argument("--seed", type=int, default=0)
    ve.add_argument("--workers", type=int)

    g = sub.add_parser("gns", help="vertices of the refined nonsignalling polytope")
    common(g)
    g.add_argument("--fix", help='fixed marginals p(outcome 0), e.g. "A=1/2,C=1/2" or "A0=1/3"')
    g.add_argument("--vertex-limit", type=int, default=200_000)

    c = sub.add_parser("chsh-demo", help="elimination walk-through for CHSH")
    common(c, scenario=False)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(**{k: v for k, v in vars(args).items() if v is not None})
    except ValueError as e:
        sys.stderr.write(f"bellforge {args.command}: {e}\n")
        return INPUT_ERROR
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
