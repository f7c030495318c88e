"""Polynomial Bell inequalities for networks of independent classical sources."""

from .catalog import chsh_demo, family, family_names
from .correlators import Correlator
from .linear import InequalitySystem, LinearInequality, fm_eliminate, project_via_vertices, simplex_system
from .moments import FULL, FULL_CORRELATORS, FUNCTIONALS, build_basis, classify_components
from .nonlinear import (
    DerivationResult,
    DeriveOptions,
    PolynomialInequality,
    derive,
    eliminate_quadratic_param,
    replay_certificate,
)
from .nonsignalling import (
    ObservableDistribution,
    gns_system,
    gns_vertices,
    is_gns,
    ns_constraints,
    observable_independencies,
    pr_box,
)
from .oracle import (
    CorrelationData,
    GlhvModel,
    check_equivalence_sqrt_form,
    check_soundness,
    evaluate,
    local_bound,
    max_over_glhv,
    min_relaxation,
)
from .polynomial import Polynomial
from .scenario import BellScenario, derive_independencies, load_scenario, parse_scenario

__version__ = "0.1.0"

__all__ = [
    "BellScenario", "CorrelationData", "Correlator", "DerivationResult", "DeriveOptions", "FULL",
    "FULL_CORRELATORS", "FUNCTIONALS", "GlhvModel", "InequalitySystem", "LinearInequality",
    "ObservableDistribution", "Polynomial", "PolynomialInequality", "build_basis", "check_equivalence_sqrt_form",
    "check_soundness", "chsh_demo", "classify_components", "derive", "derive_independencies",
    "eliminate_quadratic_param", "evaluate", "family", "family_names", "fm_eliminate", "gns_system",
    "gns_vertices", "is_gns", "load_scenario", "local_bound", "max_over_glhv", "min_relaxation",
    "ns_constraints", "observable_independencies", "parse_scenario", "pr_box", "project_via_vertices",
    "replay_certificate", "simplex_system",
]
