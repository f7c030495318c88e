"""Exact rational linear programming.

A dense two-phase simplex with Bland's anti-cycling rule. Problem sizes in
this package are small (tens of rows), so exactness matters more than speed.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

__all__ = ["LPResult", "solve_standard", "linprog", "is_feasible", "implies", "irredundant"]


@dataclass(frozen=True)
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: list[Fraction] | None = None
    value: Fraction | None = None

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _pivot(tab: list[list[Fraction]], basis: list[int], r: int, c: int) -> None:
    prow = tab[r]
    inv = 1 / prow[c]
    if inv != 1:
        for j, v in enumerate(prow):
            if v:
                prow[j] = v * inv
    nz = [j for j, v in enumerate(prow) if v]
    for i, row in enumerate(tab):
        if i != r:
            f = row[c]
            if f:
                for j in nz:
                    row[j] -= f * prow[j]
    basis[r] = c


def _run(tab, basis, ncols, obj_row):
    """Maximize the objective stored as reduced costs in ``tab[obj_row]``.

    The objective row holds ``-c`` style entries: a negative entry marks an
    improving column.
    """
    m = obj_row
    while True:
        cost = tab[m]
        enter = next((j for j in range(ncols) if cost[j] < 0), None)
        if enter is None:
            return "optimal"
        best = None
        leave = None
        for i in range(m):
            a = tab[i][enter]
            if a > 0:
                ratio = tab[i][-1] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            return "unbounded"
        _pivot(tab, basis, leave, enter)


def solve_standard(c: Sequence, A: Sequence[Sequence], b: Sequence,
                   phase_one_only: bool = False) -> LPResult:
    """Maximize ``c @ x`` subject to ``A @ x = b``, ``x >= 0``."""
    m = len(A)
    n = len(c)
    rows = [[Fraction(v) for v in row] for row in A]
    rhs = [Fraction(v) for v in b]
    for i in range(m):
        if rhs[i] < 0:
            rows[i] = [-v for v in rows[i]]
            rhs[i] = -rhs[i]
    # columns: n originals, m artificials, rhs
    tab = []
    for i in range(m):
        tab.append(rows[i] + [Fraction(int(i == k)) for k in range(m)] + [rhs[i]])
    basis = [n + i for i in range(m)]
    # phase one: maximize -sum(artificials)
    obj = [Fraction(0)] * (n + m + 1)
    for i in range(m):
        for j in range(n):
            obj[j] -= tab[i][j]
        obj[-1] -= tab[i][-1]
    tab.append(obj)
    _run(tab, basis, n + m, m)
    if tab[m][-1] != 0:
        return LPResult("infeasible")
    # drive artificials out of the basis
    drop = []
    for i in range(m):
        if basis[i] >= n:
            col = next((j for j in range(n) if tab[i][j] != 0), None)
            if col is None:
                drop.append(i)
            else:
                _pivot(tab, basis, i, col)
    for i in reversed(drop):
        del tab[i]
        del basis[i]
    m2 = len(basis)
    tab = [row[:n] + [row[-1]] for row in tab[:m2]]
    if phase_one_only:
        x = [Fraction(0)] * n
        for i, j in enumerate(basis):
            x[j] = tab[i][-1]
        return LPResult("optimal", x, Fraction(0))
    obj = [-Fraction(v) for v in c] + [Fraction(0)]
    for i, j in enumerate(basis):
        f = obj[j]
        if f:
            obj = [a - f * t for a, t in zip(obj, tab[i])]
    tab.append(obj)
    status = _run(tab, basis, n, m2)
    if status != "optimal":
        return LPResult(status)
    x = [Fraction(0)] * n
    for i, j in enumerate(basis):
        x[j] = tab[i][-1]
    return LPResult("optimal", x, tab[m2][-1])


def linprog(c: Sequence, A_ub: Sequence[Sequence] = (), b_ub: Sequence = (),
            A_eq: Sequence[Sequence] = (), b_eq: Sequence = (),
            maximize: bool = True, nonneg: Sequence[bool] | None = None) -> LPResult:
    """Optimize ``c @ x`` over ``A_ub @ x <= b_ub``, ``A_eq @ x = b_eq``.

    Variables are free unless flagged in ``nonneg``.
    """
    n = len(c)
    nonneg = [False] * n if nonneg is None else list(nonneg)
    # column map: each free variable becomes (plus, minus)
    cols: list[tuple[int, int]] = []
    idx = 0
    for j in range(n):
        if nonneg[j]:
            cols.append((idx, -1))
            idx += 1
        else:
            cols.append((idx, idx + 1))
            idx += 2
    n_struct = idx
    n_slack = len(A_ub)
    width = n_struct + n_slack

    def expand(row):
        out = [Fraction(0)] * width
        for j, v in enumerate(row):
            if v:
                p, q = cols[j]
                out[p] = Fraction(v)
                if q >= 0:
                    out[q] = -Fraction(v)
        return out

    A = []
    b = []
    for k, row in enumerate(A_ub):
        r = expand(row)
        r[n_struct + k] = Fraction(1)
        A.append(r)
        b.append(b_ub[k])
    for k, row in enumerate(A_eq):
        A.append(expand(row))
        b.append(b_eq[k])
    sign = 1 if maximize else -1
    cc = [Fraction(0)] * width
    for j, v in enumerate(c):
        p, q = cols[j]
        cc[p] = sign * Fraction(v)
        if q >= 0:
            cc[q] = -sign * Fraction(v)
    if not A:
        if any(cc):
            return LPResult("unbounded")
        return LPResult("optimal", [Fraction(0)] * n, Fraction(0))
    res = solve_standard(cc, A, b)
    if not res.ok:
        return res
    x = []
    for j in range(n):
        p, q = cols[j]
        x.append(res.x[p] - (res.x[q] if q >= 0 else 0))
    return LPResult("optimal", x, sign * res.value)


def is_feasible(A_ub: Sequence[Sequence] = (), b_ub: Sequence = (),
                A_eq: Sequence[Sequence] = (), b_eq: Sequence = (), n: int | None = None) -> bool:
    if n is None:
        n = len(A_ub[0]) if A_ub else len(A_eq[0])
    return linprog([0] * n, A_ub, b_ub, A_eq, b_eq).ok


# == float-guided, exactly certified implication test ==

def _exact_dot(row, x):
    return sum(a * b for a, b in zip(row, x) if a)


def _scaled_int_rows(rows, consts):
    """Each row with its constant, scaled by a positive factor to integers."""
    from math import lcm

    out = []
    for r, c in zip(rows, consts):
        vals = [Fraction(v) for v in r] + [Fraction(c)]
        m = 1
        for v in vals:
            m = lcm(m, v.denominator)
        out.append([int(v * m) for v in vals])
    return out


def _point_check(int_rows, x, strict_row=None) -> bool:
    """All ``int_rows`` nonnegative at rational ``x``; ``strict_row`` negative."""
    from math import lcm

    D = 1
    for v in x:
        D = lcm(D, v.denominator)
    X = [int(v * D) for v in x] + [D]
    if strict_row is not None and sum(a * b for a, b in zip(strict_row, X)) >= 0:
        return False
    for r in int_rows:
        if sum(a * b for a, b in zip(r, X) if a) < 0:
            return False
    return True


def implies(target: Sequence, target_const, rows: Sequence[Sequence], consts: Sequence) -> bool:
    """Whether ``target @ x + target_const >= 0`` on ``{x : rows @ x + consts >= 0}``.

    HiGHS proposes the answer; the answer is accepted only with an exact
    rational certificate (a violating feasible point, or nonnegative
    multipliers of the rows). Otherwise the exact simplex decides.
    """
    n = len(target)
    target = [Fraction(v) for v in target]
    target_const = Fraction(target_const)
    if not rows:
        return not any(target) and target_const >= 0
    try:
        import numpy as np
        from scipy.optimize import linprog as sp_linprog
    except ImportError:  # pragma: no cover
        return _implies_exact(target, target_const, rows, consts)
    A = np.array([[float(v) for v in r] for r in rows], dtype=float)
    b = np.array([float(v) for v in consts], dtype=float)
    res = sp_linprog(np.array([float(v) for v in target]), A_ub=-A, b_ub=b,
                     bounds=[(None, None)] * n, method="highs")
    if res.status == 3:
        res = sp_linprog(np.array([float(v) for v in target]), A_ub=-A, b_ub=b,
                         bounds=[(-1e4, 1e4)] * n, method="highs")
    if res.status == 0:
        val = res.fun + float(target_const)
        if val < -1e-7:
            x = [Fraction(float(v)).limit_denominator(10 ** 6) for v in res.x]
            if (_exact_dot(target, x) + target_const < 0
                    and all(_exact_dot(r, x) + Fraction(c) >= 0 for r, c in zip(rows, consts))):
                return False
        else:
            lam = -np.asarray(res.ineqlin.marginals)
            if _check_multipliers(lam, target, target_const, rows, consts):
                return True
    return _implies_exact(target, target_const, rows, consts)


def _check_multipliers(lam, target, target_const, rows, consts) -> bool:
    from ._exact import solve

    support = [j for j, v in enumerate(lam) if v > 1e-9]
    cands = []
    if support:
        M = [[Fraction(rows[j][i]) for j in support] for i in range(len(target))]
        sol = solve(M, target)
        if sol is not None:
            cands.append(dict(zip(support, sol)))
    cands.append({j: Fraction(float(lam[j])).limit_denominator(10 ** 6) for j in support})
    for cand in cands:
        if any(v < 0 for v in cand.values()):
            continue
        comb = [sum((cand[j] * Fraction(rows[j][i]) for j in cand), Fraction(0))
                for i in range(len(target))]
        if comb != list(target):
            continue
        if target_const - sum((cand[j] * Fraction(consts[j]) for j in cand), Fraction(0)) >= 0:
            return True
    return False


def _implies_exact(target, target_const, rows, consts) -> bool:
    A_ub = [[-Fraction(v) for v in r] for r in rows]
    res = linprog(target, A_ub, list(consts), maximize=False)
    if res.status == "infeasible":
        return True
    if res.status == "unbounded":
        return False
    return res.value + target_const >= 0


def irredundant(rows: Sequence[Sequence], consts: Sequence) -> list[int]:
    """Indices of an irredundant subset of ``rows @ x + consts >= 0``.

    Rows are tested in order; a row implied by the rows still kept (other
    than itself) is dropped. The result describes the same polyhedron.
    """
    import numpy as np
    from scipy.optimize import linprog as sp_linprog

    m = len(rows)
    if m == 0:
        return []
    n = len(rows[0])
    exact = [[Fraction(v) for v in r] for r in rows]
    cs = [Fraction(c) for c in consts]
    A = np.array([[float(v) for v in r] for r in exact], dtype=float).reshape(m, n)
    b = np.array([float(c) for c in cs], dtype=float)
    ints = _scaled_int_rows(exact, cs)
    alive = [True] * m
    for i in range(m):
        idx = [j for j in range(m) if alive[j] and j != i]
        if not idx:
            continue
        if n == 0:
            if cs[i] >= 0 or any(cs[j] < 0 for j in idx):
                alive[i] = False
            continue
        sub_rows = [exact[j] for j in idx]
        sub_c = [cs[j] for j in idx]
        res = sp_linprog(A[i], A_ub=-A[idx], b_ub=b[idx], bounds=[(None, None)] * n, method="highs")
        decided = None
        if res.status == 3:
            # unbounded: a violating point inside a large box certifies it
            res = sp_linprog(A[i], A_ub=-A[idx], b_ub=b[idx], bounds=[(-1e4, 1e4)] * n, method="highs")
        if res.status == 0:
            if res.fun + b[i] < -1e-7:
                x = [Fraction(float(v)).limit_denominator(10 ** 6) for v in res.x]
                if _point_check([ints[j] for j in idx], x, ints[i]):
                    decided = False
            else:
                lam = -np.asarray(res.ineqlin.marginals)
                if _check_multipliers(lam, exact[i], cs[i], sub_rows, sub_c):
                    decided = True
        if decided is None:
            decided = _implies_exact(exact[i], cs[i], sub_rows, sub_c)
        if decided:
            alive[i] = False
    return [i for i in range(m) if alive[i]]


def is_feasible_ge(rows: Sequence[Sequence], consts: Sequence) -> bool:
    """Whether ``{x : rows @ x + consts >= 0}`` is nonempty (exactly decided)."""
    if not rows:
        return True
    n = len(rows[0])
    if n == 0:
        return all(Fraction(c) >= 0 for c in consts)
    exact = [[Fraction(v) for v in r] for r in rows]
    cs = [Fraction(c) for c in consts]
    try:
        import numpy as np
        from scipy.optimize import linprog as sp_linprog

        A = np.array([[float(v) for v in r] for r in exact], dtype=float)
        b = np.array([float(c) for c in cs], dtype=float)
        res = sp_linprog(np.zeros(n), A_ub=-A, b_ub=b, bounds=[(None, None)] * n, method="highs")
        if res.status == 0:
            x = [Fraction(float(v)).limit_denominator(10 ** 6) for v in res.x]
            if _point_check(_scaled_int_rows(exact, cs), x):
                return True
    except ImportError:  # pragma: no cover
        pass
    return linprog([0] * n, [[-v for v in r] for r in exact], cs).ok
