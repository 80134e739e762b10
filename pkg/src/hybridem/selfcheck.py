"""Fast invariant suites run by ``hybridem check``."""
from __future__ import annotations

from math import pi

import numpy as np


def _quadrature():
    from .refelem import gauss_triangle, monomial_integral
    worst = 0.0
    for deg in range(0, 21):
        rule = gauss_triangle(deg)
        x, y = rule.xy.T
        for a in range(deg + 1):
            for b in range(deg + 1 - a):
                worst = max(worst, abs(rule.weights @ (x ** a * y ** b) - monomial_integral(a, b)))
    return worst <= 1e-13, f"max monomial error {worst:.1e}"


def _unisolvence():
    from .refelem import DEGREE_RANGE, make_basis
    worst = 0.0
    for fam, (lo, hi) in DEGREE_RANGE.items():
        for k in range(max(lo, 1) if fam == "lagrange" else lo, hi + 1):
            b = make_basis(fam, k)
            L = b.dof_matrix()
            worst = max(worst, np.abs(L - np.eye(len(L))).max())
    return worst <= 1e-12, f"max |L - I| {worst:.1e}"


def _kernel():
    from .assembly import assemble
    from .mesh import generate_uniform_grid
    from .solvers import nullspace_basis
    worst, ok = 0.0, True
    for r in (2, 3, 4, 5):
        S = assemble(generate_uniform_grid(2), r)
        worst = max(worst, abs(S.B.T @ S.P).max())
        ok &= nullspace_basis(S.B).shape[1] == S.conf.dim
    return ok and worst <= 1e-12, f"max |B^T P| {worst:.1e}, nullity matches: {ok}"


def _eigen():
    from .frequencydomain import run_eigen
    eig, _ = run_eigen(4, 2)
    ok = abs(eig.omega2 - 2.1313458810832517) < 1e-8 and eig.errors["div_Dhat"] < 1e-10
    return ok, f"omega^2 {eig.omega2:.10f}, |Dhat|_div {eig.errors['div_Dhat']:.1e}"


def _time():
    from .assembly import assemble
    from .mesh import generate_uniform_grid
    from .timedomain import run_time_domain
    S = assemble(generate_uniform_grid(4), 2)
    series, _ = run_time_domain(S, pi / 64, 16)
    worst = np.nanmax(series.column("seminorm_Dhat"))
    res = np.nanmax(series.column("constraint_residual"))
    return max(worst, res) <= 1e-10, f"max |Dhat|_div {worst:.1e}, residual {res:.1e}"


SUITES = {
    "quadrature exactness": _quadrature,
    "basis unisolvence": _unisolvence,
    "kernel identities": _kernel,
    "eigenmode N=4 r=2": _eigen,
    "leapfrog charge conservation": _time,
}


def run_all():
    """[(name, passed, detail)] for every suite; exceptions count as failures."""
    out = []
    for name, fn in SUITES.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # report, don't abort the remaining suites
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
