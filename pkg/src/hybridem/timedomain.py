"""Leapfrog time stepping on the coupling kernel with hybrid recovery of
the magnetic trace and a charge-conserving electric flux."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from math import pi

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .assembly import (
    SystemMatrices, interpolate_div, lagrange_curl_load, project_field,
    scalar_load, vector_load,
)
from .diagnostics import (
    DiagnosticRecord, constraint_residual, discrete_energy, flux_residual,
    hdiv_seminorm,
)
from .solvers import (
    AugmentedLagrangianSolver, DEFAULT_RANK_TOL, InfeasibleError, SizeLimitError,
    constrained_lsq, factorize, nullspace_basis,
)
from .spaces import FieldCoefficients, degree_raise

CSV_HEADER = ("step", "t", "seminorm_D", "seminorm_Dhat", "flux_residual_max",
              "constraint_residual", "energy")
MODES = ("conforming", "nonconforming")
INIT_SIZE_LIMIT = 8000


class CompatibilityError(InfeasibleError):
    """Initial data violate the discrete charge constraint."""


def default_A0(x, y):
    return y * (pi - y), x * (pi - x)


@dataclass(frozen=True)
class SourceSpec:
    """Current density ``J(x, y, t) -> (jx, jy)`` and charge density
    ``rho(x, y, t)``; ``None`` means identically zero.  The caller is
    responsible for rho_t + div J = 0."""

    J: object = None
    rho: object = None

    def J_at(self, t):
        if self.J is None:
            return None
        return lambda x, y: self.J(x, y, t)

    def rho_at(self, t):
        if self.rho is None:
            return None
        return lambda x, y: self.rho(x, y, t)


@dataclass(frozen=True)
class TimeState:
    step: int
    t: float
    A: FieldCoefficients
    D: FieldCoefficients
    Dhat: FieldCoefficients | None
    Hhat: FieldCoefficients | None = None   # at t - dt/2


def init_Dhat(S: SystemMatrices, D0, rho0=None, rank_tol: float = DEFAULT_RANK_TOL):
    """Compatible initial flux.

    Returns div-conforming coefficients closest in L2 to the broken field
    ``D0`` among those satisfying, on every cell and for every broken P_r
    test function phi,

        int_K (grad phi . D0 + phi rho0) = int_{dK} phi Dhat . n,

    together with div Dhat = projection of rho0 element-wise.  Raises
    :class:`CompatibilityError` if ``D0`` does not satisfy the discrete
    constraint that makes this system consistent.
    """
    D0 = np.asarray(D0, dtype=float)
    if not np.any(D0) and rho0 is None:
        return np.zeros(S.div.dim)
    if S.div.dim > INIT_SIZE_LIMIT:
        raise SizeLimitError(f"dense initialization of size {S.div.dim} exceeds limit")
    lift = degree_raise(S.V1, S.divvec)
    det = np.repeat(2.0 * S.mesh.areas, S.divvec.local_dim)
    Mdv = sp.diags(det)
    Q = (S.Pdiv.T @ Mdv @ S.Pdiv).toarray()
    q = S.Pdiv.T @ (Mdv @ (lift @ D0))
    g1 = S.G.T @ (S.M_plain @ D0)
    g2 = np.zeros(S.divscalar.dim)
    if rho0 is not None:
        g1 = g1 + scalar_load(S.V0, rho0)
        g2 = project_field(rho0, S.divscalar)
    C = sp.vstack([S.Beta, S.Div @ S.Pdiv]).toarray()
    try:
        return constrained_lsq(Q, q, C, np.concatenate([g1, g2]), rank_tol=rank_tol)
    except InfeasibleError as exc:
        raise CompatibilityError("initial D violates the discrete charge constraint",
                                 exc.residual) from exc


class LeapfrogStepper:
    """Prefactored leapfrog integrator.

    ``mode='conforming'`` represents the coupling kernel through the
    conforming edge-element embedding (multiplier degree r + 1); the
    ``nonconforming`` mode computes an orthonormal kernel basis numerically
    and works for any multiplier degree.
    """

    def __init__(self, S: SystemMatrices, dt: float, sources: SourceSpec | None = None,
                 mode: str | None = None, recover: bool = True):
        if mode is None:
            mode = "conforming" if S.conforming else "nonconforming"
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if mode == "conforming" and not S.conforming:
            raise ValueError("conforming mode needs multiplier degree r + 1")
        self.S, self.dt, self.mode, self.recover = S, float(dt), mode, recover
        self.sources = sources or SourceSpec()
        if mode == "conforming":
            self.K = S.P
            self._mass = factorize((S.P.T @ S.M_plain @ S.P).tocsc())
            self._solve = self._mass.solve
        else:
            Z = nullspace_basis(S.B)
            self.K = sp.csr_matrix(Z)
            cf = la.cho_factor(Z.T @ (S.M_plain @ Z))
            self._solve = lambda b: la.cho_solve(cf, b)
        if recover:
            self._recovery = AugmentedLagrangianSolver(S.Mhat + S.Khat, S.B)

    def _J_terms(self, t):
        S = self.S
        J = self.sources.J_at(t)
        if J is None:
            return None
        return (vector_load(S.V1, J), lagrange_curl_load(S.Vhat, J),
                interpolate_div(J, S.div))

    def step(self, state: TimeState) -> TimeState:
        S, dt = self.S, self.dt
        a, d = state.A.values, state.D.values
        thalf = state.t + 0.5 * dt
        jt = self._J_terms(thalf)

        a_half = a - 0.5 * dt * d / S.eps
        rhs = S.A @ a_half
        if jt is not None:
            rhs = rhs - jt[0]
        ddot = self.K @ self._solve(self.K.T @ rhs)
        d_new = d + dt * ddot

        hhat = dhat = None
        if self.recover:
            q = S.Hcross @ (a_half / S.mu) + S.Dcross @ ddot
            g = S.M_plain @ ddot - S.A @ a_half
            if jt is not None:
                q = q + jt[1]
                g = g + jt[0]
            h = self._recovery.solve(q, g)
            hhat = FieldCoefficients(S.Vhat, h)
            if state.Dhat is not None:
                inc = S.CurlDiv @ h
                if jt is not None:
                    inc = inc - jt[2]
                dhat = FieldCoefficients(S.div, state.Dhat.values + dt * inc)

        a_new = a_half - 0.5 * dt * d_new / S.eps
        return TimeState(state.step + 1, state.t + dt, FieldCoefficients(S.V1, a_new),
                         FieldCoefficients(S.V1, d_new), dhat, hhat)


def initial_state(S: SystemMatrices, A0=None, D0=None, sources: SourceSpec | None = None,
                  t0: float = 0.0, with_dhat: bool = True) -> TimeState:
    """Project initial data onto the broken space and build a compatible
    initial flux.  ``A0``/``D0`` are callbacks or coefficient arrays."""
    def coeffs(f):
        if f is None:
            return np.zeros(S.V1.dim)
        if callable(f):
            return project_field(f, S.V1)
        return np.asarray(f, dtype=float)

    a, d = coeffs(A0), coeffs(D0)
    dhat = None
    if with_dhat:
        rho0 = (sources or SourceSpec()).rho_at(t0)
        dhat = FieldCoefficients(S.div, init_Dhat(S, d, rho0))
    return TimeState(0, t0, FieldCoefficients(S.V1, a), FieldCoefficients(S.V1, d), dhat)


def diagnose(S: SystemMatrices, state: TimeState, sources: SourceSpec | None = None
             ) -> DiagnosticRecord:
    rho = (sources or SourceSpec()).rho_at(state.t)
    rec = DiagnosticRecord()
    rec["seminorm_D"] = hdiv_seminorm(state.D)
    rec["energy"] = discrete_energy(S, state.A.values, state.D.values)
    if state.Dhat is not None:
        rec["seminorm_Dhat"] = hdiv_seminorm(state.Dhat)
        rec["flux_residual_max"] = float(flux_residual(S, state.Dhat.values, rho).max())
        rec["constraint_residual"] = constraint_residual(
            S, state.D.values, state.Dhat.values, rho)
    return rec


@dataclass
class TimeSeries:
    records: list = field(default_factory=list)   # (step, t, DiagnosticRecord)

    def column(self, key) -> np.ndarray:
        return np.array([rec.values.get(key, np.nan) for _, _, rec in self.records])

    @property
    def t(self) -> np.ndarray:
        return np.array([t for _, t, _ in self.records])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for step, t, rec in self.records:
                w.writerow([step, repr(float(t))] + [
                    repr(rec.values[k]) if k in rec.values else ""
                    for k in CSV_HEADER[2:]])


def run_time_domain(S: SystemMatrices, dt: float, steps: int, A0=default_A0, D0=None,
                    sources: SourceSpec | None = None, mode: str | None = None,
                    recover: bool = True, csv_path=None, vtk_dir=None,
                    vtk_stride: int = 0, callback=None):
    """Evolve ``steps`` leapfrog steps and record diagnostics after each.

    Returns ``(series, final_state)``.  ``callback(state)`` is invoked after
    every step, including step 0.
    """
    stepper = LeapfrogStepper(S, dt, sources, mode, recover)
    state = initial_state(S, A0, D0, sources, with_dhat=recover)
    series = TimeSeries()

    def record(st):
        series.records.append((st.step, st.t, diagnose(S, st, sources)))
        if callback is not None:
            callback(st)
        if vtk_dir and vtk_stride and st.step % vtk_stride == 0:
            from .vtk import write_snapshot
            write_snapshot(os.path.join(vtk_dir, f"fields_{st.step:05d}.vtk"), S, st)

    record(state)
    for _ in range(steps):
        state = stepper.step(state)
        record(state)
    if csv_path is not None:
        series.write_csv(csv_path)
    return series, state

