from math import pi, sqrt

import numpy as np
import pytest

from hybridem.assembly import assemble, interpolate_div, project_field
from hybridem.diagnostics import (
    DiagnosticError, DiagnosticRecord, constraint_residual, discrete_energy, eoc,
    flux_residual, hdiv_seminorm, l2_distance, l2_error, l2_norm,
)
from hybridem.mesh import generate_uniform_grid
from hybridem.spaces import FieldCoefficients


@pytest.fixture(scope="module")
def S():
    return assemble(generate_uniform_grid(4), 2)


def test_hdiv_seminorm_oracles(S):
    const = FieldCoefficients(S.V1, project_field(lambda x, y: (2.0 + 0 * x, -1.0 + 0 * y), S.V1))
    assert hdiv_seminorm(const) < 1e-13
    lin = FieldCoefficients(S.V1, project_field(lambda x, y: (x, 0 * y), S.V1))
    assert abs(hdiv_seminorm(lin) - pi) < 1e-12          # ||1||_{L2} on the square
    curl = FieldCoefficients(S.div, S.CurlDiv @ np.random.default_rng(0).standard_normal(S.Vhat.dim))
    assert hdiv_seminorm(curl) < 1e-12


def test_l2_norms_exact_for_polynomials(S):
    f = lambda x, y: (x * 0 + 1.0, y)
    fc = FieldCoefficients(S.V1, project_field(f, S.V1))
    assert l2_error(fc, f, 6) < 1e-12
    assert abs(l2_norm(fc, 6) - sqrt(pi ** 2 + pi ** 4 / 3)) < 1e-12
    zero = FieldCoefficients(S.V1, np.zeros(S.V1.dim))
    assert abs(l2_distance(fc, zero, 6) - l2_norm(fc, 6)) < 1e-13
    # a div-conforming field and its broken view agree
    d = FieldCoefficients(S.div, interpolate_div(f, S.div))
    assert l2_error(d, f, 6) < 1e-12


def test_eoc():
    assert eoc(4e-2, 1e-2) == 2.0
    assert abs(eoc(2.753e-2, 6.926e-3) - 1.991) < 5e-4     # r=2, N=8 -> 16 Hhat


def test_residuals_vanish_for_consistent_pair(S):
    f = lambda x, y: (1.0 + x - 2 * y, 3 * x + 0.5 * y)
    rho = lambda x, y: 1.5 + 0 * x
    D = project_field(f, S.V1)
    Dhat = interpolate_div(f, S.div)
    assert constraint_residual(S, D, Dhat, lambda x, y: -rho(x, y)) > 1e-3
    assert constraint_residual(S, D, Dhat, rho) < 1e-11
    assert flux_residual(S, Dhat, rho).max() < 1e-12
    assert flux_residual(S, Dhat).max() > 1e-3
    assert flux_residual(S, Dhat).shape == (S.mesh.n_cells,)


def test_discrete_energy(S):
    a = project_field(lambda x, y: (0 * x, x), S.V1)      # curl = 1
    assert abs(discrete_energy(S, a, np.zeros_like(a)) - 0.5 * pi * pi) < 1e-11


def test_record_rejects_nan_and_negative():
    rec = DiagnosticRecord()
    rec["ok"] = 1.0
    assert rec["ok"] == 1.0
    with pytest.raises(DiagnosticError):
        rec["bad"] = float("nan")
    with pytest.raises(DiagnosticError):
        rec["neg"] = -1.0
